"""Central finite-difference verification of the autodiff layer.

Every public differentiable op is checked against central differences on
random inputs, and the full pretraining objective is checked through random
parameter coordinates on a synthetic mini-batch. Tolerances: relative error
<= 1e-4 with an absolute floor of 1e-8 at h = 1e-5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from . import objective as obj
from ._kernels import cross_pairs, self_pairs
from .graphs import (
    EDGE_INTERACTIVE,
    EDGE_LIGAND_COVALENT,
    EDGE_PROTEIN_PROTEIN,
    NODE_FEATURE_DIM,
    ComplexGraph,
    perturb_ligand,
)
from .store import AnchorSample, DecoySample, PerturbedSample, PretrainBatch

FD_STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-8


@dataclass(slots=True)
class CheckResult:
    name: str
    max_error: float  # worst rel error (after the absolute floor)
    passed: bool


def _error(analytic: float, numeric: float) -> float:
    diff = abs(analytic - numeric)
    if diff <= ABS_FLOOR:
        return 0.0
    return diff / max(abs(analytic), abs(numeric), 1e-12)


def _fd_check(inputs: list[np.ndarray], fn) -> float:
    """Worst rel error between backward() grads and central differences.

    `fn` maps a list of Tensors to a scalar Tensor and is re-run for every
    probe, so it must be deterministic in its inputs.
    """
    tensors = [ad.tensor(x, requires_grad=True) for x in inputs]
    out = fn(tensors)
    grads = ad.grad(out, tensors)

    worst = 0.0
    for i, x in enumerate(inputs):
        flat = x.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + FD_STEP
            hi = float(fn([ad.tensor(v) for v in inputs]).data)
            flat[j] = orig - FD_STEP
            lo = float(fn([ad.tensor(v) for v in inputs]).data)
            flat[j] = orig
            numeric = (hi - lo) / (2.0 * FD_STEP)
            worst = max(worst, _error(float(grads[i].reshape(-1)[j]), numeric))
    return worst


def _weighted(shape, rng) -> np.ndarray:
    return rng.uniform(0.5, 1.5, size=shape)


def op_cases(rng: np.random.Generator):
    """(name, inputs, scalar_fn) triples covering every registered op."""
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((3, 4))
    m1 = rng.standard_normal((3, 5))
    m2 = rng.standard_normal((5, 2))
    pos = rng.uniform(0.5, 2.0, size=(3, 4))  # safe for log/sqrt/pow/div
    idx = rng.integers(0, 3, size=6)
    w_ab = _weighted((3, 4), rng)
    w_mm = _weighted((3, 2), rng)
    w_g = _weighted((6, 4), rng)
    w_s = _weighted((4, 4), rng)
    vec_a = rng.standard_normal(5) + 0.1
    vec_b = rng.standard_normal(5) + 0.1

    cases = [
        ("add", [a, b], lambda t: ad.sum(ad.mul(ad.add(t[0], t[1]), w_ab))),
        ("sub", [a, b], lambda t: ad.sum(ad.mul(ad.sub(t[0], t[1]), w_ab))),
        ("mul", [a, b], lambda t: ad.sum(ad.mul(ad.mul(t[0], t[1]), w_ab))),
        ("div", [a, pos], lambda t: ad.sum(ad.mul(ad.div(t[0], t[1]), w_ab))),
        ("neg", [a], lambda t: ad.sum(ad.mul(ad.neg(t[0]), w_ab))),
        ("matmul", [m1, m2], lambda t: ad.sum(ad.mul(ad.matmul(t[0], t[1]), w_mm))),
        ("sum", [a], lambda t: ad.sum(ad.mul(ad.sum(t[0], axis=1, keepdims=True), w_ab[:, :1]))),
        ("mean", [a], lambda t: ad.sum(ad.mul(ad.mean(t[0], axis=0, keepdims=True), w_ab[:1, :]))),
        ("exp", [a], lambda t: ad.sum(ad.mul(ad.exp(t[0]), w_ab))),
        ("log", [pos], lambda t: ad.sum(ad.mul(ad.log(t[0]), w_ab))),
        ("sqrt", [pos], lambda t: ad.sum(ad.mul(ad.sqrt(t[0]), w_ab))),
        ("power", [pos], lambda t: ad.sum(ad.mul(ad.power(t[0], 2.5), w_ab))),
        ("cos", [a], lambda t: ad.sum(ad.mul(ad.cos(t[0]), w_ab))),
        # inputs in (0.5, 2.0) keep probes away from the clip kinks at 0.1/3
        ("clip", [pos], lambda t: ad.sum(ad.mul(ad.clip(t[0], 0.1, 3.0), w_ab))),
        ("concat", [a, b], lambda t: ad.sum(ad.mul(ad.concat(t, axis=0), np.vstack([w_ab, w_ab])))),
        ("reshape", [a], lambda t: ad.sum(ad.mul(ad.reshape(t[0], (4, 3)), w_ab.reshape(4, 3)))),
        ("gather", [a], lambda t: ad.sum(ad.mul(ad.gather(t[0], idx), w_g))),
        ("scatter_add", [rng.standard_normal((6, 4))],
         lambda t: ad.sum(ad.mul(ad.scatter_add(t[0], idx, 4), w_s))),
        ("logsumexp", [a], lambda t: ad.sum(ad.mul(ad.logsumexp(t[0], axis=1, keepdims=True), w_ab[:, :1]))),
        ("sigmoid", [a], lambda t: ad.sum(ad.mul(ad.sigmoid(t[0]), w_ab))),
        ("tanh", [a], lambda t: ad.sum(ad.mul(ad.tanh(t[0]), w_ab))),
        ("cosine_similarity", [vec_a, vec_b], lambda t: ad.cosine_similarity(t[0], t[1])),
    ]
    return cases


def check_ops(n_seeds: int = 100, base_seed: int = 0) -> list[CheckResult]:
    worst: dict[str, float] = {}
    for s in range(n_seeds):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([base_seed, s])))
        for name, inputs, fn in op_cases(rng):
            err = _fd_check([x.copy() for x in inputs], fn)
            worst[name] = max(worst.get(name, 0.0), err)
    return [CheckResult(name, err, err <= REL_TOL) for name, err in worst.items()]


# --- synthetic graphs and the full objective ---------------------------------


def make_random_graph(rng: np.random.Generator, n_protein: int = 5, n_ligand: int = 3,
                      spread: float = 2.0) -> ComplexGraph:
    """Small valid complex graph with geometry-driven edges."""
    protein = rng.uniform(-spread, spread, size=(n_protein, 3))
    ligand = rng.uniform(-1.5, 1.5, size=(n_ligand, 3))
    features = np.zeros((n_protein + n_ligand, NODE_FEATURE_DIM))
    for i in range(n_protein + n_ligand):
        features[i, int(rng.integers(0, NODE_FEATURE_DIM - 1))] = 1.0
    features[n_protein:, -1] = 1.0
    rows = []
    pp = self_pairs(protein, 5.0)
    if pp.shape[0]:
        rows.append(np.column_stack([pp, np.full(pp.shape[0], EDGE_PROTEIN_PROTEIN, np.int64)]))
    bonds = np.array([[i, i + 1] for i in range(n_ligand - 1)], dtype=np.int64)
    if bonds.size:
        lc = bonds + n_protein
        rows.append(np.column_stack([lc, np.full(lc.shape[0], EDGE_LIGAND_COVALENT, np.int64)]))
    inter = cross_pairs(protein, ligand, 5.0)
    if inter.shape[0]:
        shifted = np.column_stack([inter[:, 0], inter[:, 1] + n_protein])
        rows.append(np.column_stack([shifted, np.full(inter.shape[0], EDGE_INTERACTIVE, np.int64)]))
    edges = np.concatenate(rows, axis=0) if rows else np.zeros((0, 3), dtype=np.int64)
    return ComplexGraph(
        node_positions=np.concatenate([protein, ligand], axis=0),
        node_features=features,
        edges=edges,
        ligand_node_index=np.arange(n_protein, n_protein + n_ligand, dtype=np.int64),
    )


def make_synthetic_batch(rng: np.random.Generator, n_anchors: int = 2, n_decoys: int = 3,
                         n_perturbed: int = 2, sigma: float = 0.5) -> PretrainBatch:
    anchors = []
    d_max = 8.0
    for _ in range(n_anchors):
        native = make_random_graph(rng)
        decoys = []
        for pose_index in range(n_decoys):
            g = make_random_graph(rng, n_protein=native.n_nodes - native.n_ligand,
                                  n_ligand=native.n_ligand)
            r = float(rng.uniform(0.5, d_max))
            decoys.append(DecoySample(graph=g, rmsd=r, is_positive=r <= 2.0, pose_index=pose_index))
        if not any(d.is_positive for d in decoys):
            decoys[0].rmsd = 1.0
            decoys[0].is_positive = True
        perturbed = []
        for _ in range(n_perturbed):
            g, noise = perturb_ligand(native, sigma, rng)
            perturbed.append(PerturbedSample(graph=g, noise=noise, sigma=sigma))
        anchors.append(AnchorSample(
            complex_id="synthetic", native=native, decoys=decoys, perturbed=perturbed,
            max_rmsd=d_max,
        ))
    return PretrainBatch(anchors=anchors, d_max=d_max)


def tiny_encoder_config() -> enc.EncoderConfig:
    return enc.EncoderConfig(layers=2, hidden_dim=8, rbf_bins=4, type_dim=4)


def check_total_loss(n_seeds: int = 100, probes_per_seed: int = 4, base_seed: int = 0) -> CheckResult:
    """FD check of d(L1 + mu*L2)/d(params) on random parameter coordinates."""
    from .training import batch_losses

    ecfg = tiny_encoder_config()
    ccfg = obj.ContrastiveConfig()
    dcfg = obj.DsmConfig(sigma=0.5, mu=0.7)
    worst = 0.0
    for s in range(n_seeds):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([base_seed, 7, s])))
        batch = make_synthetic_batch(rng, sigma=dcfg.sigma)
        params = enc.init_params(ecfg, seed=s)

        def loss_value() -> float:
            total, _, _ = batch_losses(batch, params, ecfg, ccfg, dcfg)
            return float(total.data)

        for p in params.values():
            p.zero_grad()
        total, _, _ = batch_losses(batch, params, ecfg, ccfg, dcfg)
        total.backward()

        names = sorted(params)
        for _ in range(probes_per_seed):
            name = names[int(rng.integers(0, len(names)))]
            tensor = params[name]
            flat = tensor.data.reshape(-1)
            j = int(rng.integers(0, flat.size))
            analytic = 0.0 if tensor.grad is None else float(tensor.grad.reshape(-1)[j])
            orig = flat[j]
            flat[j] = orig + FD_STEP
            hi = loss_value()
            flat[j] = orig - FD_STEP
            lo = loss_value()
            flat[j] = orig
            worst = max(worst, _error(analytic, (hi - lo) / (2.0 * FD_STEP)))
    return CheckResult("total_loss", worst, worst <= REL_TOL)


def check_energy_coordinate_grad(n_seeds: int = 20, base_seed: int = 0) -> CheckResult:
    """FD check of d(energy)/d(ligand coordinates) via the autograd score path."""
    ecfg = tiny_encoder_config()
    worst = 0.0
    for s in range(n_seeds):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([base_seed, 11, s])))
        g = make_random_graph(rng)
        params = enc.init_params(ecfg, seed=s)
        analytic = enc.score_autograd(g, params, ecfg)
        for a, lig_row in enumerate(g.ligand_node_index):
            for c in range(3):
                orig = g.node_positions[lig_row, c]
                g.node_positions[lig_row, c] = orig + FD_STEP
                hi = enc.energy_value(g, params, ecfg)
                g.node_positions[lig_row, c] = orig - FD_STEP
                lo = enc.energy_value(g, params, ecfg)
                g.node_positions[lig_row, c] = orig
                worst = max(worst, _error(float(analytic[a, c]), (hi - lo) / (2.0 * FD_STEP)))
    return CheckResult("energy_coordinate_grad", worst, worst <= REL_TOL)


def run_all(n_seeds: int = 100) -> list[CheckResult]:
    results = check_ops(n_seeds=n_seeds)
    results.append(check_total_loss(n_seeds=n_seeds))
    results.append(check_energy_coordinate_grad(n_seeds=max(10, n_seeds // 5)))
    return results
