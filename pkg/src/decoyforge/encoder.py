"""Distance-based message-passing encoder with contrastive/energy/affinity heads.

Messages are conditioned on the edge type and a radial-basis expansion of the
interatomic distance, and are damped by a smooth cosine envelope that reaches
zero at the cutoff, so outputs are exactly invariant under rigid motions and
reflections and coordinate gradients stay continuous. Graph embeddings are
mean pools over nodes, which also gives node-permutation invariance.

Multiple graphs are encoded as one disjoint union with per-graph readout;
this keeps the op count (and Python overhead) per training step flat.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import DatasetFormatError, NonFiniteActivation
from .graphs import NODE_FEATURE_DIM, NUM_EDGE_TYPES, ComplexGraph

CHECKPOINT_MAGIC = b"DFCK"
CHECKPOINT_VERSION = 1


@dataclass(slots=True)
class EncoderConfig:
    layers: int = 3
    hidden_dim: int = 64  # 256 matches the full-scale setup; 64 is desk scale
    rbf_bins: int = 16
    edge_type_embeddings: int = NUM_EDGE_TYPES
    type_dim: int = 8
    cutoff: float = 5.0

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        for name in ("hidden_dim", "rbf_bins", "type_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_json(self) -> dict:
        return {
            "layers": self.layers,
            "hidden_dim": self.hidden_dim,
            "rbf_bins": self.rbf_bins,
            "edge_type_embeddings": self.edge_type_embeddings,
            "type_dim": self.type_dim,
            "cutoff": self.cutoff,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EncoderConfig":
        return cls(**data)


Params = dict[str, ad.Tensor]


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: EncoderConfig, seed: int = 0) -> Params:
    """Fan-in scaled uniform initialization with a pinned seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xE41C0DE])))
    h, b, t = cfg.hidden_dim, cfg.rbf_bins, cfg.type_dim
    edge_in = 2 * h + b + t
    params: dict[str, np.ndarray] = {
        "embed.w": _uniform(rng, NODE_FEATURE_DIM, (NODE_FEATURE_DIM, h)),
        "embed.b": np.zeros(h),
        "type_emb": rng.uniform(-1.0, 1.0, size=(cfg.edge_type_embeddings, t)),
    }
    for layer in range(cfg.layers):
        params[f"layer{layer}.msg.w1"] = _uniform(rng, edge_in, (edge_in, h))
        params[f"layer{layer}.msg.b1"] = np.zeros(h)
        params[f"layer{layer}.msg.w2"] = _uniform(rng, h, (h, h))
        params[f"layer{layer}.msg.b2"] = np.zeros(h)
        params[f"layer{layer}.gate.w"] = _uniform(rng, 2 * h, (2 * h, h))
        params[f"layer{layer}.gate.b"] = np.zeros(h)
        params[f"layer{layer}.upd.w"] = _uniform(rng, 2 * h, (2 * h, h))
        params[f"layer{layer}.upd.b"] = np.zeros(h)
    for head, out_dim in (("proj", h), ("energy", 1), ("regression", 1)):
        params[f"{head}.w1"] = _uniform(rng, h, (h, h))
        params[f"{head}.b1"] = np.zeros(h)
        params[f"{head}.w2"] = _uniform(rng, h, (h, out_dim))
        params[f"{head}.b2"] = np.zeros(out_dim)
    params["score.w1"] = _uniform(rng, edge_in, (edge_in, h))
    params["score.b1"] = np.zeros(h)
    params["score.w2"] = _uniform(rng, h, (h, 1))
    params["score.b2"] = np.zeros(1)
    return {name: ad.tensor(value, requires_grad=True) for name, value in params.items()}


def reinit_head(params: Params, head: str, cfg: EncoderConfig, seed: int = 0) -> None:
    """Replace one head's parameters with a fresh draw (used at fine-tune start)."""
    fresh = init_params(cfg, seed=seed)
    for key in list(params):
        if key.startswith(head + "."):
            params[key] = fresh[key]


@dataclass(slots=True)
class GraphBatch:
    """Disjoint union of complex graphs with directed edge arrays."""

    positions: np.ndarray  # (N, 3)
    features: np.ndarray  # (N, F)
    src: np.ndarray  # (E,) directed
    dst: np.ndarray  # (E,)
    etype: np.ndarray  # (E,)
    node_graph: np.ndarray  # (N,) graph id per node
    n_graphs: int
    node_counts: np.ndarray  # (G,)
    ligand_nodes: np.ndarray  # global indices of ligand atoms
    ligand_graph: np.ndarray  # graph id per ligand atom
    ligand_counts: np.ndarray  # (G,) ligand atoms per graph

    @classmethod
    def from_graphs(cls, graphs: list[ComplexGraph]) -> "GraphBatch":
        positions, features = [], []
        src, dst, etype = [], [], []
        node_graph, lig_nodes, lig_graph = [], [], []
        offset = 0
        counts, lig_counts = [], []
        for gid, g in enumerate(graphs):
            n = g.n_nodes
            positions.append(g.node_positions)
            features.append(g.node_features)
            if g.edges.shape[0]:
                e = g.edges
                # both directions so every node aggregates its full neighbourhood
                src.append(np.concatenate([e[:, 0], e[:, 1]]) + offset)
                dst.append(np.concatenate([e[:, 1], e[:, 0]]) + offset)
                etype.append(np.concatenate([e[:, 2], e[:, 2]]))
            node_graph.append(np.full(n, gid, dtype=np.int64))
            lig_nodes.append(g.ligand_node_index + offset)
            lig_graph.append(np.full(g.n_ligand, gid, dtype=np.int64))
            counts.append(n)
            lig_counts.append(g.n_ligand)
            offset += n
        cat = lambda parts, dtype: (
            np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)
        )
        return cls(
            positions=np.concatenate(positions, axis=0),
            features=np.concatenate(features, axis=0),
            src=cat(src, np.int64),
            dst=cat(dst, np.int64),
            etype=cat(etype, np.int64),
            node_graph=np.concatenate(node_graph),
            n_graphs=len(graphs),
            node_counts=np.asarray(counts, dtype=np.float64),
            ligand_nodes=cat(lig_nodes, np.int64),
            ligand_graph=cat(lig_graph, np.int64),
            ligand_counts=np.asarray(lig_counts, dtype=np.float64),
        )


@dataclass(slots=True)
class ForwardState:
    """Intermediate tensors shared by the readout heads."""

    batch: GraphBatch
    pos: ad.Tensor
    node_h: ad.Tensor
    z: ad.Tensor  # (G, H) graph embeddings
    edge_input: ad.Tensor | None  # final-layer edge features
    diff: ad.Tensor | None
    dist: ad.Tensor | None
    envelope: ad.Tensor | None


def _rbf_expand(d: ad.Tensor, cfg: EncoderConfig) -> tuple[ad.Tensor, ad.Tensor]:
    """Gaussian radial basis of distances with a smooth cutoff envelope."""
    centers = np.linspace(0.0, cfg.cutoff, cfg.rbf_bins)
    width = cfg.cutoff / max(cfg.rbf_bins - 1, 1)
    envelope = ad.mul(
        ad.add(ad.cos(ad.mul(ad.clip(ad.mul(d, 1.0 / cfg.cutoff), 0.0, 1.0), math.pi)), 1.0),
        0.5,
    )
    scaled = ad.mul(ad.sub(d, centers.reshape(1, -1)), 1.0 / width)
    rbf = ad.exp(ad.neg(ad.mul(scaled, scaled)))
    return ad.mul(rbf, envelope), envelope


def forward(
    batch: GraphBatch,
    params: Params,
    cfg: EncoderConfig,
    pos: ad.Tensor | None = None,
) -> ForwardState:
    """Message-passing forward pass over a graph union.

    `pos` may be supplied as a differentiable tensor to obtain coordinate
    gradients (energy-score evaluation); by default positions are constants.
    """
    if pos is None:
        pos = ad.tensor(batch.positions)
    feat = ad.tensor(batch.features)
    h = ad.add(ad.matmul(feat, params["embed.w"]), params["embed.b"])
    n_nodes = batch.positions.shape[0]

    edge_input = diff = dist = envelope = None
    if batch.src.size:
        diff = ad.sub(ad.gather(pos, batch.dst), ad.gather(pos, batch.src))
        dist = ad.sqrt(ad.sum(ad.mul(diff, diff), axis=1, keepdims=True))
        rbf, envelope = _rbf_expand(dist, cfg)
        temb = ad.gather(params["type_emb"], batch.etype)
        for layer in range(cfg.layers):
            hs = ad.gather(h, batch.src)
            hd = ad.gather(h, batch.dst)
            edge_input = ad.concat([hs, hd, rbf, temb], axis=1)
            hidden = ad.tanh(
                ad.add(ad.matmul(edge_input, params[f"layer{layer}.msg.w1"]), params[f"layer{layer}.msg.b1"])
            )
            msg = ad.add(ad.matmul(hidden, params[f"layer{layer}.msg.w2"]), params[f"layer{layer}.msg.b2"])
            msg = ad.mul(msg, envelope)
            agg = ad.scatter_add(msg, batch.dst, n_nodes)
            update_input = ad.concat([h, agg], axis=1)
            gate = ad.sigmoid(
                ad.add(ad.matmul(update_input, params[f"layer{layer}.gate.w"]), params[f"layer{layer}.gate.b"])
            )
            update = ad.tanh(
                ad.add(ad.matmul(update_input, params[f"layer{layer}.upd.w"]), params[f"layer{layer}.upd.b"])
            )
            h = ad.add(h, ad.mul(gate, update))

    pooled = ad.scatter_add(h, batch.node_graph, batch.n_graphs)
    z = ad.mul(pooled, (1.0 / batch.node_counts).reshape(-1, 1))
    if not np.isfinite(z.data).all():
        raise NonFiniteActivation("encoder produced non-finite embeddings")
    return ForwardState(
        batch=batch, pos=pos, node_h=h, z=z,
        edge_input=edge_input, diff=diff, dist=dist, envelope=envelope,
    )


def _head(z: ad.Tensor, params: Params, name: str) -> ad.Tensor:
    hidden = ad.tanh(ad.add(ad.matmul(z, params[f"{name}.w1"]), params[f"{name}.b1"]))
    return ad.add(ad.matmul(hidden, params[f"{name}.w2"]), params[f"{name}.b2"])


def project(state: ForwardState, params: Params) -> ad.Tensor:
    """Contrastive projection, (G, H)."""
    return _head(state.z, params, "proj")


def energy(state: ForwardState, params: Params) -> ad.Tensor:
    """Structural energy per graph, (G, 1)."""
    return _head(state.z, params, "energy")


def predict_affinity(state: ForwardState, params: Params) -> ad.Tensor:
    """Binding-affinity regression per graph, (G, 1)."""
    return _head(state.z, params, "regression")


def score_head(state: ForwardState, params: Params) -> ad.Tensor:
    """Per-ligand-atom 3-vector score, (L, 3).

    Built as sums of invariant edge scalars times unit bond directions, so it
    is translation-invariant and rotates/reflects with the frame, and it is
    differentiable w.r.t. parameters (first-order DSM training).
    """
    if state.edge_input is None:
        return ad.tensor(np.zeros((state.batch.ligand_nodes.size, 3)))
    weight_hidden = ad.tanh(
        ad.add(ad.matmul(state.edge_input, params["score.w1"]), params["score.b1"])
    )
    weight = ad.add(ad.matmul(weight_hidden, params["score.w2"]), params["score.b2"])
    weight = ad.mul(weight, state.envelope)
    unit = ad.div(state.diff, state.dist)
    contrib = ad.mul(weight, unit)
    per_node = ad.scatter_add(contrib, state.batch.dst, state.batch.positions.shape[0])
    return ad.gather(per_node, state.batch.ligand_nodes)


def encode_graphs(
    graphs: list[ComplexGraph], params: Params, cfg: EncoderConfig
) -> tuple[ForwardState, ad.Tensor]:
    state = forward(GraphBatch.from_graphs(graphs), params, cfg)
    return state, state.z


def encode(g: ComplexGraph, params: Params, cfg: EncoderConfig) -> np.ndarray:
    """Graph-level embedding of one complex as a plain array."""
    state = forward(GraphBatch.from_graphs([g]), params, cfg)
    return state.z.data[0].copy()


def energy_value(g: ComplexGraph, params: Params, cfg: EncoderConfig) -> float:
    state = forward(GraphBatch.from_graphs([g]), params, cfg)
    return float(energy(state, params).data[0, 0])


def affinity_value(g: ComplexGraph, params: Params, cfg: EncoderConfig) -> float:
    state = forward(GraphBatch.from_graphs([g]), params, cfg)
    return float(predict_affinity(state, params).data[0, 0])


def score_autograd(g: ComplexGraph, params: Params, cfg: EncoderConfig) -> np.ndarray:
    """d(energy)/d(ligand coordinates), exact reverse-mode, (n_ligand, 3).

    Evaluation-time alternative to the score head; the result is a plain
    array (training through it would need second-order terms).
    """
    batch = GraphBatch.from_graphs([g])
    pos = ad.tensor(batch.positions, requires_grad=True)
    state = forward(batch, params, cfg, pos=pos)
    (pos_grad,) = ad.grad(energy(state, params), [pos])
    return pos_grad[batch.ligand_nodes]


# --- checkpoint io -----------------------------------------------------------


def save_checkpoint(path: str | Path, params: Params, cfg: EncoderConfig, extra: dict | None = None):
    """Versioned binary checkpoint: JSON header + f64 little-endian payload."""
    names = sorted(params)
    header = {
        "config": cfg.to_json(),
        "params": [{"name": n, "shape": list(params[n].data.shape)} for n in names],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(params[name].data, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[Params, EncoderConfig, dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise DatasetFormatError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise DatasetFormatError(f"{path}: unsupported checkpoint version {version}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len))
        params: Params = {}
        for meta in header["params"]:
            shape = tuple(meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            params[meta["name"]] = ad.tensor(data.copy(), requires_grad=True)
    return params, EncoderConfig.from_json(header["config"]), header.get("extra", {})
