"""Training loops: contrastive+denoising pretraining and supervised fine-tune.

Pretraining runs a fixed number of epochs over sampled batches (optionally
early-stopped on a small held-out complex split); fine-tuning replaces the
regression head, minimizes MSE on labeled complexes, reduces the learning
rate on validation plateaus, and early-stops. Both loops are bit-level
deterministic for a fixed seed and platform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from . import objective as obj
from .errors import DivergedLoss, EmptySplit
from .graphs import ComplexGraph
from .store import Dataset, PretrainBatch, sample_pretrain_batch, steps_per_epoch

SPLIT_TAG = 0x53504C49  # "SPLI"
VAL_EPOCH_TAG = 0x56414C  # "VAL": epoch slot used for the fixed validation draw
FINETUNE_TAG = 0x46545045  # "FTPE"


@dataclass(slots=True)
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-6
    pretrain_epochs: int = 20
    finetune_max_epochs: int = 300
    early_stop_patience: int = 40
    lr_reduce_factor: float = 0.1
    lr_reduce_patience: int = 10
    pretrain_batch: int = 8
    finetune_batch: int = 128
    seed: int = 0
    pretrain_val_fraction: float = 0.05
    pretrain_early_stop: bool = False

    def __post_init__(self):
        for name in (
            "lr", "pretrain_epochs", "finetune_max_epochs", "early_stop_patience",
            "lr_reduce_factor", "lr_reduce_patience", "pretrain_batch", "finetune_batch",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.early_stop_patience >= self.finetune_max_epochs:
            raise ValueError("early_stop_patience must be below finetune_max_epochs")

    def to_json(self) -> dict:
        return {
            "lr": self.lr, "weight_decay": self.weight_decay,
            "pretrain_epochs": self.pretrain_epochs,
            "finetune_max_epochs": self.finetune_max_epochs,
            "early_stop_patience": self.early_stop_patience,
            "lr_reduce_factor": self.lr_reduce_factor,
            "lr_reduce_patience": self.lr_reduce_patience,
            "pretrain_batch": self.pretrain_batch,
            "finetune_batch": self.finetune_batch,
            "seed": self.seed,
            "pretrain_val_fraction": self.pretrain_val_fraction,
            "pretrain_early_stop": self.pretrain_early_stop,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass(slots=True)
class MetricReport:
    rmse: float
    pearson_r: float | None  # None when a side has zero variance
    n: int

    def to_json(self) -> dict:
        return {"rmse": self.rmse, "pearson_r": self.pearson_r, "n": self.n}


@dataclass(slots=True)
class LabeledComplex:
    complex_id: str
    graph: ComplexGraph
    affinity: float


class Adam:
    """Adam with decoupled weight decay (shrink scaled by lr, so lr=0 is a no-op)."""

    def __init__(self, params: enc.Params, lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def register(self, name: str, p: ad.Tensor):
        """Track a replaced parameter (fresh moments)."""
        self.params[name] = p
        self.m[name] = np.zeros_like(p.data)
        self.v[name] = np.zeros_like(p.data)

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1.0 - b2) * (g * g)
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.data = p.data - self.lr * (update + self.weight_decay * p.data)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


class EarlyStopping:
    """Stops after `patience` consecutive epochs without strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best: float | None = None
        self.best_epoch = -1
        self.counter = 0
        self.should_stop = False

    def update(self, value: float, epoch: int) -> bool:
        """Returns True when `value` is a new best."""
        if self.best is None or value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.counter = 0
            return True
        self.counter += 1
        if self.counter >= self.patience:
            self.should_stop = True
        return False


# --- loss assembly -------------------------------------------------------------


def batch_losses(
    batch: PretrainBatch,
    params: enc.Params,
    ecfg: enc.EncoderConfig,
    ccfg: obj.ContrastiveConfig,
    dcfg: obj.DsmConfig,
) -> tuple[ad.Tensor, float, float]:
    """Total pretraining loss for one batch, plus L1/L2 values for logging."""
    graphs = [a.native for a in batch.anchors]
    terms: list[obj.AnchorTerms] = []
    row = len(batch.anchors)
    for k, anchor in enumerate(batch.anchors):
        decoy_rows = list(range(row, row + len(anchor.decoys)))
        row += len(anchor.decoys)
        graphs.extend(d.graph for d in anchor.decoys)
        terms.append(
            obj.AnchorTerms(
                anchor_row=k,
                decoy_rows=decoy_rows,
                decoy_rmsds=[d.rmsd for d in anchor.decoys],
            )
        )
    state = enc.forward(enc.GraphBatch.from_graphs(graphs), params, ecfg)
    projected = enc.project(state, params)
    per_anchor_dmax = [a.max_rmsd for a in batch.anchors]
    l1, n_pairs = obj.contrastive_loss(
        projected, terms, batch.d_max, ccfg, per_anchor_dmax=per_anchor_dmax
    )

    perturbed_graphs = [p.graph for a in batch.anchors for p in a.perturbed]
    l2 = None
    if perturbed_graphs:
        pbatch = enc.GraphBatch.from_graphs(perturbed_graphs)
        pstate = enc.forward(pbatch, params, ecfg)
        scores = enc.score_head(pstate, params)
        noises = np.concatenate([p.noise for a in batch.anchors for p in a.perturbed], axis=0)
        l2 = obj.dsm_loss_batched(
            scores, noises, dcfg.sigma, pbatch.ligand_graph, pbatch.n_graphs
        )
    total = obj.total_loss(l1, l2, dcfg.mu)
    return (
        total,
        float(l1.data) if l1 is not None else 0.0,
        float(l2.data) if l2 is not None else 0.0,
    )


def _pretrain_split(ds: Dataset, cfg: TrainConfig) -> tuple[Dataset, Dataset | None]:
    n = len(ds)
    if cfg.pretrain_val_fraction <= 0 or n < 4:
        return ds, None
    n_val = max(2, int(round(cfg.pretrain_val_fraction * n)))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, SPLIT_TAG])))
    order = rng.permutation(n)
    ids = ds.complex_ids
    val_ids = {ids[int(i)] for i in order[:n_val]}
    return ds.exclusion_filter(val_ids), ds.subset(val_ids)


@dataclass(slots=True)
class PretrainResult:
    params: enc.Params
    history: list[dict] = field(default_factory=list)  # epoch, train_loss, val_loss
    stopped_early: bool = False


def pretrain(
    ds: Dataset,
    ecfg: enc.EncoderConfig,
    ccfg: obj.ContrastiveConfig,
    dcfg: obj.DsmConfig,
    tcfg: TrainConfig,
    log=None,
) -> PretrainResult:
    """Contrastive + denoising pretraining over the decoy-annotated corpus.

    Per step: embed the anchors and their sampled decoys, form the weighted
    contrastive loss, score the perturbed copies for the denoising loss, and
    take one Adam step on the combined objective. Aborts with the last
    epoch's parameters when the loss diverges.
    """
    params = enc.init_params(ecfg, seed=tcfg.seed)
    optimizer = Adam(params, lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    train_ds, val_ds = _pretrain_split(ds, tcfg)
    stopper = EarlyStopping(patience=max(2, tcfg.pretrain_epochs // 4))
    result = PretrainResult(params=params)
    last_good = {k: p.data.copy() for k, p in params.items()}

    for epoch in range(tcfg.pretrain_epochs):
        losses = []
        for step in range(steps_per_epoch(len(train_ds), tcfg.pretrain_batch)):
            batch = sample_pretrain_batch(
                train_ds, tcfg.pretrain_batch, seed=tcfg.seed, epoch=epoch, step=step,
                sigma=dcfg.sigma,
            )
            optimizer.zero_grad()
            total, _, _ = batch_losses(batch, params, ecfg, ccfg, dcfg)
            value = float(total.data)
            if not np.isfinite(value):
                for k, p in params.items():
                    p.data = last_good[k]
                raise DivergedLoss(f"pretrain loss became {value} at epoch {epoch} step {step}")
            total.backward()
            optimizer.step()
            losses.append(value)
        train_loss = float(np.mean(losses))
        val_loss = None
        if val_ds is not None:
            # fixed draw so validation is comparable across epochs
            val_batch = sample_pretrain_batch(
                val_ds, len(val_ds), seed=tcfg.seed, epoch=VAL_EPOCH_TAG, step=0,
                sigma=dcfg.sigma,
            )
            val_total, _, _ = batch_losses(val_batch, params, ecfg, ccfg, dcfg)
            val_loss = float(val_total.data)
        result.history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        last_good = {k: p.data.copy() for k, p in params.items()}
        if log:
            log(f"pretrain epoch {epoch}: train {train_loss:.6f}"
                + (f" val {val_loss:.6f}" if val_loss is not None else ""))
        if tcfg.pretrain_early_stop and val_loss is not None:
            stopper.update(val_loss, epoch)
            if stopper.should_stop:
                result.stopped_early = True
                break
    return result


def write_loss_curve(history: list[dict], path: str | Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            val = "" if row.get("val_loss") is None else repr(row["val_loss"])
            writer.writerow([row["epoch"], repr(row["train_loss"]), val])


# --- fine-tuning -----------------------------------------------------------------


def _predict_batch(graphs: list[ComplexGraph], params, ecfg) -> ad.Tensor:
    state = enc.forward(enc.GraphBatch.from_graphs(graphs), params, ecfg)
    return enc.predict_affinity(state, params)


def evaluate(params: enc.Params, labeled: list[LabeledComplex], ecfg: enc.EncoderConfig,
             batch_size: int = 256) -> MetricReport:
    """RMSE and sample Pearson correlation of predicted vs labeled affinity."""
    if not labeled:
        raise EmptySplit("evaluate needs at least one labeled complex")
    preds = []
    for lo in range(0, len(labeled), batch_size):
        chunk = labeled[lo : lo + batch_size]
        preds.append(_predict_batch([c.graph for c in chunk], params, ecfg).data[:, 0])
    y_hat = np.concatenate(preds)
    y = np.array([c.affinity for c in labeled], dtype=np.float64)
    rmse = float(np.sqrt(np.mean((y - y_hat) ** 2)))
    r: float | None = None
    if len(labeled) >= 2:
        sy = y - y.mean()
        sp = y_hat - y_hat.mean()
        denom = np.sqrt((sy * sy).sum() * (sp * sp).sum())
        if denom > 0:
            r = float((sy * sp).sum() / denom)
    return MetricReport(rmse=rmse, pearson_r=r, n=len(labeled))


@dataclass(slots=True)
class FinetuneResult:
    params: enc.Params
    best_epoch: int
    best_val_rmse: float
    history: list[dict] = field(default_factory=list)
    test_report: MetricReport | None = None


def finetune(
    init_params: enc.Params | None,
    train: list[LabeledComplex],
    val: list[LabeledComplex],
    ecfg: enc.EncoderConfig,
    tcfg: TrainConfig,
    test: list[LabeledComplex] | None = None,
    max_epochs: int | None = None,
    log=None,
) -> FinetuneResult:
    """Supervised MSE training with plateau LR decay and early stopping.

    Starts from pretrained parameters when given (the regression head is
    always reinitialized) or from scratch. Returns the parameters of the
    best validation epoch.
    """
    if not train:
        raise EmptySplit("fine-tuning needs a non-empty training split")
    if not val:
        raise EmptySplit("fine-tuning needs a non-empty validation split")
    if init_params is not None:
        params = {k: ad.tensor(p.data.copy(), requires_grad=True) for k, p in init_params.items()}
    else:
        params = enc.init_params(ecfg, seed=tcfg.seed)
    enc.reinit_head(params, "regression", ecfg, seed=tcfg.seed + 1)

    optimizer = Adam(params, lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    stopper = EarlyStopping(patience=tcfg.early_stop_patience)
    plateau_best: float | None = None
    plateau_counter = 0
    best_params = {k: p.data.copy() for k, p in params.items()}
    result = FinetuneResult(params=params, best_epoch=-1, best_val_rmse=float("inf"))

    y_train = np.array([c.affinity for c in train], dtype=np.float64)
    epochs = max_epochs if max_epochs is not None else tcfg.finetune_max_epochs
    for epoch in range(epochs):
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([tcfg.seed, FINETUNE_TAG, epoch]))
        )
        order = rng.permutation(len(train))
        epoch_losses = []
        for lo in range(0, len(train), tcfg.finetune_batch):
            rows = order[lo : lo + tcfg.finetune_batch]
            graphs = [train[int(i)].graph for i in rows]
            target = y_train[rows].reshape(-1, 1)
            optimizer.zero_grad()
            pred = _predict_batch(graphs, params, ecfg)
            err = ad.sub(pred, target)
            loss = ad.mean(ad.mul(err, err))
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergedLoss(f"fine-tune loss became {value} at epoch {epoch}")
            loss.backward()
            optimizer.step()
            epoch_losses.append(value)
        val_report = evaluate(params, val, ecfg)
        result.history.append(
            {"epoch": epoch, "train_loss": float(np.mean(epoch_losses)), "val_rmse": val_report.rmse}
        )
        if log:
            log(f"finetune epoch {epoch}: train {np.mean(epoch_losses):.6f} "
                f"val_rmse {val_report.rmse:.6f} lr {optimizer.lr:g}")
        if stopper.update(val_report.rmse, epoch):
            best_params = {k: p.data.copy() for k, p in params.items()}
            result.best_epoch = epoch
            result.best_val_rmse = val_report.rmse
        if stopper.should_stop:
            break
        # plateau schedule: cut lr after lr_reduce_patience stale epochs
        if plateau_best is None or val_report.rmse < plateau_best:
            plateau_best = val_report.rmse
            plateau_counter = 0
        else:
            plateau_counter += 1
            if plateau_counter >= tcfg.lr_reduce_patience:
                optimizer.lr *= tcfg.lr_reduce_factor
                plateau_counter = 0

    for k in params:
        params[k].data = best_params[k]
    if test:
        result.test_report = evaluate(params, test, ecfg)
    return result


def split_labeled(
    labeled: list[LabeledComplex], seed: int, val_fraction: float = 0.15,
    test_fraction: float = 0.15,
) -> tuple[list[LabeledComplex], list[LabeledComplex], list[LabeledComplex]]:
    """Deterministic train/val/test split by seeded permutation."""
    n = len(labeled)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, SPLIT_TAG, 2])))
    order = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    n_test = max(1, int(round(test_fraction * n))) if test_fraction > 0 else 0
    val_rows = set(order[:n_val].tolist())
    test_rows = set(order[n_val : n_val + n_test].tolist())
    train, val, test = [], [], []
    for i, item in enumerate(labeled):
        if i in val_rows:
            val.append(item)
        elif i in test_rows:
            test.append(item)
        else:
            train.append(item)
    if not train:
        raise EmptySplit("split left no training samples")
    return train, val, test


def load_labels_csv(path: str | Path) -> dict[str, float]:
    """labels.csv: complex_id,affinity (header optional)."""
    labels: dict[str, float] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip() == "complex_id":
                continue
            labels[row[0].strip()] = float(row[1])
    return labels


def labeled_from_dataset(ds: Dataset, labels: dict[str, float], cutoff: float = 5.0) -> list[LabeledComplex]:
    """Native-pose graphs for every dataset complex that has a label."""
    from .graphs import build_graph

    out = []
    for cid in ds.complex_ids:
        if cid not in labels:
            continue
        value = labels[cid]
        if not np.isfinite(value):
            raise ValueError(f"affinity for {cid} is not finite")
        rec = ds.read(cid).to_record()
        out.append(LabeledComplex(complex_id=cid, graph=build_graph(rec, cutoff=cutoff), affinity=value))
    return out
