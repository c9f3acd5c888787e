"""Pretraining objective: two-category contrastive loss + denoising term.

For each anchor (a real complex) the positives are its near-native decoys
(RMSD <= 2 A) and the negatives fall in two categories: its far-from-native
decoys, weighted by a normalized continuous RMSD, and the other real
complexes in the batch, weighted 1. The denoising term matches a coordinate
score against the Gaussian noise target (x - x')/sigma^2 and is averaged
over the perturbed copies; the two parts combine as L = L1 + mu * L2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import (
    DmaxUnavailable,
    NoNegatives,
    NonFiniteScore,
    NoPositivePairsInBatch,
    ZeroVector,
)

POSITIVE_RMSD_MAX = 2.0


class NegativeCategory(enum.Enum):
    DECOY = "decoy"
    CROSS_COMPLEX = "cross_complex"


@dataclass(slots=True)
class ContrastiveConfig:
    tau: float = 0.5
    alpha: float = 1.0  # decoy-weight scale, swept 0.4-2.0 upstream
    positive_rmsd_max: float = POSITIVE_RMSD_MAX
    include_cross_complex_negatives: bool = True
    include_decoy_negatives: bool = True
    two_category: bool = True  # False: every negative weighted 1 (one-category loss)
    denominator_includes_positive: bool = False
    dmax_mode: str = "global"  # or "per_complex"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.dmax_mode not in ("global", "per_complex"):
            raise ValueError(f"unknown dmax_mode {self.dmax_mode!r}")

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "alpha": self.alpha,
            "positive_rmsd_max": self.positive_rmsd_max,
            "include_cross_complex_negatives": self.include_cross_complex_negatives,
            "include_decoy_negatives": self.include_decoy_negatives,
            "two_category": self.two_category,
            "denominator_includes_positive": self.denominator_includes_positive,
            "dmax_mode": self.dmax_mode,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ContrastiveConfig":
        return cls(**data)


@dataclass(slots=True)
class DsmConfig:
    sigma: float = 0.5  # Angstroms of ligand coordinate noise
    mu: float = 1.0  # weight of the denoising term in the total loss
    score_mode: str = "head"  # or "autograd" (evaluation only)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if self.score_mode not in ("head", "autograd"):
            raise ValueError(f"unknown score_mode {self.score_mode!r}")

    def to_json(self) -> dict:
        return {"sigma": self.sigma, "mu": self.mu, "score_mode": self.score_mode}

    @classmethod
    def from_json(cls, data: dict) -> "DsmConfig":
        return cls(**data)


def beta(
    rmsd: float,
    d_max: float | None,
    category: NegativeCategory,
    alpha: float = 1.0,
) -> float:
    """Negative-pair weight: alpha * rmsd / d_max for decoys, 1 otherwise."""
    if category is NegativeCategory.CROSS_COMPLEX:
        return 1.0
    if d_max is None or not d_max > 0:
        raise DmaxUnavailable("decoy weighting needs the dataset's max decoy RMSD")
    if rmsd < 0 or rmsd > d_max:
        raise ValueError(f"decoy rmsd {rmsd} outside [0, d_max={d_max}]")
    return alpha * (rmsd / d_max)


def info_nce_pair(
    z_k,
    z_i,
    negatives: list[tuple[object, float]],
    tau: float,
) -> ad.Tensor:
    """One anchor-positive term of the weighted contrastive loss.

    l = -[ sim(z_k, z_i)/tau - logsumexp_j(log beta_j + sim(z_k, z_j)/tau) ],
    with cosine similarities and the denominator over the given negatives
    only. Raises NoNegatives for an empty list and ZeroVector when a cosine
    is undefined.
    """
    if not negatives:
        raise NoNegatives("info_nce_pair needs at least one negative")
    pos_term = ad.mul(ad.cosine_similarity(z_k, z_i), 1.0 / tau)
    logits = []
    for z_j, beta_j in negatives:
        if beta_j <= 0:
            raise ValueError(f"negative weight must be positive, got {beta_j}")
        sim = ad.mul(ad.cosine_similarity(z_k, z_j), 1.0 / tau)
        logits.append(ad.reshape(ad.add(sim, float(np.log(beta_j))), (1,)))
    lse = ad.logsumexp(ad.concat(logits, axis=0))
    return ad.neg(ad.sub(pos_term, lse))


def _row_norms(m: ad.Tensor) -> ad.Tensor:
    return ad.sqrt(ad.sum(ad.mul(m, m), axis=1, keepdims=True))


@dataclass(slots=True)
class AnchorTerms:
    """Index bookkeeping for one anchor inside an embedding matrix."""

    anchor_row: int
    decoy_rows: list[int]
    decoy_rmsds: list[float]


def contrastive_loss(
    embeddings: ad.Tensor,
    anchors: list[AnchorTerms],
    d_max: float | None,
    cfg: ContrastiveConfig,
    per_anchor_dmax: list[float] | None = None,
) -> tuple[ad.Tensor | None, int]:
    """Batch contrastive loss L1, averaged over all (anchor, positive) pairs.

    `embeddings` holds one row per structure (anchors and their sampled
    decoys); `anchors` lists each anchor's row plus its decoys' rows and
    RMSDs. Positives are decoys at rmsd <= cfg.positive_rmsd_max; the
    denominator collects the anchor's own decoy negatives and the other
    anchors' rows. Anchors without positives contribute no terms; when no
    anchor has one, reports NoPositivePairsInBatch via (None, 0).
    """
    if cfg.dmax_mode == "per_complex" and per_anchor_dmax is None:
        raise ValueError("per_complex dmax_mode needs per_anchor_dmax")
    norms = _row_norms(embeddings)
    if (norms.data == 0).any():
        raise ZeroVector("zero-norm embedding in contrastive batch")
    unit = ad.div(embeddings, norms)  # cosine sims become plain dot products
    anchor_rows = [a.anchor_row for a in anchors]

    terms: list[ad.Tensor] = []
    n_pairs = 0
    for k, anchor in enumerate(anchors):
        pos_rows = [
            r
            for r, rm in zip(anchor.decoy_rows, anchor.decoy_rmsds)
            if rm <= cfg.positive_rmsd_max
        ]
        if not pos_rows:
            continue
        neg_rows: list[int] = []
        neg_beta: list[float] = []
        if cfg.include_decoy_negatives:
            dmax_k = per_anchor_dmax[k] if cfg.dmax_mode == "per_complex" else d_max
            for r, rm in zip(anchor.decoy_rows, anchor.decoy_rmsds):
                if rm <= cfg.positive_rmsd_max:
                    continue
                if not cfg.two_category or dmax_k is None:
                    neg_beta.append(1.0)
                else:
                    neg_beta.append(beta(rm, dmax_k, NegativeCategory.DECOY, cfg.alpha))
                neg_rows.append(r)
        if cfg.include_cross_complex_negatives:
            for other in anchor_rows:
                if other != anchor.anchor_row:
                    neg_rows.append(other)
                    neg_beta.append(1.0)
        if not neg_rows:
            raise NoNegatives(f"anchor row {anchor.anchor_row} has no negatives")

        zk = ad.gather(unit, [anchor.anchor_row])  # (1, H)
        negs = ad.gather(unit, neg_rows)  # (n, H)
        neg_sims = ad.mul(ad.matmul(negs, ad.reshape(zk, (-1, 1))), 1.0 / cfg.tau)  # (n, 1)
        neg_logits = ad.add(neg_sims, np.log(np.asarray(neg_beta)).reshape(-1, 1))
        pos = ad.gather(unit, pos_rows)  # (m, H)
        pos_sims = ad.mul(ad.matmul(pos, ad.reshape(zk, (-1, 1))), 1.0 / cfg.tau)  # (m, 1)
        if cfg.denominator_includes_positive:
            # each positive joins its own denominator with weight 1
            for i in range(len(pos_rows)):
                row = ad.reshape(ad.gather(pos_sims, [i]), (1, 1))
                lse = ad.logsumexp(ad.concat([neg_logits, row], axis=0))
                terms.append(ad.reshape(ad.neg(ad.sub(ad.reshape(row, ()), lse)), (1,)))
        else:
            lse = ad.logsumexp(neg_logits)  # shared by all positives of this anchor
            term = ad.neg(ad.sub(pos_sims, lse))
            terms.append(ad.reshape(term, (-1,)))
        n_pairs += len(pos_rows)

    if n_pairs == 0:
        return None, 0
    return ad.mean(ad.concat(terms, axis=0)), n_pairs


def dsm_loss(perturbed: list[tuple[object, np.ndarray, float]], score_fn) -> ad.Tensor:
    """Monte-Carlo denoising loss over perturbed copies.

    Each entry is (graph, noise, sigma) with noise = x' - x on the ligand
    atoms. score_fn(graph) must return the model's (n_ligand, 3) coordinate
    score at x'; the target is (x - x')/sigma^2 = -noise/sigma^2. Per copy
    the squared deviation is summed over atoms and coordinates, then the
    copies are averaged.
    """
    if not perturbed:
        raise ValueError("dsm_loss needs at least one perturbed copy")
    totals = []
    for graph, noise, sigma in perturbed:
        score = score_fn(graph)
        if not isinstance(score, ad.Tensor):
            score = ad.tensor(score)
        if not np.isfinite(score.data).all():
            raise NonFiniteScore("score model produced non-finite values")
        target = -np.asarray(noise, dtype=np.float64) / (sigma * sigma)
        diff = ad.sub(score, target)
        totals.append(ad.reshape(ad.sum(ad.mul(diff, diff)), (1,)))
    return ad.mean(ad.concat(totals, axis=0))


def dsm_loss_batched(
    scores: ad.Tensor,
    noises: np.ndarray,
    sigma: float,
    copy_ids: np.ndarray,
    n_copies: int,
) -> ad.Tensor:
    """Union-batched form of dsm_loss (one score row per ligand atom)."""
    if not np.isfinite(scores.data).all():
        raise NonFiniteScore("score model produced non-finite values")
    target = -np.asarray(noises, dtype=np.float64) / (sigma * sigma)
    diff = ad.sub(scores, target)
    per_atom = ad.sum(ad.mul(diff, diff), axis=1, keepdims=True)  # (L, 1)
    per_copy = ad.scatter_add(per_atom, copy_ids, n_copies)  # (C, 1)
    return ad.mean(per_copy)


def total_loss(l1: ad.Tensor | None, l2: ad.Tensor | None, mu: float) -> ad.Tensor:
    """L = L1 + mu * L2, tolerating a missing part (degenerate batches)."""
    if l1 is None and l2 is None:
        raise NoPositivePairsInBatch("batch produced neither contrastive nor denoising terms")
    if l1 is None:
        return ad.mul(l2, mu)
    if l2 is None or mu == 0.0:
        return l1
    return ad.add(l1, ad.mul(l2, mu))
