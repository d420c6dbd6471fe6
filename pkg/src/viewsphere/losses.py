"""Contrastive loss objectives on embedding matrices.

Three objectives over cosine-similarity logits: the symmetric in-batch
cross-entropy (with analytic gradients), the random-contrast variant whose
negative pool is a set of random viewpoint embeddings, and the reweighted
hard-negative loss.  The total objective is their weighted sum.  Forward
values are what the framework needs; the Eq.-style gradient exists to prove
the math and is validated against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ContrastiveResult",
    "EmbeddingBatch",
    "LossConfig",
    "contrastive_loss",
    "hard_negative_loss",
    "in_batch_hard_negative_loss",
    "random_contrast_loss",
    "total_loss",
]


@dataclass(frozen=True)
class EmbeddingBatch:
    """Paired viewpoint/query embeddings plus an optional random-view pool."""

    zv: np.ndarray
    zq: np.ndarray
    zr: np.ndarray | None = None

    def __post_init__(self):
        zv = _as_matrix(self.zv, "zv")
        zq = _as_matrix(self.zq, "zq")
        if zv.shape != zq.shape:
            raise ValueError(f"zv and zq must share a shape, got {zv.shape} vs {zq.shape}")
        zr = None
        if self.zr is not None:
            zr = _as_matrix(self.zr, "zr")
            if zr.shape[1] != zv.shape[1]:
                raise ValueError("zr must share the embedding dimension")
        object.__setattr__(self, "zv", zv)
        object.__setattr__(self, "zq", zq)
        object.__setattr__(self, "zr", zr)

    @property
    def n(self) -> int:
        return self.zv.shape[0]

    @property
    def dim(self) -> int:
        return self.zv.shape[1]


@dataclass(frozen=True)
class LossConfig:
    """Temperature, hard-negative parameters, and objective weights."""

    tau: float = 0.07
    g: float = 1.0
    beta_hard: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        for name in ("g", "beta_hard", "alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class ContrastiveResult:
    loss: float
    grad_zv: np.ndarray = field(repr=False)
    grad_zq: np.ndarray = field(repr=False)


def contrastive_loss(batch: EmbeddingBatch, tau: float = 0.07) -> ContrastiveResult:
    """Symmetric cross-entropy over the NxN cosine matrix, with gradients.

    Row direction treats each viewpoint's matching query as the positive
    class; the column direction mirrors it.  Both means are summed.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    n = batch.n
    if n < 2:
        raise ValueError("contrastive loss needs N >= 2 pairs for in-batch negatives")
    uv, norm_v = _normalize_rows(batch.zv)
    uq, norm_q = _normalize_rows(batch.zq)
    cos = uv @ uq.T
    logits = cos / tau

    p_rows = _softmax(logits, axis=1)
    p_cols = _softmax(logits, axis=0)
    idx = np.arange(n)
    loss_rows = float(-np.mean(np.log(p_rows[idx, idx])))
    loss_cols = float(-np.mean(np.log(p_cols[idx, idx])))
    loss = loss_rows + loss_cols

    dlogits = (p_rows + p_cols - 2.0 * np.eye(n)) / n
    dcos = dlogits / tau
    grad_uv = dcos @ uq
    grad_uq = dcos.T @ uv
    grad_zv = _through_normalization(grad_uv, uv, norm_v)
    grad_zq = _through_normalization(grad_uq, uq, norm_q)
    return ContrastiveResult(loss=loss, grad_zv=grad_zv, grad_zq=grad_zq)


def random_contrast_loss(batch: EmbeddingBatch, tau: float = 0.07) -> float:
    """Cross-entropy where each query's candidate pool is its own viewpoint
    plus the random-view embeddings."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    if batch.zr is None or batch.zr.shape[0] == 0:
        raise ValueError("random-contrast loss needs a non-empty random pool zr")
    uv, _ = _normalize_rows(batch.zv)
    uq, _ = _normalize_rows(batch.zq)
    ur, _ = _normalize_rows(batch.zr)
    pos = np.sum(uv * uq, axis=1) / tau          # (N,)
    neg = (uq @ ur.T) / tau                      # (N, M)
    logits = np.concatenate([pos[:, None], neg], axis=1)
    logz = _logsumexp(logits, axis=1)
    return float(np.mean(logz - pos))


def hard_negative_loss(anchors, positives, pool, g: float = 1.0, beta_hard: float = 1.0) -> float:
    """Reweighted hard-negative contrastive loss.

    The negative expectation is estimated in-batch with importance weights
    proportional to exp(beta_hard * cos(anchor, negative)), so beta_hard = 0
    recovers the plain mean and large beta_hard concentrates on the hardest
    negative.  g scales the negative term; g = 0 makes the loss exactly 0.
    """
    if g < 0:
        raise ValueError("g must be >= 0")
    if beta_hard < 0:
        raise ValueError("beta_hard must be >= 0")
    a = _as_matrix(np.asarray(anchors, dtype=float), "anchors")
    p = _as_matrix(np.asarray(positives, dtype=float), "positives")
    nn = np.asarray(pool, dtype=float)
    if nn.ndim != 2 or nn.shape[0] == 0:
        raise ValueError("negative pool must be a non-empty matrix")
    if a.shape != p.shape or nn.shape[1] != a.shape[1]:
        raise ValueError("anchors, positives, and pool must share the embedding dimension")
    ua, _ = _normalize_rows(a)
    up, _ = _normalize_rows(p)
    un, _ = _normalize_rows(nn)
    f_pos = np.sum(ua * up, axis=1)              # (K,)
    f_neg = ua @ un.T                            # (K, P)
    w = _softmax(beta_hard * f_neg, axis=1)
    expectation = np.sum(w * np.exp(f_neg), axis=1)
    losses = np.log1p(g * expectation * np.exp(-f_pos))
    return float(np.mean(losses))


def total_loss(batch: EmbeddingBatch, config: LossConfig) -> float:
    """Weighted sum of the three objectives; zero-weight terms are skipped.

    The hard-negative component anchors on queries, takes the paired
    viewpoint as positive, and pools the other in-batch viewpoints as
    negatives.
    """
    total = 0.0
    if config.alpha != 0.0:
        total += config.alpha * contrastive_loss(batch, config.tau).loss
    if config.beta != 0.0:
        total += config.beta * random_contrast_loss(batch, config.tau)
    if config.gamma != 0.0:
        total += config.gamma * in_batch_hard_negative_loss(batch, config.g, config.beta_hard)
    return total


def in_batch_hard_negative_loss(batch: EmbeddingBatch, g: float = 1.0,
                                beta_hard: float = 1.0) -> float:
    """Hard-negative loss assembled from a batch: queries anchor, paired
    viewpoints are positives, and the other in-batch viewpoints form each
    anchor's negative pool."""
    n = batch.n
    if n < 2:
        raise ValueError("in-batch hard negatives need N >= 2")
    uv, _ = _normalize_rows(batch.zv)
    uq, _ = _normalize_rows(batch.zq)
    f = uq @ uv.T                                # (N, N); diagonal is the positive
    f_pos = np.diag(f).copy()
    off = ~np.eye(n, dtype=bool)
    f_neg = f[off].reshape(n, n - 1)
    w = _softmax(beta_hard * f_neg, axis=1)
    expectation = np.sum(w * np.exp(f_neg), axis=1)
    return float(np.mean(np.log1p(g * expectation * np.exp(-f_pos))))


def _as_matrix(m, name: str) -> np.ndarray:
    m = np.ascontiguousarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} must be finite")
    if np.any(np.linalg.norm(m, axis=1) == 0.0):
        raise ValueError(f"{name} must have non-zero rows")
    return m


def _normalize_rows(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / norms, norms


def _softmax(logits: np.ndarray, axis: int) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _logsumexp(logits: np.ndarray, axis: int) -> np.ndarray:
    m = logits.max(axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(logits - m), axis=axis, keepdims=True))).squeeze(axis)


def _through_normalization(grad_unit: np.ndarray, unit: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # d(u/|u|) chain rule: project out the radial component, scale by 1/|u|
    radial = np.sum(grad_unit * unit, axis=1, keepdims=True)
    return (grad_unit - radial * unit) / norms
