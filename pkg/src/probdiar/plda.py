"""Diagonalized two-covariance PLDA scoring of probabilistic embeddings.

Each segment carries a mean vector and a diagonal precision quantifying how
much each dimension should be trusted.  After joint diagonalization the
speaker identity variable is standard normal and the within-speaker precision
is a diagonal w.  Cluster likelihoods reduce to per-dimension pooled
statistics (a_bar, b_bar) that merge by addition, which makes both the
exhaustive posterior over all partitions of a small tuple and greedy
agglomerative clustering cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .errors import DecompositionError, DomainError, ShapeError
from .partitions import PartitionTables


@dataclass(frozen=True)
class ProbEmbedding:
    """A probabilistic embedding: mean and diagonal precision."""

    xhat: np.ndarray
    prec: np.ndarray

    def __post_init__(self):
        xhat = np.asarray(self.xhat, dtype=np.float64)
        prec = np.asarray(self.prec, dtype=np.float64)
        object.__setattr__(self, "xhat", xhat)
        object.__setattr__(self, "prec", prec)
        if xhat.shape != prec.shape or xhat.ndim != 1:
            raise ShapeError(f"xhat/prec must be equal-length vectors, got "
                             f"{xhat.shape} and {prec.shape}")
        if not np.all(np.isfinite(xhat)):
            raise DomainError("xhat must be finite")
        if not (np.all(np.isfinite(prec)) and np.all(prec >= 0)):
            raise DomainError("prec must be finite and nonnegative")

    @property
    def dim(self) -> int:
        return self.xhat.shape[0]


@dataclass(frozen=True)
class DiagPlda:
    """Within-speaker diagonal precision of the diagonalized model."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "w", w)
        if w.ndim != 1:
            raise ShapeError("w must be a vector")
        if not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise DomainError("w must be finite and strictly positive")

    @property
    def dim(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class ClusterStats:
    """Pooled per-dimension sufficient statistics of a cluster.

    Merging two clusters is the elementwise sum; the zero stats represent an
    empty cluster.
    """

    a_bar: np.ndarray
    b_bar: np.ndarray
    count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "a_bar", np.asarray(self.a_bar, dtype=np.float64))
        object.__setattr__(self, "b_bar", np.asarray(self.b_bar, dtype=np.float64))
        if self.a_bar.shape != self.b_bar.shape:
            raise ShapeError("a_bar and b_bar must have the same shape")
        if np.any(self.b_bar < 0):
            raise DomainError("b_bar must be nonnegative")

    def __add__(self, other: "ClusterStats") -> "ClusterStats":
        if self.a_bar.shape != other.a_bar.shape:
            raise ShapeError("cannot merge stats of different dimension")
        return ClusterStats(self.a_bar + other.a_bar,
                            self.b_bar + other.b_bar,
                            self.count + other.count)

    @classmethod
    def zero(cls, dim: int) -> "ClusterStats":
        return cls(np.zeros(dim), np.zeros(dim), 0)


@dataclass(frozen=True)
class FullPlda:
    """Untransformed two-covariance model: between- and within-speaker
    covariances in the raw embedding space."""

    between_cov: np.ndarray
    within_cov: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.between_cov, dtype=np.float64)
        w = np.asarray(self.within_cov, dtype=np.float64)
        object.__setattr__(self, "between_cov", b)
        object.__setattr__(self, "within_cov", w)
        if b.ndim != 2 or b.shape[0] != b.shape[1] or b.shape != w.shape:
            raise ShapeError("covariances must be square matrices of equal size")
        if not (np.allclose(b, b.T, atol=1e-12) and np.allclose(w, w.T, atol=1e-12)):
            raise DomainError("covariances must be symmetric (tolerance 1e-12)")
        try:
            np.linalg.cholesky(w)
        except np.linalg.LinAlgError as exc:
            raise DomainError("within_cov must be positive definite") from exc

    @property
    def dim(self) -> int:
        return self.between_cov.shape[0]


def joint_diagonalize(model: FullPlda) -> tuple[np.ndarray, DiagPlda]:
    """Transform T with T B T' = I and T W_cov T' diagonal.

    Returns (T, DiagPlda) where the diagonal within-speaker precisions are
    1 / diag(T W_cov T').  Rows are ordered by decreasing within-speaker
    precision (most speaker-discriminative first) and signed so the
    largest-magnitude entry of each row is positive.
    """
    b, wc = model.between_cov, model.within_cov
    try:
        np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("between_cov must be full rank (positive definite)") from exc
    # generalized eigenproblem: columns v with v' B v = I and v' W_cov v diagonal
    eigvals, vecs = scipy.linalg.eigh(wc, b)
    t = vecs.T
    w = 1.0 / eigvals
    order = np.argsort(-w, kind="stable")
    t = t[order]
    w = w[order]
    signs = np.sign(t[np.arange(t.shape[0]), np.argmax(np.abs(t), axis=1)])
    t = t * signs[:, None]
    return t, DiagPlda(w)


def segment_weight(plda: DiagPlda, prec: np.ndarray) -> np.ndarray:
    """Per-dimension evidence weight w*b/(w+b): 0 for b=0, saturating at w."""
    prec = np.asarray(prec, dtype=np.float64)
    w = plda.w
    with np.errstate(invalid="ignore"):
        e = np.where(prec > 0, w * prec / (w + prec), 0.0)
    return e


def accumulate(embeddings, plda: DiagPlda) -> ClusterStats:
    """Pool a list of probabilistic embeddings into cluster statistics."""
    stats = ClusterStats.zero(plda.dim)
    for emb in embeddings:
        if emb.dim != plda.dim:
            raise ShapeError(f"embedding dim {emb.dim} != model dim {plda.dim}")
        e = segment_weight(plda, emb.prec)
        stats = stats + ClusterStats(e * emb.xhat, e, 1)
    return stats


def cluster_loglik(stats: ClusterStats) -> float:
    """Log-likelihood of a cluster given its pooled stats, with the
    partition-independent constant fixed to zero."""
    d = 1.0 + stats.b_bar
    return float(0.5 * np.sum(stats.a_bar ** 2 / d - np.log1p(stats.b_bar)))


def _stack(embeddings, plda: DiagPlda):
    xh = np.stack([e.xhat for e in embeddings])
    prec = np.stack([e.prec for e in embeddings])
    if xh.shape[1] != plda.dim:
        raise ShapeError(f"embedding dim {xh.shape[1]} != model dim {plda.dim}")
    return xh, prec


def subset_logliks(xh: np.ndarray, prec: np.ndarray, plda: DiagPlda,
                   tables: PartitionTables, scale: float = 1.0) -> np.ndarray:
    """Cluster log-likelihood of every nonempty subset of the tuple, via the
    sparse segment-to-subset accumulation matrix."""
    e = segment_weight(plda, prec) * scale
    a_bar = tables.seg_subset.T @ (e * xh)      # (2^n - 1, D)
    b_bar = tables.seg_subset.T @ e
    return 0.5 * np.sum(a_bar ** 2 / (1.0 + b_bar) - np.log1p(b_bar), axis=1)


def clustering_log_posterior(embeddings, plda: DiagPlda,
                             tables: PartitionTables) -> np.ndarray:
    """Log posterior over all B_n partitions of the tuple.

    Subset log-likelihoods are accumulated into per-partition likelihoods by
    the sparse partition-to-subset matrix, the log prior is added, and the
    result is normalized by a log-softmax of size B_n.
    """
    if len(embeddings) != tables.n:
        raise ShapeError(f"expected a {tables.n}-tuple, got {len(embeddings)} embeddings")
    xh, prec = _stack(embeddings, plda)
    g = subset_logliks(xh, prec, plda, tables)
    logits = tables.part_subset @ g + tables.log_prior
    return logits - logsumexp(logits)


def pairwise_llr(e1: ProbEmbedding, e2: ProbEmbedding, plda: DiagPlda) -> float:
    """Same-speaker vs different-speaker log-likelihood ratio for a pair."""
    if e1.dim != e2.dim:
        raise ShapeError("embeddings must have matching dimension")
    s1 = accumulate([e1], plda)
    s2 = accumulate([e2], plda)
    # grouping the singleton terms keeps the result exactly symmetric in
    # floating point
    return cluster_loglik(s1 + s2) - (cluster_loglik(s1) + cluster_loglik(s2))
