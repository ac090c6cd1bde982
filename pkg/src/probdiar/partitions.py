"""Set-partition machinery: restricted growth strings, Bell numbers, the
Pitman-Yor / CRP partition prior, and the precomputed tables used to score
every clustering hypothesis of an n-tuple at once.

A partition of segments 1..n is encoded as a restricted growth string (RGS):
a label sequence with labels[0] = 1 and each subsequent label at most one
larger than the running maximum.  There are exactly B_n (Bell number) such
strings, one per partition.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .errors import DataError, DomainError, SizeError

MAX_BELL_N = 16
MAX_TABLE_N = 12
ALPHA_MAX = 1e6

TABLES_FORMAT_VERSION = 1


def bell_number(n: int) -> int:
    """Number of partitions of n items, via the Bell triangle recurrence."""
    if not 1 <= n <= MAX_BELL_N:
        raise SizeError(f"bell_number requires 1 <= n <= {MAX_BELL_N}, got {n}")
    row = [1]
    for _ in range(n - 1):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[-1]


def enumerate_rgs(n: int) -> list[tuple[int, ...]]:
    """All restricted growth strings of length n, in lexicographic order."""
    if not 1 <= n <= MAX_TABLE_N:
        raise SizeError(f"enumerate_rgs requires 1 <= n <= {MAX_TABLE_N}, got {n}")
    out = []
    labels = [1] * n

    def rec(t, mx):
        if t == n:
            out.append(tuple(labels))
            return
        for lab in range(1, mx + 2):
            labels[t] = lab
            rec(t + 1, max(mx, lab))

    rec(1, 1)
    return out


def canonicalize(labels) -> tuple[int, ...]:
    """Relabel an arbitrary label sequence by first appearance, yielding the
    RGS representative of its partition.  Idempotent."""
    labels = list(labels)
    if not labels:
        raise DomainError("cannot canonicalize an empty label sequence")
    mapping = {}
    out = []
    for lab in labels:
        if lab not in mapping:
            mapping[lab] = len(mapping) + 1
        out.append(mapping[lab])
    return tuple(out)


@dataclass(frozen=True)
class CrpParams:
    """Pitman-Yor partition prior parameters."""

    concentration: float
    discount: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.concentration) or self.concentration < 0:
            raise DomainError(f"concentration must be finite and >= 0, got {self.concentration}")
        if not 0 <= self.discount < 1:
            raise DomainError(f"discount must be in [0, 1), got {self.discount}")
        if self.concentration + self.discount <= 0:
            raise DomainError("concentration + discount must be positive")


def crp_log_prob(labels, params: CrpParams) -> float:
    """Log probability of the partition encoded by `labels` under the
    exchangeable Pitman-Yor seating process.

    Customer t+1 (t already seated, K clusters open) opens a new cluster with
    probability (alpha + K*d)/(alpha + t) and joins cluster k of size n_k with
    probability (n_k - d)/(alpha + t).
    """
    if not isinstance(params, CrpParams):
        params = CrpParams(*params)
    alpha, d = params.concentration, params.discount
    counts: dict = {}
    logp = 0.0
    for t, lab in enumerate(labels):
        if t > 0:
            if lab in counts:
                logp += math.log(counts[lab] - d) - math.log(alpha + t)
            else:
                logp += math.log(alpha + len(counts) * d) - math.log(alpha + t)
        counts[lab] = counts.get(lab, 0) + 1
    return logp


@dataclass(frozen=True)
class PartitionTables:
    """Everything needed to score all B_n clusterings of an n-tuple.

    `seg_subset` is n-by-(2^n - 1): column c marks the segments in nonempty
    subset c+1 (bitmask order).  `part_subset` is B_n-by-(2^n - 1): row r
    marks the subsets that are the clusters of partition rgs[r].  Both are
    stored as column-index lists per row; CSR views are kept for fast
    matrix products.
    """

    n: int
    rgs: tuple[tuple[int, ...], ...]
    log_prior: np.ndarray
    seg_cols: tuple[np.ndarray, ...]
    part_cols: tuple[np.ndarray, ...]
    prior: CrpParams
    seg_subset: sp.csr_matrix = field(repr=False)
    part_subset: sp.csr_matrix = field(repr=False)
    index: dict = field(repr=False)

    @property
    def n_subsets(self) -> int:
        return (1 << self.n) - 1

    @property
    def n_partitions(self) -> int:
        return len(self.rgs)

    def rgs_index(self, labels) -> int:
        """Row index of a (canonical) label string in the RGS list."""
        return self.index[tuple(labels)]


def _rows_to_csr(rows, n_cols):
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    for i, r in enumerate(rows):
        indptr[i + 1] = indptr[i] + len(r)
    indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    data = np.ones(len(indices), dtype=np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=(len(rows), n_cols))


def build_tables(n: int, prior: CrpParams, cache_dir: str | None = None) -> PartitionTables:
    """Build (or load from cache) the partition tables for n-tuples.

    The cache is an optimization only: a loaded table is identical to a
    freshly built one.
    """
    if not 1 <= n <= MAX_TABLE_N:
        raise SizeError(f"build_tables requires 1 <= n <= {MAX_TABLE_N}, got {n}")
    cache_path = None
    if cache_dir is not None:
        key = f"tables_v{TABLES_FORMAT_VERSION}_n{n}_a{prior.concentration:.17g}_d{prior.discount:.17g}"
        cache_path = os.path.join(cache_dir, key + ".npz")
        if os.path.exists(cache_path):
            return _load_tables(cache_path, prior)

    rgs = enumerate_rgs(n)
    log_prior = np.array([crp_log_prob(labels, prior) for labels in rgs])
    # renormalize so the log prior mass is exactly zero in floating point:
    # then uninformative likelihoods leave the posterior equal to the prior
    # bit for bit
    for _ in range(5):
        z = logsumexp(log_prior)
        if z == 0.0:
            break
        log_prior = log_prior - z
    n_cols = (1 << n) - 1

    seg_rows = []
    for t in range(n):
        cols = np.array([c - 1 for c in range(1, n_cols + 1) if (c >> t) & 1], dtype=np.int64)
        seg_rows.append(cols)

    part_rows = []
    for labels in rgs:
        masks = {}
        for t, lab in enumerate(labels):
            masks[lab] = masks.get(lab, 0) | (1 << t)
        part_rows.append(np.array(sorted(m - 1 for m in masks.values()), dtype=np.int64))

    tables = PartitionTables(
        n=n,
        rgs=tuple(rgs),
        log_prior=log_prior,
        seg_cols=tuple(seg_rows),
        part_cols=tuple(part_rows),
        prior=prior,
        seg_subset=_rows_to_csr(seg_rows, n_cols),
        part_subset=_rows_to_csr(part_rows, n_cols),
        index={labels: r for r, labels in enumerate(rgs)},
    )
    assert abs(logsumexp(log_prior)) < 1e-10
    if cache_path is not None:
        _save_tables(cache_path, tables)
    return tables


def _save_tables(path, tables: PartitionTables):
    rgs_arr = np.array(tables.rgs, dtype=np.int64)
    part_lens = np.array([len(r) for r in tables.part_cols], dtype=np.int64)
    part_flat = np.concatenate(tables.part_cols)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    np.savez(
        path,
        version=np.int64(TABLES_FORMAT_VERSION),
        n=np.int64(tables.n),
        concentration=np.float64(tables.prior.concentration),
        discount=np.float64(tables.prior.discount),
        rgs=rgs_arr,
        log_prior=tables.log_prior,
        part_lens=part_lens,
        part_flat=part_flat,
    )


def _load_tables(path, prior: CrpParams) -> PartitionTables:
    with np.load(path) as z:
        if int(z["version"]) != TABLES_FORMAT_VERSION:
            raise DataError(f"unsupported tables cache version in {path}")
        n = int(z["n"])
        rgs = tuple(tuple(int(v) for v in row) for row in z["rgs"])
        log_prior = z["log_prior"].copy()
        part_lens = z["part_lens"]
        part_flat = z["part_flat"]
    n_cols = (1 << n) - 1
    seg_rows = []
    for t in range(n):
        cols = np.array([c - 1 for c in range(1, n_cols + 1) if (c >> t) & 1], dtype=np.int64)
        seg_rows.append(cols)
    part_rows = []
    pos = 0
    for ln in part_lens:
        part_rows.append(part_flat[pos:pos + ln].copy())
        pos += ln
    return PartitionTables(
        n=n,
        rgs=rgs,
        log_prior=log_prior,
        seg_cols=tuple(seg_rows),
        part_cols=tuple(part_rows),
        prior=prior,
        seg_subset=_rows_to_csr(seg_rows, n_cols),
        part_subset=_rows_to_csr(part_rows, n_cols),
        index={labels: r for r, labels in enumerate(rgs)},
    )


def expected_cluster_count(n: int, concentration: float, discount: float) -> float:
    """Exact E[number of clusters] after seating n customers.

    The open-new-cluster probability is affine in the current cluster count,
    so the expectation obeys a closed one-step recurrence.
    """
    e = 1.0
    for t in range(1, n):
        e += (concentration + discount * e) / (concentration + t)
    return e


def sample_cluster_counts(n: int, concentration: float, discount: float,
                          n_samples: int, rng) -> np.ndarray:
    """Monte Carlo sample of the cluster count after n seatings (vectorized:
    the cluster-count process is Markov in the count alone)."""
    k = np.ones(n_samples)
    for t in range(1, n):
        p_new = (concentration + k * discount) / (concentration + t)
        k += rng.random(n_samples) < p_new
    return k


# fit_crp search configuration: discount grid, alpha bisection bounds, and the
# Monte Carlo budget/seed used for the variance comparison.
FIT_DISCOUNT_GRID = tuple(round(0.05 * i, 2) for i in range(20))  # 0, 0.05, ..., 0.95
FIT_MC_SAMPLES = 100_000
FIT_MC_SEED = 12345
FIT_REL_TOL = 0.005


def fit_crp(n_total: int, expected_speakers: float,
            mc_samples: int = FIT_MC_SAMPLES, mc_seed: int = FIT_MC_SEED) -> CrpParams:
    """Find Pitman-Yor parameters whose expected cluster count over n_total
    draws matches `expected_speakers`, choosing among matching (alpha, d)
    pairs the one with the largest Monte Carlo variance of the count.

    For each discount on a fixed grid, alpha is solved by bisection on the
    exact expectation recurrence; infeasible grid points (expectation at
    alpha=0 already above target) are skipped.  A target at the all-singleton
    limit clips alpha at ALPHA_MAX with a warning.
    """
    if n_total < 1:
        raise DomainError(f"n_total must be >= 1, got {n_total}")
    if not 1 <= expected_speakers <= n_total:
        raise DomainError(
            f"expected_speakers must be in [1, {n_total}], got {expected_speakers}")

    candidates = []
    for d in FIT_DISCOUNT_GRID:
        lo = 1e-12 if d == 0 else 0.0
        e_lo = expected_cluster_count(n_total, max(lo, 1e-12), d)
        if e_lo > expected_speakers * (1 + FIT_REL_TOL):
            continue
        e_hi = expected_cluster_count(n_total, ALPHA_MAX, d)
        if e_hi < expected_speakers:
            # target only reachable as alpha -> inf: clip
            warnings.warn(
                f"fit_crp: target {expected_speakers} needs alpha > {ALPHA_MAX:g}; "
                f"clipping (all-singletons limit)")
            candidates.append((ALPHA_MAX, d))
            continue
        a_lo, a_hi = lo, ALPHA_MAX
        for _ in range(200):
            mid = 0.5 * (a_lo + a_hi)
            if expected_cluster_count(n_total, max(mid, 1e-300), d) < expected_speakers:
                a_lo = mid
            else:
                a_hi = mid
            if a_hi - a_lo <= 1e-14 * max(1.0, a_hi):
                break
        alpha = 0.5 * (a_lo + a_hi)
        e = expected_cluster_count(n_total, max(alpha, 1e-300), d)
        if abs(e - expected_speakers) <= FIT_REL_TOL * expected_speakers:
            candidates.append((alpha, d))

    if not candidates:
        raise DomainError(
            f"no (alpha, discount) on the search grid matches "
            f"E[clusters]={expected_speakers} for n={n_total}")

    rng = np.random.default_rng(mc_seed)
    best, best_var = None, -1.0
    for alpha, d in candidates:
        k = sample_cluster_counts(n_total, alpha, d, mc_samples, rng)
        v = float(np.var(k))
        if v > best_var:
            best, best_var = (alpha, d), v
    return CrpParams(concentration=max(best[0], 1e-12), discount=best[1])
