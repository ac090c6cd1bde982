"""Full-recording diarization by agglomerative hierarchical clustering.

Two variants: the by-the-book greedy maximum-likelihood AHC, where each merge
is scored exactly from pooled cluster statistics, and the baseline unweighted
average-linkage (UPGMA) AHC over plug-in pairwise log-likelihood ratios with a
per-recording unsupervised calibration threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, DomainError, ShapeError
from .partitions import canonicalize
from .plda import (ClusterStats, DiagPlda, ProbEmbedding, cluster_loglik,
                   pairwise_llr, segment_weight)

# precision multiple used to emulate plug-in (infinite-precision) embeddings
PLUGIN_PREC_FACTOR = 1e12


@dataclass(frozen=True)
class AhcConfig:
    mode: str = "by_the_book"       # "baseline" or "by_the_book"
    sigma: float = 0.0              # stopping threshold / calibration offset
    likelihood_scale: float = 1.0   # down-weights per-segment statistics

    def __post_init__(self):
        if self.mode not in ("baseline", "by_the_book"):
            raise DomainError(f"unknown AHC mode {self.mode!r}")
        if not self.likelihood_scale > 0:
            raise DomainError("likelihood_scale must be positive")


def merge_delta(i: ClusterStats, j: ClusterStats) -> float:
    """Log-likelihood gain of merging two clusters."""
    if i.a_bar.shape != j.a_bar.shape:
        raise ShapeError("cluster stats dimensions differ")
    return cluster_loglik(i + j) - cluster_loglik(i) - cluster_loglik(j)


def _segment_stats(embeddings, plda: DiagPlda, scale: float):
    rows = []
    for emb in embeddings:
        if emb.dim != plda.dim:
            raise ShapeError(f"embedding dim {emb.dim} != model dim {plda.dim}")
        e = segment_weight(plda, emb.prec) * scale
        rows.append(ClusterStats(e * emb.xhat, e, 1))
    return rows


def _labels_from_members(members, n: int):
    raw = [0] * n
    for k, segs in enumerate(members):
        for t in segs:
            raw[t] = k + 1
    return canonicalize(raw)


def ahc_by_the_book(embeddings, plda: DiagPlda, cfg: AhcConfig) -> tuple[int, ...]:
    """Greedy maximum-likelihood AHC.

    Starts from singletons; each iteration merges the pair with the largest
    likelihood gain, provided it exceeds cfg.sigma.  Ties break on the lowest
    pair of cluster ids (ids are the smallest member segment index).  Cached
    gains for untouched pairs stay exact because stats merge additively.
    """
    n = len(embeddings)
    if n == 0:
        raise DomainError("need at least one segment")
    stats = _segment_stats(embeddings, plda, cfg.likelihood_scale)
    members = [[t] for t in range(n)]
    active = list(range(n))
    delta = {}
    for a in range(n):
        for b in range(a + 1, n):
            delta[(a, b)] = merge_delta(stats[a], stats[b])

    while len(active) > 1:
        best_pair, best = None, -np.inf
        for ia, a in enumerate(active):
            for b in active[ia + 1:]:
                d = delta[(a, b)]
                if d > best or (d == best and (a, b) < best_pair):
                    best, best_pair = d, (a, b)
        if not best > cfg.sigma:
            break
        a, b = best_pair
        stats[a] = stats[a] + stats[b]
        members[a].extend(members[b])
        active.remove(b)
        for c in active:
            if c != a:
                pair = (min(a, c), max(a, c))
                delta[pair] = merge_delta(stats[a], stats[c])
    return _labels_from_members([members[a] for a in active], n)


def unsupervised_calibration(scores) -> float:
    """Decision threshold from a two-component shared-variance 1-D Gaussian
    mixture fitted to the scores by EM.

    Deterministic initialization: means at the 10th/90th percentiles, equal
    weights, shared variance from the pooled scores.  Returns the score with
    equal component posteriors, between the two means.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < 2:
        raise CalibrationError("need at least two scores")
    if np.ptp(scores) == 0:
        raise CalibrationError("degenerate score set (all scores equal)")

    mu = np.percentile(scores, [10.0, 90.0])
    if mu[0] == mu[1]:
        mu = np.array([scores.min(), scores.max()])
    var = max(np.var(scores), 1e-12)
    pi = np.array([0.5, 0.5])
    prev = -np.inf
    for _ in range(100):
        # responsibilities under shared variance
        logr = -0.5 * (scores[:, None] - mu) ** 2 / var + np.log(pi)
        mx = logr.max(axis=1, keepdims=True)
        r = np.exp(logr - mx)
        ll = float(np.sum(np.log(r.sum(axis=1))) + np.sum(mx)
                   - 0.5 * scores.size * np.log(2 * np.pi * var))
        r /= r.sum(axis=1, keepdims=True)
        nk = r.sum(axis=0)
        pi = nk / scores.size
        mu = (r * scores[:, None]).sum(axis=0) / np.maximum(nk, 1e-300)
        var = max(float(np.sum(r * (scores[:, None] - mu) ** 2) / scores.size), 1e-12)
        if abs(ll - prev) < 1e-9:
            break
        prev = ll
    if mu[0] == mu[1]:
        raise CalibrationError("EM collapsed to a single component")
    # equal-posterior crossing of two equal-variance Gaussians
    return float(0.5 * (mu[0] + mu[1]) + var * np.log(pi[0] / pi[1]) / (mu[1] - mu[0]))


def _plugin_embedding(emb: ProbEmbedding, plda: DiagPlda) -> ProbEmbedding:
    return ProbEmbedding(emb.xhat, PLUGIN_PREC_FACTOR * plda.w)


def ahc_baseline(embeddings, plda: DiagPlda, cfg: AhcConfig) -> tuple[int, ...]:
    """Unweighted average-linkage AHC over plug-in pairwise LLR scores.

    The similarity row of a merged cluster is the arithmetic mean of its two
    parents' rows.  Merging stops when the best similarity falls below the
    unsupervised-calibration threshold plus the cfg.sigma offset.
    """
    n = len(embeddings)
    if n < 2:
        raise DomainError("baseline AHC needs at least two segments")
    plugged = [_plugin_embedding(e, plda) for e in embeddings]
    sim = np.full((n, n), -np.inf)
    for a in range(n):
        for b in range(a + 1, n):
            sim[a, b] = sim[b, a] = pairwise_llr(plugged[a], plugged[b], plda)

    iu = np.triu_indices(n, k=1)
    try:
        threshold = unsupervised_calibration(sim[iu]) + cfg.sigma
    except CalibrationError:
        # too few or degenerate scores to fit the mixture: fall back to the
        # natural zero decision boundary of a log-likelihood ratio
        threshold = cfg.sigma

    members = [[t] for t in range(n)]
    active = list(range(n))
    while len(active) > 1:
        best_pair, best = None, -np.inf
        for ia, a in enumerate(active):
            for b in active[ia + 1:]:
                if sim[a, b] > best or (sim[a, b] == best and (a, b) < best_pair):
                    best, best_pair = sim[a, b], (a, b)
        if best < threshold:
            break
        a, b = best_pair
        members[a].extend(members[b])
        active.remove(b)
        for c in active:
            if c != a:
                sim[a, c] = sim[c, a] = 0.5 * (sim[a, c] + sim[b, c])
    return _labels_from_members([members[a] for a in active], n)


def ahc(embeddings, plda: DiagPlda, cfg: AhcConfig) -> tuple[int, ...]:
    """Dispatch on cfg.mode; single segments short-circuit to one cluster."""
    if len(embeddings) == 1:
        return (1,)
    if cfg.mode == "baseline":
        return ahc_baseline(embeddings, plda, cfg)
    return ahc_by_the_book(embeddings, plda, cfg)
