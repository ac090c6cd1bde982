"""Joint discriminative training of the diagonal PLDA, the mean transform and
the precision net, by multiclass cross-entropy over the full partition
posterior of randomly sampled same-recording n-tuples.

All gradients are analytic (hand-derived backpropagation through the posterior
softmax, the pooled-statistics likelihood, the evidence weights and the
extractor); a finite-difference checker is provided as an independent
verification gate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DataError, DomainError, ShapeError, TrainingError
from .extractor import ExtractorModel, PrecisionNet, init_extractor, softplus
from .partitions import CrpParams, PartitionTables, build_tables, canonicalize, fit_crp
from .plda import DiagPlda


@dataclass(frozen=True)
class OctetTrial:
    """A supervised n-tuple of same-recording segments with its true clustering."""

    records: tuple
    truth: tuple

    def __post_init__(self):
        if len(self.truth) != len(self.records):
            raise ShapeError("truth length must equal number of records")
        if self.truth != canonicalize(self.truth):
            raise DomainError("truth must be a canonical restricted growth string")


@dataclass(frozen=True)
class TrainConfig:
    n: int = 8
    batch_size: int = 100
    lr_net: float = 10.0
    lr_ratio: float = 1e-4      # transform + PLDA learn this much slower
    epochs: int = 300
    seed: int = 0
    crp: CrpParams | None = None  # fitted to the corpus when None
    momentum: float = 0.0
    train_net: bool = True      # False freezes the precision net (PLDA-only mode)
    check: bool = False         # gradient-check gate before training
    margin: float = 10.0        # saturation margin of the initial precisions;
                                # use a large margin with train_net=False so the
                                # frozen net keeps extracting large precisions
    hidden: int | None = None

    def __post_init__(self):
        if self.lr_net < 0 or not 0 < self.lr_ratio <= 1:
            raise DomainError("learning rates must be nonnegative, lr_ratio in (0, 1]")
        if self.batch_size < 1 or self.n < 2 or self.epochs < 0:
            raise DomainError("batch_size, n and epochs out of range")


@dataclass(frozen=True)
class GradientSet:
    """Gradients for every trainable parameter group.  The within-speaker
    precision is parameterized as exp(log_w) so positivity is unconstrained."""

    log_w: np.ndarray
    A: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def groups(self):
        return {"log_w": self.log_w, "A": self.A, "W1": self.W1,
                "b1": self.b1, "W2": self.W2, "b2": self.b2}


def _recordings_of(corpus):
    return corpus.recordings if hasattr(corpus, "recordings") else tuple(corpus)


def sample_octets(corpus, n: int, rng):
    """Infinite stream of random n-tuples, each drawn without replacement from
    the segments of one recording, in randomized order, with canonical truth.
    Recordings with fewer than n segments are skipped with a warning."""
    recordings = _recordings_of(corpus)
    eligible = []
    for rec in recordings:
        if len(rec.records) < n:
            warnings.warn(f"recording {rec.rec_id} has fewer than {n} segments; skipped")
        else:
            eligible.append(rec)
    if not eligible:
        raise DataError(f"no recording has at least {n} segments")
    while True:
        rec = eligible[rng.integers(len(eligible))]
        idx = rng.choice(len(rec.records), size=n, replace=False)
        yield OctetTrial(
            records=tuple(rec.records[i] for i in idx),
            truth=canonicalize([rec.labels[i] for i in idx]),
        )


def _batch_arrays(batch, tables: PartitionTables):
    raw = np.stack([[r.raw for r in trial.records] for trial in batch])
    quality = np.stack([[r.quality for r in trial.records] for trial in batch])
    truth = np.array([tables.rgs_index(trial.truth) for trial in batch])
    return raw, quality, truth


def _forward_backward(raw, quality, truth, model: ExtractorModel, plda: DiagPlda,
                      tables: PartitionTables, want_grad: bool):
    """Mean cross-entropy over the batch and, optionally, its gradients.

    Shapes: raw (B, n, R), quality (B, n, Q), truth (B,).
    """
    if raw.shape[1] != tables.n:
        raise ShapeError(f"tuple size {raw.shape[1]} != tables.n {tables.n}")
    net = model.net
    w = plda.w

    z1 = quality @ net.W1.T + net.b1
    h = softplus(z1)
    z2 = h @ net.W2.T + net.b2
    b = softplus(z2)
    xh = raw @ model.A.T
    e = w * b / (w + b)
    ex = e * xh

    s = tables.seg_subset.toarray()                       # (n, C)
    a_bar = np.einsum("tc,btd->bcd", s, ex)
    b_bar = np.einsum("tc,btd->bcd", s, e)
    den = 1.0 + b_bar
    g = 0.5 * np.sum(a_bar ** 2 / den - np.log1p(b_bar), axis=2)   # (B, C)

    logits = (tables.part_subset @ g.T).T + tables.log_prior       # (B, Bn)
    lse = logsumexp(logits, axis=1)
    n_batch = raw.shape[0]
    loss = float(np.mean(lse - logits[np.arange(n_batch), truth]))
    if not want_grad:
        return loss, None

    p = np.exp(logits - lse[:, None])
    p[np.arange(n_batch), truth] -= 1.0
    p /= n_batch                                                   # dloss/dlogits
    dg = (tables.part_subset.T @ p.T).T                            # (B, C)

    d_a_bar = dg[:, :, None] * a_bar / den
    d_b_bar = dg[:, :, None] * (-0.5) * (a_bar ** 2 / den ** 2 + 1.0 / den)
    d_ex = np.einsum("tc,bcd->btd", s, d_a_bar)
    d_e = d_ex * xh + np.einsum("tc,bcd->btd", s, d_b_bar)
    d_xh = d_ex * e

    ratio_w = w / (w + b)        # de/db = (w/(w+b))^2
    ratio_b = b / (w + b)        # de/dw = (b/(w+b))^2
    d_b = d_e * ratio_w ** 2
    d_log_w = np.sum(d_e * ratio_b ** 2, axis=(0, 1)) * w

    d_A = np.einsum("btd,btr->dr", d_xh, raw)
    d_z2 = d_b * expit(z2)
    d_W2 = np.einsum("btd,bth->dh", d_z2, h)
    d_b2 = np.sum(d_z2, axis=(0, 1))
    d_h = d_z2 @ net.W2
    d_z1 = d_h * expit(z1)
    d_W1 = np.einsum("bth,btq->hq", d_z1, quality)
    d_b1 = np.sum(d_z1, axis=(0, 1))

    return loss, GradientSet(log_w=d_log_w, A=d_A, W1=d_W1, b1=d_b1, W2=d_W2, b2=d_b2)


def cross_entropy(batch, model: ExtractorModel, plda: DiagPlda,
                  tables: PartitionTables) -> float:
    """Mean negative log posterior probability of the true clustering."""
    raw, quality, truth = _batch_arrays(batch, tables)
    loss, _ = _forward_backward(raw, quality, truth, model, plda, tables, False)
    return loss


def gradients(batch, model: ExtractorModel, plda: DiagPlda,
              tables: PartitionTables) -> GradientSet:
    """Analytic gradient of the batch cross-entropy for all parameter groups."""
    raw, quality, truth = _batch_arrays(batch, tables)
    _, grads = _forward_backward(raw, quality, truth, model, plda, tables, True)
    return grads


def _get_params(model: ExtractorModel, plda: DiagPlda):
    return {"log_w": np.log(plda.w), "A": model.A, "W1": model.net.W1,
            "b1": model.net.b1, "W2": model.net.W2, "b2": model.net.b2}


def _set_params(params) -> tuple[ExtractorModel, DiagPlda]:
    net = PrecisionNet(W1=params["W1"], b1=params["b1"],
                       W2=params["W2"], b2=params["b2"])
    return ExtractorModel(A=params["A"], net=net), DiagPlda(np.exp(params["log_w"]))


def finite_difference_check(batch, model: ExtractorModel, plda: DiagPlda,
                            tables: PartitionTables, step: float = 1e-3,
                            floor: float = 1e-6, scale_floor: bool = False) -> float:
    """Max relative error between analytic and central finite-difference
    gradients over every parameter of every group.

    Uses the five-point fourth-order central stencil so that the step can stay
    large enough to keep the derivative estimate above floating-point
    round-off (loss values of order 10-100 make a plain two-point stencil at
    a tiny step noisier than 1e-5 relative on small gradient components).

    The relative-error denominator is max(|analytic|, |numeric|, floor).  With
    scale_floor the floor is raised to a fraction of the largest gradient
    magnitude, so that components whose true gradient sits at the
    finite-difference noise level (e.g. at a saturated initialization) do not
    dominate the reported error.
    """
    raw, quality, truth = _batch_arrays(batch, tables)
    _, grads = _forward_backward(raw, quality, truth, model, plda, tables, True)
    params = _get_params(model, plda)
    if scale_floor:
        gmax = max(float(np.max(np.abs(g))) for g in grads.groups().values())
        floor = max(floor, 1e-4 * gmax)
    worst = 0.0
    for name, arr in params.items():
        garr = grads.groups()[name]
        flat = arr.reshape(-1).copy()
        for i in range(flat.size):
            orig = flat[i]
            vals = {}
            for k in (1, -1, 2, -2):
                flat[i] = orig + k * step
                p2 = dict(params)
                p2[name] = flat.reshape(arr.shape)
                m2, d2 = _set_params(p2)
                loss, _ = _forward_backward(raw, quality, truth, m2, d2, tables, False)
                vals[k] = loss
            flat[i] = orig
            fd = (8.0 * (vals[1] - vals[-1]) - (vals[2] - vals[-2])) / (12.0 * step)
            an = garr.reshape(-1)[i]
            rel = abs(an - fd) / max(abs(fd), abs(an), floor)
            worst = max(worst, rel)
    return worst


def fit_corpus_crp(corpus) -> CrpParams:
    """Fit the partition prior so the expected cluster count over the whole
    training split matches its true speaker count."""
    recs = [r for r in _recordings_of(corpus) if r.split == "train"] or \
        list(_recordings_of(corpus))
    n_total = sum(len(r.records) for r in recs)
    n_speakers = sum(max(r.labels) for r in recs)
    return fit_crp(n_total, min(n_speakers, n_total))


@dataclass
class TrainResult:
    model: ExtractorModel
    plda: DiagPlda
    history: list = field(default_factory=list)  # (epoch, train_ce, heldout_ce)


def train(cfg: TrainConfig, corpus, init=None, tables: PartitionTables | None = None) -> TrainResult:
    """Plain SGD on the octet cross-entropy with two learning-rate groups:
    the precision net at lr_net, the transform and PLDA at lr_net * lr_ratio.

    Deterministic given cfg.seed.  Raises TrainingError (carrying the last
    finite checkpoint) if the loss becomes non-finite.
    """
    recordings = _recordings_of(corpus)
    train_recs = [r for r in recordings if getattr(r, "split", "train") == "train"]
    heldout_recs = [r for r in recordings if getattr(r, "split", "train") == "heldout"]
    if not train_recs:
        raise DataError("corpus has no training recordings")

    if init is not None:
        model, plda = init
    else:
        model, plda = init_extractor(
            corpus.full_plda, seed=cfg.seed, margin=cfg.margin, hidden=cfg.hidden,
            quality_dim=train_recs[0].records[0].quality.shape[0])

    crp = cfg.crp if cfg.crp is not None else fit_corpus_crp(corpus)
    if tables is None:
        tables = build_tables(cfg.n, crp)

    root = np.random.SeedSequence(cfg.seed)
    ss_sampler, ss_heldout, ss_check = root.spawn(3)
    stream = sample_octets(train_recs, cfg.n, np.random.default_rng(ss_sampler))

    heldout_batch = None
    if heldout_recs:
        hrng = np.random.default_rng(ss_heldout)
        hstream = sample_octets(heldout_recs, cfg.n, hrng)
        n_held = min(200, 4 * cfg.batch_size)
        heldout_batch = [next(hstream) for _ in range(n_held)]

    if cfg.check:
        crng = np.random.default_rng(ss_check)
        cstream = sample_octets(train_recs, cfg.n, crng)
        for _ in range(10):
            batch = [next(cstream) for _ in range(2)]
            err = finite_difference_check(batch, model, plda, tables, scale_floor=True)
            if err > 1e-4:
                raise TrainingError(f"gradient check failed: rel error {err:.2e}")

    params = {k: v.copy() for k, v in _get_params(model, plda).items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    slow = {"log_w", "A"}
    frozen = set() if cfg.train_net else {"W1", "b1", "W2", "b2"}

    octets_per_epoch = sum(len(r.records) // cfg.n for r in train_recs)
    batches_per_epoch = max(1, octets_per_epoch // cfg.batch_size)

    def heldout_ce(m, d):
        if heldout_batch is None:
            return float("nan")
        return cross_entropy(heldout_batch, m, d, tables)

    result = TrainResult(model=model, plda=plda)
    model_c, plda_c = model, plda
    last_good = {k: v.copy() for k, v in params.items()}
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for _ in range(batches_per_epoch):
            batch = [next(stream) for _ in range(cfg.batch_size)]
            raw, quality, truth = _batch_arrays(batch, tables)
            loss, grads = _forward_backward(raw, quality, truth, model_c, plda_c,
                                            tables, True)
            if not np.isfinite(loss):
                chk = _set_params(last_good)
                raise TrainingError(f"loss diverged at epoch {epoch}", checkpoint=chk)
            epoch_losses.append(loss)
            last_good = {k: v.copy() for k, v in params.items()}
            for name, grad in grads.groups().items():
                if name in frozen:
                    continue
                lr = cfg.lr_net * (cfg.lr_ratio if name in slow else 1.0)
                velocity[name] = cfg.momentum * velocity[name] - lr * grad
                params[name] = params[name] + velocity[name]
            try:
                model_c, plda_c = _set_params(params)
            except (DomainError, FloatingPointError) as exc:
                chk = _set_params(last_good)
                raise TrainingError(f"parameters diverged at epoch {epoch}: {exc}",
                                    checkpoint=chk) from exc
        result.history.append((epoch, float(np.mean(epoch_losses)),
                               heldout_ce(model_c, plda_c)))
    result.model, result.plda = model_c, plda_c
    return result
