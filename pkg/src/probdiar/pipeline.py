"""Recording-level pipeline glue: extract embeddings, cluster, build
timelines, score DER, and run tuning sweeps over the stopping threshold or
the likelihood scale."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .clustering import AhcConfig, ahc
from .evalkit import DerReport, Timeline, Turn, aggregate_der, der
from .extractor import ExtractorModel, extract
from .plda import DiagPlda


def reference_timeline(rec) -> Timeline:
    turns = [Turn(start, sr.duration, f"spk{lab}")
             for start, sr, lab in zip(rec.starts, rec.records, rec.labels)]
    return Timeline(rec.rec_id, tuple(turns))


def diarize_recording(rec, model: ExtractorModel, plda: DiagPlda,
                      cfg: AhcConfig) -> Timeline:
    embeddings = [extract(sr, model) for sr in rec.records]
    labels = ahc(embeddings, plda, cfg)
    turns = [Turn(start, sr.duration, f"spk{lab}")
             for start, sr, lab in zip(rec.starts, rec.records, labels)]
    return Timeline(rec.rec_id, tuple(turns))


def diarize_corpus(recordings, model: ExtractorModel, plda: DiagPlda,
                   cfg: AhcConfig, jobs: int = 1) -> dict[str, Timeline]:
    """Diarize every recording; output is keyed and ordered by recording id
    regardless of scheduling."""
    recordings = list(recordings)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda r: diarize_recording(r, model, plda, cfg), recordings))
    else:
        results = [diarize_recording(r, model, plda, cfg) for r in recordings]
    return {tl.rec_id: tl for tl in sorted(results, key=lambda t: t.rec_id)}


def evaluate(recordings, model: ExtractorModel, plda: DiagPlda, cfg: AhcConfig,
             collar: float = 0.0, jobs: int = 1) -> DerReport:
    """Diarize and score a set of recordings; returns the aggregate report."""
    hyps = diarize_corpus(recordings, model, plda, cfg, jobs=jobs)
    reports = [der(reference_timeline(rec), hyps[rec.rec_id], collar=collar)
               for rec in recordings]
    return aggregate_der(reports)


def sweep(param: str, values, dev_recordings, eval_recordings,
          model: ExtractorModel, plda: DiagPlda, base_cfg: AhcConfig,
          jobs: int = 1):
    """Grid search one AHC hyperparameter on the dev split; report dev/eval
    DER pairs per value.  Returns (rows, best_value) where rows are
    (value, dev_der, eval_der) and best_value minimizes dev DER."""
    if param not in ("sigma", "scale"):
        raise ValueError(f"sweep parameter must be 'sigma' or 'scale', got {param!r}")
    rows = []
    for v in values:
        if param == "sigma":
            cfg = AhcConfig(mode=base_cfg.mode, sigma=float(v),
                            likelihood_scale=base_cfg.likelihood_scale)
        else:
            cfg = AhcConfig(mode=base_cfg.mode, sigma=base_cfg.sigma,
                            likelihood_scale=float(v))
        dev = evaluate(dev_recordings, model, plda, cfg, jobs=jobs).der
        evl = evaluate(eval_recordings, model, plda, cfg, jobs=jobs).der \
            if eval_recordings else float("nan")
        rows.append((float(v), dev, evl))
    best = min(rows, key=lambda r: r[1])[0]
    return rows, best


def sweep_table(param: str, rows) -> str:
    lines = [f"{param:>10} {'dev':>10} {'eval':>10}"]
    for v, dev, evl in rows:
        lines.append(f"{v:>10.4g} {dev:>10.4f} {evl:>10.4f}")
    return "\n".join(lines)
