"""Diarization error-rate scoring and RTTM timeline I/O.

DER is computed with an exact optimal one-to-one speaker mapping (assignment
problem on overlap durations).  Scoring is frame-quantized at 10 ms by
default; exact interval arithmetic is available behind a flag for tests.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DomainError, ParseError, ScoringError

FRAME_STEP = 0.01  # seconds


@dataclass(frozen=True)
class Turn:
    start: float
    duration: float
    speaker: str

    def __post_init__(self):
        if not (np.isfinite(self.start) and np.isfinite(self.duration)):
            raise DomainError("turn times must be finite")
        if not self.duration > 0:
            raise DomainError("turn duration must be positive")
        if not self.speaker:
            raise DomainError("speaker label must be nonempty")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class Timeline:
    rec_id: str
    turns: tuple

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))

    def speakers(self):
        return sorted({t.speaker for t in self.turns})


@dataclass(frozen=True)
class DerReport:
    missed: float
    false_alarm: float
    confusion: float
    total_ref: float
    per_recording: dict = field(default_factory=dict)

    @property
    def der(self) -> float:
        return (self.missed + self.false_alarm + self.confusion) / self.total_ref


def read_rttm(path) -> dict[str, Timeline]:
    """Parse an RTTM file into timelines keyed by recording id.  Non-SPEAKER
    lines are skipped with a warning."""
    turns: dict[str, list] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] != "SPEAKER":
                warnings.warn(f"{path}:{lineno}: skipping unknown line type {parts[0]!r}")
                continue
            if len(parts) < 8:
                raise ParseError(f"SPEAKER line has {len(parts)} fields, expected >= 8",
                                 line=lineno)
            try:
                onset, dur = float(parts[3]), float(parts[4])
            except ValueError as exc:
                raise ParseError(f"malformed numeric field: {exc}", line=lineno) from exc
            turns.setdefault(parts[1], []).append(Turn(onset, dur, parts[7]))
    return {rec: Timeline(rec, tuple(ts)) for rec, ts in turns.items()}


def write_rttm(path, timelines):
    """Write timelines (iterable or dict of Timeline) as RTTM, 3-decimal times,
    sorted by recording id then onset."""
    if isinstance(timelines, dict):
        timelines = timelines.values()
    with open(path, "w") as fh:
        for tl in sorted(timelines, key=lambda t: t.rec_id):
            for turn in sorted(tl.turns, key=lambda t: (t.start, t.speaker)):
                fh.write(f"SPEAKER {tl.rec_id} 1 {turn.start:.3f} {turn.duration:.3f} "
                         f"<NA> <NA> {turn.speaker} <NA> <NA>\n")


def _interval_tables(ref: Timeline, hyp: Timeline, collar: float, exact: bool):
    """Yield (duration, ref_speaker_set, hyp_speaker_set) over scored regions."""
    ref_speakers = ref.speakers()
    hyp_speakers = hyp.speakers()
    collar_zones = []
    if collar > 0:
        for t in ref.turns:
            collar_zones.append((t.start - collar, t.start + collar))
            collar_zones.append((t.end - collar, t.end + collar))

    def active(turns, a, b):
        mid = 0.5 * (a + b)
        return {t.speaker for t in turns if t.start < mid < t.end}

    def in_collar(a, b):
        mid = 0.5 * (a + b)
        return any(lo < mid < hi for lo, hi in collar_zones)

    end = max([t.end for t in ref.turns + hyp.turns])
    start = min([t.start for t in ref.turns + hyp.turns])
    if exact:
        bounds = {start, end}
        for t in ref.turns + hyp.turns:
            bounds.update((t.start, t.end))
        for lo, hi in collar_zones:
            bounds.update((lo, hi))
        bounds = sorted(b for b in bounds if start <= b <= end)
        pieces = list(zip(bounds[:-1], bounds[1:]))
    else:
        grid = np.arange(start, end, FRAME_STEP)
        pieces = [(a, a + FRAME_STEP) for a in grid]

    out = []
    for a, b in pieces:
        if b <= a or in_collar(a, b):
            continue
        out.append((b - a, active(ref.turns, a, b), active(hyp.turns, a, b)))
    return out, ref_speakers, hyp_speakers


def der(ref: Timeline, hyp: Timeline, collar: float = 0.0, exact: bool = False) -> DerReport:
    """Score one hypothesis timeline against its reference.

    The hypothesis speakers are mapped one-to-one to reference speakers by
    maximizing total overlap (exact assignment); overlap regions are scored
    against all active reference speakers; a collar around reference turn
    boundaries is excluded from scoring.
    """
    if ref.rec_id != hyp.rec_id:
        raise ScoringError(f"recording ids differ: {ref.rec_id!r} vs {hyp.rec_id!r}")
    if not ref.turns:
        raise ScoringError("empty reference timeline")

    pieces, ref_speakers, hyp_speakers = _interval_tables(ref, hyp, collar, exact)
    r_idx = {s: i for i, s in enumerate(ref_speakers)}
    h_idx = {s: i for i, s in enumerate(hyp_speakers)}

    overlap = np.zeros((len(ref_speakers), max(len(hyp_speakers), 1)))
    for dur, rs, hs in pieces:
        for r in rs:
            for h in hs:
                overlap[r_idx[r], h_idx[h]] += dur
    rows, cols = linear_sum_assignment(-overlap)
    mapping = {(r, c) for r, c in zip(rows, cols)}

    total_ref = miss = fa = conf = 0.0
    for dur, rs, hs in pieces:
        nr, nh = len(rs), len(hs)
        total_ref += dur * nr
        ncorrect = sum(1 for r in rs for h in hs if (r_idx[r], h_idx[h]) in mapping)
        miss += dur * max(0, nr - nh)
        fa += dur * max(0, nh - nr)
        conf += dur * (min(nr, nh) - ncorrect)
    if total_ref == 0:
        raise ScoringError("reference has no scored speech (all excised by collar)")
    return DerReport(missed=miss, false_alarm=fa, confusion=conf, total_ref=total_ref,
                     per_recording={ref.rec_id: (miss, fa, conf, total_ref)})


def aggregate_der(reports) -> DerReport:
    """Time-weighted aggregate over per-recording reports."""
    reports = list(reports)
    if not reports:
        raise ScoringError("no reports to aggregate")
    per = {}
    for r in reports:
        per.update(r.per_recording)
    return DerReport(
        missed=sum(r.missed for r in reports),
        false_alarm=sum(r.false_alarm for r in reports),
        confusion=sum(r.confusion for r in reports),
        total_ref=sum(r.total_ref for r in reports),
        per_recording=per,
    )


def report_table(report: DerReport) -> str:
    """Aligned text table with per-recording and overall rows."""
    lines = [f"{'recording':<16} {'miss':>8} {'falarm':>8} {'confusion':>10} {'DER':>8}"]
    for rec in sorted(report.per_recording):
        m, f, c, tot = report.per_recording[rec]
        lines.append(f"{rec:<16} {m / tot:>8.4f} {f / tot:>8.4f} {c / tot:>10.4f} "
                     f"{(m + f + c) / tot:>8.4f}")
    lines.append(f"{'OVERALL':<16} {report.missed / report.total_ref:>8.4f} "
                 f"{report.false_alarm / report.total_ref:>8.4f} "
                 f"{report.confusion / report.total_ref:>10.4f} {report.der:>8.4f}")
    return "\n".join(lines)
