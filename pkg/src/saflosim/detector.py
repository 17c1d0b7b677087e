"""Attack detector: log preprocessing, dual-classifier detection, periodic ticks.

The detector reads the detection log, builds per-token 10-second burst time
series (1000 bins of 10 ms), scores them with the primary classifier (the
malicious file socket) and the secondary classifier (the text/signal socket),
and publishes compromised tokens into the shared report every interval.  The
secondary classifier's results are ignored whenever the primary flags
nothing, which keeps its weaker accuracy from causing false alarms on its
own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cnn import CnnModel, predict
from .core import (
    DetectionLog,
    LogParseError,
    SharedReport,
    SimTime,
    Token,
    parse_log_line,
    seconds_to_ns,
)

WINDOW_S = 10.0
TRACE_BINS = 1000
BIN_NS = seconds_to_ns(WINDOW_S) // TRACE_BINS  # 10 ms


@dataclass
class TrafficTrace:
    """Fixed 1000-bin burst series for one token over [start_time, start_time + 10 s)."""

    token: Token
    start_time: SimTime
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (TRACE_BINS,):
            raise ValueError(f"trace must have exactly {TRACE_BINS} bins")
        if (self.values < 0).any():
            raise ValueError("trace values must be non-negative")


@dataclass
class DetectorConfig:
    interval: float = 5.0  # seconds between ticks
    threshold: float = 0.5
    desk_scale: bool = True
    train_seed: int = 0
    epochs: int = 15
    learning_rate: float = 0.001
    batch_size: int = 32

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must be in (0, 1)")


def preprocess(lines: list[str], window_end: SimTime) -> list[TrafficTrace]:
    """Bins log records falling in [window_end - 10 s, window_end) per token.

    Bin b accumulates the burst bytes of records with timestamp in bin b;
    tokens with no record in the window produce no trace.  A malformed line
    aborts with a parse error naming the 1-based line number.
    """

    window_ns = seconds_to_ns(WINDOW_S)
    start = window_end - window_ns
    per_token: dict[Token, np.ndarray] = {}
    for lineno, line in enumerate(lines, start=1):
        record = parse_log_line(line, lineno)
        if record.timestamp < start or record.timestamp >= window_end:
            continue
        values = per_token.get(record.token)
        if values is None:
            values = per_token[record.token] = np.zeros(TRACE_BINS)
        values[(record.timestamp - start) // BIN_NS] += record.burst
    return [
        TrafficTrace(token, start, values)
        for token, values in sorted(per_token.items())
    ]


def detect(
    traces: list[TrafficTrace],
    primary: CnnModel,
    secondary: CnnModel,
    threshold: float = 0.5,
) -> set[Token]:
    """Tokens flagged by the gated dual-classifier rule.

    The primary flags tokens scoring above the threshold; only if it flagged
    at least one does the secondary contribute its own flags; the union is
    returned.
    """

    if not traces:
        return set()
    x = np.stack([t.values for t in traces])
    primary_scores = predict(primary, x)
    flagged = {t.token for t, s in zip(traces, primary_scores) if s > threshold}
    if not flagged:
        return set()
    secondary_scores = predict(secondary, x)
    flagged |= {t.token for t, s in zip(traces, secondary_scores) if s > threshold}
    return flagged


def detector_tick(
    now: SimTime,
    log: DetectionLog,
    primary: CnnModel,
    secondary: CnnModel,
    report: SharedReport,
    cfg: DetectorConfig,
) -> SimTime:
    """One detection pass over the trailing window; flags accumulate in the report."""

    traces = preprocess(log.lines, now)
    flagged = detect(traces, primary, secondary, cfg.threshold)
    if flagged:
        report.compromised |= flagged
    report.updated_at = now
    return now + seconds_to_ns(cfg.interval)


@dataclass
class DetectionEvent:
    time: SimTime
    tokens: frozenset[Token]


class AttackDetector:
    """Binds trained classifiers and config; records when each token was flagged."""

    def __init__(self, primary: CnnModel, secondary: CnnModel, cfg: DetectorConfig):
        self.primary = primary
        self.secondary = secondary
        self.cfg = cfg
        self.events: list[DetectionEvent] = []

    def tick(self, now: SimTime, log: DetectionLog, report: SharedReport) -> SimTime:
        before = set(report.compromised)
        next_tick = detector_tick(now, log, self.primary, self.secondary, report, self.cfg)
        new = report.compromised - before
        if new:
            self.events.append(DetectionEvent(now, frozenset(new)))
        return next_tick


def slice_training_windows(
    lines: list[str],
    duration_ns: SimTime,
    *,
    step_s: float = 5.0,
) -> dict[Token, list[TrafficTrace]]:
    """Per-token traces for every whole window position, for classifier training.

    Windows end at step_s multiples (mirroring the tick cadence) from 10 s up
    to the run duration.
    """

    step_ns = seconds_to_ns(step_s)
    window_ns = seconds_to_ns(WINDOW_S)
    out: dict[Token, list[TrafficTrace]] = {}
    end = window_ns
    while end <= duration_ns:
        for trace in preprocess(lines, end):
            out.setdefault(trace.token, []).append(trace)
        end += step_ns
    return out


__all__ = [
    "AttackDetector",
    "DetectionEvent",
    "DetectorConfig",
    "LogParseError",
    "TRACE_BINS",
    "TrafficTrace",
    "detect",
    "detector_tick",
    "preprocess",
    "slice_training_windows",
]
