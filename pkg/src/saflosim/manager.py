"""User-space subflow manager: periodic snapshot, state decisions, log flushing.

Every interval the manager snapshots the C-map into a per-token table,
ingests the detector's report (marking compromised cellular subflows unsafe),
runs the weighted random enable/disable decision per subflow, removes entries
of closed connections, and flushes the D-map into the detection log.  A tick
is atomic: nothing else mutates the maps while it runs, so the snapshot and
the per-subflow reads stay consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    ControlMap,
    DetectionLog,
    DetectionMap,
    SharedReport,
    SimTime,
    SubflowKey,
    Token,
    seconds_to_ns,
)


@dataclass
class SFs:
    """Per-token subflow summary built from one C-map snapshot."""

    sf_num: int = 0
    local_ids: list[int] = field(default_factory=list)
    remote_ids: list[int] = field(default_factory=list)
    lt_sum: float = 0.0


@dataclass
class ManagerConfig:
    interval: float = 2.0  # seconds
    p_min: float = 0.2
    p_max: float = 0.8
    cellular_remote_id: int = 1

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max <= 1:
            raise ValueError("need 0 <= p_min <= p_max <= 1")
        if self.interval <= 0:
            raise ValueError("interval must be > 0")


def snapshot(cmap: ControlMap) -> dict[Token, SFs]:
    """Groups C-map entries by token; subflows ordered by (local_id, remote_id)."""

    table: dict[Token, SFs] = {}
    for key, entry in sorted(cmap.items(), key=lambda kv: kv[0]):
        sfs = table.setdefault(key.token, SFs())
        sfs.sf_num += 1
        sfs.local_ids.append(key.local_id)
        sfs.remote_ids.append(key.remote_id)
        sfs.lt_sum += entry.linger_time
    return table


def apply_reports(report: SharedReport, cmap: ControlMap, table: dict[Token, SFs],
                  cellular_remote_id: int) -> None:
    """Marks the cellular subflow of every compromised token unsafe.

    WiFi subflows are untouched: traffic shifts to WiFi instead of closing the
    connection.  Tokens already gone from the C-map are ignored.
    """

    for token in report.compromised:
        sfs = table.get(token)
        if sfs is None:
            continue
        for local_id, remote_id in zip(sfs.local_ids, sfs.remote_ids):
            if remote_id != cellular_remote_id:
                continue
            key = SubflowKey(token, local_id, remote_id)
            entry = cmap.lookup(key)
            if entry is not None:
                entry.safe = False
                cmap.update(key, entry)


def enable_probability(linger_time: float, lt_sum: float, cfg: ManagerConfig) -> float:
    """Weighted enable probability: 1 - linger/lt_sum, clamped to [p_min, p_max].

    lt_sum == 0 means every subflow was idle at snapshot time; idle subflows
    are "fast", so they all get p_max.
    """

    p = 1.0 - linger_time / lt_sum if lt_sum > 0 else cfg.p_max
    return min(max(p, cfg.p_min), cfg.p_max)


def decide_states(token: Token, sfs: SFs, cmap: ControlMap, rng: np.random.Generator,
                  cfg: ManagerConfig) -> None:
    """Weighted random enable decision per subflow.

    Unsafe subflows are disabled outright.  Otherwise the enable probability is
    1 - linger_time / lt_sum, clamped to [p_min, p_max], compared against a
    uniform threshold in [0, 1).  An all-idle token (lt_sum == 0) enables every
    safe subflow with p_max: idle subflows are "fast", and disabling an idle
    connection defends nothing.
    """

    for i in range(sfs.sf_num):
        key = SubflowKey(token, sfs.local_ids[i], sfs.remote_ids[i])
        entry = cmap.lookup(key)
        if entry is None:
            continue
        if not entry.safe:
            entry.enabled = False
            cmap.update(key, entry)
            continue
        p = enable_probability(entry.linger_time, sfs.lt_sum, cfg)
        threshold = rng.random()
        entry.enabled = p > threshold
        cmap.update(key, entry)


def cleanup_closed(live_tokens: set[Token], cmap: ControlMap) -> int:
    """Deletes entries whose token is no longer an open connection."""

    stale = [key for key in cmap.keys() if key.token not in live_tokens]
    for key in stale:
        cmap.delete(key)
    return len(stale)


def flush_dmap(dmap: DetectionMap, log: DetectionLog) -> int:
    """Drains the D-map into the detection log in (timestamp, token) order."""

    records = dmap.drain()
    for record in records:
        log.append(record)
    return len(records)


def tick(
    now: SimTime,
    cmap: ControlMap,
    dmap: DetectionMap,
    report: SharedReport,
    live_tokens: set[Token],
    rng: np.random.Generator,
    cfg: ManagerConfig,
    log: DetectionLog,
) -> SimTime:
    """One manager interval: snapshot, reports, decisions, cleanup, flush.

    The snapshot table is local to the tick (reset afterward by going out of
    scope).  Tokens are visited in ascending order, subflows in
    (local_id, remote_id) order, so rng consumption is deterministic.
    """

    table = snapshot(cmap)
    apply_reports(report, cmap, table, cfg.cellular_remote_id)
    for token in sorted(table):
        decide_states(token, table[token], cmap, rng, cfg)
    cleanup_closed(live_tokens, cmap)
    flush_dmap(dmap, log)
    return now + seconds_to_ns(cfg.interval)


class SubflowManager:
    """Binds the manager's configuration, rng and log for event-loop wiring."""

    def __init__(self, cfg: ManagerConfig, rng: np.random.Generator, log: DetectionLog):
        self.cfg = cfg
        self.rng = rng
        self.log = log

    def tick(self, now: SimTime, cmap: ControlMap, dmap: DetectionMap,
             report: SharedReport, live_tokens: set[Token]) -> SimTime:
        return tick(now, cmap, dmap, report, live_tokens, self.rng, self.cfg, self.log)
