"""Scheduling policies: Saflo, BLEST baseline, random distribution, singlepath.

All selectors share the same contract: given the connection's subflow
contexts, per-subflow free congestion window and the sendable backlog, return
a (subflow, burst) decision.  Saflo additionally reads/writes the control map
and appends one detection record per call that assigns data.

linger_time is queued_memory / pacing_rate throughout; selection is argmin
over linger_time with ties broken by lowest (local_id, remote_id), which is
why subflows are always iterated in that order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    CELLULAR,
    WIFI,
    ControlMap,
    ControlMapEntry,
    DetectionMap,
    DetectionRecord,
    SimTime,
    SubflowContext,
    SubflowKey,
)

DEFAULT_BURST_CAP = 64 * 1024

SCHEDULER_NAMES = ("saflo", "blest", "rd", "single-cell", "single-wifi")


@dataclass
class SendInfo:
    """Running argmin state: starts empty with the -1 sentinel linger time.

    The sentinel is interpreted as "any linger_time beats an empty SendInfo";
    a selected subflow's stored linger always equals its recomputed value.
    """

    selected: Optional[SubflowContext] = None
    linger_time: float = -1.0

    def offer(self, ctx: SubflowContext, linger: float) -> None:
        if self.selected is None or linger < self.linger_time:
            self.selected = ctx
            self.linger_time = linger


@dataclass(frozen=True)
class SchedulerDecision:
    subflow: Optional[SubflowKey]
    burst: int

    @property
    def is_none(self) -> bool:
        return self.subflow is None or self.burst <= 0


NO_DECISION = SchedulerDecision(None, 0)


def _ordered(subflows: list[SubflowContext]) -> list[SubflowContext]:
    return sorted(subflows, key=lambda c: (c.key.local_id, c.key.remote_id))


def compute_burst(free_cwnd: int, backlog: int, cap: int = DEFAULT_BURST_CAP) -> int:
    """Bytes to assign: min(free congestion window, backlog, burst cap)."""

    burst = min(free_cwnd, backlog, cap)
    return burst if burst > 0 else 0


def saflo_select(
    subflows: list[SubflowContext],
    cmap: ControlMap,
    dmap: DetectionMap,
    now: SimTime,
    *,
    free_cwnd: dict[SubflowKey, int],
    backlog: int,
    burst_cap: int = DEFAULT_BURST_CAP,
) -> SchedulerDecision:
    """Select among enabled subflows by minimum linger_time, maintaining the maps.

    Missing C-map entries are created enabled and safe; every touched entry is
    refreshed with the subflow's current linger_time/wmem/pace (the manager
    owns the enabled/safe flags, so they are preserved here).  If no subflow
    is enabled at all, traffic falls back to the initial subflow (0, 0) so
    the connection keeps flowing as plain TCP would.
    """

    token = subflows[0].key.token
    order = _ordered(subflows)
    send_info = SendInfo()
    entries: dict[SubflowKey, ControlMapEntry] = {}
    any_enabled = False
    for ctx in order:
        entry = cmap.lookup(ctx.key)
        if entry is None:
            entry = ControlMapEntry(ctx.linger_time(), ctx.wmem, ctx.pace)
            cmap.update(ctx.key, entry)
        entries[ctx.key] = entry
        if entry.enabled:
            any_enabled = True
            if free_cwnd.get(ctx.key, 0) > 0:
                send_info.offer(ctx, ctx.linger_time())

    if send_info.selected is None and not any_enabled:
        for ctx in order:
            key = ctx.key
            if key.local_id == 0 and key.remote_id == 0 and free_cwnd.get(key, 0) > 0:
                send_info.offer(ctx, ctx.linger_time())
                break

    for ctx in order:
        entry = entries[ctx.key]
        entry.linger_time = ctx.linger_time()
        entry.queued_memory = ctx.wmem
        entry.pacing_rate = ctx.pace
        cmap.update(ctx.key, entry)

    if send_info.selected is None:
        return NO_DECISION
    key = send_info.selected.key
    burst = compute_burst(free_cwnd.get(key, 0), backlog, burst_cap)
    if burst <= 0:
        return NO_DECISION
    dmap.append(DetectionRecord(now, token, burst))
    return SchedulerDecision(key, burst)


def blest_select(
    subflows: list[SubflowContext],
    now: SimTime = 0,
    *,
    free_cwnd: dict[SubflowKey, int],
    backlog: int,
    burst_cap: int = DEFAULT_BURST_CAP,
) -> SchedulerDecision:
    """Minimum-linger_time selection ignoring enabled/safe flags; writes no maps."""

    send_info = SendInfo()
    for ctx in _ordered(subflows):
        if free_cwnd.get(ctx.key, 0) > 0:
            send_info.offer(ctx, ctx.linger_time())
    if send_info.selected is None:
        return NO_DECISION
    key = send_info.selected.key
    burst = compute_burst(free_cwnd.get(key, 0), backlog, burst_cap)
    if burst <= 0:
        return NO_DECISION
    return SchedulerDecision(key, burst)


def rd_select(
    subflows: list[SubflowContext],
    rng: np.random.Generator,
    *,
    free_cwnd: dict[SubflowKey, int],
    backlog: int,
    burst_cap: int = DEFAULT_BURST_CAP,
) -> SchedulerDecision:
    """Uniform choice over subflows with free congestion window (per burst)."""

    if backlog <= 0:
        return NO_DECISION
    eligible = [c for c in _ordered(subflows) if free_cwnd.get(c.key, 0) > 0]
    if not eligible:
        return NO_DECISION
    ctx = eligible[int(rng.integers(len(eligible)))]
    burst = compute_burst(free_cwnd[ctx.key], backlog, burst_cap)
    if burst <= 0:
        return NO_DECISION
    return SchedulerDecision(ctx.key, burst)


def min_linger_retransmit(
    subflows: list[SubflowContext],
    *,
    cmap: Optional[ControlMap] = None,
    safe_only: bool = False,
) -> Optional[SubflowKey]:
    """Retransmission routing: minimum linger_time, optionally over safe subflows only.

    The random enabled mask is ignored; retransmissions favor the fastest
    drain.  When every subflow is unsafe the initial subflow (0, 0) is used.
    """

    send_info = SendInfo()
    for ctx in _ordered(subflows):
        if safe_only and cmap is not None:
            entry = cmap.lookup(ctx.key)
            if entry is not None and not entry.safe:
                continue
        send_info.offer(ctx, ctx.linger_time())
    if send_info.selected is None:
        for ctx in _ordered(subflows):
            if ctx.key.local_id == 0 and ctx.key.remote_id == 0:
                return ctx.key
        return None
    return send_info.selected.key


class SafloScheduler:
    """Policy object wiring saflo_select to one run's C-map and D-map."""

    name = "saflo"

    def __init__(self, cmap: ControlMap, dmap: DetectionMap, burst_cap: int = DEFAULT_BURST_CAP):
        self.cmap = cmap
        self.dmap = dmap
        self.burst_cap = burst_cap

    def select(self, subflows, *, free_cwnd, backlog, now) -> SchedulerDecision:
        return saflo_select(
            subflows, self.cmap, self.dmap, now,
            free_cwnd=free_cwnd, backlog=backlog, burst_cap=self.burst_cap,
        )

    def select_retransmit(self, subflows) -> Optional[SubflowKey]:
        return min_linger_retransmit(subflows, cmap=self.cmap, safe_only=True)


class BlestScheduler:
    name = "blest"

    def __init__(self, burst_cap: int = DEFAULT_BURST_CAP):
        self.burst_cap = burst_cap

    def select(self, subflows, *, free_cwnd, backlog, now) -> SchedulerDecision:
        return blest_select(subflows, now, free_cwnd=free_cwnd, backlog=backlog,
                            burst_cap=self.burst_cap)

    def select_retransmit(self, subflows) -> Optional[SubflowKey]:
        return min_linger_retransmit(subflows)


class RdScheduler:
    name = "rd"

    def __init__(self, rng: np.random.Generator, burst_cap: int = DEFAULT_BURST_CAP):
        self.rng = rng
        self.burst_cap = burst_cap

    def select(self, subflows, *, free_cwnd, backlog, now) -> SchedulerDecision:
        return rd_select(subflows, self.rng, free_cwnd=free_cwnd, backlog=backlog,
                         burst_cap=self.burst_cap)

    def select_retransmit(self, subflows) -> Optional[SubflowKey]:
        subflows = _ordered(subflows)
        return subflows[int(self.rng.integers(len(subflows)))].key


class SinglePathScheduler:
    """BLEST restricted to one configured path."""

    def __init__(self, path: str, burst_cap: int = DEFAULT_BURST_CAP):
        self.path = path
        self.name = f"single-{'cell' if path == CELLULAR else 'wifi'}"
        self.burst_cap = burst_cap

    def _mine(self, subflows):
        return [c for c in subflows if c.path == self.path]

    def select(self, subflows, *, free_cwnd, backlog, now) -> SchedulerDecision:
        mine = self._mine(subflows)
        if not mine:
            return NO_DECISION
        return blest_select(mine, now, free_cwnd=free_cwnd, backlog=backlog,
                            burst_cap=self.burst_cap)

    def select_retransmit(self, subflows) -> Optional[SubflowKey]:
        mine = self._mine(subflows)
        return min_linger_retransmit(mine) if mine else None


def make_scheduler(
    name: str,
    *,
    cmap: Optional[ControlMap] = None,
    dmap: Optional[DetectionMap] = None,
    rng: Optional[np.random.Generator] = None,
    burst_cap: int = DEFAULT_BURST_CAP,
):
    if name == "saflo":
        if cmap is None or dmap is None:
            raise ValueError("saflo scheduler needs a C-map and a D-map")
        return SafloScheduler(cmap, dmap, burst_cap)
    if name == "blest":
        return BlestScheduler(burst_cap)
    if name == "rd":
        if rng is None:
            raise ValueError("rd scheduler needs an rng")
        return RdScheduler(rng, burst_cap)
    if name == "single-cell":
        return SinglePathScheduler(CELLULAR, burst_cap)
    if name == "single-wifi":
        return SinglePathScheduler(WIFI, burst_cap)
    raise ValueError(f"unknown scheduler {name!r}; expected one of {SCHEDULER_NAMES}")
