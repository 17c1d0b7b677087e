"""Deterministic discrete-event simulation of the MPTCP proxy and its two paths.

The model, end to end: application workloads submit bytes into a per-connection
send buffer; the active scheduling policy assigns bursts (capped by free
congestion window, backlog, receive window and the burst cap) to subflows;
each path serializes segments FIFO at its bandwidth and delivers them after
its one-way delay, dropping each independently with its loss rate; the
receiver reassembles in sequence order, counting out-of-order arrivals; acks
are coalesced for ack_delay and free congestion window, carry an RTT sample
(pacing_rate = CWND / RTT) and the in-order delivery point (receive-window
accounting); losses are recovered by retransmission timeout only and rerouted
through the policy's retransmission rule.

Event ties at one timestamp resolve by fixed priority: segment arrivals,
acks, scheduler callbacks (and loss timers), manager tick, detector tick,
workload arrivals; then insertion order.  Everything stochastic draws from
the single generator owned by this module, so equal seeds replay event for
event.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    CELLULAR,
    NS_PER_S,
    SimTime,
    SubflowContext,
    SubflowKey,
    Token,
    TokenAllocator,
    seconds_to_ns,
)

# Event kinds and their tie-break priorities.
ARRIVAL = 0
ACK = 1
SCHED = 2
LOSS_TIMER = 3
MANAGER = 4
DETECTOR = 5
WORKLOAD = 6

EVENT_PRIORITY = {
    ARRIVAL: 0,
    ACK: 1,
    SCHED: 2,
    LOSS_TIMER: 2,
    MANAGER: 3,
    DETECTOR: 4,
    WORKLOAD: 5,
}

KIND_NAMES = {
    ARRIVAL: "arrival",
    ACK: "ack",
    SCHED: "sched",
    LOSS_TIMER: "loss_timer",
    MANAGER: "manager",
    DETECTOR: "detector",
    WORKLOAD: "workload",
}

DEFAULT_CWND = 64 * 1024
DEFAULT_RECV_WINDOW = 128 * 1024
DEFAULT_ACK_DELAY_S = 0.002
DEFAULT_RTO_FLOOR_S = 0.200

_SATURATED_CHUNK = 1 << 62  # effectively unbounded backlog


@dataclass
class PathModel:
    """One path's link characteristics; values are configuration, not measurements."""

    name: str
    one_way_delay: float  # seconds
    bandwidth: float  # bytes/second
    loss_rate: float = 0.0
    mtu: int = 1448

    def __post_init__(self):
        if self.one_way_delay < 0:
            raise ValueError("one_way_delay must be >= 0")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be > 0")
        if not 0 <= self.loss_rate < 1:
            raise ValueError("loss_rate must be in [0, 1)")
        if self.mtu < 536:
            raise ValueError("mtu must be >= 536")

    def nominal_rtt(self) -> float:
        return 2 * self.one_way_delay + self.mtu / self.bandwidth


class PathState:
    """Shared FIFO serialization state for one path."""

    __slots__ = ("model", "owd_ns", "ns_per_byte", "loss_rate", "busy_until")

    def __init__(self, model: PathModel):
        self.model = model
        self.owd_ns = seconds_to_ns(model.one_way_delay)
        self.ns_per_byte = NS_PER_S / model.bandwidth
        self.loss_rate = model.loss_rate
        self.busy_until = 0


class Segment:
    __slots__ = ("token", "seq", "length", "subflow", "send_time", "arrival_time",
                 "is_retransmission")

    def __init__(self, token, seq, length, subflow, send_time, is_retransmission=False):
        self.token = token
        self.seq = seq
        self.length = length
        self.subflow = subflow
        self.send_time = send_time
        self.arrival_time = None
        self.is_retransmission = is_retransmission


class ReorderBuffer:
    """Receiver-side in-order reassembly with out-of-order / duplicate counting.

    Sequence numbers are byte offsets; delivery advances next_expected through
    any contiguous buffered suffix.
    """

    __slots__ = ("next_expected", "buffered", "delivered", "out_of_order", "duplicates")

    def __init__(self):
        self.next_expected = 0
        self.buffered: dict[int, int] = {}
        self.delivered = 0
        self.out_of_order = 0
        self.duplicates = 0

    def deliver(self, seq: int, length: int) -> tuple[int, bool]:
        """Returns (bytes newly delivered in order, arrival was out of order)."""

        if seq == self.next_expected:
            advanced = length
            nxt = seq + length
            buffered = self.buffered
            while nxt in buffered:
                step = buffered.pop(nxt)
                advanced += step
                nxt += step
            self.next_expected = nxt
            self.delivered += advanced
            return advanced, False
        if seq > self.next_expected:
            if seq in self.buffered:
                self.duplicates += 1
                return 0, False
            self.buffered[seq] = length
            self.out_of_order += 1
            return 0, True
        self.duplicates += 1
        return 0, False

    def buffered_bytes(self) -> int:
        return sum(self.buffered.values())


class SubflowState:
    __slots__ = ("key", "path", "cwnd", "in_flight", "pace", "conn")

    def __init__(self, key: SubflowKey, path: PathState, cwnd: int, conn: "Connection"):
        self.key = key
        self.path = path
        self.cwnd = cwnd
        self.in_flight = 0
        self.pace = cwnd / path.model.nominal_rtt()
        self.conn = conn

    def context(self) -> SubflowContext:
        return SubflowContext(self.key, self.in_flight, self.pace, self.path.model.name)


class Connection:
    __slots__ = (
        "token", "subflows", "subflow_order", "backlog", "next_seq", "rx",
        "submitted", "assigned", "delivered_known", "saturated_until",
        "first_submit", "final_submit", "completed_at", "closed",
        "ack_buf", "ack_scheduled", "sched_scheduled",
    )

    def __init__(self, token: Token):
        self.token = token
        self.subflows: dict[SubflowKey, SubflowState] = {}
        self.subflow_order: list[SubflowState] = []
        self.backlog = 0
        self.next_seq = 0
        self.rx = ReorderBuffer()
        self.submitted = 0
        self.assigned = 0
        self.delivered_known = 0
        self.saturated_until: Optional[SimTime] = None
        self.first_submit: Optional[SimTime] = None
        self.final_submit: SimTime = 0
        self.completed_at: Optional[SimTime] = None
        self.closed = False
        self.ack_buf: dict[SubflowKey, list] = {}
        self.ack_scheduled = False
        self.sched_scheduled = False

    def contexts(self) -> list[SubflowContext]:
        return [sf.context() for sf in self.subflow_order]

    def total_in_flight(self) -> int:
        return sum(sf.in_flight for sf in self.subflow_order)


@dataclass
class PerfMetrics:
    """Per-run network performance counters."""

    throughput: float = 0.0  # bytes/second over the configured duration
    retransmissions: int = 0
    out_of_order: int = 0
    completion_time: Optional[float] = None  # seconds, slowest completed connection
    delivered_bytes: int = 0
    duplicates: int = 0
    completion_times: dict[Token, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "throughput_Bps": self.throughput,
            "retransmissions": self.retransmissions,
            "out_of_order": self.out_of_order,
            "completion_time_s": self.completion_time,
            "delivered_bytes": self.delivered_bytes,
            "duplicates": self.duplicates,
        }


class Simulation:
    """Event loop owning paths, connections, the scheduler and the run's rng."""

    def __init__(
        self,
        paths: dict[str, PathModel],
        scheduler,
        rng: np.random.Generator,
        *,
        duration_s: float,
        cwnd: int = DEFAULT_CWND,
        recv_window: int = DEFAULT_RECV_WINDOW,
        ack_delay_s: float = DEFAULT_ACK_DELAY_S,
        rto_floor_s: float = DEFAULT_RTO_FLOOR_S,
        observe_path: Optional[str] = None,
        collect_trace: bool = False,
    ):
        self.paths = {name: PathState(model) for name, model in paths.items()}
        self.scheduler = scheduler
        self.rng = rng
        self.now: SimTime = 0
        self.horizon = seconds_to_ns(duration_s)
        self.duration_s = duration_s
        self.cwnd = cwnd
        self.recv_window = recv_window
        self.ack_delay_ns = seconds_to_ns(ack_delay_s)
        max_rtt = max(m.nominal_rtt() for m in paths.values())
        self.rto_ns = seconds_to_ns(max(rto_floor_s, 2 * max_rtt))
        self.observe_path = observe_path
        self.send_log: list[tuple[int, int, Token]] = []  # (departure_ns, bytes, token)
        self.collect_trace = collect_trace
        self.trace: list[tuple] = []  # (time_ns, token, path, seq, len, event)
        self.connections: dict[Token, Connection] = {}
        self.live_tokens: set[Token] = set()
        self._tokens = TokenAllocator()
        self._heap: list[tuple] = []
        self._push_seq = 0
        self.retransmissions = 0
        self.delivered_bytes = 0
        self.events_processed = 0

    # -- construction ------------------------------------------------------

    def add_connection(self, path_names: list[str]) -> Token:
        """Creates a connection with one subflow per path, ids (0,0), (1,1), ..."""

        token = self._tokens.allocate()
        conn = Connection(token)
        for i, name in enumerate(path_names):
            key = SubflowKey(token, i, i)
            sf = SubflowState(key, self.paths[name], self.cwnd, conn)
            conn.subflows[key] = sf
            conn.subflow_order.append(sf)
        self.connections[token] = conn
        self.live_tokens.add(token)
        return token

    def submit_at(self, t_ns: SimTime, token: Token, nbytes: int) -> None:
        conn = self.connections[token]
        if t_ns > conn.final_submit:
            conn.final_submit = t_ns
        self._push(t_ns, WORKLOAD, (conn, nbytes))

    def set_saturated(self, token: Token, until_ns: SimTime) -> None:
        conn = self.connections[token]
        conn.saturated_until = until_ns
        conn.final_submit = until_ns
        conn.first_submit = 0
        self._push(0, WORKLOAD, (conn, 0))

    def schedule_callback(self, t_ns: SimTime, kind: int, fn: Callable[[SimTime], Optional[SimTime]]) -> None:
        """Periodic hook (manager/detector): fn(now) returns the next tick or None."""

        self._push(t_ns, kind, fn)

    # -- event machinery ----------------------------------------------------

    def _push(self, t_ns: SimTime, kind: int, payload) -> None:
        self._push_seq += 1
        heapq.heappush(self._heap, (t_ns, EVENT_PRIORITY[kind], self._push_seq, kind, payload))

    def step(self):
        """Pops and applies the earliest event; returns it, or None if drained."""

        if not self._heap:
            return None
        event = heapq.heappop(self._heap)
        t_ns, _prio, _seq, kind, payload = event
        self.now = t_ns
        self.events_processed += 1
        if kind == ARRIVAL:
            self._on_arrival(payload)
        elif kind == ACK:
            self._on_ack(payload)
        elif kind == SCHED:
            payload.sched_scheduled = False
            self._schedule_pass(payload)
        elif kind == LOSS_TIMER:
            self._on_loss_detected(payload)
        elif kind == WORKLOAD:
            self._on_workload(*payload)
        else:  # MANAGER / DETECTOR
            next_t = payload(t_ns)
            if next_t is not None and next_t <= self.horizon:
                self._push(next_t, kind, payload)
        return event

    def run(self, until_ns: Optional[SimTime] = None) -> None:
        """Processes events until the queue drains (or past the given time)."""

        heap = self._heap
        while heap:
            if until_ns is not None and heap[0][0] > until_ns:
                break
            self.step()

    # -- handlers ------------------------------------------------------------

    def _on_workload(self, conn: Connection, nbytes: int) -> None:
        if nbytes > 0:
            conn.submitted += nbytes
            conn.backlog += nbytes
        if conn.first_submit is None:
            conn.first_submit = self.now
        self._trigger_sched(conn)

    def _trigger_sched(self, conn: Connection) -> None:
        if not conn.sched_scheduled:
            conn.sched_scheduled = True
            self._push(self.now, SCHED, conn)

    def _sendable(self, conn: Connection) -> int:
        if conn.saturated_until is not None and self.now < conn.saturated_until:
            backlog = _SATURATED_CHUNK
        else:
            backlog = conn.backlog
        if backlog <= 0:
            return 0
        rwnd_free = self.recv_window - (conn.assigned - conn.delivered_known)
        return min(backlog, rwnd_free)

    def _schedule_pass(self, conn: Connection) -> None:
        if conn.closed:
            return
        while True:
            limit = self._sendable(conn)
            if limit <= 0:
                return
            free = {sf.key: sf.cwnd - sf.in_flight for sf in conn.subflow_order}
            decision = self.scheduler.select(
                conn.contexts(), free_cwnd=free, backlog=limit, now=self.now
            )
            if decision.subflow is None or decision.burst <= 0:
                return
            sf = conn.subflows[decision.subflow]
            burst = decision.burst
            mtu = sf.path.model.mtu
            seq = conn.next_seq
            remaining = burst
            while remaining > 0:
                length = mtu if remaining > mtu else remaining
                self._transmit(conn, sf, seq, length, False)
                seq += length
                remaining -= length
            conn.next_seq = seq
            sf.in_flight += burst
            conn.assigned += burst
            if conn.saturated_until is not None:
                conn.submitted += burst
            else:
                conn.backlog -= burst

    def _transmit(self, conn: Connection, sf: SubflowState, seq: int, length: int,
                  is_retx: bool) -> None:
        path = sf.path
        now = self.now
        departure = path.busy_until
        if departure < now:
            departure = now
        serialization = int(length * path.ns_per_byte)
        path.busy_until = departure + serialization
        name = path.model.name
        if name == self.observe_path:
            self.send_log.append((departure, length, conn.token))
        segment = Segment(conn.token, seq, length, sf, now, is_retx)
        lost = path.loss_rate > 0.0 and self.rng.random() < path.loss_rate
        if self.collect_trace:
            self.trace.append((departure, conn.token, name, seq, length,
                               "loss" if lost else "send"))
        if lost:
            self._push(now + self.rto_ns, LOSS_TIMER, segment)
        else:
            arrival = departure + serialization + path.owd_ns
            segment.arrival_time = arrival
            self._push(arrival, ARRIVAL, segment)

    def _on_arrival(self, segment: Segment) -> None:
        sf = segment.subflow
        conn = sf.conn
        if self.collect_trace:
            self.trace.append((self.now, conn.token, sf.path.model.name,
                               segment.seq, segment.length, "arrive"))
        delivered, _ooo = conn.rx.deliver(segment.seq, segment.length)
        if delivered:
            self.delivered_bytes += delivered
        buf = conn.ack_buf.get(sf.key)
        if buf is None:
            conn.ack_buf[sf.key] = [segment.length, segment.send_time]
        else:
            buf[0] += segment.length
            if segment.send_time > buf[1]:
                buf[1] = segment.send_time
        if not conn.ack_scheduled:
            conn.ack_scheduled = True
            self._push(self.now + self.ack_delay_ns, ACK, conn)
        if (
            conn.completed_at is None
            and conn.rx.delivered == conn.submitted
            and self.now >= conn.final_submit
            and conn.backlog == 0
        ):
            conn.completed_at = self.now

    def _on_ack(self, conn: Connection) -> None:
        conn.ack_scheduled = False
        buf = conn.ack_buf
        conn.ack_buf = {}
        now = self.now
        for key, (nbytes, newest_send) in buf.items():
            sf = conn.subflows[key]
            sf.in_flight -= nbytes
            rtt_ns = now - newest_send
            if rtt_ns > 0:
                sf.pace = sf.cwnd * NS_PER_S / rtt_ns
        conn.delivered_known = conn.rx.delivered
        if conn.completed_at is not None and not conn.closed and conn.total_in_flight() == 0:
            conn.closed = True
            self.live_tokens.discard(conn.token)
            return
        if self._sendable(conn) > 0:
            self._trigger_sched(conn)

    def _on_loss_detected(self, segment: Segment) -> None:
        """RTO fired for a lost segment: reroute it via the scheduler's retransmission rule."""

        sf_old = segment.subflow
        conn = sf_old.conn
        self.retransmissions += 1
        sf_old.in_flight -= segment.length
        target_key = self.scheduler.select_retransmit(conn.contexts())
        sf_new = conn.subflows.get(target_key, sf_old) if target_key else sf_old
        sf_new.in_flight += segment.length
        self._transmit(conn, sf_new, segment.seq, segment.length, True)

    # -- results -------------------------------------------------------------

    def metrics(self) -> PerfMetrics:
        out_of_order = sum(c.rx.out_of_order for c in self.connections.values())
        duplicates = sum(c.rx.duplicates for c in self.connections.values())
        completion = {}
        for token, conn in self.connections.items():
            if conn.completed_at is not None and conn.first_submit is not None:
                completion[token] = (conn.completed_at - conn.first_submit) / NS_PER_S
        return PerfMetrics(
            throughput=self.delivered_bytes / self.duration_s if self.duration_s else 0.0,
            retransmissions=self.retransmissions,
            out_of_order=out_of_order,
            completion_time=max(completion.values()) if completion else None,
            delivered_bytes=self.delivered_bytes,
            duplicates=duplicates,
            completion_times=completion,
        )

    def write_trace_csv(self, path: str) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("time_ns,token,path,seq,len,event\n")
            for row in sorted(self.trace):
                fh.write("%d,%d,%s,%d,%d,%s\n" % row)
