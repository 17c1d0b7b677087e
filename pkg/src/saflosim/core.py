"""Shared domain types and the channels connecting scheduler, manager and detector.

Time is integer nanoseconds since simulation start.  Tokens identify MPTCP
connections; (token, local_id, remote_id) identifies a subflow.  The control
map (per-subflow scheduling state), the detection map (per-scheduling-call
burst records), the shared report (compromised tokens) and the detection log
are plain in-process data structures mutated by the event loop in a defined
order; one simulation run is single-threaded.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import numpy as np

SimTime = int  # nanoseconds since simulation start
Token = int

NS_PER_S = 1_000_000_000

# Path names used across the whole package.
CELLULAR = "cellular"
WIFI = "wifi"


@dataclass(frozen=True, order=True)
class SubflowKey:
    token: Token
    local_id: int
    remote_id: int


@dataclass
class SubflowContext:
    """Kernel-side view of one subflow, consumed by the schedulers.

    wmem is the number of bytes assigned to the subflow and not yet acked;
    pace is the pacing rate in bytes/second (always > 0).
    """

    key: SubflowKey
    wmem: int
    pace: float
    path: str

    def linger_time(self) -> float:
        return self.wmem / self.pace


@dataclass
class ControlMapEntry:
    """C-map value: scheduling state written by the scheduler, flags by the manager."""

    linger_time: float
    queued_memory: int
    pacing_rate: float
    enabled: bool = True
    safe: bool = True

    def copy(self) -> "ControlMapEntry":
        return replace(self)


@dataclass(frozen=True)
class DetectionRecord:
    """D-map entry: bytes assigned by one scheduling call, at one timestamp."""

    timestamp: SimTime
    token: Token
    burst: int


@dataclass
class SharedReport:
    """Compromised tokens, written only by the detector and read by the manager."""

    compromised: set[Token] = field(default_factory=set)
    updated_at: SimTime = 0


class MapFullError(RuntimeError):
    """Raised when a bounded map would exceed its capacity."""


class ControlMap:
    """Exact bounded key-value store for per-subflow control entries.

    Capacity overflow is an error, not eviction; the kernel analogue has
    bounded maps.
    """

    DEFAULT_CAPACITY = 4096

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        self.capacity = capacity
        self._entries: dict[SubflowKey, ControlMapEntry] = {}

    def lookup(self, key: SubflowKey) -> Optional[ControlMapEntry]:
        return self._entries.get(key)

    def update(self, key: SubflowKey, entry: ControlMapEntry) -> None:
        if key not in self._entries and len(self._entries) >= self.capacity:
            raise MapFullError(f"control map full ({self.capacity} entries)")
        self._entries[key] = entry

    def delete(self, key: SubflowKey) -> bool:
        return self._entries.pop(key, None) is not None

    def items(self) -> Iterator[tuple[SubflowKey, ControlMapEntry]]:
        return iter(self._entries.items())

    def keys(self) -> list[SubflowKey]:
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: SubflowKey) -> bool:
        return key in self._entries


class DetectionMap:
    """Append buffer for burst records.

    Modeled as a buffer rather than a keyed map: the kernel key (timestamp,
    token) can collide under coarse clocks, so an internal per-append sequence
    number keeps records distinct.  drain() returns records ordered by
    (timestamp, token, append order) and empties the buffer.
    """

    def __init__(self):
        self._records: list[tuple[SimTime, Token, int, DetectionRecord]] = []
        self._seq = 0

    def append(self, record: DetectionRecord) -> None:
        if record.burst <= 0:
            raise ValueError("burst must be positive")
        self._records.append((record.timestamp, record.token, self._seq, record))
        self._seq += 1

    def drain(self) -> list[DetectionRecord]:
        out = [r for *_sort, r in sorted(self._records, key=lambda t: t[:3])]
        self._records.clear()
        return out

    def __len__(self) -> int:
        return len(self._records)


class LogParseError(ValueError):
    """A detection-log line failed to parse; carries the 1-based line number."""

    def __init__(self, lineno: int, line: str):
        super().__init__(f"malformed detection log line {lineno}: {line!r}")
        self.lineno = lineno
        self.line = line


def format_log_line(record: DetectionRecord) -> str:
    return f"{record.timestamp},{record.token},{record.burst}"


def parse_log_line(line: str, lineno: int = 1) -> DetectionRecord:
    parts = line.strip().split(",")
    if len(parts) != 3:
        raise LogParseError(lineno, line)
    try:
        ts, token, burst = (int(p) for p in parts)
    except ValueError:
        raise LogParseError(lineno, line) from None
    if burst <= 0 or ts < 0 or token < 0:
        raise LogParseError(lineno, line)
    return DetectionRecord(ts, token, burst)


class DetectionLog:
    """Append-only detection log: text lines ``timestamp_ns,token,burst_bytes``.

    Lines are kept in memory (the detector reads them back each tick) and
    optionally streamed to a file.  The line format is the manager/detector
    contract and must stay bit-exact across platforms.
    """

    def __init__(self, path: Optional[str] = None):
        self.lines: list[str] = []
        self._fh = open(path, "w", encoding="ascii", newline="\n") if path else None

    def append(self, record: DetectionRecord) -> str:
        line = format_log_line(record)
        self.lines.append(line)
        if self._fh is not None:
            self._fh.write(line + "\n")
            self._fh.flush()
        return line

    def records(self) -> list[DetectionRecord]:
        return [parse_log_line(l, i + 1) for i, l in enumerate(self.lines)]

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __len__(self) -> int:
        return len(self.lines)


class TokenAllocator:
    """Sequential connection tokens starting at 1; 0 is reserved as "no token"."""

    def __init__(self):
        self._next = 1

    def allocate(self) -> Token:
        token = self._next
        self._next += 1
        return token


def _scope_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def make_rng(seed: int, *scope) -> np.random.Generator:
    """Deterministic per-module generator: identical (seed, scope) => identical stream.

    Scope parts may be ints or short strings (strings are crc32-hashed, which
    is stable across platforms and Python versions).
    """

    entropy = [_scope_int(seed)] + [_scope_int(p) for p in scope]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def seconds_to_ns(seconds: float) -> SimTime:
    return int(round(seconds * NS_PER_S))


def ns_to_seconds(t: SimTime) -> float:
    return t / NS_PER_S
