"""Deterministic traffic generators for every experiment scenario.

Generators return app-level send events as (time_s, bytes) lists; netsim
segments and paces them.  Everything is a pure function of (spec, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .core import make_rng

MIB = 1024 * 1024

VIDEO = "video"
ATTACKER = "attacker"
VOICE = "voice"
VIDEOCALL = "videocall"
WEB = "web"
SATURATED = "saturated"

KINDS = (VIDEO, ATTACKER, VOICE, VIDEOCALL, WEB, SATURATED)

ATTACK_PERIOD_S = 2.5
ATTACK_FILE_BYTES = 1 * MIB
ATTACK_SIGNAL_BYTES = 2 * 1024

VOICE_FRAME_S = 0.020
VOICE_FRAME_BYTES = 320

VIDEOCALL_RATE_BPS = 1.5e6 / 8  # 1.5 Mb/s in bytes/s
VIDEOCALL_SLOT_S = 0.100
VIDEOCALL_JITTER = 0.30

WEB_PAGE_BYTES = 15_600_000

# Synthetic HAS library defaults: one chunk per 5 s on-period, log-normal sizes.
VIDEO_INTERVAL_S = 5.0
VIDEO_CHUNK_MEDIAN_BYTES = 2 * MIB
VIDEO_CHUNK_SIGMA = 0.5


@dataclass
class WorkloadSpec:
    kind: str
    duration: float
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")


@dataclass(frozen=True)
class VideoSignature:
    """One synthetic video: its chunk-size sequence at a fixed on-period."""

    video_id: int
    chunk_bytes: tuple[int, ...]
    interval_s: float = VIDEO_INTERVAL_S


def make_video_library(
    n_videos: int,
    library_seed: int,
    duration_s: float,
    *,
    interval_s: float = VIDEO_INTERVAL_S,
    median_bytes: float = VIDEO_CHUNK_MEDIAN_BYTES,
    sigma: float = VIDEO_CHUNK_SIGMA,
) -> list[VideoSignature]:
    """Seeded library of distinct HAS-shaped signatures (chunk sizes log-normal)."""

    n_chunks = int(math.floor(duration_s / interval_s)) + 1
    mu = math.log(median_bytes)
    library = []
    for vid in range(n_videos):
        rng = make_rng(library_seed, "video-library", vid)
        chunks = tuple(int(x) for x in rng.lognormal(mu, sigma, size=n_chunks))
        library.append(VideoSignature(vid, chunks, interval_s))
    return library


def gen_video(signature: VideoSignature, duration: float) -> list[tuple[float, int]]:
    """One burst per on-period: chunk k submitted at k * interval."""

    n = len(signature.chunk_bytes)
    events = []
    k = 0
    while True:
        t = k * signature.interval_s
        if t >= duration or k >= n:
            break
        events.append((t, signature.chunk_bytes[k]))
        k += 1
    if not events:  # sub-interval durations still stream the first chunk
        events.append((0.0, signature.chunk_bytes[0]))
    return events


def gen_attacker(
    duration: float,
    *,
    period_s: float = ATTACK_PERIOD_S,
    file_bytes: int = ATTACK_FILE_BYTES,
    signal_bytes: int = ATTACK_SIGNAL_BYTES,
) -> tuple[list[tuple[float, int]], list[tuple[float, int]]]:
    """Periodic messenger attack: (file socket events, signal socket events).

    The two streams ride distinct MPTCP connections; the signal payload is a
    stand-in for the messenger's companion signaling traffic.
    """

    file_events = []
    signal_events = []
    k = 0
    while k * period_s < duration:
        t = k * period_s
        file_events.append((t, file_bytes))
        signal_events.append((t, signal_bytes))
        k += 1
    return file_events, signal_events


def gen_background(kind: str, params: dict, duration: float, seed: int = 0) -> list[tuple[float, int]]:
    """voice / videocall / web / saturated event streams.

    saturated returns no discrete events; callers mark the connection saturated
    for the duration instead.
    """

    if kind == VOICE:
        n = int(round(duration / VOICE_FRAME_S))
        return [(i * VOICE_FRAME_S, VOICE_FRAME_BYTES) for i in range(n)]
    if kind == VIDEOCALL:
        rng = make_rng(seed, "videocall")
        base = VIDEOCALL_RATE_BPS * VIDEOCALL_SLOT_S
        n = int(round(duration / VIDEOCALL_SLOT_S))
        jitter = rng.uniform(-VIDEOCALL_JITTER, VIDEOCALL_JITTER, size=n)
        return [
            (i * VIDEOCALL_SLOT_S, max(1, int(base * (1.0 + jitter[i]))))
            for i in range(n)
        ]
    if kind == WEB:
        nbytes = int(params.get("page_bytes", WEB_PAGE_BYTES))
        return [(0.0, nbytes)]
    if kind == SATURATED:
        return []
    raise ValueError(f"unknown background kind {kind!r}")


def expected_bytes(spec: WorkloadSpec) -> Optional[int]:
    """Closed-form total submitted bytes, where one exists (energy sanity checks)."""

    if spec.kind == VOICE:
        return int(round(spec.duration / VOICE_FRAME_S)) * VOICE_FRAME_BYTES
    if spec.kind == WEB:
        return int(spec.params.get("page_bytes", WEB_PAGE_BYTES))
    if spec.kind == ATTACKER:
        n = int(math.ceil(spec.duration / ATTACK_PERIOD_S))
        return n * (ATTACK_FILE_BYTES + ATTACK_SIGNAL_BYTES)
    return None


SCENARIOS = {
    1: (ATTACKER,),
    2: (VIDEO,),
    3: (VIDEO, ATTACKER),
    4: (VOICE,),
    5: (VOICE, ATTACKER),
    6: (VIDEOCALL,),
    7: (VIDEOCALL, ATTACKER),
}


def compose_scenario(n: int, duration: float, seed: int = 0,
                     params: Optional[dict] = None) -> list[WorkloadSpec]:
    """The seven traffic mixes: attacker / video / voice / video call combinations."""

    if n not in SCENARIOS:
        raise ValueError(f"scenario must be 1..7, got {n}")
    params = params or {}
    return [
        WorkloadSpec(kind, duration, seed=seed, params=dict(params.get(kind, {})))
        for kind in SCENARIOS[n]
    ]
