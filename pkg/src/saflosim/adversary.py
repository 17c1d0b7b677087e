"""The attacker: the cellular-side observation model and both attack pipelines.

The observation model grants the attacker perfect knowledge of per-slot
cellular allocation volume (1 ms slots): every segment transmitted on the
cellular path contributes its bytes to the slot of its departure, aggregated
over all the victim's connections.  WiFi traffic is invisible by
construction.  Observations feed the shared CNN backbone re-binned to its
fixed input length: video identification uses a softmax head over the video
labels, user identification a sigmoid head over 10-second segments.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cnn import (
    CnnModel,
    CnnTopology,
    TrainConfig,
    cnn_train,
    desk_topology,
    full_topology,
    predict,
)
from .core import SimTime, seconds_to_ns

SLOT_S = 0.001  # 1 ms DCI slots
TRAIN_FRACTION = 0.8


@dataclass
class DciObservation:
    """Bytes per 1 ms cellular slot over [start, start + len(values) ms)."""

    start_time: SimTime
    values: np.ndarray
    normalized: bool = False


def observe(
    send_records: list[tuple[int, int, int]],
    window: tuple[SimTime, SimTime],
    duration_ns: SimTime,
    *,
    normalize: bool = True,
) -> DciObservation:
    """Bins cellular-path departures into 1 ms slots over the window.

    send_records are (departure_ns, bytes, token) rows collected by netsim for
    the cellular path only; tokens are aggregated (the attacker sees total
    allocation volume, not flows).  With normalize=True the values are scaled
    to [0, 1] by the window maximum for classifier input.
    """

    t0, t1 = window
    if t0 < 0 or t1 > duration_ns or t1 <= t0:
        raise ValueError(f"window [{t0}, {t1}) outside run duration {duration_ns}")
    slot_ns = seconds_to_ns(SLOT_S)
    n_slots = (t1 - t0 + slot_ns - 1) // slot_ns
    values = np.zeros(n_slots)
    if send_records:
        times = np.fromiter((r[0] for r in send_records), dtype=np.int64,
                            count=len(send_records))
        sizes = np.fromiter((r[1] for r in send_records), dtype=np.int64,
                            count=len(send_records))
        mask = (times >= t0) & (times < t1)
        if mask.any():
            slots = (times[mask] - t0) // slot_ns
            values = np.bincount(slots, weights=sizes[mask], minlength=n_slots).astype(
                np.float64
            )
    if normalize:
        peak = values.max()
        if peak > 0:
            values = values / peak
        return DciObservation(t0, values, normalized=True)
    return DciObservation(t0, values, normalized=False)


def rebin(values: np.ndarray, out_bins: int) -> np.ndarray:
    """Sum-preserving re-bin to the classifier's fixed input length."""

    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n == out_bins:
        return values.copy()
    group = -(-n // out_bins)
    padded = np.zeros(group * out_bins)
    padded[:n] = values
    return padded.reshape(out_bins, group).sum(axis=1)


@dataclass
class AttackDataset:
    """Labeled observation windows, grouped by run so splits never share a run.

    The 80/20 train/test split is stratified by label; windows from one run
    land on one side only, so train and test windows cannot overlap in time.
    """

    x: np.ndarray
    y: np.ndarray
    groups: np.ndarray
    meta: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.groups = np.asarray(self.groups, dtype=np.int64)
        if not (len(self.x) == len(self.y) == len(self.groups)):
            raise ValueError("x, y, groups must have equal length")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx: np.ndarray) -> "AttackDataset":
        meta = [self.meta[i] for i in idx] if self.meta else []
        return AttackDataset(self.x[idx], self.y[idx], self.groups[idx], meta)

    def split(self, rng: np.random.Generator,
              train_fraction: float = TRAIN_FRACTION) -> tuple["AttackDataset", "AttackDataset"]:
        train_groups: set[int] = set()
        test_groups: set[int] = set()
        labels = np.unique(self.y)
        for label in labels:
            groups = np.unique(self.groups[self.y == label])
            order = rng.permutation(len(groups))
            n_train = int(train_fraction * len(groups))
            if n_train == len(groups) and len(groups) > 1:
                n_train -= 1
            n_train = max(1, n_train) if len(groups) > 1 else len(groups)
            train_groups.update(groups[order[:n_train]])
            test_groups.update(groups[order[n_train:]])
        train_idx = np.flatnonzero(np.isin(self.groups, sorted(train_groups)))
        test_idx = np.flatnonzero(np.isin(self.groups, sorted(test_groups)))
        return self.subset(train_idx), self.subset(test_idx)


def train_video_attack(
    dataset: AttackDataset,
    rng: np.random.Generator,
    hyper: TrainConfig = TrainConfig(),
    *,
    desk_scale: bool = True,
) -> CnnModel:
    """Multi-class CNN over observation windows; labels are video ids."""

    labels = np.unique(dataset.y)
    if len(labels) < 2:
        raise ValueError("video attack needs at least two labels")
    counts = np.bincount(dataset.y)
    if (counts[labels] < 2).any():
        raise ValueError("video attack needs at least two samples per label")
    n_labels = int(labels.max()) + 1
    make = desk_topology if desk_scale else full_topology
    topology = make(head="softmax", head_size=n_labels)
    return cnn_train(topology, dataset.x, dataset.y, rng, hyper)


def train_user_attack(
    dataset: AttackDataset,
    rng: np.random.Generator,
    hyper: TrainConfig = TrainConfig(),
    *,
    desk_scale: bool = True,
) -> CnnModel:
    """Binary CNN over 10-second observation segments (target present or not)."""

    if len(np.unique(dataset.y)) != 2:
        raise ValueError("user attack needs both classes present")
    make = desk_topology if desk_scale else full_topology
    topology = make(head="sigmoid", head_size=1)
    return cnn_train(topology, dataset.x, dataset.y, rng, hyper)


def eval_attack(model: CnnModel, dataset: AttackDataset, top_k: int = 1) -> float:
    """Fraction of windows whose true label is among the k highest scores."""

    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    scores = predict(model, dataset.x)
    if scores.ndim == 1:  # binary head: treat as two-class scores
        scores = np.stack([1 - scores, scores], axis=1)
    top = np.argsort(-scores, axis=1, kind="stable")[:, :top_k]
    return float(np.mean([y in row for y, row in zip(dataset.y, top)]))


def eval_binary(model: CnnModel, dataset: AttackDataset, threshold: float = 0.5) -> float:
    scores = predict(model, dataset.x)
    return float(np.mean((scores > threshold).astype(int) == dataset.y))


# -- dataset archive ---------------------------------------------------------
# Directory layout: manifest.json (list of {file, label, scheduler, scenario,
# seed, window_start_ns, window_end_ns, slots}) plus one CSV per observation
# with header slot_ms,bytes listing only non-zero slots.


def save_observations(
    directory: str,
    observations: list[DciObservation],
    metas: list[dict],
) -> None:
    os.makedirs(directory, exist_ok=True)
    manifest = []
    for i, (obs, meta) in enumerate(zip(observations, metas)):
        name = f"obs_{i:05d}.csv"
        with open(os.path.join(directory, name), "w", encoding="ascii", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot_ms", "bytes"])
            for slot in np.flatnonzero(obs.values):
                writer.writerow([int(slot), int(obs.values[slot])])
        entry = dict(meta)
        entry.update({
            "file": name,
            "window_start_ns": int(obs.start_time),
            "slots": int(len(obs.values)),
        })
        manifest.append(entry)
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_observations(directory: str) -> tuple[list[DciObservation], list[dict]]:
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    observations = []
    metas = []
    for entry in manifest:
        values = np.zeros(entry["slots"])
        with open(os.path.join(directory, entry["file"]), encoding="ascii") as fh:
            for row in csv.DictReader(fh):
                values[int(row["slot_ms"])] = float(row["bytes"])
        observations.append(
            DciObservation(entry["window_start_ns"], values, normalized=False)
        )
        metas.append({k: v for k, v in entry.items()
                      if k not in ("file", "window_start_ns", "slots")})
    return observations, metas
