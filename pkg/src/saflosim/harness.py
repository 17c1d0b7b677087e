"""Experiment orchestration: configs, single runs, and the three experiment suites.

A RunConfig (loadable from YAML) wires workloads, a scheduler, the subflow
manager, the detector and the observation model into one deterministic
simulation; the experiment functions sweep schedulers/scenarios at desk scale
and emit one JSON results document per experiment plus flat CSV tables.  A
single top-level seed fixes every reported number: all randomness is drawn
from (seed, scope) streams, and aggregation orders are sorted.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import __version__, adversary, workloads
from .cnn import CnnModel, TrainConfig, cnn_train, desk_topology, full_topology, load_model, predict
from .core import (
    CELLULAR,
    NS_PER_S,
    WIFI,
    ControlMap,
    DetectionLog,
    DetectionMap,
    SharedReport,
    Token,
    make_rng,
    seconds_to_ns,
)
from .detector import AttackDetector, DetectorConfig, slice_training_windows
from .manager import ManagerConfig, SubflowManager
from .netsim import DETECTOR, MANAGER, PathModel, PerfMetrics, Simulation
from .schedulers import DEFAULT_BURST_CAP, SCHEDULER_NAMES, make_scheduler

RESULTS_SCHEMA_VERSION = 1

MULTIPATH_SCHEDULERS = ("saflo", "blest", "rd")

USER_SETTINGS = ("saflo-after", "saflo-before", "blest", "rd", "single-cell")


# -- configuration -----------------------------------------------------------


@dataclass
class PathConfig:
    one_way_delay_s: float
    bandwidth_Bps: float
    loss_rate: float = 0.001
    mtu: int = 1448

    def to_model(self, name: str) -> PathModel:
        return PathModel(name, self.one_way_delay_s, self.bandwidth_Bps,
                         self.loss_rate, self.mtu)


def default_paths_config() -> dict[str, PathConfig]:
    # Chosen to reproduce the "WiFi best, cellular worst" ordering, not to
    # match any measured network.
    return {
        CELLULAR: PathConfig(0.030, 5e6),
        WIFI: PathConfig(0.003, 30e6),
    }


@dataclass
class ConnectionConfig:
    cwnd_bytes: int = 64 * 1024
    recv_window_bytes: int = 128 * 1024
    burst_cap_bytes: int = DEFAULT_BURST_CAP
    ack_delay_s: float = 0.002
    rto_floor_s: float = 0.200


@dataclass
class TrainSettings:
    epochs: int = 15
    learning_rate: float = 0.001
    batch_size: int = 32
    optimizer: str = "adam"

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.learning_rate, self.batch_size,
                           self.optimizer)


@dataclass
class DetectorSettings:
    enabled: bool = False
    interval_s: float = 5.0
    threshold: float = 0.5
    desk_scale: bool = True
    primary_model: str = ""
    secondary_model: str = ""
    scenario_reps: int = 4  # labeled runs per scenario when training
    coverage_threshold: float = 0.7  # attack fraction of a window to label it positive
    augment_shifts: int = 2  # circular-shift copies per training window
    train: TrainSettings = field(default_factory=TrainSettings)

    def to_config(self) -> DetectorConfig:
        return DetectorConfig(interval=self.interval_s, threshold=self.threshold,
                              desk_scale=self.desk_scale,
                              epochs=self.train.epochs,
                              learning_rate=self.train.learning_rate,
                              batch_size=self.train.batch_size)


@dataclass
class VideoExperimentConfig:
    n_videos: int = 10
    plays: int = 10
    windows_s: tuple[float, ...] = (60.0,)
    schedulers: tuple[str, ...] = ("single-cell", "blest", "rd", "saflo")
    input_bins: int = 1000


@dataclass
class UserExperimentConfig:
    reps: int = 10
    duration_s: float = 60.0
    segment_s: float = 10.0
    detection_launches: int = 20
    settings: tuple[str, ...] = USER_SETTINGS
    input_bins: int = 1000


@dataclass
class PerfExperimentConfig:
    saturated_s: float = 60.0
    web_accesses: int = 20
    schedulers: tuple[str, ...] = ("single-wifi", "single-cell", "blest", "rd", "saflo")


@dataclass
class RunConfig:
    seed: int = 0
    scheduler: str = "saflo"
    duration_s: float = 60.0
    scenario: Optional[int] = None  # 1..7; None = use `workload`
    workload: str = "video"  # used when scenario is None
    video_id: int = 0
    paths: dict[str, PathConfig] = field(default_factory=default_paths_config)
    connection: ConnectionConfig = field(default_factory=ConnectionConfig)
    manager: ManagerConfig = field(default_factory=ManagerConfig)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    video: VideoExperimentConfig = field(default_factory=VideoExperimentConfig)
    user: UserExperimentConfig = field(default_factory=UserExperimentConfig)
    perf: PerfExperimentConfig = field(default_factory=PerfExperimentConfig)
    results_dir: str = "results"
    export_observations: bool = False
    trace_csv: Optional[str] = None
    detection_log: Optional[str] = None

    def validate(self) -> None:
        if self.scheduler not in SCHEDULER_NAMES:
            raise ConfigError(f"scheduler: unknown name {self.scheduler!r}")
        if self.duration_s <= 0:
            raise ConfigError("duration_s: must be > 0")
        if self.scenario is not None and self.scenario not in range(1, 8):
            raise ConfigError("scenario: must be in 1..7")
        for name in (CELLULAR, WIFI):
            if name not in self.paths:
                raise ConfigError(f"paths.{name}: missing")
        for setting in self.user.settings:
            if setting not in USER_SETTINGS:
                raise ConfigError(f"user.settings: unknown setting {setting!r}")
        for sched in tuple(self.video.schedulers) + tuple(self.perf.schedulers):
            if sched not in SCHEDULER_NAMES:
                raise ConfigError(f"unknown scheduler {sched!r} in experiment sweep")


class ConfigError(ValueError):
    pass


def _build_dataclass(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or cls.__name__}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{path + '.' if path else ''}{key}: unknown field")
        kwargs[key] = _coerce(known[key], value, f"{path + '.' if path else ''}{key}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}") from exc


def _coerce(field_def, value, path):
    name = field_def.name
    if name == "paths":
        return {
            key: _build_dataclass(PathConfig, val, f"{path}.{key}")
            for key, val in value.items()
        }
    nested = {
        "connection": ConnectionConfig,
        "manager": ManagerConfig,
        "detector": DetectorSettings,
        "train": TrainSettings,
        "video": VideoExperimentConfig,
        "user": UserExperimentConfig,
        "perf": PerfExperimentConfig,
    }
    if name in nested:
        return _build_dataclass(nested[name], value, path)
    if isinstance(value, list):
        return tuple(value)
    return value


def config_from_dict(data: dict) -> RunConfig:
    cfg = _build_dataclass(RunConfig, data or {}, "")
    cfg.validate()
    return cfg


def load_config(path: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    data = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    cfg = config_from_dict(data)
    if seed is not None:
        cfg.seed = seed
    return cfg


def config_echo(cfg: RunConfig) -> dict:
    def unfold(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: unfold(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, dict):
            return {k: unfold(v) for k, v in obj.items()}
        if isinstance(obj, tuple):
            return list(obj)
        return obj

    return unfold(cfg)


# -- single runs -------------------------------------------------------------


@dataclass
class RunResult:
    seed: int
    scheduler: str
    duration_ns: int
    metrics: PerfMetrics
    log_lines: list[str]
    send_log: list[tuple[int, int, Token]]
    detection_events: list
    roles: dict[str, Token]  # workload role -> token


def _workload_events(spec: workloads.WorkloadSpec) -> dict[str, object]:
    """Role -> event list (or 'saturated' marker) for one workload spec."""

    start = float(spec.params.get("start_s", 0.0))

    def shift(events):
        return [(t + start, b) for t, b in events]

    if spec.kind == workloads.ATTACKER:
        file_events, signal_events = workloads.gen_attacker(spec.duration - start)
        return {"attacker-file": shift(file_events), "attacker-signal": shift(signal_events)}
    if spec.kind == workloads.VIDEO:
        signature = spec.params.get("signature")
        if signature is None:
            library = workloads.make_video_library(
                int(spec.params.get("n_videos", 1)), spec.seed, spec.duration)
            signature = library[int(spec.params.get("video_id", 0))]
        return {"video": shift(workloads.gen_video(signature, spec.duration - start))}
    if spec.kind == workloads.SATURATED:
        return {"saturated": "saturated"}
    return {spec.kind: shift(
        workloads.gen_background(spec.kind, spec.params, spec.duration - start, spec.seed))}


def run_single(
    cfg: RunConfig,
    *,
    seed: int,
    scheduler_name: str,
    duration_s: float,
    specs: list[workloads.WorkloadSpec],
    attack_detector: Optional[AttackDetector] = None,
    observe: bool = True,
    collect_trace: bool = False,
    log_path: Optional[str] = None,
) -> RunResult:
    """One deterministic simulation wiring workloads, scheduler, manager, detector."""

    cmap, dmap, report = ControlMap(), DetectionMap(), SharedReport()
    log = DetectionLog(log_path)
    conn_cfg = cfg.connection
    scheduler = make_scheduler(
        scheduler_name, cmap=cmap, dmap=dmap,
        rng=make_rng(seed, "rd-scheduler"), burst_cap=conn_cfg.burst_cap_bytes,
    )
    paths = {name: p.to_model(name) for name, p in cfg.paths.items()}
    sim = Simulation(
        paths, scheduler, make_rng(seed, "netsim"),
        duration_s=duration_s,
        cwnd=conn_cfg.cwnd_bytes,
        recv_window=conn_cfg.recv_window_bytes,
        ack_delay_s=conn_cfg.ack_delay_s,
        rto_floor_s=conn_cfg.rto_floor_s,
        observe_path=CELLULAR if observe else None,
        collect_trace=collect_trace,
    )
    if scheduler_name == "single-cell":
        conn_paths = [CELLULAR]
    elif scheduler_name == "single-wifi":
        conn_paths = [WIFI]
    else:
        conn_paths = [WIFI, CELLULAR]  # initial subflow (0,0) rides WiFi

    roles: dict[str, Token] = {}
    duration_ns = seconds_to_ns(duration_s)
    for spec in specs:
        for role, events in _workload_events(spec).items():
            token = sim.add_connection(conn_paths)
            roles[role] = token
            if events == "saturated":
                start = seconds_to_ns(float(spec.params.get("start_s", 0.0)))
                sim.set_saturated(token, duration_ns)
                if start:
                    raise ConfigError("saturated workloads cannot be offset")
            else:
                for t_s, nbytes in events:
                    sim.submit_at(seconds_to_ns(t_s), token, nbytes)

    if scheduler_name == "saflo":
        mgr = SubflowManager(cfg.manager, make_rng(seed, "manager"), log)
        sim.schedule_callback(
            seconds_to_ns(cfg.manager.interval), MANAGER,
            lambda now: mgr.tick(now, cmap, dmap, report, sim.live_tokens),
        )
        if attack_detector is not None:
            sim.schedule_callback(
                seconds_to_ns(attack_detector.cfg.interval), DETECTOR,
                lambda now: attack_detector.tick(now, log, report),
            )
    sim.run()
    log.close()
    if collect_trace and cfg.trace_csv:
        sim.write_trace_csv(cfg.trace_csv)
    return RunResult(
        seed=seed,
        scheduler=scheduler_name,
        duration_ns=duration_ns,
        metrics=sim.metrics(),
        log_lines=log.lines,
        send_log=sim.send_log,
        detection_events=list(attack_detector.events) if attack_detector else [],
        roles=roles,
    )


def run(cfg: RunConfig) -> RunResult:
    """The `run` verb: one simulation per the config's scheduler and workload."""

    if cfg.scenario is not None:
        specs = workloads.compose_scenario(cfg.scenario, cfg.duration_s, seed=cfg.seed)
    else:
        params = {"video_id": cfg.video_id, "n_videos": max(1, cfg.video_id + 1)}
        specs = [workloads.WorkloadSpec(cfg.workload, cfg.duration_s, seed=cfg.seed,
                                        params=params)]
    attack_detector = None
    if cfg.detector.enabled and cfg.scheduler == "saflo":
        primary = load_model(cfg.detector.primary_model)
        secondary = load_model(cfg.detector.secondary_model)
        attack_detector = AttackDetector(primary, secondary, cfg.detector.to_config())
    return run_single(
        cfg, seed=cfg.seed, scheduler_name=cfg.scheduler, duration_s=cfg.duration_s,
        specs=specs, attack_detector=attack_detector,
        collect_trace=cfg.trace_csv is not None, log_path=cfg.detection_log,
    )


# -- detector training -------------------------------------------------------


def train_detector(cfg: RunConfig) -> tuple[CnnModel, CnnModel, dict]:
    """Generates labeled saflo runs, trains both classifiers, reports held-out accuracy.

    Primary: the attacker's file socket vs everything else; secondary: the
    signal socket vs everything else.  Traces come from the detection log
    (proxy-side bursts), so they carry no cellular occlusion.
    """

    seed = cfg.seed
    reps = cfg.detector.scenario_reps
    duration = cfg.user.duration_s
    per_class: dict[str, list] = {"file": [], "signal": [], "other": []}
    gid = 0
    for scenario in range(1, 8):
        for rep in range(reps):
            run_seed = _derive(seed, "detector-data", scenario, rep)
            specs = workloads.compose_scenario(scenario, duration, seed=run_seed)
            rr = run_single(cfg, seed=run_seed, scheduler_name="saflo",
                            duration_s=duration, specs=specs, observe=False)
            token_roles = {tok: role for role, tok in rr.roles.items()}
            windows = slice_training_windows(rr.log_lines, rr.duration_ns)
            for token, traces in sorted(windows.items()):
                role = token_roles.get(token, "")
                bucket = {"attacker-file": "file", "attacker-signal": "signal"}.get(
                    role, "other")
                for trace in traces:
                    per_class[bucket].append((trace.values, gid))
            gid += 1

    det_train_rng = make_rng(seed, "detector-train")
    hyper = cfg.detector.train.to_train_config()
    topology = desk_topology() if cfg.detector.desk_scale else full_topology()
    results = {}
    models = {}
    for which in ("primary", "secondary"):
        positive = per_class["file"] if which == "primary" else per_class["signal"]
        negative = per_class["signal"] if which == "primary" else per_class["file"]
        negative = negative + per_class["other"]
        x = np.array([v for v, _g in positive] + [v for v, _g in negative])
        y = np.array([1] * len(positive) + [0] * len(negative))
        groups = np.array([g for _v, g in positive] +
                          [g + 10_000 for _v, g in negative])
        dataset = adversary.AttackDataset(x, y, groups)
        train_ds, test_ds = dataset.split(make_rng(seed, "detector-split", which))
        model = cnn_train(topology, train_ds.x, train_ds.y, det_train_rng, hyper)
        scores = predict(model, test_ds.x)
        acc = float(np.mean((scores > cfg.detector.threshold).astype(int) == test_ds.y))
        results[f"{which}_accuracy"] = acc
        results[f"{which}_test_windows"] = len(test_ds)
        models[which] = model
    results["training_windows"] = {k: len(v) for k, v in per_class.items()}
    if cfg.detector.primary_model:
        os.makedirs(os.path.dirname(cfg.detector.primary_model) or ".", exist_ok=True)
        models["primary"].save(cfg.detector.primary_model)
        models["secondary"].save(cfg.detector.secondary_model)
    return models["primary"], models["secondary"], results


def _derive(seed: int, *scope) -> int:
    """Stable per-run seed from the experiment seed and a scope path."""

    return int(make_rng(seed, *scope).integers(0, 2**63 - 1))


# -- experiments -------------------------------------------------------------


def experiment_video(cfg: RunConfig) -> dict:
    """Video identification accuracy per (scheduler, window, top-k)."""

    vcfg = cfg.video
    seed = cfg.seed
    duration = max(vcfg.windows_s)
    library = workloads.make_video_library(vcfg.n_videos, _derive(seed, "video-library"),
                                           duration)
    rows = []
    for sched in vcfg.schedulers:
        samples = []  # (window_s, x, label, group)
        exports: tuple[list, list] = ([], [])
        for vid in range(vcfg.n_videos):
            for play in range(vcfg.plays):
                run_seed = _derive(seed, "video-run", sched, vid, play)
                spec = workloads.WorkloadSpec(
                    workloads.VIDEO, duration, seed=run_seed,
                    params={"signature": library[vid]},
                )
                rr = run_single(cfg, seed=run_seed, scheduler_name=sched,
                                duration_s=duration, specs=[spec])
                for window_s in vcfg.windows_s:
                    obs = adversary.observe(rr.send_log, (0, seconds_to_ns(window_s)),
                                            rr.duration_ns)
                    x = adversary.rebin(obs.values, vcfg.input_bins)
                    samples.append((window_s, x, vid, vid * vcfg.plays + play))
                if cfg.export_observations:
                    raw = adversary.observe(rr.send_log, (0, rr.duration_ns),
                                            rr.duration_ns, normalize=False)
                    exports[0].append(raw)
                    exports[1].append({"label": vid, "scheduler": sched,
                                       "scenario": "video", "seed": run_seed,
                                       "window_s": duration})
        if cfg.export_observations:
            adversary.save_observations(
                os.path.join(cfg.results_dir, f"observations-{sched}"),
                exports[0], exports[1])
        for window_s in vcfg.windows_s:
            sub = [(x, y, g) for w, x, y, g in samples if w == window_s]
            dataset = adversary.AttackDataset(
                np.array([s[0] for s in sub]),
                np.array([s[1] for s in sub]),
                np.array([s[2] for s in sub]),
            )
            train_ds, test_ds = dataset.split(make_rng(seed, "video-split", sched, window_s))
            model = adversary.train_video_attack(
                train_ds, make_rng(seed, "video-train", sched, window_s),
                cfg.detector.train.to_train_config(), desk_scale=cfg.detector.desk_scale,
            )
            for k in (1, 2, 3):
                rows.append({
                    "scheduler": sched,
                    "window_s": window_s,
                    "k": k,
                    "accuracy": adversary.eval_attack(model, test_ds, k),
                    "test_windows": len(test_ds),
                })
    return {"experiment": "video-attack", "rows": rows}


def _user_segments(cfg: RunConfig, rr: RunResult, label: int, group: int):
    """Non-overlapping 10 s observation segments from one scenario run."""

    ucfg = cfg.user
    seg_ns = seconds_to_ns(ucfg.segment_s)
    out = []
    start = 0
    while start + seg_ns <= rr.duration_ns:
        obs = adversary.observe(rr.send_log, (start, start + seg_ns), rr.duration_ns)
        out.append((adversary.rebin(obs.values, ucfg.input_bins), label, group))
        start += seg_ns
    return out


def experiment_user(
    cfg: RunConfig,
    models: Optional[tuple[CnnModel, CnnModel]] = None,
) -> dict:
    """User identification accuracy per scheduler setting, plus detector metrics."""

    seed = cfg.seed
    ucfg = cfg.user
    if models is None:
        primary, secondary, detector_metrics = train_detector(cfg)
    else:
        primary, secondary = models
        detector_metrics = {}
    rows = []
    for setting in ucfg.settings:
        sched = "saflo" if setting.startswith("saflo") else setting
        with_detector = setting == "saflo-after"
        samples = []
        gid = 0
        for scenario in range(8):  # 0 = idle negative
            for rep in range(ucfg.reps):
                run_seed = _derive(seed, "user-run", setting, scenario, rep)
                specs = ([] if scenario == 0 else
                         workloads.compose_scenario(scenario, ucfg.duration_s,
                                                    seed=run_seed))
                att = (AttackDetector(primary, secondary, cfg.detector.to_config())
                       if with_detector else None)
                rr = run_single(cfg, seed=run_seed, scheduler_name=sched,
                                duration_s=ucfg.duration_s, specs=specs,
                                attack_detector=att)
                label = int(scenario in (1, 3, 5, 7))
                samples.extend(_user_segments(cfg, rr, label, gid))
                gid += 1
        dataset = adversary.AttackDataset(
            np.array([s[0] for s in samples]),
            np.array([s[1] for s in samples]),
            np.array([s[2] for s in samples]),
        )
        train_ds, test_ds = dataset.split(make_rng(seed, "user-split", setting))
        model = adversary.train_user_attack(
            train_ds, make_rng(seed, "user-train", setting),
            cfg.detector.train.to_train_config(), desk_scale=cfg.detector.desk_scale,
        )
        rows.append({
            "setting": setting,
            "accuracy": adversary.eval_binary(model, test_ds),
            "test_segments": len(test_ds),
        })

    delays = _detection_delays(cfg, primary, secondary)
    payload = {
        "experiment": "user-attack",
        "rows": rows,
        "detector": detector_metrics,
        "detection_delay_s": delays,
    }
    return payload


def _detection_delays(cfg: RunConfig, primary: CnnModel, secondary: CnnModel) -> dict:
    """Attack launches at jittered offsets; delay = first flag time - launch time."""

    seed = cfg.seed
    delays = []
    misses = 0
    for launch in range(cfg.user.detection_launches):
        run_seed = _derive(seed, "delay-run", launch)
        t0 = 5.0 + float(make_rng(seed, "delay-offset", launch).uniform(0.0, 5.0))
        duration = t0 + 30.0
        spec = workloads.WorkloadSpec(workloads.ATTACKER, duration, seed=run_seed,
                                      params={"start_s": t0})
        att = AttackDetector(primary, secondary, cfg.detector.to_config())
        rr = run_single(cfg, seed=run_seed, scheduler_name="saflo",
                        duration_s=duration, specs=[spec], attack_detector=att,
                        observe=False)
        file_token = rr.roles.get("attacker-file")
        flagged_at = None
        for event in rr.detection_events:
            if file_token in event.tokens or rr.roles.get("attacker-signal") in event.tokens:
                flagged_at = event.time
                break
        if flagged_at is None:
            misses += 1
        else:
            delays.append(flagged_at / NS_PER_S - t0)
    return {
        "launches": cfg.user.detection_launches,
        "detected": len(delays),
        "missed": misses,
        "mean": float(np.mean(delays)) if delays else None,
        "min": float(np.min(delays)) if delays else None,
        "max": float(np.max(delays)) if delays else None,
        "samples": delays,
    }


def experiment_perf(cfg: RunConfig) -> dict:
    """Saturated-flow metrics and web-page completion per scheduler."""

    seed = cfg.seed
    pcfg = cfg.perf
    rows = []
    for sched in pcfg.schedulers:
        sat_seed = _derive(seed, "perf-saturated", sched)
        sat = run_single(
            cfg, seed=sat_seed, scheduler_name=sched, duration_s=pcfg.saturated_s,
            specs=[workloads.WorkloadSpec(workloads.SATURATED, pcfg.saturated_s,
                                          seed=sat_seed)],
            observe=False,
        )
        completions = []
        for access in range(pcfg.web_accesses):
            web_seed = _derive(seed, "perf-web", sched, access)
            web = run_single(
                cfg, seed=web_seed, scheduler_name=sched, duration_s=30.0,
                specs=[workloads.WorkloadSpec(workloads.WEB, 30.0, seed=web_seed)],
                observe=False,
            )
            completions.append(web.metrics.completion_time)
        rows.append({
            "scheduler": sched,
            "throughput_Bps": sat.metrics.throughput,
            "retransmissions": sat.metrics.retransmissions,
            "out_of_order": sat.metrics.out_of_order,
            "web_completion_mean_s": float(np.mean(completions)),
            "web_completion_max_s": float(np.max(completions)),
            "web_accesses": pcfg.web_accesses,
        })
    return {"experiment": "perf", "rows": rows}


# -- results emission --------------------------------------------------------


def write_results(cfg: RunConfig, name: str, payload: dict) -> str:
    os.makedirs(cfg.results_dir, exist_ok=True)
    document = {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "tool_version": __version__,
        "seed": cfg.seed,
        "generated_unix": int(time.time()),
        "config": config_echo(cfg),
    }
    document.update(payload)
    path = os.path.join(cfg.results_dir, f"{name}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def results_document(cfg: RunConfig, payload: dict) -> str:
    """Deterministic serialization (no timestamp), for bitwise comparisons."""

    document = {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "tool_version": __version__,
        "seed": cfg.seed,
        "config": config_echo(cfg),
    }
    document.update(payload)
    return json.dumps(document, indent=1, sort_keys=True)


def write_csv(cfg: RunConfig, name: str, rows: list[dict]) -> str:
    os.makedirs(cfg.results_dir, exist_ok=True)
    path = os.path.join(cfg.results_dir, f"{name}.csv")
    if rows:
        with open(path, "w", encoding="ascii", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return path
