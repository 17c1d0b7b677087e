"""Command line entry points.

    saflosim run            one simulation (scheduler/workload from the config)
    saflosim train-detector generate labeled runs and train both classifiers
    saflosim video-attack   Table-1/2-style sweep (accuracy per scheduler/window/k)
    saflosim user-attack    Table-3/4-style sweep (accuracy, detection delay)
    saflosim perf           Fig-7-style sweep (throughput/retransmissions/OOO/completion)
    saflosim report         summarize the results directory

Every verb takes --config (YAML, optional: defaults are desk scale) and
--seed (overrides the config seed).  Exit code 0 iff all runs succeeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__, harness
from .core import ns_to_seconds


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="YAML config path")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")


def cmd_run(cfg: harness.RunConfig) -> int:
    result = harness.run(cfg)
    metrics = result.metrics.as_dict()
    payload = {
        "experiment": "run",
        "scheduler": result.scheduler,
        "metrics": metrics,
        "detection_log_lines": len(result.log_lines),
        "detections": [
            {"time_s": ns_to_seconds(e.time), "tokens": sorted(e.tokens)}
            for e in result.detection_events
        ],
        "roles": result.roles,
    }
    path = harness.write_results(cfg, "run", payload)
    print(f"scheduler={result.scheduler} seed={cfg.seed}")
    for key, value in metrics.items():
        print(f"  {key}: {value}")
    print(f"results: {path}")
    return 0


def cmd_train_detector(cfg: harness.RunConfig) -> int:
    if not cfg.detector.primary_model:
        cfg.detector.primary_model = os.path.join(cfg.results_dir, "primary.cnn")
        cfg.detector.secondary_model = os.path.join(cfg.results_dir, "secondary.cnn")
    _primary, _secondary, metrics = harness.train_detector(cfg)
    path = harness.write_results(cfg, "detector", {"experiment": "train-detector",
                                                   "detector": metrics})
    print(f"primary accuracy:   {metrics['primary_accuracy']:.3f}")
    print(f"secondary accuracy: {metrics['secondary_accuracy']:.3f}")
    print(f"models: {cfg.detector.primary_model}, {cfg.detector.secondary_model}")
    print(f"results: {path}")
    return 0


def cmd_video_attack(cfg: harness.RunConfig) -> int:
    payload = harness.experiment_video(cfg)
    harness.write_results(cfg, "video_attack", payload)
    path = harness.write_csv(cfg, "video_attack", payload["rows"])
    for row in payload["rows"]:
        print(f"  {row['scheduler']:12s} window={row['window_s']:>5}s "
              f"top-{row['k']}: {row['accuracy']:.3f}")
    print(f"results: {path}")
    return 0


def cmd_user_attack(cfg: harness.RunConfig) -> int:
    models = None
    if cfg.detector.primary_model and os.path.exists(cfg.detector.primary_model):
        from .cnn import load_model

        models = (load_model(cfg.detector.primary_model),
                  load_model(cfg.detector.secondary_model))
    payload = harness.experiment_user(cfg, models)
    harness.write_results(cfg, "user_attack", payload)
    path = harness.write_csv(cfg, "user_attack", payload["rows"])
    for row in payload["rows"]:
        print(f"  {row['setting']:14s} accuracy: {row['accuracy']:.3f}")
    delay = payload["detection_delay_s"]
    if delay["mean"] is not None:
        print(f"  detection delay: mean {delay['mean']:.2f}s over "
              f"{delay['detected']}/{delay['launches']} launches")
    print(f"results: {path}")
    return 0


def cmd_perf(cfg: harness.RunConfig) -> int:
    payload = harness.experiment_perf(cfg)
    harness.write_results(cfg, "perf", payload)
    path = harness.write_csv(cfg, "perf", payload["rows"])
    for row in payload["rows"]:
        print(f"  {row['scheduler']:12s} thr={row['throughput_Bps'] / 1e6:6.2f} MB/s "
              f"retx={row['retransmissions']:5d} ooo={row['out_of_order']:6d} "
              f"web={row['web_completion_mean_s']:.2f}s")
    print(f"results: {path}")
    return 0


def cmd_report(cfg: harness.RunConfig) -> int:
    found = False
    for name in ("run", "detector", "video_attack", "user_attack", "perf"):
        path = os.path.join(cfg.results_dir, f"{name}.json")
        if not os.path.exists(path):
            continue
        found = True
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        print(f"== {name} (seed {doc.get('seed')}, tool {doc.get('tool_version')})")
        for row in doc.get("rows", []):
            print("  " + ", ".join(f"{k}={v}" for k, v in row.items()))
        if "detector" in doc and doc["detector"]:
            print(f"  detector: {doc['detector']}")
        if "detection_delay_s" in doc:
            d = doc["detection_delay_s"]
            print(f"  detection delay: mean={d.get('mean')} "
                  f"({d.get('detected')}/{d.get('launches')} detected)")
        if "metrics" in doc:
            print(f"  metrics: {doc['metrics']}")
    if not found:
        print(f"no results documents under {cfg.results_dir}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "run": cmd_run,
    "train-detector": cmd_train_detector,
    "video-attack": cmd_video_attack,
    "user-attack": cmd_user_attack,
    "perf": cmd_perf,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="saflosim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"saflosim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common(sub.add_parser(name))
    args = parser.parse_args(argv)
    try:
        cfg = harness.load_config(args.config, args.seed)
    except (harness.ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
