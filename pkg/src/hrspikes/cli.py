"""Command-line orchestration: simulate | detect | tune | evaluate | infer.

Every command writes a ``manifest.json`` beside its outputs capturing the
command, configuration snapshot, seeds and paths; identical manifests
reproduce identical outputs. Set SOURCE_DATE_EPOCH to pin the manifest
timestamp for byte-identical reruns.

Exit codes: 0 success, 1 runtime data error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .detect import METHODS, DetectorConfig, detect_spikes, spikes_from_json, spikes_to_json
from .errors import HrSpikesError
from .evaluate import (
    ComparisonRow,
    comparison_to_csv,
    evaluate_config,
    grid_search_tune,
    run_comparison,
)
from .infer import (
    DEFAULT_BIN_EDGES,
    ActivityData,
    AthleteRecord,
    spike_hr_histogram,
    spike_removed_smoothed,
    spike_time_histogram,
    summarize_athlete,
    threshold_sweep,
)
from .series import read_activity_csv, write_activity_csv
from .simulate import SCENARIOS, ScenarioConfig, SimulatedActivity, batch_configs, simulate_activity

PRESETS = {
    # §-protocol sizes: 45 training series to tune on, 900 test series to compare on
    "training": {"count": 45, "seed": 101},
    "test": {"count": 900, "seed": 202},
}

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE = 2


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        dt = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        dt = datetime.now(tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    version: str = __version__

    def write(self, out_dir: Path) -> None:
        obj = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": sorted(self.inputs),
            "outputs": sorted(self.outputs),
            "version": self.version,
            "timestamp": _timestamp(),
        }
        (out_dir / "manifest.json").write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_json_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValueError("config file must hold a JSON object")
    return obj


def _scenario_template(overrides: dict) -> ScenarioConfig:
    from .simulate import PiecewiseRate, PotentialSurface

    kwargs = dict(overrides)
    if "potential" in kwargs:
        kwargs["potential"] = PotentialSurface(**kwargs["potential"])
    if "spike_rate" in kwargs:
        sr = kwargs["spike_rate"]
        kwargs["spike_rate"] = PiecewiseRate(
            edges_bpm=tuple(sr.get("edges_bpm", ())),
            rates_per_hour=tuple(sr["rates_per_hour"]),
        )
    return ScenarioConfig(**kwargs)


def _parallel_map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    import multiprocessing

    with multiprocessing.Pool(processes=jobs) as pool:
        return pool.map(fn, items)


# -- simulate ---------------------------------------------------------------


def _write_activity(args) -> tuple[str, str, str]:
    config, out_dir = args
    sim = simulate_activity(config)
    stem = f"activity_{config.seed:06d}"
    csv_path = Path(out_dir) / f"{stem}.csv"
    truth_path = Path(out_dir) / f"{stem}.truth.json"
    write_activity_csv(sim.series, csv_path)
    truth_path.write_text(spikes_to_json(sim.truth) + "\n")
    return stem, config.scenario, str(csv_path)


def cmd_simulate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    overrides = _load_json_config(args.config)
    count = args.count
    seed = args.seed
    if args.preset:
        count = count or PRESETS[args.preset]["count"]
        seed = seed if seed is not None else PRESETS[args.preset]["seed"]
    if not count:
        print("simulate: need --count or --preset", file=sys.stderr)
        return EXIT_USAGE
    seed = seed if seed is not None else 0
    template = _scenario_template(overrides)
    configs = batch_configs(count, seed, duration_s=template.duration_s, template=template)
    results = _parallel_map(_write_activity, [(c, str(out_dir)) for c in configs], args.jobs)
    manifest = RunManifest(
        command="simulate",
        config={
            "count": count,
            "preset": args.preset,
            "scenario_mix": list(SCENARIOS),
            "overrides": overrides,
            "activities": {stem: scen for stem, scen, _ in results},
        },
        seed=seed,
        outputs=[path for _, _, path in results],
    )
    manifest.write(out_dir)
    return EXIT_OK


# -- detect -----------------------------------------------------------------


def _detector_config(args, overrides: dict) -> DetectorConfig:
    merged = dict(overrides)
    merged["method"] = args.method
    return DetectorConfig.from_obj(merged)


def cmd_detect(args) -> int:
    if args.method not in METHODS:
        print(f"detect: unknown method {args.method!r}", file=sys.stderr)
        return EXIT_USAGE
    in_dir = Path(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        config = _detector_config(args, _load_json_config(args.config))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"detect: bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    csv_paths = sorted(in_dir.glob("*.csv"))
    if not csv_paths:
        print(f"detect: warning: no activity CSVs in {in_dir}", file=sys.stderr)
    errors = []
    outputs = []
    for path in csv_paths:
        try:
            series = read_activity_csv(path)
            spikes = detect_spikes(series, config)
        except HrSpikesError as exc:
            errors.append({"path": str(path), "error": str(exc)})
            continue
        out_path = out_dir / f"{path.stem}.spikes.json"
        out_path.write_text(spikes_to_json(spikes) + "\n")
        outputs.append(str(out_path))
    if errors:
        (out_dir / "errors.json").write_text(json.dumps(errors, indent=2) + "\n")
    manifest = RunManifest(
        command="detect",
        config=config.to_obj(),
        seed=args.seed,
        inputs=[str(p) for p in csv_paths],
        outputs=outputs,
    )
    manifest.write(out_dir)
    if errors:
        for err in errors:
            print(f"detect: {err['path']}: {err['error']}", file=sys.stderr)
        return EXIT_DATA_ERROR
    return EXIT_OK


# -- shared corpus loading ----------------------------------------------------


def _load_truth_corpus(truth_dir: Path) -> list[SimulatedActivity]:
    """Activities (CSV) with their truth spikes, as simulate wrote them."""
    manifest_path = truth_dir / "manifest.json"
    scenario_map = {}
    if manifest_path.exists():
        obj = json.loads(manifest_path.read_text())
        scenario_map = obj.get("config", {}).get("activities", {})
    activities = []
    for csv_path in sorted(truth_dir.glob("*.csv")):
        series = read_activity_csv(csv_path)
        truth_path = csv_path.with_suffix("").with_suffix(".truth.json")
        truth = tuple(spikes_from_json(truth_path.read_text())) if truth_path.exists() else ()
        scen = scenario_map.get(csv_path.stem, "unknown")
        config = ScenarioConfig(
            duration_s=max(series.duration_s, 300), scenario=scen if scen in SCENARIOS else "constant"
        )
        activities.append(SimulatedActivity(series=series, truth=truth, config=config))
    return activities


# -- evaluate -----------------------------------------------------------------


def cmd_evaluate(args) -> int:
    truth_dir = Path(args.truth)
    detected_dir = Path(args.detected)
    activities = _load_truth_corpus(truth_dir)
    if not activities:
        print(f"evaluate: no activities under {truth_dir}", file=sys.stderr)
        return EXIT_USAGE
    from .evaluate import EvalReport, score_activity

    scores = []
    for act_path in sorted(truth_dir.glob("*.csv")):
        spike_path = detected_dir / f"{act_path.stem}.spikes.json"
        if not spike_path.exists():
            print(f"evaluate: missing detections for {act_path.stem}", file=sys.stderr)
            return EXIT_USAGE
    for act, act_path in zip(activities, sorted(truth_dir.glob("*.csv"))):
        detected = spikes_from_json((detected_dir / f"{act_path.stem}.spikes.json").read_text())
        scores.append(
            score_activity(act.truth, detected, act.series.duration_s, act.config.scenario)
        )
    report = EvalReport(per_activity=tuple(scores))
    rows = [
        ComparisonRow(args.method, "all", report.mean_f1, report.mean_epsilon_star, len(scores))
    ]
    for scen, (f1, eps_star, n) in report.scenario_means().items():
        rows.append(ComparisonRow(args.method, scen, f1, eps_star, n))
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(comparison_to_csv(rows))
    manifest = RunManifest(
        command="evaluate",
        config={"method": args.method},
        seed=args.seed,
        inputs=[str(truth_dir), str(detected_dir)],
        outputs=[str(out_path)],
    )
    manifest.write(out_path.parent)
    return EXIT_OK


# -- tune ---------------------------------------------------------------------


def cmd_tune(args) -> int:
    training = _load_truth_corpus(Path(args.input))
    if not training:
        print(f"tune: no training activities under {args.input}", file=sys.stderr)
        return EXIT_USAGE
    methods = args.methods.split(",") if args.methods else list(METHODS)
    for m in methods:
        if m not in METHODS:
            print(f"tune: unknown method {m!r}", file=sys.stderr)
            return EXIT_USAGE
    result = grid_search_tune(methods, training)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(result.to_json() + "\n")
    manifest = RunManifest(
        command="tune",
        config={"methods": methods},
        seed=args.seed,
        inputs=[args.input],
        outputs=[str(out_path)],
    )
    manifest.write(out_path.parent)
    return EXIT_OK


# -- infer ---------------------------------------------------------------------


def _load_athlete_records(manifest_path: Path, config: DetectorConfig, spikes_dir: Path | None):
    entries = json.loads(manifest_path.read_text())
    records = []
    base = manifest_path.parent
    for entry in entries:
        activities = []
        for rel in entry["activities"]:
            csv_path = (base / rel) if not Path(rel).is_absolute() else Path(rel)
            series = read_activity_csv(csv_path)
            if spikes_dir is not None:
                spike_path = spikes_dir / f"{csv_path.stem}.spikes.json"
                spikes = tuple(spikes_from_json(spike_path.read_text()))
            else:
                spikes = tuple(detect_spikes(series, config))
            smoothed = spike_removed_smoothed(series, spikes, config.smoothing_width)
            activities.append(ActivityData(series=series, spikes=spikes, smoothed=smoothed))
        records.append(
            AthleteRecord(
                athlete_id=str(entry["athlete_id"]),
                activities=activities,
                survey_response=bool(entry["label"]),
                lthr=entry.get("lthr"),
            )
        )
    return records


def cmd_infer(args) -> int:
    manifest_path = Path(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        config = DetectorConfig.from_obj(_load_json_config(args.config))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"infer: bad config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        records = _load_athlete_records(
            manifest_path, config, Path(args.spikes) if args.spikes else None
        )
    except (KeyError, json.JSONDecodeError) as exc:
        print(f"infer: schema mismatch in {manifest_path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    summaries = [summarize_athlete(rec, DEFAULT_BIN_EDGES) for rec in records]
    lines = ["athlete_id,n_spikes,hours,lambda,irregular_ratio,D,p"]
    for s in summaries:
        lines.append(
            f"{s.athlete_id},{s.n_spikes},{s.hours!r},{s.lambda_hat!r},"
            f"{s.irregular_ratio!r},{s.lr_statistic!r},{s.p_value!r}"
        )
    (out_dir / "athlete_summaries.csv").write_text("\n".join(lines) + "\n")

    outputs = [str(out_dir / "athlete_summaries.csv")]
    labels = {rec.survey_response for rec in records}
    if len(labels) == 2:
        thresholds = list(range(0, 201, 5))
        sweep = threshold_sweep(records, thresholds)
        sweep_lines = ["h_thresh,r,p"]
        for pt in sweep:
            r_txt = "" if pt.r is None else repr(pt.r)
            p_txt = "" if pt.p_value is None else repr(pt.p_value)
            sweep_lines.append(f"{pt.h_thresh!r},{r_txt},{p_txt}")
        (out_dir / "threshold_sweep.csv").write_text("\n".join(sweep_lines) + "\n")
        outputs.append(str(out_dir / "threshold_sweep.csv"))

    edges, weights = spike_hr_histogram(records)
    hr_lines = ["hr_lo,hr_hi,weight"] + [
        f"{edges[i]!r},{edges[i + 1]!r},{weights[i]!r}" for i in range(len(weights))
    ]
    (out_dir / "spike_hr_histogram.csv").write_text("\n".join(hr_lines) + "\n")
    max_t = max((a.duration_s for r in records for a in r.activities), default=3600)
    edges, weights = spike_time_histogram(records, max_time_s=float(max_t))
    t_lines = ["t_lo_s,t_hi_s,weight"] + [
        f"{edges[i]!r},{edges[i + 1]!r},{weights[i]!r}" for i in range(len(weights))
    ]
    (out_dir / "spike_time_histogram.csv").write_text("\n".join(t_lines) + "\n")
    outputs += [str(out_dir / "spike_hr_histogram.csv"), str(out_dir / "spike_time_histogram.csv")]

    RunManifest(
        command="infer",
        config=config.to_obj(),
        seed=args.seed,
        inputs=[str(manifest_path)],
        outputs=outputs,
    ).write(out_dir)
    return EXIT_OK


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrspikes",
        description="Simulate, detect, score and analyse heart-rate spikes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="base random seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--config", default=None, help="JSON config file")

    p = sub.add_parser("simulate", help="generate a corpus of synthetic activities")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("detect", help="detect spikes in every activity CSV of a directory")
    common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", required=True)
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("tune", help="grid-search detector parameters on a training corpus")
    common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="tuning log JSON path")
    p.add_argument("--methods", default=None, help="comma list (default: all six)")
    p.set_defaults(fn=cmd_tune)

    p = sub.add_parser("evaluate", help="score detections against a truth corpus")
    common(p)
    p.add_argument("--truth", required=True, help="directory with CSVs + .truth.json")
    p.add_argument("--detected", required=True, help="directory with .spikes.json")
    p.add_argument("--method", default="unknown", help="method label for the CSV")
    p.add_argument("--out", required=True, help="comparison CSV path")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("infer", help="athlete-level statistics from a labeled corpus")
    common(p)
    p.add_argument("--manifest", required=True, help="athlete corpus manifest JSON")
    p.add_argument("--spikes", default=None, help="directory of precomputed .spikes.json")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_infer)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors already
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except HrSpikesError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA_ERROR
    except FileNotFoundError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
