"""Command-line entry point.

Subcommands: gen, sim, compare, sweep, dataset, fit, recommend,
attribute.  Every command takes --config/--seed/--out/--jobs/--quiet,
writes its outputs plus a manifest.json (command, resolved config,
seed, version, output digests, wall time) into --out, and exits 0 on
success, 2 on config/validation problems, 1 on runtime faults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    DATASET_HEADER,
    FEATURE_NAMES,
    LABELS_HEADER,
    SWEEP_PARAMETERS,
    compare_strategies,
    generate_training_dataset,
    sensitivity_sweep,
    write_csv,
)
from .simulate import (
    performance_series,
    run_simulation,
    write_summary_json,
    write_trajectory_csv,
)
from .strategy import STRATEGY_MODES
from .surrogate import (
    DEFAULT_GRID,
    SurrogateData,
    TreeEnsembleModel,
    feature_importance,
    fit_surrogate,
    recommend_profit_weight,
    shapley_attribution,
)
from .worldgen import ScenarioSpec, ValidationError, generate_world

SECTION_DEFAULTS = {
    "sim": {"T": None},  # None -> scenario T
    "compare": {
        "n_runs": 50,
        "T": None,
        "modes": list(STRATEGY_MODES),
        "redundancy_exponent": 2.0,
    },
    "sweep": {
        "parameter": "beta",
        "grid": [],
        "n_runs": 20,
        "zeta": 6,
        "panel": 1,
        "w1_grid": 11,
        "T_eval": 120,
    },
    "dataset": {"n_sims": 50, "configs_per_sim": 10, "zeta": 6, "panel": 1, "T_eval": 120},
    "fit": {
        "dataset_csv": "dataset.csv",
        "labels_csv": "labels.csv",
        "k": 5,
        "rec_resolution": 101,
        "grid": [dict(g) for g in DEFAULT_GRID],
    },
    "attribute": {"n_permutations": 500},
    "recommend": {"resolution": 101},
}

KNOWN_SECTIONS = {"scenario"} | set(SECTION_DEFAULTS)


def parse_config(path: str) -> dict:
    """Strict parse of the JSON config document into validated sections."""
    p = Path(path)
    if not p.exists():
        raise ValidationError([f"config file not found: {path}"])
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ValidationError([f"config {path} is not valid JSON: {err}"]) from err
    if not isinstance(raw, dict):
        raise ValidationError([f"config {path} must be a JSON object"])

    errors = []
    for key in sorted(set(raw) - KNOWN_SECTIONS):
        errors.append(f"unknown section: {key}")

    sections: dict = {}
    if "scenario" in raw:
        try:
            sections["scenario"] = ScenarioSpec.from_dict(raw["scenario"])
        except ValidationError as err:
            errors.extend(f"scenario.{m}" for m in err.messages)
    for name, defaults in SECTION_DEFAULTS.items():
        merged = dict(defaults)
        if name in raw:
            if not isinstance(raw[name], dict):
                errors.append(f"{name}: expected an object")
                continue
            for key, value in raw[name].items():
                if key not in defaults:
                    errors.append(f"{name}.{key}: unknown field")
                else:
                    merged[key] = value
        sections[name] = merged
    if errors:
        raise ValidationError(errors)
    return sections


def _require_scenario(sections: dict) -> ScenarioSpec:
    if "scenario" not in sections:
        raise ValidationError(["config is missing the scenario section"])
    return sections["scenario"]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, config: dict, seed: int, started: float) -> None:
    outputs = {
        p.name: _sha256(p)
        for p in sorted(out_dir.iterdir())
        if p.is_file() and p.name != "manifest.json"
    }
    doc = {
        "command": command,
        "config": config,
        "seed": seed,
        "tool_version": __version__,
        "outputs": outputs,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message, file=sys.stderr)


def _resolved(sections: dict) -> dict:
    out = {}
    for name, value in sections.items():
        out[name] = value.to_dict() if isinstance(value, ScenarioSpec) else value
    return out


# -- command implementations -------------------------------------------------


def cmd_gen(sections, seed, out_dir, jobs, quiet):
    spec = _require_scenario(sections)
    world = generate_world(spec, seed)
    (out_dir / "world.json").write_text(world.to_json() + "\n", encoding="utf-8")
    _say(quiet, f"gen: {len(world.firms)} firms, {len(world.consumers)} consumers, "
                f"{len(world.links)} candidate links -> {out_dir / 'world.json'}")


def cmd_sim(sections, seed, out_dir, jobs, quiet):
    spec = _require_scenario(sections)
    T = sections["sim"]["T"] or spec.T
    world = generate_world(spec, seed)
    result = run_simulation(world, T, seed)
    paired = run_simulation(world, T, seed, null_pandemic=True)
    write_trajectory_csv(result, out_dir / "trajectory.csv")
    write_trajectory_csv(paired, out_dir / "baseline_trajectory.csv")
    write_summary_json(result, out_dir / "summary.json")
    perf = performance_series(result, paired)
    write_csv(
        out_dir / "performance.csv",
        ["t", "performance"],
        [(t, float(perf[t])) for t in range(T + 1)],
    )
    _say(quiet, f"sim: T={T}, mean final performance {perf[-1]:.4f}")


def cmd_compare(sections, seed, out_dir, jobs, quiet):
    spec = _require_scenario(sections)
    cfg = sections["compare"]
    T = cfg["T"] or spec.T
    agg, raw, _ = compare_strategies(
        spec,
        cfg["modes"],
        int(cfg["n_runs"]),
        T,
        seed,
        jobs=jobs,
        redundancy_exponent=float(cfg["redundancy_exponent"]),
    )
    write_csv(out_dir / "strategy_timeseries.csv", ["t", "strategy", "mean_perf", "std_perf", "n"], agg)
    write_csv(out_dir / "strategy_runs.csv", ["run", "strategy", "t", "perf"], raw)
    _say(quiet, f"compare: {cfg['n_runs']} paired runs x {len(cfg['modes'])} modes, T={T}")


def cmd_sweep(sections, seed, out_dir, jobs, quiet, param_override=None):
    spec = _require_scenario(sections)
    cfg = sections["sweep"]
    parameter = param_override or cfg["parameter"]
    grid = cfg["grid"]
    if not grid:
        raise ValidationError(["sweep.grid must list at least one value"])
    agg, raw = sensitivity_sweep(
        spec,
        parameter,
        grid,
        int(cfg["n_runs"]),
        seed,
        jobs=jobs,
        zeta=int(cfg["zeta"]),
        panel=int(cfg["panel"]),
        w1_grid=int(cfg["w1_grid"]),
        T_eval=int(cfg["T_eval"]),
    )
    write_csv(out_dir / "sensitivity.csv", ["param", "value", "mean_w1", "std_w1", "n"], agg)
    write_csv(out_dir / "sensitivity_runs.csv", ["param", "value", "run", "mean_w1"], raw)
    _say(quiet, f"sweep: {parameter} over {len(grid)} values x {cfg['n_runs']} runs")


def cmd_dataset(sections, seed, out_dir, jobs, quiet):
    spec = _require_scenario(sections)
    cfg = sections["dataset"]
    rows, labels = generate_training_dataset(
        spec,
        int(cfg["n_sims"]),
        int(cfg["configs_per_sim"]),
        seed,
        jobs=jobs,
        zeta=int(cfg["zeta"]),
        panel=int(cfg["panel"]),
        T_eval=int(cfg["T_eval"]),
    )
    write_csv(out_dir / "dataset.csv", DATASET_HEADER, rows)
    write_csv(out_dir / "labels.csv", LABELS_HEADER, labels)
    _say(quiet, f"dataset: {len(rows)} rows, {len(labels)} labels")


def _read_csv_rows(path: Path) -> list[list[str]]:
    import csv as _csv

    if not path.exists():
        raise ValidationError([f"input file not found: {path}"])
    with open(path, encoding="utf-8", newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        return [row for row in reader] if header else []


def cmd_fit(sections, seed, out_dir, jobs, quiet):
    cfg = sections["fit"]
    dataset_rows = _read_csv_rows(Path(cfg["dataset_csv"]))
    label_rows = _read_csv_rows(Path(cfg["labels_csv"]))
    data = SurrogateData.from_rows(dataset_rows, label_rows, FEATURE_NAMES)
    grid = [dict(g) for g in cfg["grid"]]
    model, report = fit_surrogate(
        data, grid=grid, k=int(cfg["k"]), seed=seed, rec_resolution=int(cfg["rec_resolution"])
    )
    model.save(out_dir / "model.json")
    fold_rows = []
    for fold in report.per_fold:
        fold_rows.append(
            (
                fold["fold"],
                fold["score_mae"],
                fold["score_r2"],
                fold.get("rec_mae", float("nan")),
                fold.get("rec_r2", float("nan")),
                fold["n_rows"],
                fold.get("n_groups", 0),
            )
        )
    fold_rows.append(
        (
            "mean",
            report.aggregate("score_mae"),
            report.aggregate("score_r2"),
            float(np.mean([f["rec_mae"] for f in report.per_fold if "rec_mae" in f] or [np.nan])),
            float(np.mean([f["rec_r2"] for f in report.per_fold if "rec_r2" in f] or [np.nan])),
            sum(f["n_rows"] for f in report.per_fold),
            sum(f.get("n_groups", 0) for f in report.per_fold),
        )
    )
    write_csv(
        out_dir / "eval_report.csv",
        ["fold", "score_mae", "score_r2", "rec_mae", "rec_r2", "n_rows", "n_groups"],
        fold_rows,
    )
    write_csv(
        out_dir / "importance.csv",
        ["feature", "importance"],
        list(feature_importance(model).items()),
    )
    _say(
        quiet,
        f"fit: selected {report.selected}, CV score R2 {report.aggregate('score_r2'):.3f}",
    )


def _load_feature_vector(path: Path, expect_w1: bool) -> np.ndarray:
    if not path.exists():
        raise ValidationError([f"input file not found: {path}"])
    doc = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or "features" not in doc:
        raise ValidationError([f"{path}: expected an object with a 'features' mapping"])
    feats = doc["features"]
    missing = [name for name in FEATURE_NAMES if name not in feats]
    if missing:
        raise ValidationError([f"{path}: missing features: {', '.join(missing)}"])
    vec = [float(feats[name]) for name in FEATURE_NAMES]
    if expect_w1:
        if "w1" not in doc:
            raise ValidationError([f"{path}: missing w1 for the attribution sample"])
        vec.append(float(doc["w1"]))
    return np.asarray(vec)


def cmd_recommend(sections, seed, out_dir, jobs, quiet, model_path=None, features_path=None):
    if not model_path or not features_path:
        raise ValidationError(["recommend requires --model and --features"])
    model = TreeEnsembleModel.load(model_path)
    features = _load_feature_vector(Path(features_path), expect_w1=False)
    w1 = recommend_profit_weight(model, features, int(sections["recommend"]["resolution"]))
    doc = {"w1": w1, "w2": 1.0 - w1, "resolution": int(sections["recommend"]["resolution"])}
    with open(out_dir / "recommendation.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _say(quiet, f"recommend: w1={w1}")


def cmd_attribute(sections, seed, out_dir, jobs, quiet, model_path=None, sample_path=None):
    if not model_path or not sample_path:
        raise ValidationError(["attribute requires --model and --sample"])
    model = TreeEnsembleModel.load(model_path)
    sample = _load_feature_vector(Path(sample_path), expect_w1=True)
    att = shapley_attribution(
        model, sample, n_permutations=int(sections["attribute"]["n_permutations"]), seed=seed
    )
    with open(out_dir / "attribution.json", "w", encoding="utf-8") as fh:
        json.dump(att.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _say(quiet, f"attribute: residual {att.sampling_residual:.3e}")


COMMANDS = {
    "gen": cmd_gen,
    "sim": cmd_sim,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "dataset": cmd_dataset,
    "fit": cmd_fit,
    "recommend": cmd_recommend,
    "attribute": cmd_attribute,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scresim",
        description="Pandemic-coupled supply-and-demand simulator and strategy lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name not in ("recommend", "attribute"))
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=".")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--quiet", action="store_true")
        if name == "sweep":
            p.add_argument("--param", choices=SWEEP_PARAMETERS, default=None)
        if name in ("recommend", "attribute"):
            p.add_argument("--model", required=True)
        if name == "recommend":
            p.add_argument("--features", required=True)
        if name == "attribute":
            p.add_argument("--sample", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 2 if err.code not in (0, None) else 0

    started = time.monotonic()
    try:
        sections = parse_config(args.config) if args.config else {
            name: dict(defaults) for name, defaults in SECTION_DEFAULTS.items()
        }
        scenario = sections.get("scenario")
        seed = args.seed
        if seed is None:
            seed = scenario.seed if isinstance(scenario, ScenarioSpec) else 0
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)

        kwargs = {}
        if args.command == "sweep":
            kwargs["param_override"] = args.param
        if args.command in ("recommend", "attribute"):
            kwargs["model_path"] = args.model
        if args.command == "recommend":
            kwargs["features_path"] = args.features
        if args.command == "attribute":
            kwargs["sample_path"] = args.sample

        COMMANDS[args.command](sections, seed, out_dir, args.jobs, args.quiet, **kwargs)
        write_manifest(out_dir, args.command, _resolved(sections), seed, started)
        return 0
    except ValidationError as err:
        for message in err.messages:
            print(f"error: {message}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime fault
        print(f"fault: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
