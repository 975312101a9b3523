"""Experiment pipelines: strategy comparison, sensitivity sweeps, and
surrogate training-set generation.

All pipelines fan out over pre-seeded independent jobs (optionally in a
process pool) and aggregate with a deterministic fold over job order, so
--jobs changes wall time only.  Aggregate CSVs are always backed by a
raw per-run CSV they can be recomputed from.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .rng import substream_seed
from .simulate import performance_series, run_simulation
from .strategy import (
    STRATEGY_MODES,
    ConfigEvaluator,
    ObjectiveWeights,
    best_configuration,
    mode_configurations,
    sample_subsets,
)
from .worldgen import TABLE_BOUNDS, ScenarioSpec, ValidationError, World, generate_world

FEATURE_NAMES = [
    "n_consumers",
    "n_firms",
    "mean_consumer_money",
    "firm_money",
    "op_cost",
    "mean_salary",
    "n_workers",
    "links_to_products",
    "beta",
    "gamma",
]

SWEEP_PARAMETERS = ("beta", "gamma", "consumers_per_location", "locations")


def firm_features(world: World, fid: int) -> list[float]:
    """The t=0 economy features the surrogate sees for one firm."""
    f = world.firms[fid]
    loc = world.locations[f.location]
    lo, hi = loc.consumer_start, loc.consumer_stop
    n_firms_loc = sum(1 for g in world.firms if g.location == f.location)
    return [
        float(hi - lo),
        float(n_firms_loc),
        float(world.consumers.money[lo:hi].mean()),
        float(f.money),
        float(f.op_cost),
        float(world.consumers.salary[lo:hi].mean()),
        float(len(f.workers)),
        len(world.incumbent_links(fid)) / len(world.products),
        float(loc.beta),
        float(world.gamma),
    ]


def run_jobs(items, worker, jobs: int) -> list:
    """Map worker over items, preserving order; jobs > 1 uses processes."""
    if jobs <= 1:
        return [worker(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, items, chunksize=1))


def _format_cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(x) for x in row])


def _sample_std(values: np.ndarray) -> float:
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


# -- strategy comparison ---------------------------------------------------


def _compare_worker(args):
    spec, k, modes, T, seed, exponent = args
    world = generate_world(spec, substream_seed(seed, "world", k))
    run_seed = substream_seed(seed, "run", k)
    out = {}
    for mode in modes:
        _, configs = mode_configurations(
            world, mode, substream_seed(seed, "weights", k), redundancy_exponent=exponent
        )
        pandemic = run_simulation(world, T, run_seed, configs=configs)
        paired = run_simulation(world, T, run_seed, configs=configs, null_pandemic=True)
        out[mode] = performance_series(pandemic, paired)
    return out


def compare_strategies(
    spec: ScenarioSpec,
    modes,
    n_runs: int,
    T: int,
    seed: int,
    jobs: int = 1,
    redundancy_exponent: float = 2.0,
):
    """Paired runs of each strategy regime on shared worlds/seeds.

    Returns (aggregate rows, raw rows, per-mode series array).
    Aggregate rows: (t, strategy, mean_perf, std_perf, n).
    """
    for mode in modes:
        if mode not in STRATEGY_MODES:
            raise ValidationError([f"unknown strategy mode: {mode}"])
    if n_runs < 1:
        raise ValidationError(["compare: n_runs must be >= 1"])
    items = [(spec, k, tuple(modes), T, seed, redundancy_exponent) for k in range(n_runs)]
    results = run_jobs(items, _compare_worker, jobs)

    series = {mode: np.stack([r[mode] for r in results]) for mode in modes}
    agg_rows = []
    for t in range(T + 1):
        for mode in modes:
            col = series[mode][:, t]
            agg_rows.append((t, mode, float(col.mean()), _sample_std(col), n_runs))
    raw_rows = [
        (k, mode, t, float(series[mode][k, t]))
        for k in range(n_runs)
        for mode in modes
        for t in range(T + 1)
    ]
    return agg_rows, raw_rows, series


# -- per-firm near-optimal profit weight (shared by sweep and dataset) -----


def firm_best_weights(
    world: World,
    T_eval: int,
    seed: int,
    zeta: int,
    panel: int,
    w1_values,
) -> dict[int, dict]:
    """For every firm with candidate links: per-w1 realized targets and
    the near-optimal w1 label.

    The same zeta sampled subsets (and the same pandemic panel) are
    scored under every w1, so the whole grid costs zeta x panel runs.
    The target is the unweighted sum of the winner's normalized profit
    and solvency terms; the label is the highest w1 attaining the
    maximal target.
    """
    evaluator = ConfigEvaluator(world, T_eval, seed, panel=panel)
    records: dict[int, dict] = {}
    for f in world.firms:
        if not world.candidate_links(f.id):
            continue
        subsets = sample_subsets(world, f.id, zeta, seed)
        targets = []
        for w1 in w1_values:
            weights = ObjectiveWeights.from_profit(float(w1))
            config, _ = best_configuration(world, f.id, weights, subsets, evaluator)
            profit_norm, resilience_norm = evaluator.evaluate(f.id, config.link_ids)
            targets.append((float(w1), profit_norm + resilience_norm))
        label, best = targets[0]
        for w1, target in targets:
            if target >= best:
                label, best = w1, target
        records[f.id] = {"targets": targets, "label": label}
    return records


# -- sensitivity sweep ------------------------------------------------------


def _sweep_worker(args):
    spec, parameter, value, gi, k, seed, zeta, panel, w1_grid, T_eval = args
    if parameter in ("gamma", "consumers_per_location", "locations"):
        pinned = spec.with_range(parameter, int(value), int(value))
    else:
        pinned = spec.with_range(parameter, float(value), float(value))
    world = generate_world(pinned, substream_seed(seed, "sweepworld", parameter, gi, k))
    run_seed = substream_seed(seed, "sweeprun", parameter, gi, k)
    w1_values = np.linspace(0.0, 1.0, w1_grid)
    records = firm_best_weights(world, T_eval, run_seed, zeta, panel, w1_values)
    labels = [rec["label"] for rec in records.values()]
    return float(np.mean(labels)) if labels else float("nan")


def sensitivity_sweep(
    spec: ScenarioSpec,
    parameter: str,
    grid,
    n_runs: int,
    seed: int,
    jobs: int = 1,
    zeta: int = 6,
    panel: int = 1,
    w1_grid: int = 11,
    T_eval: int = 120,
):
    """Mean +/- std of the per-run average best profit weight per grid value.

    Returns (aggregate rows, raw rows).  Aggregate rows:
    (param, value, mean_w1, std_w1, n).
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValidationError(
            [f"sweep parameter must be one of {', '.join(SWEEP_PARAMETERS)}: got {parameter}"]
        )
    lo, hi = TABLE_BOUNDS[parameter]
    bad = [v for v in grid if not (lo <= v <= hi)]
    if bad:
        raise ValidationError([f"sweep grid values outside legal range [{lo}, {hi}]: {bad}"])
    if n_runs < 2:
        raise ValidationError(["sweep: n_runs must be >= 2"])

    items = [
        (spec, parameter, value, gi, k, seed, zeta, panel, w1_grid, T_eval)
        for gi, value in enumerate(grid)
        for k in range(n_runs)
    ]
    flat = run_jobs(items, _sweep_worker, jobs)

    agg_rows = []
    raw_rows = []
    for gi, value in enumerate(grid):
        vals = np.array(flat[gi * n_runs : (gi + 1) * n_runs])
        for k in range(n_runs):
            raw_rows.append((parameter, value, k, float(vals[k])))
        agg_rows.append((parameter, value, float(vals.mean()), _sample_std(vals), n_runs))
    return agg_rows, raw_rows


# -- surrogate training set --------------------------------------------------


def _dataset_worker(args):
    spec, s, configs_per_sim, seed, zeta, panel, T_eval = args
    world = generate_world(spec, substream_seed(seed, "dataworld", s))
    run_seed = substream_seed(seed, "dataeval", s)
    w1_values = np.linspace(0.0, 1.0, configs_per_sim)
    records = firm_best_weights(world, T_eval, run_seed, zeta, panel, w1_values)
    data_rows = []
    label_rows = []
    for fid in sorted(records):
        features = firm_features(world, fid)
        for w1, target in records[fid]["targets"]:
            data_rows.append([s, fid] + features + [w1, target])
        label_rows.append((s, fid, records[fid]["label"]))
    return data_rows, label_rows


def generate_training_dataset(
    spec: ScenarioSpec,
    n_sims: int,
    configs_per_sim: int,
    seed: int,
    jobs: int = 1,
    zeta: int = 6,
    panel: int = 1,
    T_eval: int = 120,
):
    """DatasetRows over a w1 grid plus per-firm near-optimal labels.

    Returns (dataset rows, label rows); dataset columns are sim_id,
    firm_id, the features in FEATURE_NAMES order, w1, target.
    """
    if n_sims < 1:
        raise ValidationError(["dataset: n_sims must be >= 1"])
    if configs_per_sim < 2:
        raise ValidationError(["dataset: configs_per_sim must be >= 2"])
    items = [(spec, s, configs_per_sim, seed, zeta, panel, T_eval) for s in range(n_sims)]
    results = run_jobs(items, _dataset_worker, jobs)
    dataset = [row for data_rows, _ in results for row in data_rows]
    labels = [row for _, label_rows in results for row in label_rows]
    return dataset, labels


DATASET_HEADER = ["sim_id", "firm_id"] + FEATURE_NAMES + ["w1", "target"]
LABELS_HEADER = ["sim_id", "firm_id", "w1_star"]
