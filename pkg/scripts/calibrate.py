"""Exploratory calibration of desk-scale scenario constants.

Not part of the package: reports, for a knob combo, the quantities the
acceptance criteria gate on (no-pandemic bankruptcies, strategy-mode
performance levels/orderings, per-firm sweep labels).
"""

import json
import sys
import time

import numpy as np

sys.path.insert(0, "src")

from scresim.experiments import firm_best_weights
from scresim.rng import substream_seed
from scresim.simulate import performance_series, run_simulation
from scresim.strategy import STRATEGY_MODES, mode_configurations
from scresim.worldgen import ScenarioSpec, generate_world


def desk_scenario(overrides=None, eco_overrides=None):
    base = {
        "locations": [5, 5],
        "consumers_per_location": [500, 550],
        "firms_per_location": [10, 10],
        "products": [10, 12],
        "consumer_money": [300, 800],
        "salary": [200, 400],
        "firm_money": [4.0e4, 4.5e4],
        "op_cost_fraction": [0.023, 0.025],
        "workers": [2, 4],
        "product_price": [50, 90],
        "beta": [2.5e-3, 1e-2],
        "theta": [5, 6],
        "gamma": [14, 18],
        "rho": [0.975, 0.995],
        "ingredients_per_product": [1, 2],
        "retail_products_per_firm": [1, 1],
        "economy": {
            "demand_products": [1, 1],
            "demand_units": [1, 1],
            "demand_shift": [-0.6, -0.25],
            "prep_time": [1, 1],
            "lead_time": [1, 3],
            "setup_cost_factor": [10.0, 16.0],
            "margin": [0.2, 0.5],
            "batch_cap": 1500,
            "retail_overlap": 2,
            "order_up_to": 1.3,
            "factory_share": 0.2,
            "raw_demand_weight": 0.1,
            "init_inventory_steps": 10,
        },
    }
    if overrides:
        base.update(overrides)
    if eco_overrides:
        base["economy"].update(eco_overrides)
    return ScenarioSpec.from_dict(base)


def compare_probe(spec, n_runs=8, T=365, seed=11, exponent=2.0):
    t0 = time.time()
    series = {m: [] for m in STRATEGY_MODES}
    bankrupt_counts = {m: [0, 0] for m in STRATEGY_MODES}
    base_bankrupt = 0
    n_firms_total = 0
    for k in range(n_runs):
        world = generate_world(spec, substream_seed(seed, "world", k))
        run_seed = substream_seed(seed, "run", k)
        for mode in STRATEGY_MODES:
            _, configs = mode_configurations(world, mode, substream_seed(seed, "w", k), exponent)
            pand = run_simulation(world, T, run_seed, configs=configs)
            paired = run_simulation(world, T, run_seed, configs=configs, null_pandemic=True)
            series[mode].append(performance_series(pand, paired))
            base_bankrupt += sum(1 for b in paired.bankrupt_since if b is not None)
            n_firms_total += len(paired.bankrupt_since)
            bankrupt_counts[mode][0] += sum(
                1 for b in pand.bankrupt_since if b is not None and b <= 120
            )
            bankrupt_counts[mode][1] += len(pand.bankrupt_since)
    bankrupt_frac = {m: c[0] / max(c[1], 1) for m, c in bankrupt_counts.items()}
    out = {}
    for mode in STRATEGY_MODES:
        arr = np.stack(series[mode])
        out[mode] = {
            "t0": float(arr[:, 0].mean()),
            "t120": float(arr[:, 120].mean()),
            "t365": float(arr[:, 365].mean()),
            "bankrupt": bankrupt_frac[mode],
        }
    print(f"  [{time.time()-t0:.0f}s] beta0 bankruptcies: {base_bankrupt}/{n_firms_total*1}")
    for mode in STRATEGY_MODES:
        d = out[mode]
        print(
            f"  {mode:16s} perf(0)={d['t0']:.3f} perf(120)={d['t120']:.3f} "
            f"perf(365)={d['t365']:.3f} bankrupt120={d['bankrupt']:.2f}"
        )
    po, het = out["profit_only"], out["heterogeneous"]
    print(f"  profit_only drop by 120: {1 - po['t120'] / max(po['t0'], 1e-9):.2%}")
    order365 = sorted(STRATEGY_MODES, key=lambda m: -out[m]["t365"])
    print(f"  t365 order: {' > '.join(order365)}")
    return out


def sweep_probe(spec, betas=(5e-5, 1e-3, 5e-3, 1e-2), n_runs=4, seed=23):
    t0 = time.time()
    print("  beta sweep labels:")
    for b in betas:
        pinned = spec.with_range("beta", b, b).with_range("locations", 2, 2)
        labels = []
        for k in range(n_runs):
            world = generate_world(pinned, substream_seed(seed, "sw", k))
            recs = firm_best_weights(
                world, 120, substream_seed(seed, "se", k), zeta=6, panel=1,
                w1_values=np.linspace(0, 1, 6),
            )
            labels.extend(r["label"] for r in recs.values())
        print(f"    beta={b:g}: mean w1*={np.mean(labels):.3f} (n={len(labels)})")
    print(f"  [{time.time()-t0:.0f}s]")


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "compare"
    spec = desk_scenario()
    if which == "compare":
        compare_probe(spec, n_runs=int(sys.argv[2]) if len(sys.argv) > 2 else 6)
    elif which == "sweep":
        sweep_probe(spec)
