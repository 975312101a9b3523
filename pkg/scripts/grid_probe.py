import sys, time
sys.path.insert(0, "src"); sys.path.insert(0, "scripts")
import numpy as np
from calibrate import desk_scenario
from scresim.worldgen import generate_world
from scresim.rng import substream_seed
from scresim.simulate import run_simulation, performance_series
from scresim.strategy import STRATEGY_MODES, mode_configurations

def probe(tag, shift, setup, phi, exponent=2.0, runs=4, T=365):
    spec = desk_scenario(
        overrides={"firm_money": list(phi)},
        eco_overrides={"demand_shift": list(shift), "setup_cost_factor": list(setup)},
    )
    perf = {m: [] for m in STRATEGY_MODES}
    b0 = 0; n = 0
    for k in range(runs):
        try:
            world = generate_world(spec, substream_seed(11, "world", k))
        except Exception:
            print(f"{tag}: genfail"); return
        rs = substream_seed(11, "run", k)
        for mode in STRATEGY_MODES:
            _, cfg = mode_configurations(world, mode, substream_seed(11, "w", k), exponent)
            pand = run_simulation(world, T, rs, configs=cfg)
            paired = run_simulation(world, T, rs, configs=cfg, null_pandemic=True)
            perf[mode].append(performance_series(pand, paired))
            if mode == "balanced":
                b0 += sum(1 for b in paired.bankrupt_since if b is not None); n += len(world.firms)
    out = {m: np.stack(v) for m, v in perf.items()}
    po = out["profit_only"]; drop = 1 - po[:,120].mean()/max(po[:,0].mean(),1e-9)
    t365 = {m: out[m][:,365].mean() for m in STRATEGY_MODES}
    order = sorted(STRATEGY_MODES, key=lambda m: -t365[m])
    print(f"{tag}: drop120={drop:.2f} t365 po={t365['profit_only']:.2f} res={t365['resilience_only']:.2f} "
          f"bal={t365['balanced']:.2f} het={t365['heterogeneous']:.2f} first={order[0]:>15s} b0={b0}/{n}")

t0=time.time()
probe("A shift-0.9 setup18-30 phi4.0-4.5e4", (-0.9,-0.7), (18,30), (4.0e4,4.5e4))
probe("B shift-1.1 setup18-30 phi4.0-4.5e4", (-1.2,-0.95), (18,30), (4.0e4,4.5e4))
probe("C shift-0.9 setup25-40 phi4.0-4.5e4", (-0.9,-0.7), (25,40), (4.0e4,4.5e4))
probe("D shift-1.1 setup25-40 phi4.0-4.5e4", (-1.2,-0.95), (25,40), (4.0e4,4.5e4))
print(f"[{time.time()-t0:.0f}s]")
