"""The synchronous round loop and per-firm objective measurements.

Each round: epidemic step per location, consumers (salary then
purchases, by id), firms (the five actions, by id), then a single
shipment commit.  Money and compartment trajectories are recorded every
round; t=0 is the post-setup initial state.

A paired baseline is the same world and seed with the pandemic nulled
(all betas zero and no index infections), used to normalize profit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .economy import ConsumerArrays, RunState, SupplyLink
from .epidemic import (
    DEAD,
    INFECTED,
    EpiParams,
    LocationPopulation,
    demand_shift_fraction,
    step_epidemic,
)
from .rng import stream
from .worldgen import World


@dataclass
class SimulationResult:
    money: np.ndarray  # (n_firms, T+1)
    epi_counts: np.ndarray  # (n_locations, T+1, 5) in S,E,I,R,D order
    bankrupt_since: list  # int or None per firm
    firm_locations: list[int]
    T: int

    def mean_money(self, fid: int) -> float:
        """Time-averaged money over steps 0..T (the profit objective)."""
        return float(self.money[fid].mean())

    def bankruptcy_step(self, fid: int) -> int:
        """First step with negative money; T when the firm never went under."""
        neg = np.flatnonzero(self.money[fid] < 0)
        return int(neg[0]) if neg.size else self.T


def build_run_state(
    world: World,
    configs: dict[int, tuple] | None = None,
    null_pandemic: bool = False,
) -> tuple[RunState, np.ndarray, np.ndarray]:
    """Fresh mutable state for one run; the world itself is never touched.

    configs maps firm id -> candidate link ids to establish at t=0,
    replacing that firm's incumbent in-links; chosen links are paid for
    immediately when affordable, otherwise left scheduled for action 3.
    """
    n = len(world.consumers)
    states = np.zeros(n, dtype=np.int8)
    ages = np.zeros(n, dtype=np.int64)
    if not null_pandemic:
        for ci in world.initial_infected:
            states[ci] = INFECTED

    consumers = ConsumerArrays(
        money=world.consumers.money.copy(),
        salary=world.consumers.salary,
        home=world.consumers.home,
        base_demand=world.consumers.base_demand,
        demand_shift=world.consumers.demand_shift,
        employer=world.consumers.employer,
    )
    state = RunState(
        products=world.products,
        firms=world.firms,
        consumers=consumers,
        health_states=states,
        batch_cap=world.batch_cap,
        order_up_to=world.order_up_to,
    )

    configs = configs or {}
    for link in world.links:
        fid = link.buyer
        run_link = SupplyLink(
            id=link.id,
            seller=link.seller,
            buyer=fid,
            product=link.product,
            setup_cost=link.setup_cost,
            lead_time=link.lead_time,
            unit_price=link.unit_price,
            established=False,
        )
        if fid in configs:
            if link.id in configs[fid]:
                state.firms[fid].scheduled.append(run_link)
        elif link.established:
            run_link.established = True
            state.firms[fid].add_supply_link(run_link)

    # Pay for configured links up front (low ids first); leftovers retry later.
    for firm in state.firms:
        firm.scheduled.sort(key=lambda l: l.id)
        state._establish_scheduled(firm.spec.id)
    return state, states, ages


def run_simulation(
    world: World,
    T: int,
    seed: int,
    configs: dict[int, tuple] | None = None,
    null_pandemic: bool = False,
    round_hook=None,
) -> SimulationResult:
    """Deterministic run of the world for T rounds under the given seed.

    round_hook(t, state, salaries_paid), when given, is called after each
    round's shipment commit (salaries_paid is an fsum, for ledger checks).
    """
    state, states, ages = build_run_state(world, configs, null_pandemic)
    n_firms = len(world.firms)
    n_loc = world.n_locations

    money_traj = np.zeros((n_firms, T + 1))
    epi_traj = np.zeros((n_loc, T + 1, 5), dtype=np.int64)

    pops = []
    params = []
    epi_rngs = []
    consumer_rngs = []
    for loc in world.locations:
        view_states = states[loc.consumer_start : loc.consumer_stop]
        view_ages = ages[loc.consumer_start : loc.consumer_stop]
        pops.append(LocationPopulation(view_states, view_ages))
        beta = 0.0 if null_pandemic else loc.beta
        params.append(EpiParams(beta, world.theta, world.gamma, world.rho))
        epi_rngs.append(stream(seed, "epi", loc.id))
        consumer_rngs.append(stream(seed, "consumers", loc.id))

    def record(t: int) -> None:
        for fid in range(n_firms):
            money_traj[fid, t] = state.firms[fid].money
        for loc in world.locations:
            c = pops[loc.id].counts()
            epi_traj[loc.id, t] = (c.s, c.e, c.i, c.r, c.d)

    record(0)

    base = world.consumers.base_demand
    shift = world.consumers.demand_shift
    salary = world.consumers.salary

    for t in range(1, T + 1):
        fracs = []
        for loc in world.locations:
            counts = step_epidemic(pops[loc.id], params[loc.id], epi_rngs[loc.id])
            fracs.append(demand_shift_fraction(counts))

        salaries_paid = 0.0
        for loc in world.locations:
            lo, hi = loc.consumer_start, loc.consumer_stop
            alive = states[lo:hi] != DEAD
            state.consumers.money[lo:hi][alive] += salary[lo:hi][alive]
            if round_hook is not None:
                salaries_paid += math.fsum(salary[lo:hi][alive].tolist())

            frac = fracs[loc.id]
            if frac == 0.0:
                demand = base[lo:hi]
            else:
                raw = base[lo:hi] + shift[lo:hi] * frac
                demand = np.maximum(np.floor(raw + 0.5).astype(np.int64), 0)
            buyers = np.flatnonzero(alive & demand.any(axis=1))
            rng = consumer_rngs[loc.id]
            for k in buyers:
                row = demand[int(k)]
                pids = np.flatnonzero(row)
                state.consumer_step(lo + int(k), row[pids], pids, rng)

        for fid in range(n_firms):
            state.firm_step(fid, t)

        state.commit_shipments(t)
        state.close_round(t)
        record(t)
        if round_hook is not None:
            round_hook(t, state, salaries_paid)

    return SimulationResult(
        money=money_traj,
        epi_counts=epi_traj,
        bankrupt_since=[f.bankrupt_since for f in state.firms],
        firm_locations=[f.location for f in world.firms],
        T=T,
    )


def baseline_run(world: World, T: int, seed: int, configs=None) -> SimulationResult:
    """The paired no-pandemic run used for normalization."""
    return run_simulation(world, T, seed, configs=configs, null_pandemic=True)


def performance_series(result: SimulationResult, baseline: SimulationResult) -> np.ndarray:
    """Normalized economy performance in [0,1] per step.

    Per firm: half the clamped ratio of cumulative mean money to the
    baseline's, plus half the still-solvent indicator; averaged over
    firms.  A baseline cumulative mean <= 0 zeroes that profit term.
    """
    steps = np.arange(result.T + 1) + 1.0
    cm = np.cumsum(result.money, axis=1) / steps
    cb = np.cumsum(baseline.money, axis=1) / steps
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cb > 0, cm / cb, 0.0)
    ratio = np.clip(ratio, 0.0, 1.0)
    bankrupt = np.array([b if b is not None else np.inf for b in result.bankrupt_since])
    solvent = bankrupt[:, None] > np.arange(result.T + 1)[None, :]
    return (0.5 * ratio + 0.5 * solvent).mean(axis=0)


def normalized_performance(result: SimulationResult, baseline: SimulationResult, t: int) -> float:
    return float(performance_series(result, baseline)[t])


def money_conservation_error(world: World, T: int, seed: int, configs=None, null_pandemic=False) -> float:
    """Max per-step deviation from the ledger identity: each round total
    money moves by exactly (salaries of alive consumers) - (op costs)."""
    op_total = math.fsum(f.op_cost for f in world.firms)
    worst = 0.0
    prev = None

    def hook(t, state, salaries_paid):
        nonlocal worst, prev
        now = state.total_money()
        if prev is not None:
            worst = max(worst, abs((now - prev) - (salaries_paid - op_total)))
        prev = now

    state, _, _ = build_run_state(world, configs, null_pandemic)
    prev = state.total_money()
    run_simulation(world, T, seed, configs=configs, null_pandemic=null_pandemic, round_hook=hook)
    return worst


def write_trajectory_csv(result: SimulationResult, path) -> None:
    """Row-oriented dump: one row per (step, firm) with the firm's
    location compartment counts alongside its money."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "firm_id", "money", "location", "s", "e", "i", "r", "d"])
        n_firms = result.money.shape[0]
        for t in range(result.T + 1):
            for fid in range(n_firms):
                loc = result.firm_locations[fid]
                s, e, i, r, d = (int(x) for x in result.epi_counts[loc, t])
                writer.writerow([t, fid, repr(float(result.money[fid, t])), loc, s, e, i, r, d])


def write_summary_json(result: SimulationResult, path) -> None:
    doc = {
        "T": result.T,
        "firms": [
            {
                "firm_id": fid,
                "mean_money": result.mean_money(fid),
                "bankruptcy_step": result.bankruptcy_step(fid),
            }
            for fid in range(result.money.shape[0])
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
