"""Firm objectives, strategy regimes, and the link-configuration search.

A firm scores a candidate in-link subset with a weighted sum of a
profit term (time-averaged money, normalized by the world's incumbent
no-pandemic run) and a solvency term (first bankruptcy step over the
horizon).  monte_carlo_optimize samples subsets uniformly (each
candidate in with probability 1/2), evaluates them on a fixed panel of
pandemic seeds, and keeps the argmax; ties prefer cheaper setup, then
the lexicographically smaller subset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import stream, substream_seed
from .simulate import run_simulation
from .worldgen import ValidationError, World

STRATEGY_MODES = ("profit_only", "resilience_only", "balanced", "heterogeneous")


@dataclass(frozen=True)
class ObjectiveWeights:
    """Complementary profit/resilience weights, summing to one."""

    profit: float
    resilience: float

    def __post_init__(self):
        if not (0.0 <= self.profit <= 1.0 and 0.0 <= self.resilience <= 1.0):
            raise ValueError("weights must lie in [0, 1]")
        if abs(self.profit + self.resilience - 1.0) > 1e-9:
            raise ValueError("profit and resilience weights must sum to 1")

    @classmethod
    def from_profit(cls, w1: float) -> "ObjectiveWeights":
        return cls(profit=w1, resilience=1.0 - w1)


@dataclass(frozen=True)
class LinkConfiguration:
    """A firm's chosen candidate in-links, established at t=0."""

    firm_id: int
    link_ids: tuple[int, ...]
    setup_total: float


def objective_score(weights: ObjectiveWeights, profit_norm: float, resilience_norm: float) -> float:
    """The weighted firm objective over normalized terms in [0, 1]."""
    return weights.profit * profit_norm + weights.resilience * resilience_norm


def assign_weights(world: World, mode: str, rng: np.random.Generator) -> dict[int, ObjectiveWeights]:
    """Per-firm weights for one of the four strategy regimes."""
    if mode not in STRATEGY_MODES:
        raise ValidationError([f"unknown strategy mode: {mode}"])
    out = {}
    for f in world.firms:
        if mode == "profit_only":
            w1 = 1.0
        elif mode == "resilience_only":
            w1 = 0.0
        elif mode == "balanced":
            w1 = 0.5
        else:
            w1 = float(rng.uniform(0.0, 1.0))
        out[f.id] = ObjectiveWeights.from_profit(w1)
    return out


class ConfigEvaluator:
    """Scores one world's link subsets on a fixed pandemic seed panel.

    The profit normalizer is a single incumbent-configuration baseline
    run (no pandemic) shared by every firm and subset, so setup spending
    lowers the profit term instead of cancelling out of it.  Evaluations
    are cached by (firm, subset).
    """

    def __init__(self, world: World, T: int, seed: int, panel: int = 3):
        if panel < 1:
            raise ValidationError(["panel must be >= 1"])
        self.world = world
        self.T = T
        self.panel_seeds = [substream_seed(seed, "panel", j) for j in range(panel)]
        baseline = run_simulation(world, T, substream_seed(seed, "baseline"), null_pandemic=True)
        self.baseline_mean = {f.id: baseline.mean_money(f.id) for f in world.firms}
        self._cache: dict[tuple[int, tuple], tuple[float, float]] = {}
        self.simulations_run = 0

    def evaluate(self, firm_id: int, link_ids: tuple[int, ...]) -> tuple[float, float]:
        """Panel-mean (profit_norm, resilience_norm) for the firm under
        the subset, with every other firm on its incumbent links."""
        key = (firm_id, link_ids)
        if key in self._cache:
            return self._cache[key]
        base = self.baseline_mean[firm_id]
        profit_terms = []
        solvency_terms = []
        for ps in self.panel_seeds:
            result = run_simulation(self.world, self.T, ps, configs={firm_id: frozenset(link_ids)})
            self.simulations_run += 1
            mm = result.mean_money(firm_id)
            profit_terms.append(min(max(mm / base, 0.0), 1.0) if base > 0 else 0.0)
            solvency_terms.append(result.bankruptcy_step(firm_id) / self.T)
        value = (float(np.mean(profit_terms)), float(np.mean(solvency_terms)))
        self._cache[key] = value
        return value


def sample_subsets(world: World, firm_id: int, zeta: int, seed: int) -> list[tuple[int, ...]]:
    """The zeta candidate subsets a given MC seed explores (p=1/2 each)."""
    candidates = sorted(world.candidate_links(firm_id))
    rng = stream(seed, "mc", firm_id)
    subsets = []
    for _ in range(zeta):
        mask = rng.random(len(candidates)) < 0.5
        subsets.append(tuple(c for c, m in zip(candidates, mask) if m))
    return subsets


def setup_total(world: World, link_ids) -> float:
    return float(sum(world.links[lid].setup_cost for lid in link_ids))


def best_configuration(
    world: World,
    firm_id: int,
    weights: ObjectiveWeights,
    subsets,
    evaluator: ConfigEvaluator,
) -> tuple[LinkConfiguration, float]:
    """Argmax over evaluated subsets; ties -> lower setup, then lexicographic."""
    best_key = None
    best = None
    for subset in subsets:
        profit_norm, resilience_norm = evaluator.evaluate(firm_id, subset)
        score = objective_score(weights, profit_norm, resilience_norm)
        key = (-score, setup_total(world, subset), subset)
        if best_key is None or key < best_key:
            best_key = key
            best = (subset, score)
    subset, score = best
    return LinkConfiguration(firm_id, subset, setup_total(world, subset)), score


def monte_carlo_optimize(
    world: World,
    firm_id: int,
    weights: ObjectiveWeights,
    zeta: int,
    seed: int,
    evaluator: ConfigEvaluator | None = None,
    T: int | None = None,
    panel: int = 3,
) -> tuple[LinkConfiguration, float]:
    """Randomized search over the firm's candidate in-link subsets."""
    if zeta < 1:
        raise ValidationError(["zeta must be >= 1"])
    if not world.candidate_links(firm_id):
        raise ValidationError([f"firm {firm_id} has no candidate links to optimize"])
    if evaluator is None:
        evaluator = ConfigEvaluator(world, T or world.scenario.get("T", 365), seed, panel=panel)
    subsets = sample_subsets(world, firm_id, zeta, seed)
    return best_configuration(world, firm_id, weights, subsets, evaluator)


def policy_configuration(
    world: World,
    firm_id: int,
    weights: ObjectiveWeights,
    redundancy_exponent: float = 2.0,
) -> tuple[int, ...]:
    """Deterministic weights-to-links mapping used by the strategy
    comparison experiment.

    Per input product, the cheapest supplier is always kept (the
    cost-optimal chain); a resilience-weighted share of the remaining
    candidates is added on top, cheapest first, reaching the full
    candidate set at full resilience weight.
    """
    by_input: dict[int, list] = {}
    for lid in world.candidate_links(firm_id):
        link = world.links[lid]
        by_input.setdefault(link.product, []).append(link)
    chosen: list[int] = []
    share = weights.resilience**redundancy_exponent
    for pid in sorted(by_input):
        links = sorted(by_input[pid], key=lambda l: (l.unit_price, l.id))
        extra = int(round(share * (len(links) - 1)))
        chosen.extend(l.id for l in links[: 1 + extra])
    return tuple(sorted(chosen))


def mode_configurations(
    world: World,
    mode: str,
    seed: int,
    redundancy_exponent: float = 2.0,
) -> tuple[dict[int, ObjectiveWeights], dict[int, tuple]]:
    """Weights and policy link choices for every firm with candidates."""
    weights = assign_weights(world, mode, stream(seed, "weights", mode))
    configs = {}
    for f in world.firms:
        if world.candidate_links(f.id):
            configs[f.id] = policy_configuration(world, f.id, weights[f.id], redundancy_exponent)
    return weights, configs
