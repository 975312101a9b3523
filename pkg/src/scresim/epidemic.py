"""Per-location agent-level SEIRD dynamics.

Each location holds its consumers' health states in flat arrays and is
advanced one day at a time by :func:`step_epidemic`.  Susceptibles are
infected with the per-agent Bernoulli discretization of mass action,
p = 1 - (1-beta)^I; exposure and infectiousness run on deterministic
day clocks; exit from the infectious state is a recovery/death coin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Health state codes (array encoding).
SUSCEPTIBLE, EXPOSED, INFECTED, RECOVERED, DEAD = 0, 1, 2, 3, 4

STATE_LETTERS = "SEIRD"


@dataclass(frozen=True)
class EpiParams:
    """Biological-clinical constants plus the location's interaction rate."""

    beta: float
    exposed_days: int
    infectious_days: int
    recovery_prob: float

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.exposed_days < 1 or self.infectious_days < 1:
            raise ValueError("exposed_days and infectious_days must be positive integers")
        if not 0.0 <= self.recovery_prob <= 1.0:
            raise ValueError("recovery_prob must lie in [0, 1]")


@dataclass(frozen=True)
class LocationCounts:
    """Compartment tallies for one location; dead stay in the census n0."""

    s: int
    e: int
    i: int
    r: int
    d: int
    n0: int

    def __post_init__(self):
        if self.s + self.e + self.i + self.r + self.d != self.n0:
            raise ValueError("compartment counts do not sum to the census size")

    @property
    def alive(self) -> int:
        return self.n0 - self.d


class LocationPopulation:
    """Mutable health-state arrays for one location's consumers."""

    __slots__ = ("states", "ages", "n0")

    def __init__(self, states: np.ndarray, ages: np.ndarray):
        if states.shape != ages.shape:
            raise ValueError("states and ages must have the same shape")
        self.states = states.astype(np.int8, copy=False)
        self.ages = ages.astype(np.int64, copy=False)
        self.n0 = int(states.size)

    @classmethod
    def all_susceptible(cls, n: int) -> "LocationPopulation":
        return cls(np.zeros(n, dtype=np.int8), np.zeros(n, dtype=np.int64))

    @classmethod
    def from_letters(cls, letters, ages=None) -> "LocationPopulation":
        states = np.array([STATE_LETTERS.index(c) for c in letters], dtype=np.int8)
        if ages is None:
            ages = np.zeros(len(letters), dtype=np.int64)
        return cls(states, np.asarray(ages, dtype=np.int64))

    def counts(self) -> LocationCounts:
        tally = np.bincount(self.states, minlength=5)
        return LocationCounts(*(int(x) for x in tally[:5]), n0=self.n0)


def infection_probability(beta: float, n_infected: int) -> float:
    """Per-susceptible, per-step infection probability given I infectious."""
    if n_infected <= 0 or beta <= 0.0:
        return 0.0
    return 1.0 - (1.0 - beta) ** n_infected


def step_epidemic(
    pop: LocationPopulation,
    params: EpiParams,
    rng: np.random.Generator,
    counts: LocationCounts | None = None,
) -> LocationCounts:
    """Advance one location by one day, in place; returns fresh counts.

    Transitions are evaluated against the start-of-step snapshot: new
    exposures use the current infectious count, an agent entering E at
    step t enters I exactly at t + exposed_days, and leaves I exactly
    at entry + infectious_days.  Dead agents never change.
    """
    if counts is not None and counts != pop.counts():
        raise RuntimeError("epidemic counts inconsistent with population arrays")

    states, ages = pop.states, pop.ages
    was_s = states == SUSCEPTIBLE
    was_e = states == EXPOSED
    was_i = states == INFECTED
    was_r = states == RECOVERED

    n_infected = int(was_i.sum())

    # Everyone alive ages one day first; state changes below reset to 0.
    ages[was_s | was_e | was_i | was_r] += 1

    # S -> E
    p_inf = infection_probability(params.beta, n_infected)
    if p_inf > 0.0 and was_s.any():
        s_idx = np.flatnonzero(was_s)
        hit = s_idx[rng.random(s_idx.size) < p_inf]
        states[hit] = EXPOSED
        ages[hit] = 0

    # E -> I on the day clock.
    to_i = was_e & (ages == params.exposed_days)
    states[to_i] = INFECTED
    ages[to_i] = 0

    # I -> R or D.
    leaving = np.flatnonzero(was_i & (ages == params.infectious_days))
    if leaving.size:
        recovered = rng.random(leaving.size) < params.recovery_prob
        states[leaving[recovered]] = RECOVERED
        states[leaving[~recovered]] = DEAD
        ages[leaving] = 0

    return pop.counts()


def demand_shift_fraction(counts: LocationCounts) -> float:
    """Infected share of the living population, I / (N - D); 0 if extinct."""
    if counts.alive == 0:
        return 0.0
    return counts.i / counts.alive
