"""Consumer purchasing and the firm's five-action round.

Genesis records (Product, SupplyLink, FirmSpec, ConsumerArrays) describe
the world at t=0; RunState holds the mutable per-run side (money, stock,
jobs, pending shipments) and exposes the two agent steps the round loop
drives: consumer_step and firm_step.

Money rules: salaries are minted, operational costs are burned, and
everything else (retail sales, firm-to-firm orders, link setup fees) is
a transfer, so total money moves by exactly sum(salaries) - sum(op costs)
each round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .epidemic import DEAD, INFECTED

# Sentinel for a workforce that cannot run production at all.
HALTED = math.inf

SALES_WINDOW = 7


@dataclass
class Product:
    id: int
    price: float
    prep_time: int
    ingredients: dict[int, int]
    rank: int

    @property
    def is_factory_product(self) -> bool:
        return not self.ingredients


@dataclass
class SupplyLink:
    id: int
    seller: int
    buyer: int
    product: int
    setup_cost: float
    lead_time: int
    unit_price: float
    established: bool

    def __post_init__(self):
        if self.seller == self.buyer:
            raise ValueError("a supply link cannot connect a firm to itself")
        if self.lead_time < 0 or self.setup_cost < 0:
            raise ValueError("lead_time and setup_cost must be non-negative")


@dataclass
class FirmSpec:
    """Immutable genesis description of one firm."""

    id: int
    location: int
    money: float
    op_cost: float
    workers: tuple[int, ...]
    catalog: tuple[int, ...]
    prices: dict[int, float]
    initial_inventory: dict[int, int]
    # Steady-state sales expectation per product; seeds the trailing rate.
    expected_sales: dict[int, float] = field(default_factory=dict)


@dataclass
class ConsumerArrays:
    """Struct-of-arrays consumer population (index = consumer id)."""

    money: np.ndarray
    salary: np.ndarray
    home: np.ndarray
    base_demand: np.ndarray  # (n, P) ints
    demand_shift: np.ndarray  # (n, P) floats
    employer: np.ndarray  # firm id or -1

    def __len__(self) -> int:
        return self.money.size


def effective_demand(base_demand, demand_shift, infected_fraction: float) -> np.ndarray:
    """Pandemic-adjusted demand: round(base + shift * fraction), floored at 0.

    Rounding is half-up so the shift acts symmetrically on unit demands.
    """
    base = np.asarray(base_demand)
    if infected_fraction == 0.0:
        return np.maximum(base.astype(np.int64), 0)
    raw = base + np.asarray(demand_shift) * infected_fraction
    return np.maximum(np.floor(raw + 0.5).astype(np.int64), 0)


def capacity_factor(n_workers: int, n_infected: int, n_dead: int) -> float:
    """Workforce slowdown multiplier w/(w - w_i - w_d); HALTED if nobody can work."""
    active = n_workers - n_infected - n_dead
    if n_workers <= 0 or active <= 0:
        return HALTED
    return n_workers / active


@dataclass
class FirmState:
    spec: FirmSpec
    money: float
    # Jobs in progress: [product, quantity, ready_at_step].
    wip: list[list] = field(default_factory=list)
    bankrupt_since: int | None = None
    # Established in-links per input product, cheapest first.
    supply: dict[int, list[SupplyLink]] = field(default_factory=dict)
    # Strategy-scheduled links not yet paid for.
    scheduled: list[SupplyLink] = field(default_factory=list)

    def add_supply_link(self, link: SupplyLink) -> None:
        lst = self.supply.setdefault(link.product, [])
        lst.append(link)
        lst.sort(key=lambda l: (l.unit_price, l.id))


class RunState:
    """Mutable world state for one simulation run."""

    def __init__(
        self,
        products: list[Product],
        firms: list[FirmSpec],
        consumers: ConsumerArrays,
        health_states: np.ndarray,
        batch_cap: int,
        order_up_to: float = 2.0,
    ):
        self.products = products
        self.n_products = len(products)
        self.consumers = consumers
        self.health = health_states  # shared with the epidemic arrays
        self.batch_cap = batch_cap
        self.order_up_to = order_up_to

        self.firms = [FirmState(spec=f, money=f.money) for f in firms]
        self.stock = np.zeros((len(firms), self.n_products), dtype=np.int64)
        for f in firms:
            for pid, qty in f.initial_inventory.items():
                self.stock[f.id, pid] = qty
        self.on_order = np.zeros_like(self.stock)

        # arrival step -> list of (buyer firm, product, qty)
        self.pending_shipments: dict[int, list[tuple[int, int, int]]] = {}

        # Trailing sales (retail + firm-to-firm) per firm/product, plus the
        # pre-clamp quantities other firms asked for (visible demand).
        self.sales_window = np.zeros((len(firms), SALES_WINDOW, self.n_products), dtype=np.int64)
        self.asks_window = np.zeros_like(self.sales_window)
        self.sold_today = np.zeros_like(self.stock)
        self.asked_today = np.zeros_like(self.stock)
        self.rounds_completed = 0

        # Static retail offers: (location, product) -> [(price, firm id)] cheapest first.
        self.offers: dict[tuple[int, int], list[tuple[float, int]]] = {}
        for f in firms:
            for pid in f.catalog:
                self.offers.setdefault((f.location, pid), []).append((f.prices[pid], f.id))
        for lst in self.offers.values():
            lst.sort()

        # Input products each firm's catalog requires.
        self.inputs: list[tuple[int, ...]] = []
        for f in firms:
            needed: set[int] = set()
            for pid in f.catalog:
                needed.update(products[pid].ingredients)
            self.inputs.append(tuple(sorted(needed)))

    # -- consumer side ---------------------------------------------------

    def _allocate(self, location: int, pid: int, qty: int, shadow: dict):
        """Cheapest-first allocation of qty units; returns [(firm, take, price)]."""
        picks = []
        for price, fid in self.offers.get((location, pid), ()):
            have = shadow.get((fid, pid), self.stock[fid, pid])
            if have <= 0:
                continue
            take = min(int(have), qty)
            shadow[(fid, pid)] = have - take
            picks.append((fid, take, price))
            qty -= take
            if qty == 0:
                break
        return picks

    def consumer_step(self, ci: int, demand: np.ndarray, product_ids: np.ndarray, rng) -> None:
        """One consumer's purchases (salary is credited by the round loop).

        Demanded units go to the cheapest in-stock local seller.  If the
        full plan is unaffordable, units are shuffled and bought one by
        one while money allows, skipping what cannot be paid for.
        """
        location = int(self.consumers.home[ci])
        money = float(self.consumers.money[ci])

        shadow: dict = {}
        plan = []  # (fid, pid, take, price)
        total = 0.0
        for pid, qty in zip(product_ids, demand):
            for fid, take, price in self._allocate(location, int(pid), int(qty), shadow):
                plan.append((fid, int(pid), take, price))
                total += take * price

        if not plan:
            return

        if total <= money:
            for fid, pid, take, price in plan:
                self._sell(fid, pid, take, take * price)
            self.consumers.money[ci] = money - total
            return

        # Unaffordable: retry unit by unit in random order.
        units = [pid for fid, pid, take, price in plan for _ in range(take)]
        order = rng.permutation(len(units))
        for k in order:
            pid = units[int(k)]
            for price, fid in self.offers.get((location, pid), ()):
                if self.stock[fid, pid] <= 0:
                    continue
                if price <= money:
                    self._sell(fid, pid, 1, price)
                    money -= price
                break  # cheapest in-stock seller decides; no fallback on price
        self.consumers.money[ci] = money

    def _sell(self, fid: int, pid: int, qty: int, amount: float) -> None:
        self.stock[fid, pid] -= qty
        self.firms[fid].money += amount
        self.sold_today[fid, pid] += qty

    # -- firm side -------------------------------------------------------

    def _trailing_rate(self, fid: int, pid: int) -> float:
        """Demand rate anchoring replenishment and production.

        The rate is the larger of trailing sales and trailing
        firm-order asks (so a seller scales up when buyers concentrate
        on it), floored at the firm's steady-state expectation while
        trade continues.  Lost retail sales stay invisible (stockouts
        are silent).  Only a fully dead window (no sales and no asks
        for a whole week) drops the rate to zero: the firm stops
        producing and reordering until trade reappears.
        """
        window = min(self.rounds_completed, SALES_WINDOW)
        expected = float(self.firms[fid].spec.expected_sales.get(pid, 0.0))
        if window == 0:
            return expected
        sold = float(self.sales_window[fid, :window, pid].sum()) / window
        asked = float(self.asks_window[fid, :window, pid].sum()) / window
        trailing = max(sold, asked)
        if trailing == 0.0 and window >= SALES_WINDOW:
            return 0.0
        return max(trailing, expected)

    def _input_demand_rate(self, fid: int, input_pid: int) -> float:
        rate = 0.0
        for pid in self.firms[fid].spec.catalog:
            need = self.products[pid].ingredients.get(input_pid, 0)
            if need:
                rate += need * self._trailing_rate(fid, pid)
        return rate

    def _place_orders(self, fid: int, t: int) -> None:
        firm = self.firms[fid]
        for input_pid in self.inputs[fid]:
            links = firm.supply.get(input_pid)
            if not links:
                continue
            target = math.ceil(self.order_up_to * self._input_demand_rate(fid, input_pid))
            deficit = target - int(self.stock[fid, input_pid]) - int(self.on_order[fid, input_pid])
            for link in links:
                if deficit <= 0:
                    break
                if link.unit_price <= 0:
                    continue
                self.asked_today[link.seller, input_pid] += deficit
                affordable = int(firm.money // link.unit_price) if firm.money > 0 else 0
                qty = min(deficit, int(self.stock[link.seller, input_pid]), affordable)
                if qty <= 0:
                    continue
                cost = qty * link.unit_price
                firm.money -= cost
                self.firms[link.seller].money += cost
                self.stock[link.seller, input_pid] -= qty
                self.sold_today[link.seller, input_pid] += qty
                self.on_order[fid, input_pid] += qty
                self.pending_shipments.setdefault(t + link.lead_time, []).append(
                    (fid, input_pid, qty)
                )
                deficit -= qty

    def _establish_scheduled(self, fid: int) -> None:
        firm = self.firms[fid]
        if not firm.scheduled:
            return
        remaining = []
        for link in firm.scheduled:
            if firm.money >= link.setup_cost:
                firm.money -= link.setup_cost
                self.firms[link.seller].money += link.setup_cost
                link.established = True
                firm.add_supply_link(link)
            else:
                remaining.append(link)
        firm.scheduled = remaining

    def workforce_factor(self, fid: int) -> float:
        workers = self.firms[fid].spec.workers
        if not workers:
            return HALTED
        states = self.health[list(workers)]
        return capacity_factor(len(workers), int((states == INFECTED).sum()), int((states == DEAD).sum()))

    def _produce(self, fid: int, t: int) -> None:
        firm = self.firms[fid]
        factor = self.workforce_factor(fid)
        if factor is HALTED or math.isinf(factor):
            for job in firm.wip:
                job[2] += 1  # pause: everything slips one day
            return

        if firm.wip:
            still = []
            for job in firm.wip:
                if job[2] <= t:
                    self.stock[fid, job[0]] += job[1]
                else:
                    still.append(job)
            firm.wip = still

        # One job in flight per catalog product, so the slowdown factor
        # cuts throughput instead of just delaying a pipeline.  Finished
        # stock is capped at the order-up-to ceiling: make-to-stock with
        # no ceiling converts all cash into dead inventory whenever
        # demand collapses.
        busy = {job[0] for job in firm.wip}
        for pid in firm.spec.catalog:
            if pid in busy:
                continue
            ceiling = math.ceil(self.order_up_to * self._trailing_rate(fid, pid))
            if self.stock[fid, pid] >= ceiling:
                continue
            product = self.products[pid]
            batch = min(self.batch_cap, max(ceiling - int(self.stock[fid, pid]), 0))
            for ing, need in product.ingredients.items():
                batch = min(batch, int(self.stock[fid, ing]) // need)
                if batch == 0:
                    break
            if batch <= 0:
                continue
            for ing, need in product.ingredients.items():
                self.stock[fid, ing] -= need * batch
            ready = t + math.ceil(product.prep_time * factor)
            firm.wip.append([pid, batch, ready])

    def firm_step(self, fid: int, t: int) -> None:
        """The five firm actions, in order: pay costs, buy inputs, set up
        scheduled links, produce (or pause when halted), offer stock."""
        firm = self.firms[fid]
        firm.money -= firm.spec.op_cost
        self._place_orders(fid, t)
        self._establish_scheduled(fid)
        self._produce(fid, t)
        # Action five is implicit: current stock is the retail offer.

    # -- round bookkeeping -------------------------------------------------

    def commit_shipments(self, t: int) -> None:
        for fid, pid, qty in self.pending_shipments.pop(t, ()):
            self.stock[fid, pid] += qty
            self.on_order[fid, pid] -= qty

    def close_round(self, t: int) -> None:
        slot = self.rounds_completed % SALES_WINDOW
        self.sales_window[:, slot, :] = self.sold_today
        self.asks_window[:, slot, :] = self.asked_today
        self.sold_today[:] = 0
        self.asked_today[:] = 0
        self.rounds_completed += 1
        for firm in self.firms:
            if firm.bankrupt_since is None and firm.money < 0:
                firm.bankrupt_since = t

    def total_money(self) -> float:
        return math.fsum(self.consumers.money.tolist()) + math.fsum(f.money for f in self.firms)
