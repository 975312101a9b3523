"""World generation: demand-feasible random economies.

A ScenarioSpec holds sampling ranges (validated against the experiment
parameter table) plus economy knobs the table does not pin down.  A
World is the immutable t=0 snapshot: locations, products with acyclic
recipes, firms with catalogs/prices/workers, the candidate supply-link
universe with its bootstrapped (incumbent) subset, and the consumer
population with one seeded index infection per location.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .economy import ConsumerArrays, FirmSpec, Product, SupplyLink
from .rng import stream

MARGIN_BOUNDS = (0.01, 0.50)  # legal per-unit profit over ingredient cost

# Legal sampling bounds; a spec's ranges must sit inside these.
TABLE_BOUNDS = {
    "locations": (1, 20),
    "consumers_per_location": (500, 5000),
    "firms_per_location": (5, 50),
    "products": (10, 250),
    "consumer_money": (1e2, 5e6),
    "salary": (55.0, 5500.0),
    "firm_money": (1e4, 5e7),
    "op_cost_fraction": (0.0025, 0.025),
    "workers": (1, 1000),
    "product_price": (1.0, 1e4),
    "beta": (5e-5, 1e-2),
    "theta": (5, 9),
    "gamma": (10, 18),
    "rho": (0.975, 0.995),
    "ingredients_per_product": (1, 20),
    "retail_products_per_firm": (1, 10),
}

INT_RANGE_FIELDS = {
    "locations",
    "consumers_per_location",
    "firms_per_location",
    "products",
    "workers",
    "theta",
    "gamma",
    "ingredients_per_product",
    "retail_products_per_firm",
}

ECONOMY_DEFAULTS = {
    "demand_products": [1, 2],  # products per consumer
    "demand_units": [1, 2],  # units per demanded product
    "demand_shift": [-1.2, 0.2],  # pandemic shift as a multiple of base demand
    "prep_time": [1, 3],
    "lead_time": [0, 3],
    "setup_cost_factor": [10.0, 40.0],  # link setup fee as a multiple of unit price
    "margin": [0.01, 0.50],  # sampled sale margin over ingredient cost
    "raw_product_share": 0.4,
    "factory_share": 0.4,
    "retail_overlap": 2,  # target sellers per product within a location
    "raw_demand_weight": 0.25,  # probability a consumer demands a factory product
    "batch_cap": 50,
    "order_up_to": 2.0,
    "init_inventory_steps": 4,
}


class GenerationError(RuntimeError):
    """World generation could not reach a demand-feasible economy."""


class ValidationError(ValueError):
    """A scenario/experiment document violates its schema; carries all messages."""

    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


@dataclass
class ScenarioSpec:
    """Sampling ranges plus fixed run parameters for one scenario family."""

    ranges: dict[str, tuple]
    T: int = 365
    dt: int = 1
    zeta: int = 1000
    seed: int = 0
    economy: dict = field(default_factory=lambda: dict(ECONOMY_DEFAULTS))

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        errors = []
        if not isinstance(data, dict):
            raise ValidationError(["scenario document must be a JSON object"])
        known_scalars = {"T", "dt", "zeta", "seed", "economy"}
        unknown = sorted(set(data) - set(TABLE_BOUNDS) - known_scalars)
        for key in unknown:
            errors.append(f"unknown field: {key}")
        missing = sorted(set(TABLE_BOUNDS) - set(data))
        for key in missing:
            errors.append(f"missing required field: {key} (range {TABLE_BOUNDS[key]})")

        ranges = {}
        for key, bounds in TABLE_BOUNDS.items():
            if key not in data:
                continue
            value = data[key]
            if (
                not isinstance(value, (list, tuple))
                or len(value) != 2
                or not all(isinstance(v, (int, float)) for v in value)
            ):
                errors.append(f"{key}: expected a [low, high] pair")
                continue
            lo, hi = value
            if lo > hi:
                errors.append(f"{key}: low {lo} exceeds high {hi}")
            if lo < bounds[0] or hi > bounds[1]:
                errors.append(f"{key}: range [{lo}, {hi}] outside legal range [{bounds[0]}, {bounds[1]}]")
            if key in INT_RANGE_FIELDS:
                lo, hi = int(lo), int(hi)
            ranges[key] = (lo, hi)

        economy = dict(ECONOMY_DEFAULTS)
        if "economy" in data:
            if not isinstance(data["economy"], dict):
                errors.append("economy: expected an object")
            else:
                for key, value in data["economy"].items():
                    if key not in ECONOMY_DEFAULTS:
                        errors.append(f"economy.{key}: unknown field")
                    else:
                        economy[key] = value
        m_lo, m_hi = economy["margin"]
        if m_lo < MARGIN_BOUNDS[0] or m_hi > MARGIN_BOUNDS[1] or m_lo > m_hi:
            errors.append(
                f"economy.margin: range [{m_lo}, {m_hi}] outside legal range "
                f"[{MARGIN_BOUNDS[0]}, {MARGIN_BOUNDS[1]}]"
            )

        spec = cls(
            ranges=ranges,
            T=int(data.get("T", 365)),
            dt=int(data.get("dt", 1)),
            zeta=int(data.get("zeta", 1000)),
            seed=int(data.get("seed", 0)),
            economy=economy,
        )
        if spec.T < 1:
            errors.append("T must be >= 1")
        if spec.zeta < 1:
            errors.append("zeta must be >= 1")
        if errors:
            raise ValidationError(errors)
        return spec

    def to_dict(self) -> dict:
        out = {k: list(v) for k, v in sorted(self.ranges.items())}
        out.update(T=self.T, dt=self.dt, zeta=self.zeta, seed=self.seed, economy=dict(self.economy))
        return out

    def with_range(self, key: str, lo, hi) -> "ScenarioSpec":
        ranges = dict(self.ranges)
        ranges[key] = (lo, hi)
        return ScenarioSpec(ranges, self.T, self.dt, self.zeta, self.seed, dict(self.economy))


@dataclass
class LocationInfo:
    id: int
    beta: float
    consumer_start: int
    consumer_stop: int

    @property
    def consumer_range(self) -> range:
        return range(self.consumer_start, self.consumer_stop)


@dataclass
class World:
    """Immutable t=0 snapshot of one generated economy."""

    locations: list[LocationInfo]
    products: list[Product]
    firms: list[FirmSpec]
    links: list[SupplyLink]
    consumers: ConsumerArrays
    initial_infected: list[int]
    theta: int
    gamma: int
    rho: float
    batch_cap: int
    order_up_to: float
    scenario: dict

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    def incumbent_links(self, fid: int) -> tuple[int, ...]:
        return tuple(l.id for l in self.links if l.buyer == fid and l.established)

    def candidate_links(self, fid: int) -> tuple[int, ...]:
        return tuple(l.id for l in self.links if l.buyer == fid)

    def local_firms(self, loc: int) -> list[int]:
        return [f.id for f in self.firms if f.location == loc]

    def to_json(self) -> str:
        doc = {
            "locations": [
                {"id": l.id, "beta": l.beta, "consumers": [l.consumer_start, l.consumer_stop]}
                for l in self.locations
            ],
            "products": [
                {
                    "id": p.id,
                    "price": p.price,
                    "prep_time": p.prep_time,
                    "ingredients": {str(k): v for k, v in sorted(p.ingredients.items())},
                    "rank": p.rank,
                }
                for p in self.products
            ],
            "firms": [
                {
                    "id": f.id,
                    "location": f.location,
                    "money": f.money,
                    "op_cost": f.op_cost,
                    "workers": list(f.workers),
                    "catalog": list(f.catalog),
                    "prices": {str(k): v for k, v in sorted(f.prices.items())},
                    "initial_inventory": {str(k): v for k, v in sorted(f.initial_inventory.items())},
                    "expected_sales": {str(k): v for k, v in sorted(f.expected_sales.items())},
                }
                for f in self.firms
            ],
            "links": [
                {
                    "id": l.id,
                    "seller": l.seller,
                    "buyer": l.buyer,
                    "product": l.product,
                    "setup_cost": l.setup_cost,
                    "lead_time": l.lead_time,
                    "unit_price": l.unit_price,
                    "established": l.established,
                }
                for l in self.links
            ],
            "consumers": {
                "money": self.consumers.money.tolist(),
                "salary": self.consumers.salary.tolist(),
                "home": self.consumers.home.tolist(),
                "base_demand": self.consumers.base_demand.tolist(),
                "demand_shift": self.consumers.demand_shift.tolist(),
                "employer": self.consumers.employer.tolist(),
            },
            "initial_infected": list(self.initial_infected),
            "epi": {"theta": self.theta, "gamma": self.gamma, "rho": self.rho},
            "economy": {"batch_cap": self.batch_cap, "order_up_to": self.order_up_to},
            "scenario": self.scenario,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "World":
        doc = json.loads(text)
        locations = [
            LocationInfo(d["id"], d["beta"], d["consumers"][0], d["consumers"][1])
            for d in doc["locations"]
        ]
        products = [
            Product(
                id=d["id"],
                price=d["price"],
                prep_time=d["prep_time"],
                ingredients={int(k): v for k, v in d["ingredients"].items()},
                rank=d["rank"],
            )
            for d in doc["products"]
        ]
        firms = [
            FirmSpec(
                id=d["id"],
                location=d["location"],
                money=d["money"],
                op_cost=d["op_cost"],
                workers=tuple(d["workers"]),
                catalog=tuple(d["catalog"]),
                prices={int(k): v for k, v in d["prices"].items()},
                initial_inventory={int(k): v for k, v in d["initial_inventory"].items()},
                expected_sales={int(k): v for k, v in d["expected_sales"].items()},
            )
            for d in doc["firms"]
        ]
        links = [
            SupplyLink(
                id=d["id"],
                seller=d["seller"],
                buyer=d["buyer"],
                product=d["product"],
                setup_cost=d["setup_cost"],
                lead_time=d["lead_time"],
                unit_price=d["unit_price"],
                established=d["established"],
            )
            for d in doc["links"]
        ]
        cons = doc["consumers"]
        consumers = ConsumerArrays(
            money=np.array(cons["money"], dtype=np.float64),
            salary=np.array(cons["salary"], dtype=np.float64),
            home=np.array(cons["home"], dtype=np.int64),
            base_demand=np.array(cons["base_demand"], dtype=np.int64),
            demand_shift=np.array(cons["demand_shift"], dtype=np.float64),
            employer=np.array(cons["employer"], dtype=np.int64),
        )
        return cls(
            locations=locations,
            products=products,
            firms=firms,
            links=links,
            consumers=consumers,
            initial_infected=list(doc["initial_infected"]),
            theta=doc["epi"]["theta"],
            gamma=doc["epi"]["gamma"],
            rho=doc["epi"]["rho"],
            batch_cap=doc["economy"]["batch_cap"],
            order_up_to=doc["economy"]["order_up_to"],
            scenario=doc["scenario"],
        )


def _randint(rng, lo: int, hi: int) -> int:
    return int(rng.integers(lo, hi + 1))


def _uniform(rng, lo: float, hi: float) -> float:
    return float(rng.uniform(lo, hi))


def chain_complete(supply_by_buyer, products, fid: int, pid: int, memo=None) -> bool:
    """True when the firm has established supply for every ingredient of pid,
    recursively down to factory products."""
    if memo is None:
        memo = {}
    key = (fid, pid)
    if key in memo:
        return memo[key]
    memo[key] = True  # provisional; recipe ranks strictly decrease, no cycles
    ok = True
    for ing in sorted(products[pid].ingredients):
        found = False
        for link in supply_by_buyer.get(fid, ()):
            if link.product != ing or not link.established:
                continue
            if chain_complete(supply_by_buyer, products, link.seller, ing, memo):
                found = True
                break
        if not found:
            ok = False
            break
    memo[key] = ok
    return ok


def demand_feasible(world: "World") -> bool:
    """Static check: per location and product, every local seller of a
    demanded product has a complete ingredient chain and their combined
    batch capacity covers base consumer demand."""
    by_buyer: dict[int, list[SupplyLink]] = {}
    for link in world.links:
        by_buyer.setdefault(link.buyer, []).append(link)
    memo: dict = {}
    base = world.consumers.base_demand
    for loc in world.locations:
        demand = base[loc.consumer_start : loc.consumer_stop].sum(axis=0)
        sellers: dict[int, list[int]] = {}
        for f in world.firms:
            if f.location != loc.id:
                continue
            for pid in f.catalog:
                sellers.setdefault(pid, []).append(f.id)
        for pid in np.flatnonzero(demand):
            pid = int(pid)
            capacity = 0
            for fid in sellers.get(pid, ()):
                if not chain_complete(by_buyer, world.products, fid, pid, memo):
                    return False
                capacity += world.batch_cap
            if capacity < int(demand[pid]):
                return False
    return True


def bootstrap_supply_chains(world: "World", rng) -> "World":
    """Establish random candidate links until the static demand check passes.

    Mutates link flags in place; raises GenerationError if even the full
    candidate universe cannot satisfy demand.
    """
    if demand_feasible(world):
        return world
    open_ids = [l.id for l in world.links if not l.established]
    order = rng.permutation(len(open_ids)) if open_ids else []
    for k in order:
        world.links[open_ids[int(k)]].established = True
        if demand_feasible(world):
            return world
    raise GenerationError("supply-chain bootstrap exhausted candidates without meeting demand")


def assign_prices(world: "World", rng, price_range, setup_factor_range, margin_range=MARGIN_BOUNDS) -> "World":
    """Post per-firm prices in recipe order and fill link fees.

    Factory products draw from the price range; composite postings are
    ingredient cost at the firm's current cheapest suppliers times one
    plus a margin sampled from margin_range (within [1%, 50%]).  Link
    unit prices snapshot the seller's posting; setup cost is unit price
    times a sampled factor.
    """
    postings: dict[tuple[int, int], float] = {}
    links_by_product: dict[int, list[SupplyLink]] = {}
    for link in world.links:
        links_by_product.setdefault(link.product, []).append(link)
    in_links: dict[tuple[int, int], list[SupplyLink]] = {}
    for link in world.links:
        in_links.setdefault((link.buyer, link.product), []).append(link)

    sellers_of: dict[int, list[int]] = {}
    for f in world.firms:
        for pid in f.catalog:
            sellers_of.setdefault(pid, []).append(f.id)

    for product in world.products:  # ids are rank-ordered
        pid = product.id
        for fid in sellers_of.get(pid, ()):
            if product.is_factory_product:
                posted = _uniform(rng, *price_range)
            else:
                cost = 0.0
                for ing, qty in sorted(product.ingredients.items()):
                    mine = in_links.get((fid, ing), [])
                    pool = [l for l in mine if l.established] or mine
                    if pool:
                        unit = min((postings[(l.seller, ing)], l.id) for l in pool)[0]
                    else:
                        # No candidate supplier: fall back to the cheapest posting anywhere.
                        unit = min(postings[(s, ing)] for s in sellers_of[ing])
                    cost += qty * unit
                posted = cost * (1.0 + _uniform(rng, *margin_range))
            postings[(fid, pid)] = posted
        for link in links_by_product.get(pid, ()):
            link.unit_price = postings[(link.seller, pid)]
            link.setup_cost = link.unit_price * _uniform(rng, *setup_factor_range)
        posted_here = [postings[(fid, pid)] for fid in sellers_of.get(pid, ())]
        product.price = min(posted_here) if posted_here else product.price

    for f in world.firms:
        f.prices = {pid: postings[(f.id, pid)] for pid in f.catalog}
    return world


def _product_demand_rates(world: "World") -> np.ndarray:
    """Expected per-step demand per product: retail base plus recipe pull."""
    P = len(world.products)
    rates = np.zeros(P)
    rates += world.consumers.base_demand.sum(axis=0)
    for product in reversed(world.products):  # high rank feeds low
        if rates[product.id] <= 0:
            continue
        for ing, qty in product.ingredients.items():
            rates[ing] += qty * rates[product.id]
    return rates


def _seed_inventories(world: "World", init_steps: int) -> None:
    """Start each firm near steady state: about two days of finished stock
    and init_steps days of ingredients for its expected demand share."""
    rates = _product_demand_rates(world)
    producers: dict[int, int] = {}
    for f in world.firms:
        for pid in f.catalog:
            producers[pid] = producers.get(pid, 0) + 1
    shelf_steps = min(1, init_steps)
    for f in world.firms:
        inv: dict[int, int] = {}
        expected: dict[int, float] = {}
        for pid in f.catalog:
            share = min(rates[pid] / max(producers.get(pid, 1), 1), world.batch_cap)
            expected[pid] = share
            inv[pid] = inv.get(pid, 0) + (int(math.ceil(share * shelf_steps)) or 1)
            for ing, qty in world.products[pid].ingredients.items():
                inv[ing] = inv.get(ing, 0) + qty * (int(math.ceil(share * init_steps)) or 1)
        f.initial_inventory = inv
        f.expected_sales = expected


def _generate_once(spec: ScenarioSpec, seed: int, attempt: int) -> World:
    rng = stream(seed, "worldgen", attempt)
    eco = spec.economy
    R = spec.ranges

    n_loc = _randint(rng, *R["locations"])
    consumers_per_loc = [_randint(rng, *R["consumers_per_location"]) for _ in range(n_loc)]
    firms_per_loc = [_randint(rng, *R["firms_per_location"]) for _ in range(n_loc)]
    n_products = _randint(rng, *R["products"])

    theta = _randint(rng, *R["theta"])
    gamma = _randint(rng, *R["gamma"])
    rho = _uniform(rng, *R["rho"])
    betas = [_uniform(rng, *R["beta"]) for _ in range(n_loc)]

    # Products: low ids are raw (factory) products, higher ids may have recipes.
    n_raw = max(1, int(round(n_products * eco["raw_product_share"])))
    products = [
        Product(id=pid, price=0.0, prep_time=_randint(rng, *eco["prep_time"]), ingredients={}, rank=pid)
        for pid in range(n_products)
    ]

    # Firms and catalogs.  Per location, factories deal a local subset of the
    # raw pool and the rest deal composites, cycling so that products get
    # roughly `retail_overlap` local sellers (price competition) and the same
    # product is produced in several locations (supplier diversity).
    firms: list[FirmSpec] = []
    fid = 0
    firm_locs: list[int] = []
    for loc in range(n_loc):
        for _ in range(firms_per_loc[loc]):
            firm_locs.append(loc)
            fid += 1
    n_firms = fid

    raw_pool = list(range(n_raw))
    composite_pool = list(range(n_raw, n_products))
    overlap = max(1, int(eco["retail_overlap"]))

    catalog_sizes = [_randint(rng, *R["retail_products_per_firm"]) for _ in range(n_firms)]
    catalogs: list[list[int]] = [[] for _ in range(n_firms)]

    local_firm_ids: list[list[int]] = [[] for _ in range(n_loc)]
    for f in range(n_firms):
        local_firm_ids[firm_locs[f]].append(f)

    # Factories are designated per location so every location keeps both
    # producers and retailers (each side big enough for seller overlap).
    factory_ids: set[int] = set()
    for loc in range(n_loc):
        fids = local_firm_ids[loc]
        count = int(round(len(fids) * eco["factory_share"]))
        count = min(max(count, min(overlap, len(fids) - 1)), max(len(fids) - overlap, 1))
        order = rng.permutation(len(fids))
        factory_ids.update(fids[int(i)] for i in order[:count])

    for loc in range(n_loc):
        loc_factories = [f for f in local_firm_ids[loc] if f in factory_ids]
        loc_retailers = [f for f in local_firm_ids[loc] if f not in factory_ids]
        for members, pool in ((loc_factories, raw_pool), (loc_retailers, composite_pool or raw_pool)):
            if not members or not pool:
                continue
            # Interleave slots firm-by-firm and cycle the picks so each
            # product lands on `overlap` distinct local sellers; on a
            # collision the slot rotates to the next pick.
            max_size = max(catalog_sizes[f] for f in members)
            slots = [f for r in range(max_size) for f in members if catalog_sizes[f] > r]
            n_pick = min(len(pool), max(1, len(slots) // overlap))
            picks = [pool[int(i)] for i in rng.choice(len(pool), size=n_pick, replace=False)]
            for i, f in enumerate(slots):
                for probe in range(n_pick):
                    pid = picks[(i + probe) % n_pick]
                    if pid not in catalogs[f]:
                        catalogs[f].append(pid)
                        break

    produced = sorted({pid for cat in catalogs for pid in cat})
    produced_set = set(produced)

    # Recipes for produced composite products, drawn from produced lower ranks.
    for pid in produced:
        if pid < n_raw:
            continue
        lower = [q for q in produced if q < pid]
        if not lower:
            continue  # becomes a factory product by necessity
        k = _randint(rng, *R["ingredients_per_product"])
        k = min(k, len(lower))
        chosen = sorted(int(i) for i in rng.choice(len(lower), size=k, replace=False))
        products[pid].ingredients = {lower[i]: 1 for i in chosen}

    # Consumers.
    total_consumers = sum(consumers_per_loc)
    money = np.empty(total_consumers)
    salary = np.empty(total_consumers)
    home = np.empty(total_consumers, dtype=np.int64)
    base_demand = np.zeros((total_consumers, n_products), dtype=np.int64)
    demand_shift = np.zeros((total_consumers, n_products))
    employer = np.full(total_consumers, -1, dtype=np.int64)

    locations: list[LocationInfo] = []
    start = 0
    for loc in range(n_loc):
        stop = start + consumers_per_loc[loc]
        locations.append(LocationInfo(loc, betas[loc], start, stop))
        money[start:stop] = rng.uniform(*R["consumer_money"], size=stop - start)
        salary[start:stop] = rng.uniform(*R["salary"], size=stop - start)
        home[start:stop] = loc
        start = stop

    # Workers: disjoint subsets of local consumers, at least one per firm.
    workers_of: dict[int, tuple[int, ...]] = {}
    for loc in range(n_loc):
        pool = list(locations[loc].consumer_range)
        pool = [pool[int(i)] for i in rng.permutation(len(pool))]
        cursor = 0
        fids = local_firm_ids[loc]
        for order, f in enumerate(fids):
            reserve = len(fids) - order - 1
            available = len(pool) - cursor - reserve
            want = _randint(rng, *R["workers"])
            take = max(1, min(want, available))
            chosen = pool[cursor : cursor + take]
            cursor += take
            workers_of[f] = tuple(sorted(chosen))
            employer[list(chosen)] = f

    # Consumer demand over locally retailed products.  Composite products
    # carry most retail demand; factory products get a weighted share so
    # factories earn retail income without dominating.
    raw_weight = float(eco["raw_demand_weight"])
    local_comp: list[list[int]] = []
    local_raw: list[list[int]] = []
    for loc in range(n_loc):
        offered = sorted({pid for f in local_firm_ids[loc] for pid in catalogs[f]})
        local_comp.append([pid for pid in offered if products[pid].ingredients])
        local_raw.append([pid for pid in offered if not products[pid].ingredients])
    shift_lo, shift_hi = eco["demand_shift"]
    for loc in range(n_loc):
        comp, raw = local_comp[loc], local_raw[loc]
        if not comp and not raw:
            raise GenerationError(f"location {loc} has no retail products")
        for ci in locations[loc].consumer_range:
            k = _randint(rng, *eco["demand_products"])
            chosen: list[int] = []
            for _ in range(k):
                pool = raw if (raw and (not comp or rng.random() < raw_weight)) else comp
                pid = pool[int(rng.integers(0, len(pool)))]
                if pid not in chosen:
                    chosen.append(pid)
            for pid in chosen:
                qty = _randint(rng, *eco["demand_units"])
                base_demand[ci, pid] = qty
                demand_shift[ci, pid] = qty * _uniform(rng, shift_lo, shift_hi)

    # Firm money and operating cost.
    for f in range(n_firms):
        money0 = _uniform(rng, *R["firm_money"])
        op_cost = money0 * _uniform(rng, *R["op_cost_fraction"])
        firms.append(
            FirmSpec(
                id=f,
                location=firm_locs[f],
                money=money0,
                op_cost=op_cost,
                workers=workers_of[f],
                catalog=tuple(catalogs[f]),
                prices={},
                initial_inventory={},
            )
        )

    # Candidate link universe: any producer of an input a firm needs.
    sellers_of: dict[int, list[int]] = {}
    for f in firms:
        for pid in f.catalog:
            sellers_of.setdefault(pid, []).append(f.id)
    links: list[SupplyLink] = []
    for f in firms:
        needed = sorted({ing for pid in f.catalog for ing in products[pid].ingredients})
        for ing in needed:
            for seller in sellers_of.get(ing, ()):
                if seller == f.id:
                    continue
                links.append(
                    SupplyLink(
                        id=len(links),
                        seller=seller,
                        buyer=f.id,
                        product=ing,
                        setup_cost=0.0,
                        lead_time=_randint(rng, *eco["lead_time"]),
                        unit_price=0.0,
                        established=False,
                    )
                )

    consumers = ConsumerArrays(
        money=money,
        salary=salary,
        home=home,
        base_demand=base_demand,
        demand_shift=demand_shift,
        employer=employer,
    )
    initial_infected = [
        int(loc.consumer_start + rng.integers(0, loc.consumer_stop - loc.consumer_start))
        for loc in locations
    ]

    world = World(
        locations=locations,
        products=products,
        firms=firms,
        links=links,
        consumers=consumers,
        initial_infected=initial_infected,
        theta=theta,
        gamma=gamma,
        rho=rho,
        batch_cap=int(eco["batch_cap"]),
        order_up_to=float(eco["order_up_to"]),
        scenario=spec.to_dict(),
    )

    bootstrap_supply_chains(world, stream(seed, "bootstrap", attempt))
    assign_prices(
        world,
        stream(seed, "prices", attempt),
        R["product_price"],
        eco["setup_cost_factor"],
        tuple(eco["margin"]),
    )
    _seed_inventories(world, int(eco["init_inventory_steps"]))
    if not produced_set:
        raise GenerationError("no products were assigned to any firm")
    return world


def generate_world(spec: ScenarioSpec, seed: int, max_attempts: int = 20) -> World:
    """Sample a demand-feasible world; resamples on bootstrap failure."""
    if not spec.ranges.get("products") or spec.ranges["products"][1] < 1:
        raise ValidationError(["products: at least one product is required"])
    last_error = None
    for attempt in range(max_attempts):
        try:
            return _generate_once(spec, seed, attempt)
        except GenerationError as err:
            last_error = err
    raise GenerationError(f"no feasible world after {max_attempts} attempts: {last_error}")
