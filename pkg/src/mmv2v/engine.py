"""Per-timeslot association: snapshot, channel sampling, preferences, matching,
half-duplex scheduling and data-exchange accounting."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .channel import (LinkBudgetParams, McsTable, interference_mw,
                      link_rate, link_sinr_matrix, noise_power_dbm, received_power_dbm,
                      sinr_db)
from .matching import Matching, SfInstance, solve
from .scenario import (Geometry, GeometryConfig, Kind, TraceSet, VehicleState,
                       build_manhattan_grid, generate_traces, los_matrix)
from .utility import (PreferenceList, UtilityWeights, build_preference_list, regional_data_all,
                      sort_entries)

logger = logging.getLogger(__name__)


class ConstraintViolation(AssertionError):
    pass


@dataclass(frozen=True)
class Beacon:
    id: int
    kind: Kind
    position: tuple[float, float]
    heading: float
    speed: float
    g: float
    Q: float


@dataclass(frozen=True)
class BeaconSnapshot:
    t: int
    beacons: Mapping[int, Beacon]


@dataclass(frozen=True)
class SlotSchedule:
    slot_count: int
    assignment: Mapping[tuple[int, int], int]

    def slots(self) -> dict[int, list[tuple[int, int]]]:
        out: dict[int, list[tuple[int, int]]] = {}
        for pair, s in sorted(self.assignment.items()):
            out.setdefault(s, []).append(pair)
        return out


@dataclass(frozen=True)
class VehicleReport:
    id: int
    kind: Kind
    partners: tuple[int, ...]
    rates: tuple[float, ...]        # Gbit/s per link, same order as partners
    rates_max: tuple[float, ...]
    sent: float                     # Gbit
    received: float                 # Gbit
    avg_rate: float                 # C_i, Gbit/s
    utilisation: float
    regional_data: float            # own Q_i
    regional_access: float          # sum of partners' Q_j
    effective_capacity: int
    emergency_partners: int
    regular_partners: int

    @property
    def degree(self) -> int:
        return len(self.partners)

    @property
    def exchanged(self) -> float:
        return self.sent + self.received


@dataclass(frozen=True)
class TimeslotReport:
    t: int
    vehicles: tuple[VehicleReport, ...]
    matching: Matching
    schedule: SlotSchedule
    fallback: bool = False
    unsolvable_reason: str | None = None
    objective: float = 0.0

    def vehicle(self, vid: int) -> VehicleReport:
        for v in self.vehicles:
            if v.id == vid:
                return v
        raise KeyError(vid)


@dataclass
class SimulationResult:
    reports: list[TimeslotReport]
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.reports)


G_UNITS = ("per_second", "per_slot")
EXCHANGE_MODELS = ("copy", "drawdown")


@dataclass(frozen=True)
class EngineConfig:
    capacity: int = 3
    weights: UtilityWeights = UtilityWeights()
    link: LinkBudgetParams = LinkBudgetParams()
    interference: bool = False
    vehicle_blockage: bool = False
    consistency_check: bool = True
    check_constraints: bool = True
    g_units: str = "per_slot"       # per_slot: budget g; per_second: budget g*T_s
    exchange: str = "drawdown"      # drawdown: one budget shared by all links; copy: full budget on each link

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.g_units not in G_UNITS:
            raise ValueError(f"g_units must be one of {G_UNITS}")
        if self.exchange not in EXCHANGE_MODELS:
            raise ValueError(f"exchange must be one of {EXCHANGE_MODELS}")


@dataclass(frozen=True)
class World:
    traces: TraceSet
    geometry: Geometry
    table: McsTable


def effective_capacity(configured: int, candidate_rates: Sequence[float]) -> int:
    """Largest k <= configured whose time-shared average rate stays under every chosen link's rate.

    The k fastest candidates are chosen; their average ``sum(r)/k`` must not
    exceed the slowest of them. At least 1 whenever a candidate exists.
    """
    if configured < 1:
        raise ValueError("configured capacity must be >= 1")
    rates = sorted((float(r) for r in candidate_rates if r > 0), reverse=True)
    if not rates:
        return configured
    best = 1
    for k in range(1, min(configured, len(rates)) + 1):
        chosen = rates[:k]
        if sum(chosen) / k <= min(chosen) * (1 + 1e-12):
            best = k
    return best


def _pair_order(utility: np.ndarray, index: Mapping[int, int], pairs) -> list[tuple[int, int]]:
    def score(p):
        a, b = index[p[0]], index[p[1]]
        return (-(utility[a, b] + utility[b, a]), p)
    return sorted(pairs, key=score)


def schedule_links(matching: Matching, order: Sequence[tuple[int, int]] | None = None) -> SlotSchedule:
    """Greedy edge colouring: each pair takes the lowest slot free at both ends.

    ``order`` gives the colouring order (highest utility first); by default
    pairs are taken in sorted order.
    """
    pairs = list(order) if order is not None else sorted(matching.pairs)
    busy: dict[int, set[int]] = {}
    assignment = {}
    for a, b in pairs:
        used = busy.get(a, set()) | busy.get(b, set())
        s = 0
        while s in used:
            s += 1
        assignment[(a, b)] = s
        busy.setdefault(a, set()).add(s)
        busy.setdefault(b, set()).add(s)
    count = max(assignment.values()) + 1 if assignment else 0
    return SlotSchedule(slot_count=count, assignment=assignment)


def exchanged_data(rate: float, slot_count: int, slot_duration: float,
                   budget_i: float, budget_j: float) -> tuple[float, float]:
    """Data each endpoint pushes over one scheduled pair.

    The pair owns one of ``slot_count`` equal slots, split evenly between the
    two directions; each side is further limited by its remaining budget.
    """
    if rate <= 0 or slot_count <= 0:
        return 0.0, 0.0
    cap = rate * slot_duration / (2 * slot_count)
    return min(max(budget_i, 0.0), cap), min(max(budget_j, 0.0), cap)


def greedy_pairing(prefs: Mapping[int, PreferenceList], capacities: Mapping[int, int],
                   utility: np.ndarray, index: Mapping[int, int]) -> Matching:
    """Fallback: take acceptable pairs by descending joint utility while capacity allows."""
    pairs = {(min(i, j), max(i, j)) for i, pl in prefs.items() for j in pl.candidates}
    load = {i: 0 for i in prefs}
    chosen = set()
    for a, b in _pair_order(utility, index, pairs):
        if load[a] < capacities[a] and load[b] < capacities[b]:
            chosen.add((a, b))
            load[a] += 1
            load[b] += 1
    return Matching(frozenset(chosen))


@dataclass
class _SlotState:
    """Vectorised per-timeslot quantities over vehicles sorted by id."""

    ids: list[int]
    states: tuple[VehicleState, ...]
    pos: np.ndarray
    heading: np.ndarray
    tau: np.ndarray
    g: np.ndarray
    Q: np.ndarray
    dist: np.ndarray
    shadow: np.ndarray
    los: np.ndarray
    rate: np.ndarray
    rate_max: np.ndarray
    admissible: np.ndarray
    utility: np.ndarray


def build_snapshot(t: int, states: Sequence[VehicleState], radius: float) -> BeaconSnapshot:
    pos = np.array([(s.x, s.y) for s in states], dtype=float).reshape(-1, 2)
    Q = regional_data_all(pos, np.array([s.g for s in states]), radius) if states else []
    beacons = {s.id: Beacon(s.id, s.kind, (s.x, s.y), s.heading, s.speed, s.g, float(q))
               for s, q in zip(states, Q)}
    return BeaconSnapshot(t=t, beacons=beacons)


def _sample_slot(states: Sequence[VehicleState], snapshot: BeaconSnapshot, world: World,
                 config: EngineConfig, rng: np.random.Generator) -> _SlotState:
    n = len(states)
    ids = [s.id for s in states]
    pos = np.array([(s.x, s.y) for s in states], dtype=float)
    heading = np.array([s.heading for s in states])
    tau = np.array([1.0 if s.kind is Kind.EMERGENCY else 0.5 for s in states])
    g = np.array([s.g for s in states])
    Q = np.array([snapshot.beacons[i].Q for i in ids])
    R = config.weights.radius
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])

    # one draw per unordered pair per timeslot, taken in row-major order
    iu, ju = np.triu_indices(n, k=1)
    shadow = np.zeros((n, n))
    draws = rng.normal(0.0, config.link.shadow_sigma, len(iu)) if config.link.shadow_sigma > 0 else np.zeros(len(iu))
    shadow[iu, ju] = draws
    shadow[ju, iu] = draws

    los = los_matrix(world.geometry, pos, vehicle_blockage=config.vehicle_blockage)
    off_diag = ~np.eye(n, dtype=bool)
    within = off_diag & (dist <= R) & (dist > 0)
    rate = world.table.rate_for(link_sinr_matrix(dist, config.link, shadow))
    nominal = world.table.rate_for(link_sinr_matrix(dist, config.link, 0.0))
    rate = np.where(off_diag, rate, 0.0)
    rate_max = np.maximum(np.where(off_diag, nominal, 0.0), rate)
    admissible = within & los & (rate > 0)

    w = config.weights
    dphi = np.abs(heading[:, None] - heading[None, :]) % (2 * math.pi)
    phi = np.minimum(dphi, 2 * math.pi - dphi)
    score = w.w1 * (R - dist) / R + w.w2 * (math.pi - phi) / math.pi
    ratio = np.divide(rate, rate_max, out=np.zeros_like(rate), where=rate_max > 0)
    qstar = Q / Q.max() if n else Q
    utility = np.where(admissible, tau[None, :] * qstar[None, :] * score * np.minimum(ratio, 1.0), 0.0)
    return _SlotState(ids, tuple(states), pos, heading, tau, g, Q, dist, shadow, los,
                      rate, rate_max, admissible, utility)


def _preferences(slot: _SlotState, config: EngineConfig) -> dict[int, PreferenceList]:
    prefs = {}
    for a, i in enumerate(slot.ids):
        cand = np.flatnonzero(slot.admissible[a])
        entries = sort_entries([(slot.ids[b], float(slot.utility[a, b])) for b in cand])
        cap = effective_capacity(config.capacity, slot.rate_max[a, cand])
        prefs[i] = PreferenceList(owner=i, entries=entries, capacity=cap)
    return prefs


def _local_check(i: int, snapshot: BeaconSnapshot, slot: _SlotState, prefs, world: World,
                 config: EngineConfig) -> None:
    """Rebuild one vehicle's list from the snapshot alone and compare with the global one."""
    shadow = {(slot.ids[a], slot.ids[b]): float(slot.shadow[a, b])
              for a in range(len(slot.ids)) for b in range(a + 1, len(slot.ids))}
    local = build_preference_list(i, snapshot, world.geometry, config.link, world.table,
                                  config.weights, config.capacity, shadow=shadow,
                                  vehicle_blockage=config.vehicle_blockage)
    glob = prefs[i]
    if local.candidates != glob.candidates:
        raise ConstraintViolation(
            f"t={snapshot.t}: vehicle {i} local candidates {local.candidates} != global {glob.candidates}")
    for (_, ul), (_, ug) in zip(local.entries, glob.entries):
        if not math.isclose(ul, ug, rel_tol=1e-9, abs_tol=1e-12):
            raise ConstraintViolation(f"t={snapshot.t}: vehicle {i} utility mismatch {ul} vs {ug}")
    me = snapshot.beacons[i]
    rmax = []
    for j in local.candidates:
        d = math.dist(me.position, snapshot.beacons[j].position)
        s = shadow[(min(i, j), max(i, j))]
        rmax.append(max(link_rate(d, config.link, world.table), link_rate(d, config.link, world.table, s)))
    if effective_capacity(config.capacity, rmax) != glob.capacity:
        raise ConstraintViolation(f"t={snapshot.t}: vehicle {i} capacity mismatch")


def _link_rates_with_interference(slot: _SlotState, matching: Matching, schedule: SlotSchedule,
                                  index: Mapping[int, int], world: World,
                                  config: EngineConfig) -> dict[tuple[int, int], float]:
    # per directed link: both endpoints of every other pair in the same slot may be transmitting
    rates = {}
    noise = noise_power_dbm(config.link)
    by_slot = schedule.slots()
    for (a, b), s in schedule.assignment.items():
        others = [p for p in by_slot[s] if p != (a, b)]
        worst = math.inf
        for tx, rx in ((a, b), (b, a)):
            itx, irx = index[tx], index[rx]
            transmitters, shadows = [], []
            for p, q in others:
                for u, v in ((p, q), (q, p)):
                    transmitters.append((tuple(slot.pos[index[u]]), tuple(slot.pos[index[v]])))
                    shadows.append(float(slot.shadow[index[u], irx]))
            i_mw = interference_mw(tuple(slot.pos[irx]), tuple(slot.pos[itx]), transmitters,
                                   world.geometry, config.link, shadow=shadows)
            prx = received_power_dbm(slot.dist[itx, irx], config.link, slot.shadow[itx, irx])
            worst = min(worst, world.table.rate_for(sinr_db(prx, noise, i_mw)))
        rates[(a, b)] = float(worst)
    return rates


def _check(report_t: int, slot: _SlotState, matching: Matching, prefs, schedule: SlotSchedule,
           index, config: EngineConfig, sent, received) -> None:
    R = config.weights.radius
    for a, b in matching.pairs:
        ia, ib = index[a], index[b]
        if not slot.los[ia, ib]:
            raise ConstraintViolation(f"t={report_t}: pair ({a},{b}) not in LOS")
        if slot.dist[ia, ib] > R:
            raise ConstraintViolation(f"t={report_t}: pair ({a},{b}) beyond radius")
    for i, d in matching.degrees().items():
        if d > prefs[i].capacity or d > config.capacity:
            raise ConstraintViolation(f"t={report_t}: vehicle {i} degree {d} exceeds capacity")
    busy = set()
    for (a, b), s in schedule.assignment.items():
        for v in (a, b):
            if (v, s) in busy:
                raise ConstraintViolation(f"t={report_t}: vehicle {v} twice in slot {s}")
            busy.add((v, s))
    if not math.isclose(sum(sent.values()), sum(received.values()), rel_tol=1e-12, abs_tol=1e-12):
        raise ConstraintViolation(f"t={report_t}: data sent != data received")


def run_timeslot(world: World, t: int, config: EngineConfig, rng: np.random.Generator) -> TimeslotReport:
    """Associate, schedule and account data for one timeslot."""
    states = world.traces.vehicles(t)
    if not states:
        return TimeslotReport(t, (), Matching(), SlotSchedule(0, {}))
    T_s = world.traces.slot_duration
    snapshot = build_snapshot(t, states, config.weights.radius)
    slot = _sample_slot(states, snapshot, world, config, rng)
    index = {i: k for k, i in enumerate(slot.ids)}
    prefs = _preferences(slot, config)
    if config.consistency_check:
        _local_check(slot.ids[t % len(slot.ids)], snapshot, slot, prefs, world, config)

    outcome = solve(SfInstance.from_preference_lists(prefs.values()))
    fallback = not outcome.solvable
    caps = {i: pl.capacity for i, pl in prefs.items()}
    if fallback:
        matching = greedy_pairing(prefs, caps, slot.utility, index)
    else:
        matching = outcome.matching

    schedule = schedule_links(matching, _pair_order(slot.utility, index, matching.pairs))
    T = schedule.slot_count
    if config.interference:
        link_rate_of = _link_rates_with_interference(slot, matching, schedule, index, world, config)
    else:
        link_rate_of = {p: float(slot.rate[index[p[0]], index[p[1]]]) for p in matching.pairs}

    partners = {i: [j for j, _ in prefs[i].entries if (i, j) in matching] for i in slot.ids}
    # links are served in the sender's preference order; under drawdown a
    # higher-utility partner may exhaust the budget before later ones
    scale = T_s if config.g_units == "per_second" else 1.0
    sent = {i: 0.0 for i in slot.ids}
    received = {i: 0.0 for i in slot.ids}
    for i in slot.ids:
        budget = float(slot.g[index[i]]) * scale
        for j in partners[i]:
            r = link_rate_of[(min(i, j), max(i, j))]
            amount, _ = exchanged_data(r, T, T_s, budget, 0.0)
            if config.exchange == "drawdown":
                budget -= amount
            sent[i] += amount
            received[j] += amount

    if config.check_constraints:
        _check(t, slot, matching, prefs, schedule, index, config, sent, received)

    vehicles = []
    objective = 0.0
    for i in slot.ids:
        a = index[i]
        ps = tuple(partners[i])
        rates = tuple(link_rate_of[(min(i, j), max(i, j))] for j in ps)
        rmax = tuple(float(slot.rate_max[a, index[j]]) for j in ps)
        exchanged = sent[i] + received[i]
        best = max(rmax) if rmax else 0.0
        util = exchanged / (T_s * best) if best > 0 else 0.0
        objective += sum(float(slot.utility[a, index[j]]) for j in ps)
        n_e = sum(1 for j in ps if slot.states[index[j]].kind is Kind.EMERGENCY)
        vehicles.append(VehicleReport(
            id=i, kind=slot.states[a].kind, partners=ps, rates=rates, rates_max=rmax,
            sent=sent[i], received=received[i],
            avg_rate=sum(rates) / T if T else 0.0,
            utilisation=util, regional_data=float(slot.Q[a]),
            regional_access=float(sum(slot.Q[index[j]] for j in ps)),
            effective_capacity=prefs[i].capacity,
            emergency_partners=n_e, regular_partners=len(ps) - n_e))
    return TimeslotReport(t=t, vehicles=tuple(vehicles), matching=matching, schedule=schedule,
                          fallback=fallback, unsolvable_reason=outcome.reason, objective=objective)


def config_hash(obj) -> str:
    payload = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def run_scenario(world: World, config: EngineConfig, seed: int,
                 timeslots: Sequence[int] | None = None, extra_meta: dict | None = None) -> SimulationResult:
    """Run every timeslot in order with a channel stream seeded by ``seed``."""
    available = world.traces.timeslots()
    slots = available if timeslots is None else list(timeslots)
    missing = sorted(set(slots) - set(available))
    if missing:
        raise KeyError(f"timeslots {missing[:5]} not present in traces")
    rng = np.random.default_rng([seed, 1])
    reports = [run_timeslot(world, t, config, rng) for t in slots]
    meta = {
        "seed": seed,
        "timeslots": len(reports),
        "vehicles": len(world.traces.vehicle_ids()),
        "fallback_slots": sum(r.fallback for r in reports),
        "engine": asdict(config),
    }
    if extra_meta:
        meta.update(extra_meta)
    meta["config_hash"] = config_hash({"engine": meta["engine"], "config": meta.get("config")})
    return SimulationResult(reports=reports, metadata=meta)


def default_world(seed: int, vehicle_count: int = 20, duration: int = 300,
                  ecav_probability: float = 0.15, geometry: GeometryConfig = GeometryConfig(),
                  table: McsTable | None = None, **trace_kwargs) -> World:
    geo = build_manhattan_grid(geometry)
    traces = generate_traces(geo, vehicle_count, ecav_probability, duration, seed, **trace_kwargs)
    return World(traces=traces, geometry=geo, table=table or McsTable.default())
