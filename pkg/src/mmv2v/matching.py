"""Stable Fixtures matching: two-phase solver, stability checks and an exhaustive oracle.

Agents are integer ids. A preference list is a strictly ordered tuple of
acceptable partners (best first) and every agent has a capacity ``c_i >= 1``.
The solver follows the bid / rotation-elimination scheme of Irving and Scott:

* phase 1: every agent bids for its best ``min(c_i, |P_i|)`` entries; an agent
  holding at least ``c_j`` bids deletes every entry ranked below its
  ``c_j``-th best bidder (from both lists);
* phase 2: with ``d_i`` fixed from the phase-1 table, an odd ``sum(d_i)`` means
  no stable matching; otherwise rotations are exposed from agents with long
  lists and eliminated until every list has exactly ``d_i`` entries, or some
  list drops below ``d_i``.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

ODD_DEGREE_SUM = "odd-degree-sum"
SHORT_LIST = "short-list"

ORACLE_MAX_AGENTS = 8


class InvalidInstance(ValueError):
    pass


def _pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class SfInstance:
    """A Stable Fixtures instance: strict preference lists plus capacities."""

    prefs: Mapping[int, tuple[int, ...]]
    capacities: Mapping[int, int]

    def __post_init__(self):
        prefs = {int(i): tuple(int(j) for j in p) for i, p in self.prefs.items()}
        caps = {int(i): int(c) for i, c in self.capacities.items()}
        object.__setattr__(self, "prefs", prefs)
        object.__setattr__(self, "capacities", caps)
        self.validate()

    @classmethod
    def from_lists(cls, prefs: Mapping[int, Sequence[int]],
                   capacities: Mapping[int, int] | int = 1) -> "SfInstance":
        if isinstance(capacities, int):
            capacities = {i: capacities for i in prefs}
        return cls(prefs={i: tuple(p) for i, p in prefs.items()}, capacities=dict(capacities))

    @classmethod
    def from_preference_lists(cls, lists: Iterable) -> "SfInstance":
        """Build from objects exposing ``owner``, ``candidates`` and ``capacity``."""
        lists = list(lists)
        return cls(prefs={pl.owner: tuple(pl.candidates) for pl in lists},
                   capacities={pl.owner: pl.capacity for pl in lists})

    @property
    def agents(self) -> list[int]:
        return sorted(self.prefs)

    def validate(self) -> None:
        if set(self.prefs) != set(self.capacities):
            raise InvalidInstance("preferences and capacities cover different agents")
        for i, p in self.prefs.items():
            if self.capacities[i] < 1:
                raise InvalidInstance(f"agent {i}: capacity must be >= 1")
            if i in p:
                raise InvalidInstance(f"agent {i}: lists itself")
            if len(set(p)) != len(p):
                raise InvalidInstance(f"agent {i}: preference list is not strict")
            for j in p:
                if j not in self.prefs:
                    raise InvalidInstance(f"agent {i}: unknown agent {j}")
                if i not in self.prefs[j]:
                    raise InvalidInstance(f"agents {i} and {j} are not mutually acceptable")

    def acceptable_pairs(self) -> list[tuple[int, int]]:
        return sorted({_pair(i, j) for i, p in self.prefs.items() for j in p})

    def rank(self, i: int, j: int) -> int:
        return self.prefs[i].index(j)

    def dumps(self) -> str:
        lines = [f"{i}:{self.capacities[i]}:{','.join(map(str, self.prefs[i]))}"
                 for i in self.agents]
        return "\n".join(lines) + "\n"

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "SfInstance":
        prefs, caps = {}, {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                sid, scap, slist = line.split(":")
                i, cap = int(sid), int(scap)
                entries = tuple(int(x) for x in slist.split(",") if x.strip())
            except ValueError as exc:
                raise InvalidInstance(f"line {lineno}: cannot parse {line!r}") from exc
            if i in prefs:
                raise InvalidInstance(f"line {lineno}: duplicate agent {i}")
            prefs[i], caps[i] = entries, cap
        return cls(prefs=prefs, capacities=caps)

    @classmethod
    def load(cls, path) -> "SfInstance":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Matching:
    """Symmetric set of unordered pairs; ``(i, j)`` is stored with ``i < j``."""

    pairs: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        pairs = set()
        for i, j in self.pairs:
            if i == j:
                raise ValueError(f"self-pair ({i}, {j})")
            pairs.add(_pair(int(i), int(j)))
        object.__setattr__(self, "pairs", frozenset(pairs))

    def __contains__(self, pair) -> bool:
        i, j = pair
        return _pair(i, j) in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(sorted(self.pairs))

    def partners(self, i: int) -> set[int]:
        return {b if a == i else a for a, b in self.pairs if i in (a, b)}

    def degree(self, i: int) -> int:
        return sum(1 for p in self.pairs if i in p)

    def degrees(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for a, b in self.pairs:
            out[a] = out.get(a, 0) + 1
            out[b] = out.get(b, 0) + 1
        return out

    def as_matrix(self, agents: Sequence[int]) -> np.ndarray:
        """Binary link matrix ``m_ij`` over ``agents`` (symmetric, zero diagonal)."""
        index = {a: k for k, a in enumerate(agents)}
        m = np.zeros((len(agents), len(agents)), dtype=np.int8)
        for a, b in self.pairs:
            m[index[a], index[b]] = m[index[b], index[a]] = 1
        return m


@dataclass(frozen=True)
class SfOutcome:
    matching: Matching | None
    reason: str | None = None

    @property
    def solvable(self) -> bool:
        return self.matching is not None


@dataclass(frozen=True)
class Phase1Result:
    bids: frozenset          # ordered (bidder, target) pairs
    prefs: dict              # reduced preference lists
    capacities: dict


class _Table:
    """Mutable reduced preference table with bid bookkeeping.

    Entries are never reinserted, so the "next target" pointer of an agent
    only moves forward and the tail pointer only moves backward.
    """

    def __init__(self, prefs: Mapping[int, Sequence[int]], capacities: Mapping[int, int]):
        self.cap = dict(capacities)
        self.order = {i: list(p) for i, p in prefs.items()}
        self.pos = {i: {j: k for k, j in enumerate(p)} for i, p in self.order.items()}
        self.alive = {i: [True] * len(p) for i, p in self.order.items()}
        self.size = {i: len(p) for i, p in self.order.items()}
        self.head = {i: 0 for i in self.order}
        self.tail = {i: len(p) - 1 for i, p in self.order.items()}
        self.targets: dict[int, set[int]] = {i: set() for i in self.order}
        self.bidders: dict[int, set[int]] = {i: set() for i in self.order}
        self.pending: deque[int] = deque()

    def entries(self, i: int) -> list[int]:
        return [j for j, ok in zip(self.order[i], self.alive[i]) if ok]

    def is_alive(self, i: int, j: int) -> bool:
        k = self.pos[i].get(j)
        return k is not None and self.alive[i][k]

    def quota(self, i: int) -> int:
        return min(self.cap[i], self.size[i])

    def next_target(self, i: int) -> int:
        """First entry of ``P_i`` that ``i`` has not bid for."""
        order, alive, targets = self.order[i], self.alive[i], self.targets[i]
        k = self.head[i]
        while not alive[k] or order[k] in targets:
            k += 1
        self.head[i] = k
        return order[k]

    def worst_bidder(self, j: int) -> int:
        return max(self.bidders[j], key=self.pos[j].__getitem__)

    def delete(self, x: int, y: int) -> None:
        """Remove the pair {x, y} from both lists and any bids between them."""
        for a, b in ((x, y), (y, x)):
            k = self.pos[a][b]
            if self.alive[a][k]:
                self.alive[a][k] = False
                self.size[a] -= 1
            if b in self.targets[a]:
                self.targets[a].discard(b)
                self.bidders[b].discard(a)
                self.pending.append(a)

    def bid(self, i: int) -> None:
        j = self.next_target(i)
        self.targets[i].add(j)
        self.bidders[j].add(i)
        if len(self.bidders[j]) >= self.cap[j]:
            self.prune(j)

    def prune(self, j: int) -> None:
        """Delete every entry of ``P_j`` ranked below its ``c_j``-th best bidder."""
        ranked = sorted(self.bidders[j], key=self.pos[j].__getitem__)
        cutoff = self.pos[j][ranked[self.cap[j] - 1]]
        k = self.tail[j]
        while k > cutoff:
            if self.alive[j][k]:
                self.delete(j, self.order[j][k])
            k -= 1
        self.tail[j] = min(self.tail[j], cutoff)

    def settle(self, agents: Iterable[int]) -> None:
        """Let agents bid until each holds ``min(c_i, |P_i|)`` targets."""
        self.pending.extend(agents)
        while self.pending:
            i = self.pending.popleft()
            while len(self.targets[i]) < self.quota(i):
                self.bid(i)

    def bids(self) -> frozenset:
        return frozenset((i, j) for i, ts in self.targets.items() for j in ts)


def sf_phase1(instance: SfInstance) -> Phase1Result:
    """Run the bidding phase and return the bid set and the reduced lists."""
    table = _Table(instance.prefs, instance.capacities)
    table.settle(instance.agents)
    return Phase1Result(bids=table.bids(),
                        prefs={i: tuple(table.entries(i)) for i in instance.agents},
                        capacities=dict(instance.capacities))


def _find_rotation(table: _Table, start: int) -> list[tuple[int, int]]:
    # walk i -> f(i) -> worst bidder of f(i) until an agent repeats
    seen: dict[int, int] = {}
    walk: list[int] = []
    i = start
    while i not in seen:
        seen[i] = len(walk)
        walk.append(i)
        i = table.worst_bidder(table.next_target(i))
    cycle = walk[seen[i]:]
    # pairs (i_k, j_k) where i_k is j_k's worst bidder and j_k = f(i_{k-1})
    rotation = []
    for k, agent in enumerate(cycle):
        j = table.next_target(cycle[k - 1])
        rotation.append((agent, j))
    return rotation


def sf_phase2(phase1: Phase1Result, stats: dict | None = None) -> SfOutcome:
    """Eliminate rotations from the phase-1 table until it is a matching."""
    prefs, caps = phase1.prefs, phase1.capacities
    table = _Table(prefs, caps)
    for i, j in phase1.bids:
        table.targets[i].add(j)
        table.bidders[j].add(i)
    degree = {i: min(caps[i], len(prefs[i])) for i in prefs}
    if sum(degree.values()) % 2:
        return SfOutcome(None, ODD_DEGREE_SUM)
    rotations = 0
    while True:
        if any(table.size[i] < degree[i] for i in prefs):
            return SfOutcome(None, SHORT_LIST)
        long_lists = [i for i in sorted(prefs) if table.size[i] > degree[i]]
        if not long_lists:
            break
        rotation = _find_rotation(table, long_lists[0])
        rotations += 1
        for i, j in rotation:
            table.delete(i, j)
        table.settle(sorted(prefs))
    if stats is not None:
        stats["rotations"] = stats.get("rotations", 0) + rotations
    return SfOutcome(Matching(frozenset(_pair(i, j) for i, j in table.bids())))


def solve(instance: SfInstance, stats: dict | None = None) -> SfOutcome:
    """Run both phases. Deterministic for a given instance."""
    return sf_phase2(sf_phase1(instance), stats=stats)


def _accepts(instance: SfInstance, matching: Matching, i: int, j: int) -> bool:
    partners = matching.partners(i)
    if len(partners) < instance.capacities[i]:
        return True
    rank = instance.prefs[i].index
    return rank(j) < max(rank(p) for p in partners)


def is_blocking_pair(matching: Matching, instance: SfInstance, i: int, j: int) -> bool:
    """True iff ``{i, j}`` is acceptable, unmatched and both endpoints would take it."""
    if i == j or j not in instance.prefs.get(i, ()) or (i, j) in matching:
        return False
    return _accepts(instance, matching, i, j) and _accepts(instance, matching, j, i)


def verify_stability(matching: Matching, instance: SfInstance) -> bool:
    return not any(is_blocking_pair(matching, instance, i, j)
                   for i, j in instance.acceptable_pairs())


def is_valid_matching(matching: Matching, instance: SfInstance) -> bool:
    """Pairs mutually acceptable and every degree within capacity."""
    if any(j not in instance.prefs.get(i, ()) for i, j in matching.pairs):
        return False
    return all(d <= instance.capacities[i] for i, d in matching.degrees().items())


def brute_force_oracle(instance: SfInstance, chunk_bits: int = 16) -> set[Matching]:
    """Every stable matching, by enumerating all subsets of acceptable pairs.

    Capacity and blocking checks are evaluated on bitmask batches with numpy,
    independently of :func:`verify_stability`.
    """
    agents = instance.agents
    if len(agents) > ORACLE_MAX_AGENTS:
        raise ValueError(f"oracle limited to {ORACLE_MAX_AGENTS} agents, got {len(agents)}")
    pairs = instance.acceptable_pairs()
    m = len(pairs)
    if m == 0:
        return {Matching()}
    index = {a: k for k, a in enumerate(agents)}
    n = len(agents)
    caps = np.array([instance.capacities[a] for a in agents])
    # rank_of[p, side]: rank of the other endpoint in that endpoint's list
    ends = np.array([[index[a], index[b]] for a, b in pairs])
    rank_of = np.array([[instance.rank(a, b), instance.rank(b, a)] for a, b in pairs])
    incidence = np.zeros((m, n), dtype=np.int64)
    incidence[np.arange(m), ends[:, 0]] = 1
    incidence[np.arange(m), ends[:, 1]] = 1
    # per-agent rank of partner via pair p, or -1 if p not incident
    agent_rank = np.full((m, n), -1, dtype=np.int64)
    agent_rank[np.arange(m), ends[:, 0]] = rank_of[:, 0]
    agent_rank[np.arange(m), ends[:, 1]] = rank_of[:, 1]

    shifts = np.arange(m, dtype=np.uint64)
    total = 1 << m
    step = 1 << min(chunk_bits, m)
    found: set[Matching] = set()
    for lo in range(0, total, step):
        masks = np.arange(lo, min(lo + step, total), dtype=np.uint64)
        bits = ((masks[:, None] >> shifts) & np.uint64(1)).astype(bool)
        deg = bits.astype(np.int64) @ incidence
        ok = (deg <= caps).all(axis=1)
        if not ok.any():
            continue
        bits, deg = bits[ok], deg[ok]
        worst = np.where(bits[:, :, None], agent_rank[None], -1).max(axis=1)
        spare = deg < caps
        u, v = ends[:, 0], ends[:, 1]
        acc_u = spare[:, u] | (rank_of[:, 0][None] < worst[:, u])
        acc_v = spare[:, v] | (rank_of[:, 1][None] < worst[:, v])
        blocked = (~bits & acc_u & acc_v).any(axis=1)
        for row in bits[~blocked]:
            found.add(Matching(frozenset(p for p, on in zip(pairs, row) if on)))
    return found


def random_instance(rng: np.random.Generator, max_n: int = 6, max_capacity: int = 3,
                    min_n: int = 2) -> SfInstance:
    """Random instance with mutual acceptability and random strict orders."""
    n = int(rng.integers(min_n, max_n + 1))
    density = rng.uniform(0.3, 1.0)
    adj: dict[int, list[int]] = {i: [] for i in range(1, n + 1)}
    for i, j in itertools.combinations(range(1, n + 1), 2):
        if rng.random() < density:
            adj[i].append(j)
            adj[j].append(i)
    prefs = {i: tuple(int(x) for x in rng.permutation(p)) if p else () for i, p in adj.items()}
    caps = {i: int(rng.integers(1, max_capacity + 1)) for i in adj}
    return SfInstance(prefs=prefs, capacities=caps)


@dataclass
class VerifyReport:
    instances: int = 0
    solved: int = 0
    unsolvable: int = 0
    unstable: int = 0
    not_in_oracle: int = 0
    deviations: int = 0
    invalid: int = 0
    deviation_examples: list = field(default_factory=list)

    @property
    def sound(self) -> bool:
        return self.unstable == 0 and self.not_in_oracle == 0 and self.invalid == 0

    def summary(self) -> str:
        return (f"instances={self.instances} solved={self.solved} unsolvable={self.unsolvable} "
                f"unstable={self.unstable} not_in_oracle={self.not_in_oracle} "
                f"invalid={self.invalid} deviations={self.deviations}")


def verify_against_oracle(count: int, max_n: int = 6, max_capacity: int = 3,
                          seed: int = 0) -> VerifyReport:
    """Solve ``count`` random instances and cross-check each against the oracle."""
    rng = np.random.default_rng(seed)
    report = VerifyReport()
    for _ in range(count):
        inst = random_instance(rng, max_n=max_n, max_capacity=max_capacity)
        outcome = solve(inst)
        stable_set = brute_force_oracle(inst)
        report.instances += 1
        if outcome.solvable:
            report.solved += 1
            if not is_valid_matching(outcome.matching, inst):
                report.invalid += 1
            if not verify_stability(outcome.matching, inst):
                report.unstable += 1
            if outcome.matching not in stable_set:
                report.not_in_oracle += 1
        else:
            report.unsolvable += 1
            if stable_set:
                report.deviations += 1
                if len(report.deviation_examples) < 5:
                    report.deviation_examples.append((inst.dumps(), outcome.reason))
    return report
