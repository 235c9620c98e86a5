"""Pair utilities and strict preference lists.

A vehicle ``i`` scores a candidate ``j`` by the product of ``j``'s type
weight, ``j``'s normalised regional data, a direction/distance score and the
ratio of the faded link rate to the best achievable rate on that link.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .channel import LinkBudgetParams, McsEntry, link_rate
from .scenario import Geometry, Kind, TraceSet, is_los, neighbors_in_radius

TYPE_WEIGHTS = {Kind.EMERGENCY: 1.0, Kind.REGULAR: 0.5}


@dataclass(frozen=True)
class UtilityWeights:
    w1: float = 0.5
    w2: float = 0.5
    radius: float = 20.0

    def __post_init__(self):
        if self.w1 < 0 or self.w2 < 0:
            raise ValueError("weights must be non-negative")
        if not math.isclose(self.w1 + self.w2, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"w1 + w2 must equal 1, got {self.w1 + self.w2}")
        if not self.radius > 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class PreferenceList:
    owner: int
    entries: tuple[tuple[int, float], ...]
    capacity: int

    def __post_init__(self):
        ids = [j for j, _ in self.entries]
        if self.owner in ids:
            raise ValueError(f"vehicle {self.owner} lists itself")
        if len(set(ids)) != len(ids):
            raise ValueError(f"vehicle {self.owner}: duplicate candidates")
        keys = [(-u, j) for j, u in self.entries]
        if keys != sorted(keys):
            raise ValueError(f"vehicle {self.owner}: entries not in preference order")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")

    @property
    def candidates(self) -> tuple[int, ...]:
        return tuple(j for j, _ in self.entries)

    def utility_of(self, j: int) -> float:
        return dict(self.entries)[j]

    def __len__(self) -> int:
        return len(self.entries)


def type_weight(kind) -> float:
    return TYPE_WEIGHTS[Kind.parse(kind)]


def regional_data(traces: TraceSet, t: int, i: int, radius: float) -> float:
    """Own generated data plus that of every vehicle within ``radius`` (LOS not required)."""
    own = traces.state(t, i).g
    return own + sum(traces.state(t, j).g for j in neighbors_in_radius(traces, t, i, radius))


def regional_data_all(positions: np.ndarray, g: np.ndarray, radius: float) -> np.ndarray:
    """Vectorised regional data for every vehicle of one timeslot."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    diff = positions[:, None, :] - positions[None, :, :]
    within = np.hypot(diff[..., 0], diff[..., 1]) <= radius
    return within.astype(float) @ np.asarray(g, dtype=float)


def normalize_regional(values: Mapping[int, float]) -> dict[int, float]:
    if not values:
        raise ValueError("no regional data to normalise")
    top = max(values.values())
    if not top > 0:
        raise ValueError("regional data must be positive")
    return {k: v / top for k, v in values.items()}


def heading_difference(a: float, b: float) -> float:
    """Absolute heading difference folded into [0, pi]."""
    delta = abs(a - b) % (2 * math.pi)
    return min(delta, 2 * math.pi - delta)


def direction_distance_score(distance: float, heading_i: float, heading_j: float,
                             weights: UtilityWeights) -> float:
    R = weights.radius
    if distance > R:
        raise ValueError(f"distance {distance} beyond radius {R}")
    phi = heading_difference(heading_i, heading_j)
    return weights.w1 * (R - distance) / R + weights.w2 * (math.pi - phi) / math.pi


def rate_ratio(rate: float, rate_max: float) -> float:
    if rate_max <= 0:
        return 1.0 if rate > 0 else 0.0
    return min(1.0, max(0.0, rate / rate_max))


def utility(tau_j: float, qstar_j: float, score: float, rate: float, rate_max: float) -> float:
    """``tau_j * Q*_j * e_ij * r/r_max``; 0 when the link has no usable MCS."""
    if rate <= 0:
        return 0.0
    return tau_j * qstar_j * score * rate_ratio(rate, rate_max)


def sort_entries(scored: Sequence[tuple[int, float]]) -> tuple[tuple[int, float], ...]:
    """Utility descending, ties by ascending id."""
    return tuple(sorted(scored, key=lambda e: (-e[1], e[0])))


def build_preference_list(i: int, snapshot, geometry: Geometry, params: LinkBudgetParams,
                          table: Sequence[McsEntry], weights: UtilityWeights, capacity: int,
                          shadow: Mapping[tuple[int, int], float] | None = None,
                          vehicle_blockage: bool = False) -> PreferenceList:
    """Preference list of vehicle ``i`` computed only from a beacon snapshot.

    ``snapshot.beacons`` maps id to a record with ``position``, ``heading``,
    ``kind`` and ``Q``; ``shadow`` maps sorted id pairs to the shared shadowing
    draw of that link.
    """
    beacons = snapshot.beacons
    me = beacons[i]
    qmax = max(b.Q for b in beacons.values())
    others = [b.position for k, b in beacons.items()]
    scored = []
    for j, other in sorted(beacons.items()):
        if j == i:
            continue
        d = math.dist(me.position, other.position)
        if d > weights.radius or d <= 0:
            continue
        blockers = None
        if vehicle_blockage:
            blockers = [p for k, p in zip(beacons, others) if k not in (i, j)]
        if not is_los(geometry, me.position, other.position, blockers=blockers):
            continue
        s = 0.0 if shadow is None else shadow.get((min(i, j), max(i, j)), 0.0)
        r = link_rate(d, params, table, shadow=s)
        if r <= 0:
            continue
        r_max = max(link_rate(d, params, table), r)
        e = direction_distance_score(d, me.heading, other.heading, weights)
        scored.append((j, utility(type_weight(other.kind), other.Q / qmax, e, r, r_max)))
    return PreferenceList(owner=i, entries=sort_entries(scored), capacity=capacity)
