"""Aggregation of timeslot reports into utilisation CDFs and per-timeslot averages, plus CSV output."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .engine import SimulationResult, VehicleReport
from .scenario import Kind

FILTERS = ("all", "emergency", "regular")
REPORT_COLUMNS = ("t", "id", "kind", "degree", "C_i_gbps", "D_i_gbit", "utilisation",
                  "regional_access_gbit", "fallback_flag")
SUMMARY_COLUMNS = ("filter", "metric", "value", "samples")

METRICS: dict[str, Callable[[VehicleReport], float]] = {
    "utilisation": lambda v: v.utilisation,
    "exchanged_gbit": lambda v: v.exchanged,
    "regional_access_gbit": lambda v: v.regional_access,
}


class EmptySampleError(ValueError):
    pass


@dataclass(frozen=True)
class CdfSeries:
    values: np.ndarray
    fractions: np.ndarray

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "CdfSeries":
        """Empirical CDF evaluated at every sample: fraction of samples <= value."""
        x = np.sort(np.asarray(samples, dtype=float))
        if x.size == 0:
            raise EmptySampleError("empty sample set")
        return cls(values=x, fractions=np.searchsorted(x, x, side="right") / x.size)

    def __call__(self, v: float) -> float:
        return float(np.searchsorted(self.values, v, side="right") / self.values.size)

    def __len__(self) -> int:
        return int(self.values.size)

    def dominates(self, other: "CdfSeries") -> bool:
        """First-order stochastic dominance: F_self(x) <= F_other(x) everywhere."""
        grid = np.union1d(self.values, other.values)
        mine = np.searchsorted(self.values, grid, side="right") / self.values.size
        theirs = np.searchsorted(other.values, grid, side="right") / other.values.size
        return bool(np.all(mine <= theirs + 1e-12))


def _check_filter(kind_filter: str) -> str:
    if kind_filter not in FILTERS:
        raise ValueError(f"unknown filter {kind_filter!r}; expected one of {FILTERS}")
    return kind_filter


def _passes(v: VehicleReport, kind_filter: str) -> bool:
    if kind_filter == "all":
        return True
    return (v.kind is Kind.EMERGENCY) == (kind_filter == "emergency")


def _as_list(results) -> list[SimulationResult]:
    return [results] if isinstance(results, SimulationResult) else list(results)


def samples(results, metric: str, kind_filter: str = "all") -> np.ndarray:
    """All (timeslot, vehicle) values of ``metric`` passing the filter, across one or more results."""
    _check_filter(kind_filter)
    get = METRICS[metric]
    return np.array([get(v) for r in _as_list(results) for rep in r.reports
                     for v in rep.vehicles if _passes(v, kind_filter)], dtype=float)


def _mean(results, metric: str, kind_filter: str) -> float:
    x = samples(results, metric, kind_filter)
    if x.size == 0:
        raise EmptySampleError(f"no {kind_filter} samples for {metric}")
    return float(x.mean())


def link_utilisation_cdf(results, kind_filter: str = "all") -> CdfSeries:
    return CdfSeries.from_samples(samples(results, "utilisation", kind_filter))


def average_exchanged(results, kind_filter: str = "all") -> float:
    """Mean data sent plus received per vehicle per timeslot (Gbit)."""
    return _mean(results, "exchanged_gbit", kind_filter)


def average_regional_access(results, kind_filter: str = "all") -> float:
    """Mean summed regional data of the partners per vehicle per timeslot (Gbit)."""
    return _mean(results, "regional_access_gbit", kind_filter)


def average_utilisation(results, kind_filter: str = "all") -> float:
    return _mean(results, "utilisation", kind_filter)


def seed_mean(per_seed: Iterable[SimulationResult], fn: Callable, kind_filter: str = "all") -> float:
    """Mean over seeds of a per-run aggregate; seeds without samples in the filter are skipped."""
    values = []
    for r in per_seed:
        try:
            values.append(fn(r, kind_filter))
        except EmptySampleError:
            continue
    if not values:
        raise EmptySampleError(f"no seed has {kind_filter} samples")
    return float(np.mean(values))


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def report_rows(result: SimulationResult) -> list[tuple]:
    rows = []
    for rep in result.reports:
        for v in rep.vehicles:
            rows.append((rep.t, v.id, v.kind.value, v.degree, v.avg_rate, v.exchanged,
                         v.utilisation, v.regional_access, rep.fallback))
    return rows


def summary_rows(result: SimulationResult, filters: Sequence[str] = FILTERS,
                 metrics: Sequence[str] = tuple(METRICS)) -> list[tuple]:
    """One row per (filter, metric); an empty result yields no rows, an empty filter a blank value."""
    if not result.reports:
        return []
    rows = []
    for f in filters:
        for m in metrics:
            x = samples(result, m, f)
            rows.append((f, m, float(x.mean()) if x.size else "", int(x.size)))
    return rows


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_outputs(result: SimulationResult, directory, filters: Sequence[str] = FILTERS,
                  metrics: Sequence[str] = tuple(METRICS)) -> list[Path]:
    """Write report.csv, cdf_<filter>.csv, summary.csv and meta.json; returns the paths written."""
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    for f in filters:
        _check_filter(f)
    written = []

    path = out / "report.csv"
    _write_csv(path, REPORT_COLUMNS, report_rows(result))
    written.append(path)

    for f in filters:
        x = samples(result, "utilisation", f)
        rows = []
        if x.size:
            cdf = CdfSeries.from_samples(x)
            rows = zip(cdf.values.tolist(), cdf.fractions.tolist())
        path = out / f"cdf_{f}.csv"
        _write_csv(path, ("utilisation", "fraction"), rows)
        written.append(path)

    path = out / "summary.csv"
    _write_csv(path, SUMMARY_COLUMNS, summary_rows(result, filters, metrics))
    written.append(path)

    path = out / "meta.json"
    try:
        path.write_text(json.dumps(result.metadata, sort_keys=True, indent=2, default=str) + "\n",
                        encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    written.append(path)
    return written
