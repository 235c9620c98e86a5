"""60 GHz link budget: antenna gain, path loss, shadowing, noise, SINR and MCS selection.

Powers are in dBm, gains and losses in dB, distances in metres and rates in
Gbit/s. Functions accept scalars or numpy arrays unless noted otherwise.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .scenario import Geometry, is_los


@dataclass(frozen=True)
class LinkBudgetParams:
    carrier_frequency: float = 60e9        # Hz
    bandwidth: float = 2.16e9              # Hz
    pathloss_exponent: float = 2.66
    tx_power: float = 10.0                 # dBm
    attenuation: float = 70.0              # dB; a ratio, even when quoted in dBm
    shadow_sigma: float = 5.8              # dB
    noise_floor: float = -174.0            # dBm/Hz
    noise_figure: float = 6.0              # dB
    beamwidth: float = math.radians(15.0)  # rad

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.pathloss_exponent > 0:
            raise ValueError("pathloss_exponent must be positive")
        if not 0 < self.beamwidth <= math.pi:
            raise ValueError("beamwidth must lie in (0, pi]")
        if self.shadow_sigma < 0:
            raise ValueError("shadow_sigma must be >= 0")


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


# dBm <-> mW are the same conversions; aliases keep call sites readable
dbm_to_mw = db_to_linear
mw_to_dbm = linear_to_db


def antenna_gain_db(beamwidth: float) -> float:
    """Ideal pencil-beam gain ``4*pi/theta^2`` in dB."""
    if not 0 < beamwidth <= math.pi:
        raise ValueError(f"beamwidth {beamwidth} outside (0, pi]")
    return 10.0 * math.log10(4.0 * math.pi / beamwidth ** 2)


def path_loss_db(d, params: LinkBudgetParams, shadow=0.0):
    """Log-distance loss plus ``40 d / 1000 + H_att`` attenuation and shadowing."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 10.0 * params.pathloss_exponent * np.log10(d) + (40.0 * d / 1000.0 + params.attenuation) + shadow
    return float(out) if out.ndim == 0 else out


def sample_shadowing(rng: np.random.Generator, sigma: float = 5.8, size=None):
    """Zero-mean normal draw in dB (log-normal in linear scale)."""
    if sigma == 0:
        return 0.0 if size is None else np.zeros(size)
    return rng.normal(0.0, sigma, size)


def received_power_dbm(d, params: LinkBudgetParams, shadow=0.0):
    gain = antenna_gain_db(params.beamwidth)
    return params.tx_power + 2.0 * gain - path_loss_db(d, params, shadow)


def noise_power_dbm(params: LinkBudgetParams) -> float:
    return params.noise_floor + 10.0 * math.log10(params.bandwidth) + params.noise_figure


def sinr_db(received_dbm, noise_dbm, interference_mw=0.0):
    """SINR evaluated in the linear domain."""
    signal = db_to_linear(received_dbm)
    out = linear_to_db(signal / (db_to_linear(noise_dbm) + np.asarray(interference_mw, dtype=float)))
    return float(out) if np.ndim(out) == 0 else out


def in_beam(origin, boresight_to, point, beamwidth: float, tol: float = 1e-9) -> bool:
    """Whether ``point`` lies in the main lobe of a beam at ``origin`` aimed at ``boresight_to``."""
    ox, oy = origin
    a = math.atan2(boresight_to[1] - oy, boresight_to[0] - ox)
    b = math.atan2(point[1] - oy, point[0] - ox)
    diff = abs((a - b + math.pi) % (2 * math.pi) - math.pi)
    return diff <= beamwidth / 2 + tol


def interference_mw(receiver, receiver_aim, transmitters, geometry: Geometry,
                    params: LinkBudgetParams, shadow: Sequence[float] | None = None) -> float:
    """Aggregate interference at ``receiver`` whose beam points at ``receiver_aim``.

    ``transmitters`` is a sequence of ``(position, aim)`` for concurrent
    transmitters other than the receiver's own partner. With zero sidelobes
    a transmitter contributes only when both main lobes overlap and the path
    is in line of sight.
    """
    total = 0.0
    for k, (pos, aim) in enumerate(transmitters):
        if not in_beam(pos, aim, receiver, params.beamwidth):
            continue
        if not in_beam(receiver, receiver_aim, pos, params.beamwidth):
            continue
        if not is_los(geometry, pos, receiver):
            continue
        d = math.dist(pos, receiver)
        if d <= 0:
            continue
        s = 0.0 if shadow is None else shadow[k]
        total += float(db_to_linear(received_power_dbm(d, params, s)))
    return total


@dataclass(frozen=True)
class McsEntry:
    index: int
    k_mcs: float      # dB
    rate: float       # Gbit/s


class McsTable(tuple):
    """Immutable MCS table, strictly increasing in threshold and rate."""

    def __new__(cls, entries):
        entries = tuple(entries)
        if not entries:
            raise ValueError("MCS table is empty")
        for a, b in zip(entries, entries[1:]):
            if not (b.k_mcs > a.k_mcs and b.rate > a.rate):
                raise ValueError(f"MCS entries {a.index} -> {b.index} are not strictly increasing")
        return super().__new__(cls, entries)

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([e.k_mcs for e in self])

    @property
    def rates(self) -> np.ndarray:
        return np.array([e.rate for e in self])

    @property
    def max_rate(self) -> float:
        return self[-1].rate

    def rate_for(self, sinr):
        """Vectorised rate lookup; 0 where the SINR is below every threshold."""
        sinr = np.asarray(sinr, dtype=float)
        idx = np.searchsorted(self.thresholds, sinr, side="right") - 1
        rates = np.where(idx >= 0, self.rates[np.clip(idx, 0, None)], 0.0)
        return float(rates) if rates.ndim == 0 else rates

    @classmethod
    def from_csv(cls, path) -> "McsTable":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            return cls._parse(fh, str(path))

    @classmethod
    def default(cls) -> "McsTable":
        ref = resources.files("mmv2v").joinpath("data/mcs_80211ad.csv")
        with ref.open("r", encoding="utf-8", newline="") as fh:
            return cls._parse(fh, "mcs_80211ad.csv")

    @classmethod
    def _parse(cls, fh, name: str) -> "McsTable":
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["index", "k_mcs_db", "rate_gbps"]:
            raise ValueError(f"{name}: expected header index,k_mcs_db,rate_gbps")
        entries = []
        for row in reader:
            try:
                entries.append(McsEntry(int(row["index"]), float(row["k_mcs_db"]), float(row["rate_gbps"])))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{name}:{reader.line_num}: {exc}") from exc
        return cls(entries)


def select_mcs(sinr: float, table: Sequence[McsEntry]) -> McsEntry | None:
    """Highest-rate entry whose threshold does not exceed ``sinr``."""
    if not table:
        raise ValueError("MCS table is empty")
    best = None
    for entry in table:
        if entry.k_mcs <= sinr:
            best = entry
    return best


def link_rate(d: float, params: LinkBudgetParams, table: Sequence[McsEntry],
              shadow: float = 0.0, interference: float = 0.0) -> float:
    """Scalar end-to-end evaluation: distance to MCS rate."""
    sinr = sinr_db(received_power_dbm(d, params, shadow), noise_power_dbm(params), interference)
    entry = select_mcs(sinr, table)
    return 0.0 if entry is None else entry.rate


def link_sinr_matrix(distance: np.ndarray, params: LinkBudgetParams, shadow=0.0) -> np.ndarray:
    """Interference-free SINR for an array of distances (non-positive distances give -inf)."""
    d = np.asarray(distance, dtype=float)
    safe = np.where(d > 0, d, 1.0)
    rx = params.tx_power + 2.0 * antenna_gain_db(params.beamwidth) - (
        10.0 * params.pathloss_exponent * np.log10(safe) + 40.0 * safe / 1000.0
        + params.attenuation + shadow)
    return np.where(d > 0, rx - noise_power_dbm(params), -np.inf)
