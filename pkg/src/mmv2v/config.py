"""Run configuration: YAML file with nested sections, validated into engine objects.

Every key is optional; omitted keys take the standard scenario defaults. Unknown
keys and wrongly typed values are rejected with their dotted key path.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .channel import LinkBudgetParams, McsTable
from .engine import EXCHANGE_MODELS, G_UNITS, EngineConfig
from .scenario import DEFAULT_BASE_SPEED, DEFAULT_SLOT_DURATION, GeometryConfig
from .utility import UtilityWeights


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass
class GeometrySection:
    extent_x: float = 100.0
    extent_y: float = 100.0
    horizontal_roads: int = 3
    vertical_roads: int = 3
    lanes: int = 4
    lane_width: float = 3.2


@dataclass
class MobilitySection:
    vehicles: int = 20
    ecav_probability: float = 0.15
    duration: int = 300
    base_speed: float = DEFAULT_BASE_SPEED
    slot_duration: float = DEFAULT_SLOT_DURATION
    off_road: str = "warn"


@dataclass
class RadioSection:
    carrier_frequency: float = 60e9
    bandwidth: float = 2.16e9
    pathloss_exponent: float = 2.66
    tx_power: float = 10.0
    attenuation: float = 70.0
    shadow_sigma: float = 5.8
    noise_floor: float = -174.0
    noise_figure: float = 6.0
    beamwidth_deg: float = 15.0
    mcs_table: str | None = None
    interference: bool = False
    vehicle_blockage: bool = False


@dataclass
class MatchingSection:
    capacity: int = 3
    radius: float = 20.0
    w1: float = 0.5
    w2: float = 0.5


@dataclass
class DataSection:
    g_units: str = "per_slot"
    exchange: str = "drawdown"


@dataclass
class RunSection:
    seed: int = 7
    seeds: int = 1
    traces: str | None = None
    output: str = "out"


@dataclass
class SweepSection:
    capacities: list = field(default_factory=lambda: [1, 2, 3, 4])
    radii: list = field(default_factory=lambda: [20.0, 30.0, 40.0])
    beamwidths_deg: list = field(default_factory=lambda: [5.0, 15.0])


SECTIONS = {
    "geometry": GeometrySection,
    "mobility": MobilitySection,
    "radio": RadioSection,
    "matching": MatchingSection,
    "data": DataSection,
    "run": RunSection,
    "sweep": SweepSection,
}


@dataclass
class RunConfig:
    geometry: GeometrySection = field(default_factory=GeometrySection)
    mobility: MobilitySection = field(default_factory=MobilitySection)
    radio: RadioSection = field(default_factory=RadioSection)
    matching: MatchingSection = field(default_factory=MatchingSection)
    data: DataSection = field(default_factory=DataSection)
    run: RunSection = field(default_factory=RunSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    base_dir: Path = Path(".")

    # -- derived objects ----------------------------------------------------
    def geometry_config(self) -> GeometryConfig:
        g = self.geometry
        return GeometryConfig(g.extent_x, g.extent_y, g.horizontal_roads, g.vertical_roads,
                              g.lanes, g.lane_width)

    def link_params(self, beamwidth_deg: float | None = None) -> LinkBudgetParams:
        r = self.radio
        theta = r.beamwidth_deg if beamwidth_deg is None else beamwidth_deg
        return LinkBudgetParams(r.carrier_frequency, r.bandwidth, r.pathloss_exponent, r.tx_power,
                                r.attenuation, r.shadow_sigma, r.noise_floor, r.noise_figure,
                                math.radians(theta))

    def engine_config(self, capacity: int | None = None, radius: float | None = None,
                      beamwidth_deg: float | None = None) -> EngineConfig:
        m = self.matching
        return EngineConfig(
            capacity=m.capacity if capacity is None else capacity,
            weights=UtilityWeights(m.w1, m.w2, m.radius if radius is None else radius),
            link=self.link_params(beamwidth_deg),
            interference=self.radio.interference,
            vehicle_blockage=self.radio.vehicle_blockage,
            g_units=self.data.g_units,
            exchange=self.data.exchange,
        )

    def mcs_table(self) -> McsTable:
        if self.radio.mcs_table is None:
            return McsTable.default()
        return McsTable.from_csv(self.resolve(self.radio.mcs_table))

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def seeds(self) -> list[int]:
        return [self.run.seed + k for k in range(self.run.seeds)]

    def as_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    # -- validation ---------------------------------------------------------
    def validate(self) -> "RunConfig":
        _positive("radio.beamwidth_deg", self.radio.beamwidth_deg, upper=180.0)
        for k, theta in enumerate(self.sweep.beamwidths_deg):
            _positive(f"sweep.beamwidths_deg[{k}]", theta, upper=180.0)
        for k, c in enumerate(self.sweep.capacities):
            if c < 1:
                raise ConfigError(f"sweep.capacities[{k}]", "capacity must be >= 1")
        for k, r in enumerate(self.sweep.radii):
            _positive(f"sweep.radii[{k}]", r)
        if self.matching.capacity < 1:
            raise ConfigError("matching.capacity", "must be >= 1")
        _positive("matching.radius", self.matching.radius)
        if self.mobility.vehicles < 1:
            raise ConfigError("mobility.vehicles", "must be >= 1")
        if not 0.0 <= self.mobility.ecav_probability <= 1.0:
            raise ConfigError("mobility.ecav_probability", "must lie in [0, 1]")
        if self.mobility.duration < 1:
            raise ConfigError("mobility.duration", "must be >= 1")
        _positive("mobility.slot_duration", self.mobility.slot_duration)
        if self.mobility.base_speed < 0:
            raise ConfigError("mobility.base_speed", "must be >= 0")
        if self.mobility.off_road not in ("warn", "reject", "ignore"):
            raise ConfigError("mobility.off_road", "must be warn, reject or ignore")
        if self.data.g_units not in G_UNITS:
            raise ConfigError("data.g_units", f"must be one of {', '.join(G_UNITS)}")
        if self.data.exchange not in EXCHANGE_MODELS:
            raise ConfigError("data.exchange", f"must be one of {', '.join(EXCHANGE_MODELS)}")
        if self.run.seeds < 1:
            raise ConfigError("run.seeds", "must be >= 1")
        for key, path in (("radio.mcs_table", self.radio.mcs_table), ("run.traces", self.run.traces)):
            if path is not None and not self.resolve(path).is_file():
                raise ConfigError(key, f"file not found: {self.resolve(path)}")
        for section, build in (("geometry", lambda: self.geometry_config().validate()),
                               ("matching", self.engine_config),
                               ("radio", self.link_params)):
            try:
                build()
            except ValueError as exc:
                raise ConfigError(section, str(exc)) from None
        if self.radio.mcs_table is not None:
            try:
                self.mcs_table()
            except ValueError as exc:
                raise ConfigError("radio.mcs_table", str(exc)) from None
        return self


def _positive(key: str, value: float, upper: float | None = None) -> None:
    if not value > 0 or (upper is not None and value > upper):
        bound = f"(0, {upper:g}]" if upper is not None else "> 0"
        raise ConfigError(key, f"value {value!r} out of range, expected {bound}")


def _coerce(key: str, value: Any, default: Any, annotation: str):
    if "None" in annotation and value is None:
        return None
    if annotation.startswith("list"):
        if not isinstance(value, list) or not value:
            raise ConfigError(key, f"expected a non-empty list, got {type(value).__name__}")
        kind = type(default[0])
        return [_coerce(f"{key}[{k}]", v, kind(), kind.__name__) for k, v in enumerate(value)]
    if annotation.startswith("bool"):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected a boolean, got {type(value).__name__}")
        return value
    if annotation.startswith("int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {type(value).__name__}")
        return value
    if annotation.startswith("float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {type(value).__name__}")
        return float(value)
    if annotation.startswith("str"):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {type(value).__name__}")
        return value
    raise ConfigError(key, f"unsupported type {annotation}")


def from_mapping(data: Mapping | None, base_dir: Path = Path(".")) -> RunConfig:
    """Build an unvalidated RunConfig from nested mappings."""
    cfg = RunConfig(base_dir=base_dir)
    data = data or {}
    if not isinstance(data, Mapping):
        raise ConfigError("", "top level must be a mapping of sections")
    for name, values in data.items():
        if name not in SECTIONS:
            raise ConfigError(str(name), f"unknown section; expected one of {', '.join(SECTIONS)}")
        if values is None:
            continue
        if not isinstance(values, Mapping):
            raise ConfigError(name, "section must be a mapping")
        section = getattr(cfg, name)
        known = {f.name: f for f in fields(section)}
        for key, value in values.items():
            path = f"{name}.{key}"
            if key not in known:
                raise ConfigError(path, "unknown key")
            default = getattr(section, key)
            setattr(section, key, _coerce(path, value, default, str(known[key].type)))
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    """Read and validate a YAML config; ``None`` or ``"default"`` gives the built-in defaults."""
    if path is None or str(path) == "default":
        return RunConfig().validate()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("", f"config file not found: {p}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{p}: invalid YAML: {exc}") from None
    return from_mapping(data, base_dir=p.parent).validate()


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply ``section.key=value`` style overrides (``None`` values are ignored) and revalidate."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, key = dotted.split(".", 1)
        setattr(getattr(cfg, section), key, value)
    return cfg.validate()


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.as_dict(), sort_keys=True)
