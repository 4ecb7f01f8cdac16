"""Scenario configuration for the V2I road model.

All quantities are SI: meters, seconds, watts, hertz, bits/s. Antenna gains
are linear (1 dB is stored as ``10 ** 0.1``).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

__all__ = ["ScenarioConfig", "DEFAULTS", "load_config", "dump_config"]

_ONE_DB = 10.0 ** 0.1

DEFAULTS: dict[str, float] = {
    "road_length": 2000.0,
    "bs_height": 8.0,
    "bs_safety": 5.0,
    "bs_density": 0.002,
    "tx_power": 1.0,
    "carrier_freq": 2.1e9,
    "bandwidth": 40e6,
    "path_loss_exp": 3.0,
    "tx_gain": _ONE_DB,
    "rx_gain": _ONE_DB,
    "noise_power": 1.507e-13,
    "fading_rate": 1.0,
    "ho_delay": 3.0,
    "rate_threshold": 60e6,
    "v_max": 30.0,
    "mu_max": 0.01,
    "spacing_mu": 0.0,
    "spacing_sigma": 1.0,
    "processing_time": 6e-3,
    "crash_tolerance": 0.01,
    "num_cavs": 100,
}

# spacing_mu is a log-mean and may be any real number
_POSITIVE = tuple(k for k in DEFAULTS if k not in ("spacing_mu", "num_cavs"))


@dataclass(frozen=True)
class ScenarioConfig:
    """Road, radio, traffic and handoff constants of one scenario.

    Defaults reproduce the reference operating point: a 2 km road, 2.1 GHz
    carrier, 40 MHz bandwidth, 60 Mbps rate target and log-normal spacing
    with ``spacing_mu=0``, ``spacing_sigma=1``.
    """

    road_length: float = DEFAULTS["road_length"]
    bs_height: float = DEFAULTS["bs_height"]
    bs_safety: float = DEFAULTS["bs_safety"]
    bs_density: float = DEFAULTS["bs_density"]
    tx_power: float = DEFAULTS["tx_power"]
    carrier_freq: float = DEFAULTS["carrier_freq"]
    bandwidth: float = DEFAULTS["bandwidth"]
    path_loss_exp: float = DEFAULTS["path_loss_exp"]
    tx_gain: float = DEFAULTS["tx_gain"]
    rx_gain: float = DEFAULTS["rx_gain"]
    noise_power: float = DEFAULTS["noise_power"]
    fading_rate: float = DEFAULTS["fading_rate"]
    ho_delay: float = DEFAULTS["ho_delay"]
    rate_threshold: float = DEFAULTS["rate_threshold"]
    v_max: float = DEFAULTS["v_max"]
    mu_max: float = DEFAULTS["mu_max"]
    spacing_mu: float = DEFAULTS["spacing_mu"]
    spacing_sigma: float = DEFAULTS["spacing_sigma"]
    processing_time: float = DEFAULTS["processing_time"]
    crash_tolerance: float = DEFAULTS["crash_tolerance"]
    num_cavs: int = int(DEFAULTS["num_cavs"])

    def __post_init__(self) -> None:
        for name in _POSITIVE:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if not math.isfinite(self.spacing_mu):
            raise ValueError("spacing_mu must be finite")
        if not 0.0 < self.crash_tolerance < 1.0:
            raise ValueError(f"crash_tolerance must lie in (0, 1), got {self.crash_tolerance}")
        if self.bs_density > self.mu_max:
            raise ValueError(f"bs_density {self.bs_density} exceeds mu_max {self.mu_max}")
        if self.path_loss_exp < 2.0:
            raise ValueError(f"path_loss_exp must be >= 2, got {self.path_loss_exp}")
        if self.num_cavs < 1:
            raise ValueError("num_cavs must be >= 1")

    @property
    def bs_count(self) -> int:
        """Number of base stations on the road, ``round(mu * L)`` clamped to 2."""
        return bs_count(self.bs_density, self.road_length)

    @property
    def ho_delay_normalized(self) -> float:
        """Handoff delay divided by ``mu_max * v_max``."""
        return self.ho_delay / (self.mu_max * self.v_max)

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        """Build a config from a mapping; missing keys take the defaults."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown configuration keys: {', '.join(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"{key} must be numeric, got {value!r}")
            kwargs[key] = int(value) if key == "num_cavs" else float(value)
        return cls(**kwargs)


def bs_count(mu: float, road_length: float) -> int:
    # half-up rounding; Python's round() is banker's rounding
    return max(2, int(math.floor(mu * road_length + 0.5)))


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("configuration document must be a JSON object")
    return ScenarioConfig.from_dict(data)


def dump_config(config: ScenarioConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
