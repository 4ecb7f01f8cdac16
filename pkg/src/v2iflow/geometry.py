"""Road geometry, link budget and the SINR coefficient algebra."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig, bs_count

__all__ = [
    "SPEED_OF_LIGHT",
    "LinkGeometry",
    "SinrCoefficients",
    "antenna_gain_factor",
    "build_geometry",
    "sinr_coefficients",
    "regularize_coefficients",
]

# rounded value of the reference scenario (not the SI-exact 299792458)
SPEED_OF_LIGHT = 3.0e8

DEFAULT_JITTER = 1e-9


def antenna_gain_factor(config: ScenarioConfig) -> float:
    """Friis factor ``G_tx * G_rx * (c / (4 pi f))**2`` (linear)."""
    wavelength_term = SPEED_OF_LIGHT / (4.0 * math.pi * config.carrier_freq)
    return config.tx_gain * config.rx_gain * wavelength_term**2


@dataclass(frozen=True)
class LinkGeometry:
    """Base station layout seen from one CAV position.

    ``distances[j]`` is the 3-D distance from the CAV to BS ``j``;
    ``serving_index`` is the nearest BS (lowest index on ties).
    """

    bs_x: tuple[float, ...]
    cav_x: float
    serving_index: int
    distances: tuple[float, ...]

    @property
    def serving_distance(self) -> float:
        return self.distances[self.serving_index]

    @property
    def interferer_indices(self) -> tuple[int, ...]:
        return tuple(j for j in range(len(self.bs_x)) if j != self.serving_index)


def build_geometry(config: ScenarioConfig, cav_x: float) -> LinkGeometry:
    """Place ``N`` BSs at ``(j + 1/2) / mu`` and measure distances to ``cav_x``."""
    if not 0.0 <= cav_x <= config.road_length:
        raise ValueError(f"cav_x={cav_x} outside the road [0, {config.road_length}]")
    n = bs_count(config.bs_density, config.road_length)
    if n < 2:
        raise ValueError("need at least two base stations")
    bs_x = (np.arange(n) + 0.5) / config.bs_density
    offset_sq = config.bs_height**2 + config.bs_safety**2
    d = np.sqrt((cav_x - bs_x) ** 2 + offset_sq)
    # np.argmin returns the first minimum, which is the lowest-index tie-break
    serving = int(np.argmin(d))
    return LinkGeometry(
        bs_x=tuple(bs_x.tolist()),
        cav_x=float(cav_x),
        serving_index=serving,
        distances=tuple(d.tolist()),
    )


@dataclass(frozen=True)
class SinrCoefficients:
    """Serving coefficient ``a``, interferer coefficients ``b`` (watts).

    The SINR is ``a*chi / (noise_power + sum_k b_k*chi_k)`` with every
    ``chi`` exponential of rate ``fading_rate``.
    """

    a: float
    b: tuple[float, ...]
    fading_rate: float = 1.0
    noise_power: float = 0.0
    regularized: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        problems = self.problems()
        if problems:
            raise ValueError("invalid SINR coefficients: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not (math.isfinite(self.a) and self.a > 0):
            out.append(f"serving coefficient a={self.a!r} must be positive")
        for k, bk in enumerate(self.b):
            if not (math.isfinite(bk) and bk > 0):
                out.append(f"interferer coefficient b[{k}]={bk!r} must be positive")
        if not (math.isfinite(self.fading_rate) and self.fading_rate > 0):
            out.append(f"fading_rate={self.fading_rate!r} must be positive")
        if not (math.isfinite(self.noise_power) and self.noise_power >= 0):
            out.append(f"noise_power={self.noise_power!r} must be non-negative")
        return out

    @property
    def b_array(self) -> np.ndarray:
        return np.asarray(self.b, dtype=float)

    def without_interference(self) -> "SinrCoefficients":
        return SinrCoefficients(self.a, (), self.fading_rate, self.noise_power, True)


def sinr_coefficients(
    config: ScenarioConfig,
    geom: LinkGeometry,
    *,
    regularize: bool = True,
    rel_jitter: float = DEFAULT_JITTER,
) -> SinrCoefficients:
    """Received-power coefficients ``gamma_R * P_tx * d**-alpha`` for a geometry."""
    scale = antenna_gain_factor(config) * config.tx_power
    d = np.asarray(geom.distances)
    power = scale * d ** (-config.path_loss_exp)
    a = float(power[geom.serving_index])
    b = np.delete(power, geom.serving_index)
    coeffs = SinrCoefficients(a, tuple(b.tolist()), config.fading_rate, config.noise_power)
    if regularize:
        coeffs = regularize_coefficients(coeffs, rel_jitter)
    return coeffs


def _spread(values: np.ndarray, rel_jitter: float) -> tuple[np.ndarray, bool]:
    order = np.argsort(-values, kind="stable")
    out = values.copy()
    changed = False
    threshold = 0.5 * rel_jitter
    start = 0
    while start < len(order):
        stop = start + 1
        while stop < len(order):
            hi, lo = values[order[stop - 1]], values[order[stop]]
            if (hi - lo) / hi >= threshold:
                break
            stop += 1
        for m, pos in enumerate(order[start + 1 : stop], start=1):
            out[pos] = values[pos] * (1.0 + m * rel_jitter)
            changed = True
        start = stop
    return out, changed


def regularize_coefficients(
    coeffs: SinrCoefficients, rel_jitter: float = DEFAULT_JITTER
) -> SinrCoefficients:
    """Split (near-)repeated interferer coefficients so partial fractions exist.

    Values closer than ``rel_jitter / 2`` (relative) form a group; the m-th
    member of a group, in descending order, is multiplied by
    ``1 + m * rel_jitter``. Repeated until no group remains, which makes the
    operation idempotent.
    """
    if not 1e-12 <= rel_jitter <= 1e-6:
        raise ValueError(f"rel_jitter must lie in [1e-12, 1e-6], got {rel_jitter}")
    b = coeffs.b_array
    for _ in range(len(b) + 1):
        b, changed = _spread(b, rel_jitter)
        if not changed:
            break
    else:  # pragma: no cover - each pass strictly separates at least one pair
        raise RuntimeError("coefficient regularization did not converge")
    return SinrCoefficients(
        coeffs.a, tuple(b.tolist()), coeffs.fading_rate, coeffs.noise_power, True
    )
