"""Traffic-flow maximization: speed bounds, density search and optimal flow."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy.optimize import brentq

from .analytics import (
    _laplace_survival,
    ergodic_rate_quadrature,
    worst_case_coefficients,
    worst_case_rates,
)
from .config import ScenarioConfig
from .fading import run_blocks
from .geometry import SinrCoefficients

__all__ = [
    "GOLDEN",
    "SpeedBounds",
    "GoldenSectionResult",
    "PlanResult",
    "erf_inv",
    "v_safe",
    "crash_probability",
    "traffic_flow",
    "monte_carlo_flow",
    "v_data",
    "optimal_speed",
    "golden_section_maximize",
    "gss_iteration_bound",
    "optimize_density",
]

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
_INV_GOLDEN = 1.0 / GOLDEN
_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)

RateMode = Literal["mean", "outage"]


def erf_inv(p: float) -> float:
    """Inverse error function on (-1, 1).

    Starts from Giles' single-precision polynomial and polishes with
    Newton steps against ``math.erf``.
    """
    if not -1.0 < p < 1.0:
        raise ValueError(f"erf_inv is defined on (-1, 1), got {p}")
    if p == 0.0:
        return 0.0
    w = -math.log((1.0 - p) * (1.0 + p))
    if w < 5.0:
        w -= 2.5
        x = 2.81022636e-08
        for c in (3.43273939e-07, -3.5233877e-06, -4.39150654e-06, 0.00021858087,
                  -0.00125372503, -0.00417768164, 0.246640727, 1.50140941):
            x = c + x * w
    else:
        w = math.sqrt(w) - 3.0
        x = -0.000200214257
        for c in (0.000100950558, 0.00134934322, -0.00367342844, 0.00573950773,
                  -0.0076224613, 0.00943887047, 1.00167406, 2.83297682):
            x = c + x * w
    x *= abs(p)
    # in the tails erf rounds to 1; 1 - |p| is exact there, so polish on erfc
    tail = abs(p) > 0.5
    q = 1.0 - abs(p)
    for _ in range(50):
        resid = q - math.erfc(x) if tail else math.erf(x) - abs(p)
        step = resid / (_TWO_OVER_SQRT_PI * math.exp(-x * x))
        x -= step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return math.copysign(x, p)


def v_safe(epsilon: float, tau: float, mu_ln: float, sigma_ln: float) -> float:
    """Largest speed whose crash probability ``P(s <= v tau)`` equals ``epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"crash tolerance must lie in (0, 1), got {epsilon}")
    if tau <= 0 or sigma_ln <= 0:
        raise ValueError("tau and sigma_ln must be positive")
    return math.exp(sigma_ln * math.sqrt(2.0) * erf_inv(2.0 * epsilon - 1.0) + mu_ln) / tau


def crash_probability(v: float, tau: float, mu_ln: float, sigma_ln: float) -> float:
    """Log-normal spacing CDF evaluated at the distance covered during ``tau``."""
    if v <= 0:
        raise ValueError("speed must be positive")
    return 0.5 * (1.0 + math.erf((math.log(v * tau) - mu_ln) / (sigma_ln * math.sqrt(2.0))))


def traffic_flow(v: float, mu_ln: float, sigma_ln: float) -> float:
    """Mean flow ``v * E[1/s]`` (vehicles/s) for log-normal spacing."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    return v * math.exp((sigma_ln**2 - 2.0 * mu_ln) / 2.0)


def monte_carlo_flow(
    v: float, mu_ln: float, sigma_ln: float, draws: int, seed: int, *, shards: int = 1
) -> tuple[float, float]:
    """Sampled ``v * mean(1/s)`` over log-normal spacings, with its stderr."""

    def block(gen: np.random.Generator, n: int) -> dict:
        inv = v / np.exp(mu_ln + sigma_ln * gen.standard_normal(n))
        return {"sum": float(np.sum(inv)), "sq": float(np.sum(inv * inv))}

    m = run_blocks(draws, seed, shards, block)
    mean = m["sum"] / draws
    var = max(m["sq"] / draws - mean * mean, 0.0) * draws / max(draws - 1, 1)
    return mean, math.sqrt(var / draws)


# -- data-rate speed bound -------------------------------------------------


def _outage_rate(coeffs: SinrCoefficients, target: float) -> float:
    """``log2(1 + z)`` at the SINR quantile where outage equals ``target``."""
    if not 0.0 < target < 1.0:
        raise ValueError("outage target must lie in (0, 1)")
    f = lambda z: _laplace_survival(coeffs, z) - (1.0 - target)  # noqa: E731
    hi = 1.0
    while f(hi) > 0:
        hi *= 4.0
    return math.log2(1.0 + brentq(f, 0.0, hi, xtol=1e-14, rtol=1e-13))


def _link_rate(
    config: ScenarioConfig, mu: float, interference: bool, mode: RateMode, outage_target: float
) -> float:
    coeffs = worst_case_coefficients(config, mu, interference=interference)
    if mode == "mean":
        return ergodic_rate_quadrature(coeffs)
    if mode == "outage":
        return _outage_rate(coeffs, outage_target)
    raise ValueError(f"unknown rate mode {mode!r}")


def _signed_v_data(config: ScenarioConfig, mu: float, rate: float) -> float:
    required = config.rate_threshold / config.bandwidth
    rate = max(rate, 1e-300)
    return (1.0 - required / rate) / (config.ho_delay_normalized * mu)


def v_data(
    config: ScenarioConfig,
    mu: float,
    *,
    interference: bool = True,
    mode: RateMode = "mean",
    outage_target: float = 0.1,
) -> float | None:
    """Largest speed meeting the worst-case handoff-aware rate target.

    Returns ``None`` when the target exceeds the worst-case rate even for a
    stationary CAV. ``mode="outage"`` replaces the ergodic rate by the rate
    at the ``outage_target`` SINR quantile.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    rate = _link_rate(config, mu, interference, mode, outage_target)
    if config.rate_threshold > config.bandwidth * rate:
        return None
    return _signed_v_data(config, mu, rate)


@dataclass(frozen=True)
class SpeedBounds:
    v_safe: float
    v_data: float | None
    v_max: float

    @property
    def feasible(self) -> bool:
        return self.v_data is not None

    @property
    def v_star(self) -> float:
        if self.v_data is None:
            return 0.0
        return min(self.v_safe, self.v_data, self.v_max)

    @property
    def binding(self) -> str:
        """Attaining bound; ties resolve safe > data > max."""
        if self.v_data is None:
            return "data"
        best = self.v_star
        for name, value in (("safe", self.v_safe), ("data", self.v_data), ("max", self.v_max)):
            if value == best:
                return name
        raise AssertionError("unreachable")


def optimal_speed(
    config: ScenarioConfig, mu: float, *, interference: bool = True, mode: RateMode = "mean"
) -> SpeedBounds:
    return SpeedBounds(
        v_safe=v_safe(config.crash_tolerance, config.processing_time,
                      config.spacing_mu, config.spacing_sigma),
        v_data=v_data(config, mu, interference=interference, mode=mode),
        v_max=config.v_max,
    )


# -- golden-section search ---------------------------------------------------


@dataclass(frozen=True)
class GoldenSectionResult:
    x: float
    fx: float
    iterations: int
    bracket: tuple[float, float]
    probes: list = field(default_factory=list, repr=False)


def gss_iteration_bound(lo: float, hi: float, tol: float) -> int:
    return math.ceil(math.log((hi - lo) / tol) / math.log(GOLDEN)) + 2


def golden_section_maximize(
    f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-7
) -> GoldenSectionResult:
    """Maximize ``f`` on ``[lo, hi]`` by golden-section search.

    Each iteration keeps one interior probe and shrinks the bracket by
    ``1/phi``; the midpoint of the final bracket (width <= tol) is
    returned. On multimodal ``f`` this finds a local maximum only.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if not tol > 0:
        raise ValueError("tol must be positive")
    probes: list[tuple[float, float]] = []

    def evaluate(x: float) -> float:
        y = float(f(x))
        if not math.isfinite(y):
            raise ValueError(f"objective is not finite at x={x!r}: {y!r}")
        probes.append((x, y))
        return y

    a, b = lo, hi
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1, f2 = evaluate(x1), evaluate(x2)
    iterations = 0
    while b - a > tol:
        iterations += 1
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = evaluate(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = evaluate(x2)
    x = 0.5 * (a + b)
    return GoldenSectionResult(x, evaluate(x), iterations, (a, b), probes)


# -- density optimization ------------------------------------------------------


@dataclass(frozen=True)
class PlanResult:
    mu_star: float
    v_star: float
    q_star: float
    feasible: bool
    binding: str
    bounds: SpeedBounds
    worst_rate: float
    search_trace: list = field(default_factory=list, repr=False)
    diagnostics: str = ""


def optimize_density(
    config: ScenarioConfig,
    *,
    interference: bool = True,
    mode: RateMode = "mean",
    outage_target: float = 0.1,
    tol: float = 1e-7,
    grid_points: int = 16,
) -> PlanResult:
    """Choose the BS density maximizing ``V_data`` and derive ``v*`` and ``Q*``.

    A 16-point grid over ``[1/L_R, mu_max]`` picks the bracket around the
    best grid point and golden-section search refines it. The better of the
    refined point and the grid points wins, so a maximum at ``mu_max`` is
    returned exactly.
    """
    lo, hi = 1.0 / config.road_length, config.mu_max
    trace: list[tuple[float, float]] = []

    def objective(mu: float) -> float:
        rate = _link_rate(config, mu, interference, mode, outage_target)
        value = _signed_v_data(config, mu, rate)
        trace.append((mu, value))
        return value

    if hi <= lo:
        candidates = [(hi, objective(hi))]
    else:
        grid = np.linspace(lo, hi, grid_points)
        if mode == "mean":
            rates = worst_case_rates(config, grid, interference=interference)
            values = [_signed_v_data(config, m, r) for m, r in zip(grid, rates)]
            trace.extend(zip(grid.tolist(), values))
        else:
            values = [objective(m) for m in grid]
        i = int(np.argmax(values))
        left, right = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]
        gss = golden_section_maximize(objective, float(left), float(right), tol)
        # the refined point first so it wins ties against the coarse grid
        candidates = [(gss.x, gss.fx)] + list(zip(grid.tolist(), values))
    mu_star, best = max(candidates, key=lambda c: c[1])

    rate = _link_rate(config, mu_star, interference, mode, outage_target)
    bounds = SpeedBounds(
        v_safe=v_safe(config.crash_tolerance, config.processing_time,
                      config.spacing_mu, config.spacing_sigma),
        v_data=None if config.rate_threshold > config.bandwidth * rate
        else _signed_v_data(config, mu_star, rate),
        v_max=config.v_max,
    )
    diagnostics = ""
    if not bounds.feasible:
        diagnostics = (
            f"rate target {config.rate_threshold:.6g} bit/s exceeds the best worst-case "
            f"rate {config.bandwidth * rate:.6g} bit/s at mu={mu_star:.6g}"
        )
    v_star = bounds.v_star
    return PlanResult(
        mu_star=float(mu_star),
        v_star=v_star,
        q_star=traffic_flow(v_star, config.spacing_mu, config.spacing_sigma),
        feasible=bounds.feasible,
        binding=bounds.binding,
        bounds=bounds,
        worst_rate=rate,
        search_trace=trace,
        diagnostics=diagnostics,
    )
