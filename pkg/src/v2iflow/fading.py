"""Monte Carlo fading simulator used as the oracle for the closed forms.

Randomness is counter based: trials are grouped in fixed blocks of
``BLOCK_SIZE`` and block ``i`` draws from ``Philox(key=seed)`` with its
counter started at ``i << 192``. The draws of trial ``t`` therefore depend
only on ``(seed, t)``, and shards only decide which worker processes which
blocks. Counts are merged as integers and float sums with ``math.fsum``,
which is order independent, so any shard count gives identical results.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analytics import (
    SinrDistribution,
    ho_cost,
    sinr_threshold,
    worst_case_coefficients,
)
from .config import ScenarioConfig
from .geometry import SinrCoefficients

__all__ = [
    "BLOCK_SIZE",
    "CDF_GRID",
    "SimSpec",
    "SimResult",
    "HoOutageEstimate",
    "VariantDecision",
    "simulate",
    "simulate_ho_outage",
    "discriminate_variants",
    "run_blocks",
]

BLOCK_SIZE = 1 << 14
MAX_TRIALS = 1 << 40
CDF_GRID = np.logspace(-3.0, 3.0, 200)


def _block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, block]))


def _check_budget(trials: int, seed: int, shards: int) -> None:
    if isinstance(trials, bool) or not isinstance(trials, (int, np.integer)):
        raise TypeError("trials must be an integer")
    if not 1 <= trials <= MAX_TRIALS:
        raise ValueError(f"trials must lie in [1, 2**40], got {trials}")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    if shards < 1:
        raise ValueError("shards must be >= 1")


BlockFn = Callable[[np.random.Generator, int], dict]


def run_blocks(trials: int, seed: int, shards: int, block_fn: BlockFn) -> dict:
    """Run ``block_fn(generator, n)`` over all blocks and merge the results.

    ``block_fn`` returns a dict of ints, floats or integer arrays. Ints and
    integer arrays are added exactly; floats are combined with ``math.fsum``.
    """
    _check_budget(trials, seed, shards)
    n_blocks = -(-trials // BLOCK_SIZE)

    def work(block: int) -> dict:
        n = min(BLOCK_SIZE, trials - block * BLOCK_SIZE)
        return block_fn(_block_generator(seed, block), n)

    if shards == 1:
        parts = [work(i) for i in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=shards) as pool:
            parts = list(pool.map(work, range(n_blocks)))
    merged: dict = {}
    for key in parts[0]:
        values = [p[key] for p in parts]
        if isinstance(values[0], float):
            merged[key] = math.fsum(values)
        elif isinstance(values[0], np.ndarray):
            merged[key] = np.sum(values, axis=0)
        else:
            merged[key] = sum(values)
    return merged


def _draw_sinr(gen: np.random.Generator, n: int, coeffs: SinrCoefficients) -> np.ndarray:
    b = coeffs.b_array
    chi = gen.standard_exponential((n, b.size + 1)) / coeffs.fading_rate
    interference = coeffs.noise_power + chi[:, 1:] @ b if b.size else np.full(n, coeffs.noise_power)
    with np.errstate(divide="ignore"):
        return coeffs.a * chi[:, 0] / interference


@dataclass(frozen=True)
class SimSpec:
    coeffs: SinrCoefficients
    gamma_th: float
    trials: int
    seed: int
    shards: int = 1


@dataclass(frozen=True)
class SimResult:
    trials: int
    outage_count: int
    empirical_outage: float
    outage_stderr: float
    mean_log_rate: float
    log_rate_stderr: float
    cdf_grid: np.ndarray = field(repr=False, compare=False)
    cdf_counts: np.ndarray = field(repr=False, compare=False)

    @property
    def empirical_cdf(self) -> np.ndarray:
        return self.cdf_counts / self.trials


def _stderr(total: float, total_sq: float, n: int) -> float:
    if n < 2:
        return math.inf
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    return math.sqrt(var / n)


def simulate(spec: SimSpec) -> SimResult:
    """Sample the SINR ``spec.trials`` times; report outage, rate and CDF.

    Coefficients are used as given; duplicated ``b`` values need no
    regularization here.
    """
    coeffs = spec.coeffs
    if coeffs.noise_power == 0 and not coeffs.b:
        raise ValueError("SINR is infinite without noise and interference")

    def block(gen: np.random.Generator, n: int) -> dict:
        z = _draw_sinr(gen, n, coeffs)
        rate = np.log2(1.0 + z)
        z.sort()
        return {
            "outage": int(np.count_nonzero(z <= spec.gamma_th)),
            "rate": float(np.sum(rate)),
            "rate_sq": float(np.sum(rate * rate)),
            "cdf": np.searchsorted(z, CDF_GRID, side="right").astype(np.int64),
        }

    m = run_blocks(spec.trials, spec.seed, spec.shards, block)
    n = spec.trials
    p = m["outage"] / n
    return SimResult(
        trials=n,
        outage_count=m["outage"],
        empirical_outage=p,
        outage_stderr=math.sqrt(p * (1.0 - p) / n),
        mean_log_rate=m["rate"] / n,
        log_rate_stderr=_stderr(m["rate"], m["rate_sq"], n),
        cdf_grid=CDF_GRID.copy(),
        cdf_counts=m["cdf"],
    )


@dataclass(frozen=True)
class HoOutageEstimate:
    outage: float
    stderr: float
    saturated: bool
    trials: int


def simulate_ho_outage(
    config: ScenarioConfig,
    mu: float,
    v: float,
    trials: int,
    seed: int,
    *,
    shards: int = 1,
    coeffs: SinrCoefficients | None = None,
) -> HoOutageEstimate:
    """Empirical ``P(W log2(1+Z) (1 - H_c) <= R_th)`` at density ``mu`` and speed ``v``.

    The worst-case geometry is used unless ``coeffs`` is given; its
    coefficients are not regularized.
    """
    cost = ho_cost(config.ho_delay, mu, v, config.mu_max, config.v_max)
    if cost.saturated:
        _check_budget(trials, seed, shards)
        return HoOutageEstimate(1.0, 0.0, True, trials)
    if coeffs is None:
        coeffs = worst_case_coefficients(config, mu, regularize=False)
    scale = config.bandwidth * (1.0 - cost.value)

    def block(gen: np.random.Generator, n: int) -> dict:
        rate = scale * np.log2(1.0 + _draw_sinr(gen, n, coeffs))
        return {"hits": int(np.count_nonzero(rate <= config.rate_threshold))}

    hits = run_blocks(trials, seed, shards, block)["hits"]
    p = hits / trials
    return HoOutageEstimate(p, math.sqrt(p * (1.0 - p) / trials), False, trials)


# a link whose noise is comparable to the interference, so the noise factor
# in the closed form visibly matters
DISCRIMINATOR_COEFFS = SinrCoefficients(
    a=1.0, b=(0.6, 0.35, 0.2), fading_rate=1.3, noise_power=0.4
)
_DISCRIMINATOR_Z = (0.1, 0.3, 1.0, 3.0)
_DISCRIMINATOR_RATES = (0.5, 1.0, 2.0)  # bits/s with unit bandwidth
_DISCRIMINATOR_HO = 0.2


@dataclass(frozen=True)
class VariantDecision:
    noise_variant: str
    threshold_variant: str
    noise_errors: dict
    threshold_errors: dict


def discriminate_variants(trials: int = 400_000, seed: int = 20240601, shards: int = 1) -> VariantDecision:
    """Pick the noise-factor and SINR-threshold variants that match simulation.

    Noise variants are scored by the largest CDF gap on a high-noise link;
    threshold variants by the largest gap between the closed-form outage at
    each threshold and the directly simulated ``P(M <= R_th)``.
    """
    co = DISCRIMINATOR_COEFFS
    z_grid = np.asarray(_DISCRIMINATOR_Z)
    rates = np.asarray(_DISCRIMINATOR_RATES)
    scale = 1.0 - _DISCRIMINATOR_HO

    def block(gen: np.random.Generator, n: int) -> dict:
        z = _draw_sinr(gen, n, co)
        m = scale * np.log2(1.0 + z)
        return {
            "cdf": np.array([np.count_nonzero(z <= g) for g in z_grid], dtype=np.int64),
            "rate": np.array([np.count_nonzero(m <= r) for r in rates], dtype=np.int64),
        }

    counts = run_blocks(trials, seed, shards, block)
    empirical_cdf = counts["cdf"] / trials
    empirical_outage = counts["rate"] / trials

    noise_errors = {}
    for variant in ("exact", "as_printed", "negated"):
        dist = SinrDistribution(co, variant)
        noise_errors[variant] = float(np.max(np.abs(dist.cdf(z_grid) - empirical_cdf)))
    noise_choice = min(noise_errors, key=noise_errors.get)

    dist = SinrDistribution(co, noise_choice)
    threshold_errors = {}
    for variant in ("shannon_consistent", "as_printed"):
        predicted = [
            dist.cdf(sinr_threshold(r, 1.0, _DISCRIMINATOR_HO, variant)) for r in rates
        ]
        threshold_errors[variant] = float(np.max(np.abs(np.array(predicted) - empirical_outage)))
    threshold_choice = min(threshold_errors, key=threshold_errors.get)
    return VariantDecision(noise_choice, threshold_choice, noise_errors, threshold_errors)


def empirical_outage_curve(
    config: ScenarioConfig,
    mus: Sequence[float],
    v: float,
    trials: int,
    seed: int,
    *,
    shards: int = 1,
) -> list[HoOutageEstimate]:
    """:func:`simulate_ho_outage` over a density grid, one seed per point."""
    return [
        simulate_ho_outage(config, mu, v, trials, (seed + i) % 2**64, shards=shards)
        for i, mu in enumerate(mus)
    ]
