"""Closed-form SINR law, handoff-aware outage and ergodic rate.

The SINR of the serving link is ``Z = a*chi / (N_R + sum_k b_k*chi_k)`` with
i.i.d. exponential fading of rate ``lambda``. Its survival function has the
partial-fraction form

    P(Z > z) = noise(z) * sum_k  w_k * a / (a + b_k z),
    w_k = prod_{l != k} b_k / (b_k - b_l),

which is what :class:`SinrDistribution` evaluates. For symmetric road layouts
the weights are huge and alternate in sign, so the sum is evaluated in
extended precision (mpmath) whenever its condition number is large.

The ergodic rate is computed by adaptive quadrature of the same survival
function written as a product of Laplace factors,
``exp(-lambda N_R z / a) * prod_k a / (a + b_k z)``, which needs neither
regularization nor extended precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, NamedTuple, Sequence

import mpmath
import numpy as np
from scipy import integrate

from .config import ScenarioConfig, bs_count
from .geometry import (
    DEFAULT_JITTER,
    SinrCoefficients,
    build_geometry,
    regularize_coefficients,
    sinr_coefficients,
)

__all__ = [
    "NoiseVariant",
    "ThresholdVariant",
    "DEFAULT_NOISE_VARIANT",
    "DEFAULT_THRESHOLD_VARIANT",
    "HoCost",
    "InfeasibleThresholdError",
    "QuadratureError",
    "SinrDistribution",
    "ClosedFormRate",
    "RateReport",
    "ho_cost",
    "sinr_threshold",
    "sinr_pdf",
    "sinr_cdf",
    "outage_probability",
    "ergodic_rate_quadrature",
    "ergodic_rates",
    "ergodic_rate_closed",
    "ho_aware_rate",
    "worst_case_coefficients",
    "worst_case_rate",
    "worst_case_rates",
    "rate_report",
]

NoiseVariant = Literal["exact", "as_printed", "negated"]
ThresholdVariant = Literal["shannon_consistent", "as_printed"]

# Settled by the Monte Carlo discriminator (fading.discriminate_variants).
DEFAULT_NOISE_VARIANT: NoiseVariant = "exact"
DEFAULT_THRESHOLD_VARIANT: ThresholdVariant = "shannon_consistent"

_NOISE_VARIANTS = ("exact", "as_printed", "negated")
_THRESHOLD_VARIANTS = ("shannon_consistent", "as_printed")

# float64 evaluation is used only when the partial-fraction sum is benign
_FLOAT_COND_LIMIT = 1e3
_TAIL_TOL = 1e-12
_LN2 = math.log(2.0)


class InfeasibleThresholdError(ValueError):
    """Raised when the handoff cost leaves no time for data (H_c = 1)."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to meet its tolerance."""


class HoCost(NamedTuple):
    value: float
    raw: float
    saturated: bool


def ho_cost(h_d: float, mu: float, v: float, mu_max: float, v_max: float) -> HoCost:
    """Normalized handoff cost ``h_d * mu * v / (mu_max * v_max)`` clamped to [0, 1]."""
    if h_d < 0 or mu < 0 or v < 0 or mu_max <= 0 or v_max <= 0:
        raise ValueError("handoff cost inputs must be non-negative (maxima positive)")
    raw = h_d * mu * v / (mu_max * v_max)
    return HoCost(min(max(raw, 0.0), 1.0), raw, raw >= 1.0)


def sinr_threshold(
    rate_threshold: float,
    bandwidth: float,
    ho_cost: float,
    variant: ThresholdVariant = DEFAULT_THRESHOLD_VARIANT,
) -> float:
    """SINR needed for the handoff-aware rate to reach ``rate_threshold``."""
    if variant not in _THRESHOLD_VARIANTS:
        raise ValueError(f"unknown threshold variant {variant!r}")
    if ho_cost >= 1.0:
        raise InfeasibleThresholdError(
            f"handoff cost {ho_cost} leaves no airtime; no finite SINR threshold"
        )
    power = 2.0 ** (rate_threshold / (bandwidth * (1.0 - ho_cost)))
    return power - 1.0 if variant == "shannon_consistent" else power


def _min_relative_gap(values: Sequence[float]) -> float:
    if len(values) < 2:
        return math.inf
    s = np.sort(np.asarray(values, dtype=float))[::-1]
    return float(np.min((s[:-1] - s[1:]) / s[:-1]))


class SinrDistribution:
    """PDF/CDF of the SINR for a fixed set of regularized coefficients.

    ``noise_variant`` selects the noise factor multiplying each partial
    fraction: ``"exact"`` uses ``exp(-lambda N_R z / a)`` (common to all
    terms), ``"as_printed"`` uses ``exp(+lambda N_R / b_k)`` and
    ``"negated"`` uses ``exp(-lambda N_R / b_k)``. With no interferers the
    noise-only law ``exp(-lambda N_R z / a)`` is used for every variant.
    """

    def __init__(
        self, coeffs: SinrCoefficients, noise_variant: NoiseVariant = DEFAULT_NOISE_VARIANT
    ) -> None:
        if noise_variant not in _NOISE_VARIANTS:
            raise ValueError(f"unknown noise variant {noise_variant!r}")
        if _min_relative_gap(coeffs.b) < 0.5e-12:
            raise ValueError(
                "interferer coefficients are not pairwise distinct; "
                "apply regularize_coefficients first"
            )
        self.coeffs = coeffs
        self.noise_variant = noise_variant
        self._c = coeffs.fading_rate * coeffs.noise_power / coeffs.a
        self._setup_weights()

    def _setup_weights(self) -> None:
        b = self.coeffs.b
        dps = 60
        while True:
            with mpmath.workdps(dps):
                bm = [mpmath.mpf(x) for x in b]
                prods = [
                    mpmath.fprod(bm[k] / (bm[k] - bm[l]) for l in range(len(bm)) if l != k)
                    for k in range(len(bm))
                ]
                lam_n = mpmath.mpf(self.coeffs.fading_rate) * mpmath.mpf(self.coeffs.noise_power)
                if self.noise_variant == "as_printed":
                    expo = [mpmath.exp(lam_n / bk) for bk in bm]
                elif self.noise_variant == "negated":
                    expo = [mpmath.exp(-lam_n / bk) for bk in bm]
                else:
                    expo = [mpmath.mpf(1)] * len(bm)
                weights = [p * e for p, e in zip(prods, expo)]
                cond = mpmath.fsum(abs(w) for w in weights) if weights else mpmath.mpf(1)
                digits = int(mpmath.ceil(mpmath.log10(cond))) if cond > 1 else 0
            if digits + 30 <= dps:
                break
            dps = digits + 40
        self.condition_number = float(cond) if cond < mpmath.mpf("1e300") else math.inf
        self.products = np.array([float(p) for p in prods])
        self.exponent_terms = np.array([float(e) for e in expo])
        self._dps = max(20, digits + 25)
        self._mp_weights = weights
        self._mp_b = bm
        self._use_float = self.condition_number <= _FLOAT_COND_LIMIT and all(
            math.isfinite(float(w)) for w in weights
        )
        self._weights = np.array([float(w) for w in weights]) if self._use_float else None

    @property
    def extended_precision(self) -> bool:
        return not self._use_float

    # -- scalar kernels -------------------------------------------------
    def _survival_scalar(self, z: float) -> float:
        a, c = self.coeffs.a, self._c
        noise = math.exp(-c * z) if self.noise_variant == "exact" or not self.coeffs.b else 1.0
        if not self.coeffs.b:
            return math.exp(-c * z)
        if self._use_float:
            b = self.coeffs.b_array
            return noise * float(np.sum(self._weights * a / (a + b * z)))
        with mpmath.workdps(self._dps):
            am, zm = mpmath.mpf(a), mpmath.mpf(z)
            s = mpmath.fsum(w * am / (am + bk * zm) for w, bk in zip(self._mp_weights, self._mp_b))
            return noise * float(s)

    def _pdf_scalar(self, z: float) -> float:
        a, c = self.coeffs.a, self._c
        if not self.coeffs.b:
            return c * math.exp(-c * z)
        exact = self.noise_variant == "exact"
        if self._use_float:
            b = self.coeffs.b_array
            den = a + b * z
            terms = a * b / den**2
            if exact:
                terms = terms + c * a / den
            s = float(np.sum(self._weights * terms))
        else:
            with mpmath.workdps(self._dps):
                am, zm, cm = mpmath.mpf(a), mpmath.mpf(z), mpmath.mpf(c)
                parts = []
                for w, bk in zip(self._mp_weights, self._mp_b):
                    den = am + bk * zm
                    t = am * bk / den**2
                    if exact:
                        t += cm * am / den
                    parts.append(w * t)
                s = float(mpmath.fsum(parts))
        return s * math.exp(-c * z) if exact else s

    @staticmethod
    def _apply(fn, z, at_inf: float = 0.0):
        if np.ndim(z) == 0:
            zf = float(z)
            if zf < 0:
                raise ValueError(f"SINR argument must be non-negative, got {zf}")
            return at_inf if math.isinf(zf) else fn(zf)
        arr = np.asarray(z, dtype=float)
        if np.any(arr < 0):
            raise ValueError("SINR arguments must be non-negative")
        out = [at_inf if math.isinf(x) else fn(float(x)) for x in arr.ravel()]
        return np.array(out, dtype=float).reshape(arr.shape)

    def survival(self, z):
        """``P(Z > z)`` from the partial-fraction closed form."""
        return self._apply(self._survival_scalar, z)

    def cdf(self, z):
        return 1.0 - self.survival(z)

    def pdf(self, z):
        return self._apply(self._pdf_scalar, z)

    def laplace_survival(self, z):
        """``P(Z > z)`` as a product of Laplace factors (variant-free, exact)."""
        return _laplace_survival(self.coeffs, z)


def _laplace_survival(coeffs: SinrCoefficients, z):
    z = np.asarray(z, dtype=float)
    a = coeffs.a
    c = coeffs.fading_rate * coeffs.noise_power / a
    b = coeffs.b_array
    out = np.exp(-c * z)
    if b.size:
        out = out * np.prod(a / (a + np.multiply.outer(z, b)), axis=-1)
    return out if out.ndim else float(out)


def sinr_pdf(dist: SinrDistribution, z):
    return dist.pdf(z)


def sinr_cdf(dist: SinrDistribution, z):
    return dist.cdf(z)


def outage_probability(dist: SinrDistribution, gamma_th: float) -> float:
    """Probability that the SINR does not exceed ``gamma_th``."""
    if gamma_th < 0:
        raise ValueError("gamma_th must be non-negative")
    return dist.cdf(gamma_th)


# -- ergodic rate ---------------------------------------------------------


def _tail_cutoff(coeffs_list: Sequence[SinrCoefficients], tol: float = _TAIL_TOL) -> tuple[float, float]:
    """Cutoff ``T`` in ``t = ln(1 + z)`` and a bound on the discarded tail.

    Two bounds on ``P(Z > e^t - 1)`` are used: the interference product
    ``prod_k a / (b_k z)`` (decaying like ``e^{-K t}``) and the noise factor
    ``exp(-c z)``; the tighter one decides.
    """
    cutoff, worst = 1.0, 0.0
    for co in coeffs_list:
        best_t, best_bound = math.inf, math.inf
        b = co.b_array
        k = b.size
        if k:
            log_c = float(np.sum(np.log(co.a / b))) + k * math.log(2.0)
            t = max(math.log(2.0), (log_c - math.log(k * tol)) / k)
            best_t, best_bound = t, math.exp(log_c - k * t) / k
        c = co.fading_rate * co.noise_power / co.a
        if c > 0:
            # integral of exp(-c (e^t - 1)) over t > T is e^c E1(c e^T) <= e^(c-x)/x
            x = c - math.log(tol)
            t = math.log(x / c)
            if t < best_t:
                best_t, best_bound = t, tol / x
        if math.isinf(best_t):
            raise ValueError("noise-free link without interferers has unbounded rate")
        cutoff = max(cutoff, best_t)
        worst = max(worst, best_bound)
    return cutoff, worst


def ergodic_rate_quadrature(
    dist: SinrDistribution | SinrCoefficients,
    *,
    survival: Literal["laplace", "closed_form"] = "laplace",
    epsabs: float = 1e-10,
) -> float:
    """``E[log2(1 + Z)]`` in bits/s/Hz by adaptive quadrature.

    Uses ``E[ln(1+Z)] = integral_0^inf P(Z > e^t - 1) dt`` on ``[0, T]`` where
    ``T`` is chosen so the analytic tail bound is below 1e-12.
    ``survival="closed_form"`` integrates the partial-fraction CDF of
    ``dist`` (and its noise variant) instead of the Laplace product.
    """
    if isinstance(dist, SinrCoefficients):
        coeffs, closed = dist, None
        if survival == "closed_form":
            closed = SinrDistribution(regularize_coefficients(dist))
    else:
        coeffs, closed = dist.coeffs, dist
    cutoff, _ = _tail_cutoff([coeffs])
    if survival == "laplace":
        fn = lambda t: _laplace_survival(coeffs, math.expm1(t))  # noqa: E731
    elif survival == "closed_form":
        fn = lambda t: closed.survival(math.expm1(t))  # noqa: E731
    else:
        raise ValueError(f"unknown survival route {survival!r}")
    value, err, info = _quad(fn, cutoff, epsabs)
    return value / _LN2


def _quad(fn, upper: float, epsabs: float):
    value, err, info = integrate.quad(
        fn, 0.0, upper, epsabs=epsabs, epsrel=1e-10, limit=500, full_output=1
    )[:3]
    if err > max(epsabs, 1e-10 * abs(value)) * 10:
        raise QuadratureError(
            f"quadrature on [0, {upper:.3g}] did not converge: value={value!r}, "
            f"error estimate={err!r}, evaluations={info.get('neval')}"
        )
    return value, err, info


def ergodic_rates(coeffs_list: Sequence[SinrCoefficients], *, epsabs: float = 1e-10) -> np.ndarray:
    """Vectorized :func:`ergodic_rate_quadrature` (Laplace route) for many links."""
    coeffs_list = list(coeffs_list)
    if not coeffs_list:
        return np.empty(0)
    width = max(len(co.b) for co in coeffs_list)
    a = np.array([co.a for co in coeffs_list])
    b = np.zeros((len(coeffs_list), width))
    for i, co in enumerate(coeffs_list):
        b[i, : len(co.b)] = co.b
    c = np.array([co.fading_rate * co.noise_power / co.a for co in coeffs_list])
    cutoff, _ = _tail_cutoff(coeffs_list)

    def integrand(t: float) -> np.ndarray:
        z = math.expm1(t)
        return np.exp(-c * z) * np.prod(a[:, None] / (a[:, None] + b * z), axis=1)

    value, err = integrate.quad_vec(
        integrand, 0.0, cutoff, epsabs=epsabs, epsrel=1e-10, norm="max", limit=2000
    )
    if err > max(epsabs, 1e-10 * float(np.max(np.abs(value)))) * 10:
        raise QuadratureError(f"vectorized quadrature error estimate {err!r} too large")
    return value / _LN2


@dataclass(frozen=True)
class ClosedFormRate:
    """Closed-form ergodic rate next to the quadrature reference."""

    value: float
    quadrature: float
    rel_deviation: float
    flagged: bool
    form: str


def ergodic_rate_closed(
    dist: SinrDistribution,
    form: Literal["as_printed", "corrected"] = "as_printed",
    *,
    flag_threshold: float = 1e-3,
) -> ClosedFormRate:
    """Closed-form ergodic rate in bits/s/Hz, reported against quadrature.

    ``"as_printed"`` evaluates ``sum_k beta_k a e_k / (a - b_k) w_k / ln 2``
    with ``beta_k = ln(a/b_k) + atan2(lambda/b_k, 0)`` and
    ``e_k = exp(lambda N_R / b_k)``. ``"corrected"`` integrates the exact
    survival function term by term:
    ``a/(a-b_k) * [e^c E1(c) - e^{c a/b_k} E1(c a/b_k)]`` with
    ``c = lambda N_R / a`` (``ln(a/b_k)`` when ``c = 0``).
    A relative deviation above ``flag_threshold`` sets ``flagged``.
    """
    co = dist.coeffs
    for k, bk in enumerate(co.b):
        if abs(co.a - bk) <= 0.5e-12 * co.a:
            raise ValueError(f"closed form is singular: a equals b[{k}]")
    with mpmath.workdps(dist._dps + 10):
        a = mpmath.mpf(co.a)
        lam = mpmath.mpf(co.fading_rate)
        lam_n = lam * mpmath.mpf(co.noise_power)
        c = lam_n / a
        bm = [mpmath.mpf(x) for x in co.b]
        prods = [
            mpmath.fprod(bm[k] / (bm[k] - bm[l]) for l in range(len(bm)) if l != k)
            for k in range(len(bm))
        ]
        if form == "as_printed":
            terms = []
            for bk, p in zip(bm, prods):
                beta = mpmath.log(a / bk) + mpmath.atan2(lam / bk, 0)
                terms.append(beta * a * mpmath.exp(lam_n / bk) / (a - bk) * p)
            total = mpmath.fsum(terms)
        elif form == "corrected":
            if not bm:
                total = mpmath.exp(c) * mpmath.e1(c)
            elif c == 0:
                total = mpmath.fsum(p * a / (a - bk) * mpmath.log(a / bk) for bk, p in zip(bm, prods))
            else:
                head = mpmath.exp(c) * mpmath.e1(c)
                total = mpmath.fsum(
                    p * a / (a - bk) * (head - mpmath.exp(c * a / bk) * mpmath.e1(c * a / bk))
                    for bk, p in zip(bm, prods)
                )
        else:
            raise ValueError(f"unknown closed form {form!r}")
        value = float(total / mpmath.log(2))
    reference = ergodic_rate_quadrature(co)
    dev = abs(value - reference) / abs(reference) if reference else math.inf
    return ClosedFormRate(value, reference, dev, not dev <= flag_threshold, form)


def ho_aware_rate(config: ScenarioConfig, mu: float, v: float, ergodic_rate: float) -> float:
    """Handoff-aware rate in bits/s from a spectral efficiency in bits/s/Hz."""
    cost = ho_cost(config.ho_delay, mu, v, config.mu_max, config.v_max).value
    return config.bandwidth * ergodic_rate * (1.0 - cost)


# -- worst-case geometry --------------------------------------------------


def worst_case_coefficients(
    config: ScenarioConfig,
    mu: float,
    *,
    interference: bool = True,
    include_opposite: bool = False,
    regularize: bool = True,
    rel_jitter: float = DEFAULT_JITTER,
) -> SinrCoefficients:
    """Coefficients for a CAV halfway between two BSs near the road centre.

    The serving distance is ``sqrt(h^2 + d_safe^2 + 1/(4 mu^2))`` and the
    interferers sit at ``sqrt(h^2 + d_safe^2 + (2k+1)^2/(4 mu^2))``,
    ``k >= 1``, on both sides until the road ends. The other BS at the
    serving distance is left out unless ``include_opposite`` is set.
    """
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    cfg = config.replace(bs_density=mu, mu_max=max(config.mu_max, mu))
    n = bs_count(mu, cfg.road_length)
    geom = build_geometry(cfg, (n // 2) / mu)
    raw = sinr_coefficients(cfg, geom, regularize=False)
    b = list(raw.b)
    if not include_opposite:
        # drop the neighbour at the serving distance (float ties may go either way)
        keep = [
            bk
            for j, bk in zip(geom.interferer_indices, b)
            if not math.isclose(geom.distances[j], geom.serving_distance, rel_tol=1e-9)
        ]
        b = keep
    if not interference:
        b = []
    coeffs = SinrCoefficients(raw.a, tuple(b), raw.fading_rate, raw.noise_power)
    return regularize_coefficients(coeffs, rel_jitter) if regularize else coeffs


def worst_case_rate(
    config: ScenarioConfig,
    mu: float,
    *,
    method: Literal["quadrature", "closed_form"] = "quadrature",
    interference: bool = True,
) -> float:
    """Worst-case ergodic spectral efficiency (bits/s/Hz) at density ``mu``."""
    coeffs = worst_case_coefficients(config, mu, interference=interference)
    if method == "quadrature":
        return ergodic_rate_quadrature(coeffs)
    if method == "closed_form":
        return ergodic_rate_closed(SinrDistribution(coeffs), "corrected").value
    raise ValueError(f"unknown method {method!r}")


def worst_case_rates(
    config: ScenarioConfig, mus: Iterable[float], *, interference: bool = True
) -> np.ndarray:
    """Batched :func:`worst_case_rate` (quadrature) for a grid of densities."""
    mus = np.asarray(list(mus), dtype=float)
    out = np.empty(mus.shape)
    counts = np.array([bs_count(m, config.road_length) for m in mus])
    for n in np.unique(counts):
        sel = np.flatnonzero(counts == n)
        batch = [worst_case_coefficients(config, m, interference=interference) for m in mus[sel]]
        out[sel] = ergodic_rates(batch)
    return out


# -- reports --------------------------------------------------------------


@dataclass(frozen=True)
class RateReport:
    outage: float
    ergodic_rate: float
    ho_aware_rate: float
    ho_cost: float
    method: str
    noise_variant: str = DEFAULT_NOISE_VARIANT
    threshold_variant: str = DEFAULT_THRESHOLD_VARIANT
    saturated: bool = False


def rate_report(
    config: ScenarioConfig,
    mu: float,
    v: float,
    *,
    method: Literal["closed_form", "quadrature"] = "closed_form",
    coeffs: SinrCoefficients | None = None,
    noise_variant: NoiseVariant = DEFAULT_NOISE_VARIANT,
    threshold_variant: ThresholdVariant = DEFAULT_THRESHOLD_VARIANT,
) -> RateReport:
    """Outage and rates at ``(mu, v)``; worst-case geometry unless ``coeffs`` given.

    ``ergodic_rate`` and ``ho_aware_rate`` are in bits/s.
    """
    if coeffs is None:
        coeffs = worst_case_coefficients(config, mu)
    dist = SinrDistribution(coeffs, noise_variant)
    cost = ho_cost(config.ho_delay, mu, v, config.mu_max, config.v_max)
    if method == "closed_form":
        spectral = ergodic_rate_closed(dist, "corrected").value
    elif method == "quadrature":
        spectral = ergodic_rate_quadrature(dist)
    else:
        raise ValueError(f"unknown method {method!r}")
    if cost.saturated:
        outage = 1.0
    else:
        gamma = sinr_threshold(config.rate_threshold, config.bandwidth, cost.value, threshold_variant)
        if method == "closed_form":
            outage = outage_probability(dist, gamma)
        else:
            outage, _, _ = _quad(lambda z: dist.pdf(z), gamma, 1e-12)
            outage = min(max(outage, 0.0), 1.0)
    ergodic = config.bandwidth * spectral
    return RateReport(
        outage=outage,
        ergodic_rate=ergodic,
        ho_aware_rate=ergodic * (1.0 - cost.value),
        ho_cost=cost.value,
        method=method,
        noise_variant=noise_variant,
        threshold_variant=threshold_variant,
        saturated=cost.saturated,
    )
