"""Figure sweeps and the end-to-end validation battery.

Every sweep produces CSV with one fixed column order::

    x, variant, analytic, mc, mc_stderr, feasible, binding, mu_star, v_star, q_star

Empty cells mean "not applicable". Rates are in bits/s, speeds in m/s,
flows in vehicles/s.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import integrate

from . import analytics as an
from . import fading
from . import flow
from .config import ScenarioConfig
from .geometry import SinrCoefficients, regularize_coefficients

__all__ = [
    "EXPERIMENTS",
    "CSV_COLUMNS",
    "SweepSpec",
    "Check",
    "ValidationReport",
    "default_grid",
    "run_sweep",
    "validate",
    "validate_coefficients",
]

CSV_COLUMNS = (
    "x", "variant", "analytic", "mc", "mc_stderr",
    "feasible", "binding", "mu_star", "v_star", "q_star",
)

# density sweeps of outage and capacity use a 100 Mbps target and a wider density cap
_HIGH_RATE = {"rate_threshold": 1e8, "mu_max": 0.02}

EXPERIMENTS: dict[str, dict[str, Any]] = {
    "outage_vs_mu": {"grid": (0.002, 0.02, 10), "overrides": _HIGH_RATE, "mc": True},
    "capacity_vs_mu": {"grid": (0.002, 0.02, 10), "overrides": _HIGH_RATE, "mc": True},
    "vdata_vs_mu": {"grid": (5e-4, 0.01, 20), "overrides": {}, "mc": False},
    "flow_vs_rth": {"grid": (6e7, 8e7, 11), "overrides": {}, "mc": True},
    "flow_vs_epsilon": {"grid": (1e-3, 0.1, 12), "overrides": {}, "mc": False},
    "flow_vs_mu": {"grid": (5e-4, 0.01, 20), "overrides": {}, "mc": False},
}


def default_grid(experiment: str) -> list[float]:
    start, stop, num = EXPERIMENTS[experiment]["grid"]
    return np.linspace(start, stop, num).tolist()


@dataclass(frozen=True)
class SweepSpec:
    experiment: str
    grid: Sequence[float] = ()
    overrides: Mapping[str, float] = field(default_factory=dict)
    trials: int = 100_000
    seed: int = 0
    shards: int = 1
    workers: int = 1
    base: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(
                f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}"
            )
        grid = list(self.grid) or default_grid(self.experiment)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", tuple(float(x) for x in grid))

    @property
    def config(self) -> ScenarioConfig:
        data = self.base.to_dict()
        data.update(EXPERIMENTS[self.experiment]["overrides"])
        data.update(self.overrides)
        # sweeps over mu may exceed the base density; keep the config valid
        data["bs_density"] = min(data["bs_density"], data["mu_max"])
        return ScenarioConfig.from_dict(data)


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _point_seed(seed: int, index: int) -> int:
    return (seed * 1_000_003 + index) % 2**64


# -- per-experiment row builders ----------------------------------------------
# each returns one row dict for (variant, x, point index)


def _outage_row(spec: SweepSpec, cfg: ScenarioConfig, v: float, mu: float, idx: int) -> dict:
    cost = an.ho_cost(cfg.ho_delay, mu, v, cfg.mu_max, cfg.v_max)
    if cost.saturated:
        analytic = 1.0
    else:
        gamma = an.sinr_threshold(cfg.rate_threshold, cfg.bandwidth, cost.value)
        analytic = an.outage_probability(
            an.SinrDistribution(an.worst_case_coefficients(cfg, mu)), gamma
        )
    est = fading.simulate_ho_outage(cfg, mu, v, spec.trials, _point_seed(spec.seed, idx),
                                    shards=spec.shards)
    return {"analytic": analytic, "mc": est.outage, "mc_stderr": est.stderr,
            "feasible": not cost.saturated}


def _capacity_row(spec: SweepSpec, cfg: ScenarioConfig, v: float, mu: float, idx: int) -> dict:
    coeffs = an.worst_case_coefficients(cfg, mu)
    spectral = an.ergodic_rate_quadrature(coeffs)
    cost = an.ho_cost(cfg.ho_delay, mu, v, cfg.mu_max, cfg.v_max)
    scale = cfg.bandwidth * (1.0 - cost.value)
    sim = fading.simulate(fading.SimSpec(
        an.worst_case_coefficients(cfg, mu, regularize=False), 0.0, spec.trials,
        _point_seed(spec.seed, idx), spec.shards,
    ))
    return {"analytic": scale * spectral, "mc": scale * sim.mean_log_rate,
            "mc_stderr": scale * sim.log_rate_stderr, "feasible": not cost.saturated}


def _vdata_row(spec: SweepSpec, cfg: ScenarioConfig, mu: float) -> dict:
    bounds = flow.optimal_speed(cfg, mu)
    v_star = bounds.v_star
    return {"analytic": bounds.v_data, "feasible": bounds.feasible, "binding": bounds.binding,
            "v_star": v_star,
            "q_star": flow.traffic_flow(v_star, cfg.spacing_mu, cfg.spacing_sigma)}


def _plan_row(spec: SweepSpec, cfg: ScenarioConfig, idx: int, with_mc: bool) -> dict:
    plan = flow.optimize_density(cfg)
    row = {"analytic": plan.q_star, "feasible": plan.feasible, "binding": plan.binding,
           "mu_star": plan.mu_star, "v_star": plan.v_star, "q_star": plan.q_star}
    if with_mc:
        mean, err = flow.monte_carlo_flow(plan.v_star, cfg.spacing_mu, cfg.spacing_sigma,
                                          spec.trials, _point_seed(spec.seed, idx),
                                          shards=spec.shards)
        row.update(mc=mean, mc_stderr=err)
    return row


def _flow_mu_row(spec: SweepSpec, cfg: ScenarioConfig, mu: float, interference: bool) -> dict:
    bounds = flow.optimal_speed(cfg, mu, interference=interference)
    q = flow.traffic_flow(bounds.v_star, cfg.spacing_mu, cfg.spacing_sigma)
    return {"analytic": q, "feasible": bounds.feasible, "binding": bounds.binding,
            "v_star": bounds.v_star, "q_star": q}


def _jobs(spec: SweepSpec) -> list[tuple[str, float, Callable[[], dict]]]:
    cfg = spec.config
    jobs: list[tuple[str, float, Callable[[], dict]]] = []
    exp = spec.experiment
    idx = 0
    if exp in ("outage_vs_mu", "capacity_vs_mu"):
        builder = _outage_row if exp == "outage_vs_mu" else _capacity_row
        for v in (10.0, 20.0, 30.0):
            for mu in spec.grid:
                jobs.append((f"v={v:g}", mu,
                             lambda v=v, mu=mu, i=idx: builder(spec, cfg, v, mu, i)))
                idx += 1
    elif exp == "vdata_vs_mu":
        for alpha in (3.0, 4.0):
            for tau in (4e-3, 6e-3, 8e-3):
                c = cfg.replace(path_loss_exp=alpha, processing_time=tau)
                for mu in spec.grid:
                    jobs.append((f"alpha={alpha:g};tau={tau:g}", mu,
                                 lambda c=c, mu=mu: _vdata_row(spec, c, mu)))
    elif exp == "flow_vs_rth":
        for alpha in (3.0, 4.0):
            for rth in spec.grid:
                c = cfg.replace(path_loss_exp=alpha, rate_threshold=rth)
                jobs.append((f"alpha={alpha:g}", rth,
                             lambda c=c, i=idx: _plan_row(spec, c, i, True)))
                idx += 1
    elif exp == "flow_vs_epsilon":
        for tau in (4e-3, 6e-3):
            for eps in spec.grid:
                c = cfg.replace(processing_time=tau, crash_tolerance=eps)
                jobs.append((f"tau={tau:g}", eps, lambda c=c: _plan_row(spec, c, 0, False)))
    elif exp == "flow_vs_mu":
        for d_safe in (5.0, 20.0, 50.0):
            for interference in (True, False):
                c = cfg.replace(bs_safety=d_safe)
                label = f"d_safe={d_safe:g};interference={'on' if interference else 'off'}"
                for mu in spec.grid:
                    jobs.append((label, mu, lambda c=c, mu=mu, on=interference:
                                 _flow_mu_row(spec, c, mu, on)))
    return jobs


def run_sweep(spec: SweepSpec) -> str:
    """Evaluate a figure sweep and return the CSV document.

    Grid points may run on ``spec.workers`` threads; rows keep grid order.
    """
    jobs = _jobs(spec)
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(lambda job: job[2](), jobs))
    else:
        results = [job[2]() for job in jobs]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for (variant, x, _), row in zip(jobs, results):
        full = {"x": x, "variant": variant, **row}
        writer.writerow([_fmt(full.get(col)) for col in CSV_COLUMNS])
    return buf.getvalue()


def read_rows(csv_text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(csv_text)))


# -- validation ------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, measured: float, tolerance: float, detail: str = "",
            passed: bool | None = None) -> None:
        ok = measured <= tolerance if passed is None else passed
        self.checks.append(Check(name, float(measured), float(tolerance), bool(ok), detail))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("check", "measured", "tolerance", "passed", "detail"))
        for c in self.checks:
            writer.writerow((c.name, _fmt(c.measured), _fmt(c.tolerance), _fmt(c.passed), c.detail))
        return buf.getvalue()


def validate_coefficients(coeffs: SinrCoefficients | Mapping[str, Any]) -> list[str]:
    """Problems with a coefficient set; accepts raw mappings so bad data can be reported."""
    if isinstance(coeffs, SinrCoefficients):
        return coeffs.problems()
    try:
        SinrCoefficients(
            a=float(coeffs["a"]), b=tuple(coeffs.get("b", ())),
            fading_rate=float(coeffs.get("fading_rate", 1.0)),
            noise_power=float(coeffs.get("noise_power", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        return [str(exc)]
    return []


def _distribution_checks(report: ValidationReport, label: str, coeffs: SinrCoefficients) -> None:
    dist = an.SinrDistribution(coeffs)
    total = integrate.quad(lambda z: dist.pdf(z), 0, np.inf, epsabs=1e-13, epsrel=1e-12,
                           limit=500)[0]
    report.add(f"{label}: pdf normalization", abs(total - 1.0), 1e-6)
    worst = 0.0
    for z in (0.1, 1.0, 10.0):
        part = integrate.quad(lambda u: dist.pdf(u), 0, z, epsabs=1e-14, epsrel=1e-13,
                              limit=500)[0]
        worst = max(worst, abs(part - dist.cdf(z)))
    report.add(f"{label}: cdf vs integrated pdf", worst, 1e-8)
    worst = 0.0
    for z in (0.1, 1.0, 10.0):
        h = 1e-5 * z
        fd = (dist.survival(z - h) - dist.survival(z + h)) / (2 * h)
        worst = max(worst, abs(fd - dist.pdf(z)) / dist.pdf(z))
    report.add(f"{label}: cdf derivative vs pdf (relative)", worst, 1e-6)


def validate(
    config: ScenarioConfig,
    trials: int,
    seed: int,
    *,
    shards: int = 1,
    extra_coefficients: Sequence[SinrCoefficients | Mapping[str, Any]] = (),
) -> ValidationReport:
    """Run the closed-form / quadrature / Monte Carlo chain on a battery of links."""
    report = ValidationReport()

    decision = fading.discriminate_variants(max(trials, 200_000), _point_seed(seed, 0), shards)
    report.add("variant discrimination: noise factor",
               decision.noise_errors[an.DEFAULT_NOISE_VARIANT], 0.01,
               f"simulation picks {decision.noise_variant}",
               passed=decision.noise_variant == an.DEFAULT_NOISE_VARIANT)
    report.add("variant discrimination: SINR threshold",
               decision.threshold_errors[an.DEFAULT_THRESHOLD_VARIANT], 0.01,
               f"simulation picks {decision.threshold_variant}",
               passed=decision.threshold_variant == an.DEFAULT_THRESHOLD_VARIANT)

    mu = config.bs_density
    v = min(config.v_max, flow.v_safe(config.crash_tolerance, config.processing_time,
                                      config.spacing_mu, config.spacing_sigma))
    coeffs = an.worst_case_coefficients(config, mu)
    raw = an.worst_case_coefficients(config, mu, regularize=False)

    report_rate = an.rate_report(config, mu, v)
    est = fading.simulate_ho_outage(config, mu, v, trials, _point_seed(seed, 1), shards=shards)
    report.add("defaults: outage closed form vs simulation",
               abs(report_rate.outage - est.outage), 0.01,
               f"mu={mu:g} v={v:.4g} closed={report_rate.outage:.6f} mc={est.outage:.6f}")

    sim = fading.simulate(fading.SimSpec(raw, 0.0, trials, _point_seed(seed, 2), shards))
    quad = an.ergodic_rate_quadrature(coeffs)
    report.add("defaults: ergodic rate quadrature vs simulation (relative)",
               abs(quad - sim.mean_log_rate) / quad, 0.01,
               f"quadrature={quad:.6f} mc={sim.mean_log_rate:.6f}")
    dist = an.SinrDistribution(coeffs)
    corrected = an.ergodic_rate_closed(dist, "corrected")
    report.add("defaults: corrected closed-form rate vs quadrature (relative)",
               corrected.rel_deviation, 1e-6)
    printed = an.ergodic_rate_closed(dist, "as_printed")
    report.add("defaults: printed closed-form rate deviation is flagged",
               printed.rel_deviation, 1e-3,
               f"printed={printed.value:.6f} flagged={printed.flagged}",
               passed=printed.flagged == (printed.rel_deviation > 1e-3))

    _distribution_checks(report, "defaults", coeffs)
    _distribution_checks(report, "high noise", fading.DISCRIMINATOR_COEFFS)

    # symmetric interferer pairs: closed form on jittered values vs raw duplicates
    dup_raw = an.worst_case_coefficients(config.replace(mu_max=max(config.mu_max, 0.01)),
                                         0.01, regularize=False)
    dup = regularize_coefficients(dup_raw)
    _distribution_checks(report, "duplicate pairs", dup)
    gamma = 3.0
    sim = fading.simulate(fading.SimSpec(dup_raw, gamma, trials, _point_seed(seed, 3), shards))
    closed = an.SinrDistribution(dup).cdf(gamma)
    gap = abs(closed - sim.empirical_outage)
    report.add("duplicate pairs: closed form vs simulation (stderr units)",
               gap / max(sim.outage_stderr, 1e-300), 3.0,
               f"closed={closed:.6f} mc={sim.empirical_outage:.6f}")

    worst = 0.0
    for eps in (1e-3, 1e-2, 1e-1, 0.5):
        vs = flow.v_safe(eps, config.processing_time, config.spacing_mu, config.spacing_sigma)
        worst = max(worst, abs(flow.crash_probability(
            vs, config.processing_time, config.spacing_mu, config.spacing_sigma) - eps))
    report.add("collision bound roundtrip", worst, 1e-10)

    for i, extra in enumerate(extra_coefficients):
        problems = validate_coefficients(extra)
        report.add(f"extra coefficients #{i}: well formed", float(len(problems)), 0.0,
                   "; ".join(problems) or "ok")
    return report
