"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line; the lines are repeated in the
terminal summary. Run alone with ``pytest tests/test_acceptance.py -v``.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from conftest import record
from v2iflow import analytics as an
from v2iflow import experiments as ex
from v2iflow import fading, flow
from v2iflow.cli import main as cli_main
from v2iflow.config import ScenarioConfig
from v2iflow.geometry import SinrCoefficients, regularize_coefficients

HIGH_RATE = ScenarioConfig(rate_threshold=1e8, mu_max=0.02)
MU_GRID = (0.002, 0.006, 0.01, 0.014, 0.02)


def _bisect(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_outage_oracle_agreement():
    start = time.perf_counter()
    decision = fading.discriminate_variants()
    assert decision.noise_variant == an.DEFAULT_NOISE_VARIANT
    assert decision.threshold_variant == an.DEFAULT_THRESHOLD_VARIANT
    worst = 0.0
    for i, mu in enumerate(MU_GRID):
        for v in (10.0, 30.0):
            closed = an.rate_report(HIGH_RATE, mu, v, noise_variant=decision.noise_variant,
                                    threshold_variant=decision.threshold_variant).outage
            mc = fading.simulate_ho_outage(HIGH_RATE, mu, v, 10**5, 1000 + i * 7 + int(v)).outage
            worst = max(worst, abs(closed - mc))
    elapsed = time.perf_counter() - start
    ok = worst <= 0.01 and elapsed <= 60
    record("1 outage oracle", ok, f"max |closed - mc| = {worst:.4g} (tol 0.01), {elapsed:.1f} s")
    assert ok


def test_ergodic_rate_oracle_chain():
    worst = 0.0
    flagged = True
    deviations = []
    for i, mu in enumerate(MU_GRID):
        coeffs = an.worst_case_coefficients(HIGH_RATE, mu)
        quad = an.ergodic_rate_quadrature(coeffs)
        raw = an.worst_case_coefficients(HIGH_RATE, mu, regularize=False)
        sim = fading.simulate(fading.SimSpec(raw, 0.0, 10**6, 2000 + i))
        worst = max(worst, abs(sim.mean_log_rate - quad) / quad)
        printed = an.ergodic_rate_closed(an.SinrDistribution(coeffs), "as_printed")
        deviations.append(printed.rel_deviation)
        flagged &= printed.flagged == (printed.rel_deviation > 1e-3)
    ok = worst <= 0.01 and flagged
    record("2 ergodic oracle chain", ok,
           f"max rel |quad - mc| = {worst:.3g} (tol 0.01); printed closed-form deviations "
           f"{', '.join(f'{d:.3g}' for d in deviations)} all flagged={flagged}")
    assert ok


def _random_coefficient_sets():
    rng = np.random.default_rng(12345)
    sets = []
    while len(sets) < 14:
        k = int(rng.integers(0, 7))
        lam = float(rng.uniform(0.5, 2.0))
        a = float(10 ** rng.uniform(-1, 1))
        b = tuple(float(x) for x in 10 ** rng.uniform(-1.5, 0.5, k))
        noise = 0.0 if k and rng.random() < 0.3 else float(rng.uniform(0, 3) * a / lam)
        sets.append(SinrCoefficients(a, b, lam, noise))
    for alpha in (3.0, 4.0):
        for mu in (0.004, 0.01, 0.02):
            cfg = ScenarioConfig(path_loss_exp=alpha, mu_max=0.02)
            sets.append(an.worst_case_coefficients(cfg, mu))
    return sets


def test_distribution_sanity():
    from scipy import integrate

    sets = _random_coefficient_sets()
    assert len(sets) == 20
    worst_norm = worst_fd = 0.0
    monotone = True
    grid = np.logspace(-4, 4, 1000)
    for coeffs in sets:
        if coeffs.b and not coeffs.regularized:
            coeffs = regularize_coefficients(coeffs)
        dist = an.SinrDistribution(coeffs)
        total = integrate.quad(lambda z: dist.pdf(z), 0, np.inf, epsabs=1e-13, epsrel=1e-12,
                               limit=500)[0]
        worst_norm = max(worst_norm, abs(total - 1.0))
        for z in (0.1, 1.0, 10.0):
            # d/dz cdf = -d/dz survival; differencing the survival avoids
            # cancellation where the cdf is within 1e-9 of one
            h = 1e-5 * z
            fd = (dist.survival(z - h) - dist.survival(z + h)) / (2 * h)
            worst_fd = max(worst_fd, abs(fd - dist.pdf(z)) / dist.pdf(z))
        monotone &= bool(np.all(np.diff(dist.cdf(grid)) >= 0))
    ok = worst_norm <= 1e-6 and worst_fd <= 1e-6 and monotone
    record("3 distribution sanity", ok,
           f"20 sets: max |int pdf - 1| = {worst_norm:.3g}, max FD rel err = {worst_fd:.3g}, "
           f"cdf monotone={monotone}")
    assert ok


def test_collision_roundtrip():
    cfg = ScenarioConfig()
    worst = 0.0
    for eps in (1e-3, 1e-2, 1e-1, 0.5):
        vs = flow.v_safe(eps, cfg.processing_time, cfg.spacing_mu, cfg.spacing_sigma)
        worst = max(worst, abs(flow.crash_probability(
            vs, cfg.processing_time, cfg.spacing_mu, cfg.spacing_sigma) - eps))

    def crash(v):
        x = (math.log(v * cfg.processing_time) - cfg.spacing_mu) / (cfg.spacing_sigma * math.sqrt(2))
        return 0.5 * (1 + math.erf(x)) - cfg.crash_tolerance

    oracle = _bisect(crash, 1e-3, 1e4)
    vs = flow.v_safe(cfg.crash_tolerance, cfg.processing_time, cfg.spacing_mu, cfg.spacing_sigma)
    rel = abs(vs - oracle) / oracle
    ok = worst <= 1e-10 and rel <= 1e-3 and abs(vs - 16.29) / 16.29 <= 1e-3
    record("4 collision roundtrip", ok,
           f"max |P(v_safe(eps)) - eps| = {worst:.3g}; v_safe = {vs:.6f} m/s, "
           f"bisection {oracle:.6f} (rel {rel:.2g})")
    assert ok


def test_optimizer_correctness():
    # (a) quadratic
    f = lambda x: -(x - 0.3217) ** 2  # noqa: E731
    res = flow.golden_section_maximize(f, 0.0, 1.0, 1e-7)
    xs = np.linspace(0.0, 1.0, 10**5)
    grid_best = xs[np.argmax(f(xs))]
    spacing = xs[1] - xs[0]
    ok_a = abs(res.x - grid_best) <= 1e-7 + spacing
    ok_iter = res.iterations <= flow.gss_iteration_bound(0.0, 1.0, 1e-7)

    # (b) V_data for the default scenario
    cfg = ScenarioConfig()
    plan = flow.optimize_density(cfg)
    mus = np.linspace(1.0 / cfg.road_length, cfg.mu_max, 10**5)
    rates = an.worst_case_rates(cfg, mus)
    required = cfg.rate_threshold / cfg.bandwidth
    signed = (1.0 - required / np.maximum(rates, 1e-300)) / (cfg.ho_delay_normalized * mus)
    mu_grid = mus[np.argmax(signed)]
    ok_b = abs(plan.mu_star - mu_grid) <= 1e-7 + (mus[1] - mus[0])
    expected_v = min(cfg.v_max, plan.bounds.v_safe, plan.bounds.v_data)
    ok_v = plan.v_star == expected_v
    ok = ok_a and ok_b and ok_iter and ok_v
    record("5 optimizer correctness", ok,
           f"quadratic |gss - grid| = {abs(res.x - grid_best):.3g}; V_data mu* = {plan.mu_star:.7g} "
           f"vs grid {mu_grid:.7g}; iterations {res.iterations} <= "
           f"{flow.gss_iteration_bound(0.0, 1.0, 1e-7)}; v* == min bound: {ok_v}")
    assert ok


def _signed_curve(cfg, mus):
    rates = an.worst_case_rates(cfg, mus)
    required = cfg.rate_threshold / cfg.bandwidth
    return (1.0 - required / np.maximum(rates, 1e-300)) / (cfg.ho_delay_normalized * mus)


def test_figure_shape_vdata_alpha3():
    start = time.perf_counter()
    csv_text = ex.run_sweep(ex.SweepSpec("vdata_vs_mu"))
    elapsed = time.perf_counter() - start
    mus = np.linspace(5e-4, 0.01, 400)
    curve = _signed_curve(ScenarioConfig(), mus)
    peak = int(np.argmax(curve))
    rises = peak > 0 and bool(np.all(np.diff(curve[: peak + 1]) >= 0))
    falls = peak < len(mus) - 1 and bool(np.all(np.diff(curve[peak:]) <= 0))
    ok = rises and falls and elapsed <= 120 and csv_text.count("\n") == 121
    record("6a V_data vs density, alpha=3 rise then fall", ok,
           f"peak at mu={mus[peak]:.5g} (V_data {curve[peak]:.4g} m/s), rises={rises}, "
           f"falls={falls}, sweep {elapsed:.1f} s")
    assert ok


@pytest.mark.xfail(strict=True, reason="worst-case rate at alpha=4 is too small at low density; "
                   "V_data is infeasible there and then rises before falling")
def test_figure_shape_vdata_alpha4():
    mus = np.linspace(5e-4, 0.01, 400)
    curve = _signed_curve(ScenarioConfig(path_loss_exp=4.0), mus)
    diffs = np.diff(curve)
    ok = bool(np.all(diffs <= 0))
    peak = int(np.argmax(curve))
    record("6a V_data vs density, alpha=4 monotone decreasing", ok,
           f"{int(np.sum(diffs > 0))} of {diffs.size} steps increase; infeasible below "
           f"mu={mus[np.argmax(curve > 0)]:.4g}, peak V_data {curve[peak]:.4g} m/s at "
           f"mu={mus[peak]:.4g}")
    assert ok


def test_figure_shape_flow_vs_rth():
    start = time.perf_counter()
    rows = ex.read_rows(ex.run_sweep(ex.SweepSpec("flow_vs_rth", trials=10**5, seed=11)))
    elapsed = time.perf_counter() - start
    ok = elapsed <= 120
    notes = []
    for variant in ("alpha=3", "alpha=4"):
        sel = [r for r in rows if r["variant"] == variant]
        q = [float(r["q_star"]) for r in sel]
        mu = [float(r["mu_star"]) for r in sel]
        # the search resolves mu* to 1e-7, so allow that much slack
        q_ok = all(b <= a + 1e-9 * a for a, b in zip(q, q[1:]))
        mu_ok = all(b >= a - 1e-7 for a, b in zip(mu, mu[1:]))
        ok &= q_ok and mu_ok and all(r["feasible"] == "true" for r in sel)
        notes.append(f"{variant}: Q {q[0]:.4g}->{q[-1]:.4g} nonincreasing={q_ok}, "
                     f"mu* {mu[0]:.5g}->{mu[-1]:.5g} nondecreasing={mu_ok}")
    record("6b flow and density vs rate target", ok, "; ".join(notes) + f"; {elapsed:.1f} s")
    assert ok


def test_figure_shape_flow_vs_epsilon():
    start = time.perf_counter()
    spec = ex.SweepSpec("flow_vs_epsilon", grid=np.linspace(1e-3, 0.1, 40).tolist())
    rows = ex.read_rows(ex.run_sweep(spec))
    elapsed = time.perf_counter() - start
    ok = elapsed <= 120
    switch = {}
    for tau in ("tau=0.004", "tau=0.006"):
        sel = [r for r in rows if r["variant"] == tau]
        q = [float(r["q_star"]) for r in sel]
        ok &= all(b >= a for a, b in zip(q, q[1:]))
        saturated = [i for i, r in enumerate(sel) if r["binding"] != "safe"]
        ok &= bool(saturated) and saturated == list(range(saturated[0], len(sel)))
        ok &= len({q[i] for i in saturated}) == 1
        switch[tau] = float(sel[saturated[0]]["x"]) if saturated else math.nan
    # the switch from the safety bound to the flat part happens at a smaller
    # tolerance for the faster-reacting vehicle
    ok &= switch["tau=0.004"] < switch["tau=0.006"]
    record("6c flow vs crash tolerance", ok,
           f"Q nondecreasing and flat after the switch; switch eps "
           f"tau=4ms {switch['tau=0.004']:.4g} < tau=6ms {switch['tau=0.006']:.4g}; {elapsed:.1f} s")
    assert ok


def test_figure_shape_flow_vs_mu():
    start = time.perf_counter()
    rows = ex.read_rows(ex.run_sweep(ex.SweepSpec("flow_vs_mu")))
    elapsed = time.perf_counter() - start
    ok = elapsed <= 120
    worst = math.inf
    for d in ("5", "20", "50"):
        on = [float(r["q_star"]) for r in rows if r["variant"] == f"d_safe={d};interference=on"]
        off = [float(r["q_star"]) for r in rows if r["variant"] == f"d_safe={d};interference=off"]
        gaps = [b - a for a, b in zip(on, off)]
        worst = min(worst, min(gaps))
        ok &= all(g >= 0 for g in gaps)
    record("6d flow vs density with and without interference", ok,
           f"min Q(off) - Q(on) = {worst:.4g} over 3 d_safe x 20 mu; {elapsed:.1f} s")
    assert ok


def test_traffic_flow_sampling():
    cfg = ScenarioConfig()
    v = 16.0
    mean, err = flow.monte_carlo_flow(v, cfg.spacing_mu, cfg.spacing_sigma, 10**6, 99)
    exact = flow.traffic_flow(v, cfg.spacing_mu, cfg.spacing_sigma)
    rel = abs(mean - exact) / exact
    ok = rel <= 5e-3
    record("7 traffic flow sampling", ok,
           f"mc {mean:.5f} vs closed form {exact:.5f} (rel {rel:.3g}, stderr {err:.3g})")
    assert ok


def test_determinism(tmp_path):
    outputs = {}
    for shards in (1, 8):
        for rep in range(2):
            for cmd in (["validate"], ["sweep", "outage_vs_mu", "--grid", "0.002:0.02:4"],
                        ["sweep", "flow_vs_rth", "--grid", "6e7,7e7,8e7"]):
                out = tmp_path / f"{cmd[-1]}-{shards}-{rep}.csv"
                code = cli_main(cmd + ["--seed", "5", "--trials", "40000", "--shards",
                                       str(shards), "--out", str(out)])
                assert code == 0
                outputs.setdefault(" ".join(cmd), set()).add(out.read_bytes())
    ok = all(len(v) == 1 for v in outputs.values())
    record("8 determinism", ok,
           f"{len(outputs)} commands x shards (1, 8) x 2 runs: "
           f"{'byte-identical' if ok else 'outputs differ'}")
    assert ok
