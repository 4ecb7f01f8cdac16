"""Pick the BS density that allows the fastest rate-compliant driving, then the speed.

Three speed caps compete: the legal limit, the collision bound from the
spacing distribution, and the data-rate bound V_data(mu).
"""

from v2iflow import ScenarioConfig, optimize_density, v_data

for alpha in (3.0, 4.0):
    cfg = ScenarioConfig(path_loss_exp=alpha)
    print(f"alpha = {alpha:g}")
    for mu in (0.001, 0.003, 0.006, 0.01):
        vd = v_data(cfg, mu)
        print(f"  V_data({mu:.3f}) = {'infeasible' if vd is None else f'{vd:.2f} m/s'}")
    for interference in (True, False):
        plan = optimize_density(cfg, interference=interference)
        print(f"  interference={interference!s:5}: mu* = {plan.mu_star:.6f} BS/m, "
              f"v* = {plan.v_star:.2f} m/s ({plan.binding}), Q* = {plan.q_star:.2f} veh/s")

plan = optimize_density(ScenarioConfig(rate_threshold=4e8))
print("400 Mbps target:", plan.diagnostics)
