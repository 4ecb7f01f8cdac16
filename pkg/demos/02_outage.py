"""Outage probability at the worst-case position, closed form against simulation.

The handoff cost grows with density and speed, which raises the SINR the link
has to reach; past the point where handoffs eat all airtime the outage is 1.
"""

import numpy as np

from v2iflow import ScenarioConfig, rate_report, simulate_ho_outage

cfg = ScenarioConfig(rate_threshold=1e8, mu_max=0.02)
print(f"{'mu':>7} {'v':>4} {'closed':>8} {'sim':>8} {'H_c':>6}")
for v in (10.0, 30.0):
    for i, mu in enumerate(np.linspace(0.002, 0.02, 5)):
        report = rate_report(cfg, mu, v)
        est = simulate_ho_outage(cfg, mu, v, trials=100_000, seed=i)
        print(f"{mu:7.4f} {v:4.0f} {report.outage:8.4f} {est.outage:8.4f} {report.ho_cost:6.3f}")
