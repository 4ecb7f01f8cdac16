"""Where the worst-case CAV sits and what its link budget looks like.

Base stations are spread evenly along the road and the CAV is parked at the
midpoint between two of them, the spot with the weakest serving signal.
"""

from v2iflow import ScenarioConfig, build_geometry, sinr_coefficients
from v2iflow.analytics import worst_case_coefficients
from v2iflow.geometry import antenna_gain_factor

cfg = ScenarioConfig(bs_density=0.004)
print(f"gain factor gamma_R = {antenna_gain_factor(cfg):.4e}")
print(f"{cfg.bs_count} base stations on a {cfg.road_length:.0f} m road")

geom = build_geometry(cfg, cav_x=1000.0)
print("BS positions (m):", [f"{x:.0f}" for x in geom.bs_x])
print(f"serving BS #{geom.serving_index} at {geom.serving_distance:.1f} m")

# the raw coefficients contain mirror-image pairs with equal power
raw = sinr_coefficients(cfg, geom, regularize=False)
print(f"serving power a = {raw.a:.3e} W, noise = {raw.noise_power:.3e} W")
print("interferer powers (W):", ", ".join(f"{b:.3e}" for b in sorted(raw.b, reverse=True)))

# worst_case_coefficients drops the equally distant neighbour and splits the pairs
wc = worst_case_coefficients(cfg, cfg.bs_density)
print(f"worst case: {len(wc.b)} interferers, SNR = {wc.a / wc.noise_power:.1f}")
