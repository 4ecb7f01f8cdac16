"""Worst-case V2I link analysis and BS density / speed co-design for CAV traffic."""

from .analytics import (
    ClosedFormRate,
    InfeasibleThresholdError,
    QuadratureError,
    RateReport,
    SinrDistribution,
    ergodic_rate_closed,
    ergodic_rate_quadrature,
    ho_aware_rate,
    ho_cost,
    outage_probability,
    rate_report,
    sinr_threshold,
    worst_case_coefficients,
    worst_case_rate,
)
from .config import ScenarioConfig, dump_config, load_config
from .experiments import SweepSpec, run_sweep, validate
from .fading import SimResult, SimSpec, simulate, simulate_ho_outage
from .flow import (
    PlanResult,
    SpeedBounds,
    golden_section_maximize,
    optimal_speed,
    optimize_density,
    traffic_flow,
    v_data,
    v_safe,
)
from .geometry import (
    LinkGeometry,
    SinrCoefficients,
    build_geometry,
    regularize_coefficients,
    sinr_coefficients,
)

__version__ = "0.1.0"

__all__ = [
    "ClosedFormRate",
    "InfeasibleThresholdError",
    "LinkGeometry",
    "PlanResult",
    "QuadratureError",
    "RateReport",
    "ScenarioConfig",
    "SimResult",
    "SimSpec",
    "SinrCoefficients",
    "SinrDistribution",
    "SpeedBounds",
    "SweepSpec",
    "build_geometry",
    "dump_config",
    "ergodic_rate_closed",
    "ergodic_rate_quadrature",
    "golden_section_maximize",
    "ho_aware_rate",
    "ho_cost",
    "load_config",
    "optimal_speed",
    "optimize_density",
    "outage_probability",
    "rate_report",
    "regularize_coefficients",
    "run_sweep",
    "simulate",
    "simulate_ho_outage",
    "sinr_coefficients",
    "sinr_threshold",
    "traffic_flow",
    "v_data",
    "v_safe",
    "validate",
    "worst_case_coefficients",
    "worst_case_rate",
]
