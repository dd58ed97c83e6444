from .config import KINDS, Scenario, load_scenarios, parse_snr_grid, scenario_from_mapping
from .engine import (
    BoundsReport,
    SimPoint,
    SimResult,
    compare_to_bounds,
    csv_text,
    run_scenario,
    write_csv,
    write_dat,
)
from .stats import Counts, clopper_pearson, crossing_snr

__all__ = [
    "KINDS",
    "Scenario",
    "load_scenarios",
    "parse_snr_grid",
    "scenario_from_mapping",
    "BoundsReport",
    "SimPoint",
    "SimResult",
    "compare_to_bounds",
    "csv_text",
    "run_scenario",
    "write_csv",
    "write_dat",
    "Counts",
    "clopper_pearson",
    "crossing_snr",
]
