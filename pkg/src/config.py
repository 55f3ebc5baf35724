"""Project-wide constants for reproducibility and maintainability."""

import logging
import os
from pathlib import Path

ROOT_DIR = Path(__file__).resolve().parents[1]
DATA_PATH = ROOT_DIR / "data"
OUTPUT_PATH = ROOT_DIR / "runs"
DEFAULT_POOL_PATH = DATA_PATH / "dag_pool.json"
RANDOM_STATE = 42

LOG_ENV_VAR = "EDGESCHED_LOG"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Cloud VMs run CEP queries about 3x faster than a Pi-class gateway
CLOUD_SPEEDUP = 3.0

# Query profile catalog: latency is seconds/event on an edge device, energy is
# incremental mAh per input event on an edge device.
QUERY_PROFILES = {
    "source": {"kind": "source", "selectivity": 1.0, "event_size": 80, "edge_latency": 0.0, "edge_energy": 0.0},
    "sink": {"kind": "sink", "selectivity": 1.0, "event_size": 50, "edge_latency": 0.0003, "edge_energy": 0.000015},
    "filter-01": {"kind": "filter", "selectivity": 0.1, "event_size": 60, "edge_latency": 0.0004, "edge_energy": 0.000022},
    "filter-02": {"kind": "filter", "selectivity": 0.25, "event_size": 80, "edge_latency": 0.0005, "edge_energy": 0.000028},
    "filter-03": {"kind": "filter", "selectivity": 0.5, "event_size": 80, "edge_latency": 0.0005, "edge_energy": 0.000028},
    "filter-04": {"kind": "filter", "selectivity": 0.75, "event_size": 100, "edge_latency": 0.0006, "edge_energy": 0.000033},
    "filter-05": {"kind": "filter", "selectivity": 0.9, "event_size": 100, "edge_latency": 0.0007, "edge_energy": 0.000039},
    "filter-06": {"kind": "filter", "selectivity": 1.0, "event_size": 120, "edge_latency": 0.0008, "edge_energy": 0.000044},
    "sequence-01": {"kind": "sequence", "selectivity": 0.05, "event_size": 120, "edge_latency": 0.0012, "edge_energy": 0.000067},
    "sequence-02": {"kind": "sequence", "selectivity": 0.1, "event_size": 140, "edge_latency": 0.0014, "edge_energy": 0.000078},
    "sequence-03": {"kind": "sequence", "selectivity": 0.2, "event_size": 160, "edge_latency": 0.0017, "edge_energy": 0.000094},
    "sequence-04": {"kind": "sequence", "selectivity": 0.3, "event_size": 180, "edge_latency": 0.002, "edge_energy": 0.000111},
    "pattern-01": {"kind": "pattern", "selectivity": 0.02, "event_size": 150, "edge_latency": 0.0015, "edge_energy": 0.000083},
    "pattern-02": {"kind": "pattern", "selectivity": 0.05, "event_size": 150, "edge_latency": 0.0018, "edge_energy": 0.0001},
    "pattern-03": {"kind": "pattern", "selectivity": 1.5, "event_size": 200, "edge_latency": 0.0022, "edge_energy": 0.000122},
    "pattern-04": {"kind": "pattern", "selectivity": 2.0, "event_size": 220, "edge_latency": 0.0025, "edge_energy": 0.000139},
    "sliding-aggregate-01": {"kind": "sliding-aggregate", "selectivity": 1.0, "event_size": 90, "edge_latency": 0.001, "edge_energy": 0.000056},
    "sliding-aggregate-02": {"kind": "sliding-aggregate", "selectivity": 1.0, "event_size": 110, "edge_latency": 0.0016, "edge_energy": 0.000089},
    "sliding-aggregate-03": {"kind": "sliding-aggregate", "selectivity": 0.5, "event_size": 110, "edge_latency": 0.0022, "edge_energy": 0.000122},
    "sliding-aggregate-04": {"kind": "sliding-aggregate", "selectivity": 2.0, "event_size": 130, "edge_latency": 0.003, "edge_energy": 0.000167},
    "batch-aggregate-01": {"kind": "batch-aggregate", "selectivity": 0.01, "event_size": 90, "edge_latency": 0.0008, "edge_energy": 0.000044},
    "batch-aggregate-02": {"kind": "batch-aggregate", "selectivity": 0.05, "event_size": 100, "edge_latency": 0.0011, "edge_energy": 0.000061},
    "batch-aggregate-03": {"kind": "batch-aggregate", "selectivity": 0.1, "event_size": 120, "edge_latency": 0.0015, "edge_energy": 0.000083},
}

# pi(m) for m concurrent non-source queries on one resource; entries beyond the
# last key reuse the last value
DEFAULT_PARALLELISM_TABLE = {1: 0.0, 2: 0.2, 3: 0.35, 4: 0.5}
PARALLELISM_SIGN = 1.0

# Edge device energy profile (Pi 2 on a solar-charged battery)
BATTERY_CAPACITY_MAH = 5000.0
BASE_LOAD_MA = 450.0
RECHARGE_INTERVAL_SEC = 8 * 3600.0

# (mean, stddev) per unordered resource-class pair; latency in seconds,
# bandwidth in bytes/second
NETWORK_PROFILES = {
    ("edge", "edge"): {"latency": (0.002, 0.0005), "bandwidth": (12_500_000.0, 1_000_000.0)},
    ("edge", "cloud"): {"latency": (0.060, 0.010), "bandwidth": (2_500_000.0, 500_000.0)},
    ("cloud", "cloud"): {"latency": (0.001, 0.0002), "bandwidth": (125_000_000.0, 10_000_000.0)},
}

PRESETS = {
    "small": {"edge_count": 96, "cloud_count": 4, "horizon": 100, "poisson_warmup": 16},
    "large": {"edge_count": 960, "cloud_count": 40, "horizon": 400, "poisson_warmup": 70},
}

# Workload generation
POOL_SIZE = 39
DATAFLOW_INPUT_RATE = 100.0
MIN_VERTICES = 4
MAX_VERTICES = 50
MAX_FAN_OUT = 5
MAX_SOURCES = 4
MAX_SINKS = 3
MAX_LAYER_WIDTH = 5
EXTRA_PARENT_PROBABILITY = 0.3
MAX_GENERATION_ATTEMPTS = 200
POISSON_SIZE_MEAN = 12.0
UTILIZATION_TARGET = 2.0
REMOVAL_RESAMPLE_CAP = 100

WORKLOAD_PRESETS = {
    "rw-0": {"model": "rw", "target": 2.0, "band": 0.0},
    "rw-0.5": {"model": "rw", "target": 2.0, "band": 0.5},
    "rw-1.0": {"model": "rw", "target": 2.0, "band": 1.0},
    "poisson": {"model": "poisson", "mean": POISSON_SIZE_MEAN},
}

# Simulation
MIGRATION_COST_SEC = 1.0
STABILIZATION_CAP_SEC = 60.0

STRATEGIES = ("topset", "topset-p", "gai", "gag")
BRUTE_FORCE_MAX_QUERIES = 8
BRUTE_FORCE_MAX_RESOURCES = 5
REBALANCE_MODES = ("none", "vertex", "edge", "vertex+edge")

# Genetic algorithm defaults
GA_DEFAULTS = {
    "population_size": 100,
    "max_generations": 500,
    "crossover_rate": 0.8,
    "mutation_rate": 0.02,
    "elite_count": 2,
    "no_improvement_window_fraction": 0.5,
    "min_generations": 10,
    "penalty_weight": None,
    "seed": RANDOM_STATE,
    "n_jobs": 1,
}

# Trace file layout
TRACE_COLUMNS = [
    "t",
    "activity",
    "accepted",
    "objective_s",
    "planning_s",
    "migrations",
    "stabilization_s",
    "utilization",
    "edge_only_s",
    "cloud_only_s",
    "rebalance_moves",
    "active_dags",
]
SUMMARY_METRICS = ["objective_s", "planning_s", "migrations", "stabilization_s", "utilization"]


def configure_logging() -> None:
    """Install a stream handler whose level comes from EDGESCHED_LOG."""
    level_name = os.environ.get(LOG_ENV_VAR, "WARNING").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger("src").setLevel(level)
