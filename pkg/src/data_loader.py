"""Readers and writers for pool, workload, configuration and trace files."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Mapping, Tuple

import pandas as pd

from .errors import ConfigError
from .resources import PoolConfig
from .simulator import ScenarioConfig, SimTrace
from .workload import DagPool, WorkloadScript

logger = logging.getLogger(__name__)


def config_hash(payload: Any) -> str:
    """Short stable digest of a JSON-serialisable payload."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def read_json(path: Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        with path.open("r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def write_json(payload: Any, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return path


def _with_provenance(payload: Mapping, seed: int, extra: Mapping | None = None) -> dict:
    body = dict(payload)
    body["provenance"] = {"seed": seed, "config_hash": config_hash(payload), **(extra or {})}
    return body


def load_dag_pool(path: Path) -> DagPool:
    payload = read_json(path)
    try:
        pool = DagPool.from_dict(payload)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path} is not a dataflow pool: missing {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path} holds an invalid dataflow pool: {exc}") from exc
    logger.info("Loaded %d dataflows from %s", len(pool), path)
    return pool


def save_dag_pool(dag_pool: DagPool, path: Path, seed: int, extra: Mapping | None = None) -> Path:
    payload = {**dag_pool.to_dict(), **(extra or {})}
    return write_json(_with_provenance(payload, seed), path)


def load_workload(path: Path) -> WorkloadScript:
    payload = read_json(path)
    try:
        return WorkloadScript.from_dict(payload)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path} is not a workload script: missing {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path} holds an invalid workload script: {exc}") from exc


def save_workload(script: WorkloadScript, path: Path, pool_config: PoolConfig | None = None) -> Path:
    """Write the script; ``pool_config`` is the pool its utilization was sized against."""
    extra = {"pool_config": pool_config.to_dict()} if pool_config is not None else None
    return write_json(_with_provenance(script.to_dict(), script.seed, extra), path)


def load_pool_config(path: Path) -> PoolConfig:
    return PoolConfig.from_dict(read_json(path))


def load_scenario_config(path: Path) -> ScenarioConfig:
    payload = read_json(path)
    if isinstance(payload.get("pool"), str) and payload["pool"].endswith(".json"):
        # a pool entry may point at a pool config file next to the scenario
        payload = {**payload, "pool": read_json(Path(path).parent / payload["pool"])}
    return ScenarioConfig.from_dict(payload)


def save_trace(trace: SimTrace, out_dir: Path, stem: str = "trace") -> Tuple[Path, Path]:
    """Write ``<stem>.csv`` (one row per interval) and ``<stem>.json`` (everything)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = save_frame(trace.to_frame(), out_dir / f"{stem}.csv", trace.provenance)
    json_path = write_json(trace.to_dict(), out_dir / f"{stem}.json")
    return csv_path, json_path


def load_trace(path: Path) -> SimTrace:
    return SimTrace.from_dict(read_json(path))


def save_frame(frame: pd.DataFrame, path: Path, provenance: Mapping | None = None) -> Path:
    """CSV with an optional leading '#' provenance line (read back with ``comment="#"``)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        if provenance:
            f.write("# " + "; ".join(f"{k}={provenance[k]}" for k in sorted(provenance)) + "\n")
        frame.to_csv(f, index=False)
    return path
