"""Command-line entrypoint: generate pools and workloads, run, compare and validate traces."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence, Tuple

from . import config
from .data_loader import (
    load_dag_pool,
    load_pool_config,
    load_scenario_config,
    load_trace,
    load_workload,
    save_dag_pool,
    save_frame,
    save_trace,
    save_workload,
)
from .errors import ConfigError, EdgeSchedError, ProvenanceError, StateError
from .resources import PoolConfig, build_pool
from .schedulers import PenaltyModel
from .simulator import ScenarioConfig, audit_trace_state, compare_runs, run_scenario, run_sweep
from .workload import DagPool, WorkloadConfig, WorkloadScript, generate_pool, generate_workload

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2
EXIT_INVARIANT = 3


def _add_pool_options(parser: argparse.ArgumentParser, seed: Optional[int] = config.RANDOM_STATE) -> None:
    parser.add_argument("--preset", choices=sorted(config.PRESETS), default="small", help="Resource pool setup")
    parser.add_argument("--pool-config", type=Path, default=None, help="Pool/catalog config JSON (overrides --preset)")
    parser.add_argument("--seed", type=int, default=seed)


def _add_scenario_options(parser: argparse.ArgumentParser) -> None:
    # seed stays None so a scenario file keeps its own unless --seed is given
    _add_pool_options(parser, seed=None)
    parser.add_argument("--config", type=Path, default=None, help="Scenario config JSON; flags override it")
    parser.add_argument("--pool", type=Path, default=None, help="Dataflow pool JSON (generated when omitted)")
    parser.add_argument("--workload", type=Path, default=None, help="Workload script JSON (generated when omitted)")
    parser.add_argument("--workload-preset", choices=sorted(config.WORKLOAD_PRESETS), default="rw-0.5")
    parser.add_argument("--eta", type=float, default=None, help="Migration cost in seconds")
    parser.add_argument("--psi-max", type=float, default=None, help="Stabilization cap in seconds")
    parser.add_argument("--penalty-model", choices=[m.value for m in PenaltyModel], default=None)
    parser.add_argument("--ga-population", type=int, default=None)
    parser.add_argument("--ga-generations", type=int, default=None)
    parser.add_argument("--ga-jobs", type=int, default=None, help="Parallel GA fitness workers")
    parser.add_argument("--out", type=Path, default=config.OUTPUT_PATH)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgesched", description="Dataflow placement on edge and cloud resources")
    commands = parser.add_subparsers(dest="command", required=True)

    gen_pool = commands.add_parser("gen-pool", help="Generate a dataflow pool")
    _add_pool_options(gen_pool)
    gen_pool.add_argument("--count", type=int, default=config.POOL_SIZE)
    gen_pool.add_argument("-o", "--out", type=Path, default=config.DEFAULT_POOL_PATH)

    gen_workload = commands.add_parser("gen-workload", help="Generate an arrival/departure script")
    _add_pool_options(gen_workload)
    gen_workload.add_argument("--pool", type=Path, default=config.DEFAULT_POOL_PATH)
    gen_workload.add_argument("--workload-preset", choices=sorted(config.WORKLOAD_PRESETS), default="rw-0.5")
    gen_workload.add_argument("--horizon", type=int, default=None)
    gen_workload.add_argument("-o", "--out", type=Path, default=config.DATA_PATH / "workload.json")

    run = commands.add_parser("run", help="Run one scenario")
    _add_scenario_options(run)
    run.add_argument("--strategy", choices=config.STRATEGIES, default=None)
    run.add_argument("--rebalance", choices=config.REBALANCE_MODES, default=None)

    sweep = commands.add_parser("sweep", help="Run every strategy and rebalance combination")
    _add_scenario_options(sweep)
    sweep.add_argument("--strategies", nargs="+", choices=config.STRATEGIES, default=list(config.STRATEGIES))
    sweep.add_argument("--modes", nargs="+", choices=config.REBALANCE_MODES, default=list(config.REBALANCE_MODES))

    compare = commands.add_parser("compare", help="Relative makespan improvement of trace B over trace A")
    compare.add_argument("trace_a", type=Path)
    compare.add_argument("trace_b", type=Path)
    compare.add_argument("-o", "--out", type=Path, default=config.OUTPUT_PATH / "compare.csv", help="Delta CSV path")
    compare.add_argument("--seed", type=int, default=None, help="Require both traces to carry this seed")

    validate = commands.add_parser("validate", help="Re-check the final state stored in a trace")
    validate.add_argument("trace", type=Path)
    validate.add_argument("--seed", type=int, default=None, help="Resource pool seed (defaults to the trace seed)")
    return parser


def _pool_config(args: argparse.Namespace) -> PoolConfig:
    if args.pool_config is not None:
        return load_pool_config(args.pool_config)
    return PoolConfig.preset(args.preset)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))


def _cmd_gen_pool(args: argparse.Namespace) -> int:
    pool_config = _pool_config(args)
    pool = build_pool(pool_config, args.seed)
    dag_pool = generate_pool(args.count, args.seed, pool)
    save_dag_pool(dag_pool, args.out, args.seed, {"pool_config": pool_config.to_dict()})
    _emit({"out": args.out, "count": len(dag_pool), "sizes": [spec.size for spec in dag_pool.dataflows], "seed": args.seed})
    return EXIT_OK


def _workload_config(args: argparse.Namespace, horizon: Optional[int] = None) -> WorkloadConfig:
    workload = WorkloadConfig.preset(args.workload_preset, args.preset)
    if horizon is not None:
        workload = dataclasses.replace(workload, horizon=horizon)
    return workload


def _cmd_gen_workload(args: argparse.Namespace) -> int:
    dag_pool = load_dag_pool(args.pool)
    pool_config = _pool_config(args)
    workload = _workload_config(args, args.horizon)
    script = generate_workload(dag_pool, pool_config.edge_count + pool_config.cloud_count, workload, args.seed)
    save_workload(script, args.out, pool_config)
    _emit({"out": args.out, "workload": workload.to_dict(), "seed": args.seed, "peak_utilization": max(script.utilization)})
    return EXIT_OK


def _scenario(args: argparse.Namespace) -> ScenarioConfig:
    if args.config is not None:
        scenario = load_scenario_config(args.config)
    else:
        scenario = ScenarioConfig(pool_config=_pool_config(args))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.pool_config is not None or args.config is None:
        overrides["pool_config"] = _pool_config(args)
    for flag, name in (
        ("strategy", "strategy"),
        ("rebalance", "rebalance"),
        ("eta", "migration_cost_sec"),
        ("psi_max", "psi_max"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    if args.penalty_model is not None:
        overrides["penalty_model"] = PenaltyModel(args.penalty_model)
    ga = {}
    if args.ga_population is not None:
        ga["population_size"] = args.ga_population
    if args.ga_generations is not None:
        ga["max_generations"] = args.ga_generations
    if args.ga_jobs is not None:
        ga["n_jobs"] = args.ga_jobs
    if ga:
        overrides["ga_params"] = dataclasses.replace(scenario.ga_params, **ga)
    if args.pool is not None:
        overrides["pool_path"] = args.pool
    if args.workload is not None:
        overrides["workload_path"] = args.workload
    return dataclasses.replace(scenario, **overrides)


def _inputs(args: argparse.Namespace, scenario: ScenarioConfig) -> Tuple[DagPool, WorkloadScript]:
    pool = build_pool(scenario.pool_config, scenario.seed)
    if scenario.pool_path is not None:
        dag_pool = load_dag_pool(scenario.pool_path)
    else:
        dag_pool = generate_pool(config.POOL_SIZE, scenario.seed, pool)
    if scenario.workload_path is not None:
        script = load_workload(scenario.workload_path)
    else:
        script = generate_workload(dag_pool, len(pool), _workload_config(args, scenario.horizon), scenario.seed)
    return dag_pool, script


def _stem(strategy: str, rebalance: str) -> str:
    return f"{strategy}_{rebalance.replace('+', '-')}"


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    dag_pool, script = _inputs(args, scenario)
    trace = run_scenario(scenario, dag_pool, script)
    csv_path, json_path = save_trace(trace, args.out, _stem(scenario.strategy, scenario.rebalance))
    _emit({"csv": csv_path, "json": json_path, "provenance": trace.provenance, "summary": trace.summary()})
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    scenario = _scenario(args)
    dag_pool, script = _inputs(args, scenario)
    traces, table = run_sweep(scenario, dag_pool, script, args.strategies, args.modes)
    for (strategy, mode), trace in traces.items():
        save_trace(trace, args.out, _stem(strategy, mode))
    summary_path = save_frame(table, Path(args.out) / "sweep_summary.csv", {"seed": scenario.seed})
    _emit({"summary": summary_path, "runs": len(traces)})
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    trace_a = load_trace(args.trace_a)
    trace_b = load_trace(args.trace_b)
    if args.seed is not None and trace_a.provenance.get("seed") != args.seed:
        raise ProvenanceError(f"{args.trace_a} was run with seed {trace_a.provenance.get('seed')}, not {args.seed}")
    frame, summary = compare_runs(trace_a, trace_b)
    save_frame(frame, args.out, trace_a.provenance)
    summary["out"] = args.out
    _emit(summary)
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    trace = load_trace(args.trace)
    try:
        pool_config = PoolConfig.from_dict(trace.config["pool"])
        seed = args.seed if args.seed is not None else int(trace.provenance.get("seed", trace.config.get("seed")))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{args.trace} carries no pool config: {exc}") from exc
    report = audit_trace_state(trace.final_state, build_pool(pool_config, seed))
    _emit({"trace": args.trace, **report.to_dict()})
    return EXIT_OK if report.ok else EXIT_VIOLATION


COMMANDS = {
    "gen-pool": _cmd_gen_pool,
    "gen-workload": _cmd_gen_workload,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
    "validate": _cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    config.configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, ProvenanceError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (StateError, EdgeSchedError) as exc:
        logger.error("Invariant breach: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
