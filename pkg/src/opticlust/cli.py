"""Experiment orchestration and result emission.

Subcommands: evaluate | traffic | sweep | optimize | baselines.  Every
output file starts with the resolved config (JSON) so results are
self-describing; reruns with the same config and seed are byte-identical.
"""

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional

import numpy as np

from . import baselines as bl
from .arch import derive_mcm
from .config import ExperimentConfig, parse_config
from .errors import OpticlustError, ValidationError
from .network import wiring_plan
from .opt import (
    ArchBounds,
    ArchVars,
    OptimizeSettings,
    evaluate_design,
    optimize,
)
from .workload import (
    default_placement,
    project_traffic,
    traffic_heatmap,
    validate_strategy,
)


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_jsonl(path: str, config: ExperimentConfig, records: List[Dict]):
    with open(path, "w") as fh:
        fh.write(_json_line({"config": config.resolved(), "seed": config.seed}) + "\n")
        for rec in records:
            fh.write(_json_line(rec) + "\n")


def _write_csv(path: str, config: ExperimentConfig, header: List[str], rows: List[List]):
    with open(path, "w") as fh:
        fh.write("# " + _json_line({"config": config.resolved(), "seed": config.seed}) + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _derive(cfg: ExperimentConfig):
    a = cfg.arch
    return derive_mcm(a.total_compute, a.N, a.x, a.y, a.m, a.o, a.r, cfg.tech)


def run_evaluate(cfg: ExperimentConfig, out_dir: str) -> List[str]:
    arch = _derive(cfg)
    point = evaluate_design(cfg.model, cfg.strategy, arch, cfg.tech)
    rec = point.to_record()
    if point.physical is not None:
        rec["wiring"] = wiring_plan(point.physical, cfg.tech.ocs_port_count)
    _write_jsonl(os.path.join(out_dir, "results.jsonl"), cfg, [rec])
    return ["results.jsonl"]


def run_traffic(cfg: ExperimentConfig, out_dir: str) -> List[str]:
    strategy = validate_strategy(cfg.model, cfg.strategy, cfg.strategy.device_count)
    profile = project_traffic(cfg.model, strategy)
    entries = [
        {
            "parallelism": e.parallelism.value,
            "collective": e.collective.value,
            "group_size": e.group_size,
            "volume_per_device": e.volume_per_device,
            "phase": e.phase.value,
        }
        for e in profile.entries
    ]
    _write_jsonl(
        os.path.join(out_dir, "results.jsonl"),
        cfg,
        [{"traffic": entries, "volumes": {p.value: v for p, v in profile.volumes().items()}}],
    )
    mat = traffic_heatmap(profile, default_placement(strategy))
    rows = [[i] + list(mat[i]) for i in range(mat.shape[0])]
    header = ["src"] + [f"dst_{j}" for j in range(mat.shape[0])]
    _write_csv(os.path.join(out_dir, "heatmap.csv"), cfg, header, rows)
    return ["results.jsonl", "heatmap.csv"]


def _sweep_arch_vars(cfg: ExperimentConfig, value: float) -> Dict:
    a = dataclasses.asdict(cfg.arch)
    var = cfg.sweep.variable
    if var in ("m", "o", "N"):
        a[var] = int(value)
    else:
        a[var] = float(value)
    return a


def run_sweep(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> List[str]:
    def one(value):
        a = _sweep_arch_vars(cfg, value)
        total = a.pop("total_compute")
        try:
            arch = derive_mcm(total, tech=cfg.tech, **a)
            if cfg.sweep.optimize or cfg.strategy is None:
                point = bl.search_preset(
                    "opticlust",
                    cfg.model,
                    total,
                    cfg.tech,
                    budget=cfg.sweep.budget,
                    seed=cfg.seed,
                    mcm_vars=a,
                )
            else:
                point = evaluate_design(cfg.model, cfg.strategy, arch, cfg.tech)
        except OpticlustError as exc:
            return value, None, f"{type(exc).__name__}: {exc}"
        if point is None:
            return value, None, "NoFeasibleStrategy"
        return value, point, None

    values = list(cfg.sweep.values)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(one, values))
    else:
        results = [one(v) for v in values]

    header = [
        "variable",
        "value",
        "throughput",
        "cost_total",
        "iteration_time",
        "bottleneck",
        "error",
    ]
    rows, records = [], []
    for value, point, err in results:
        if point is None:
            rows.append([cfg.sweep.variable, value, "", "", "", "", err])
        else:
            rows.append(
                [
                    cfg.sweep.variable,
                    value,
                    point.throughput,
                    point.total_cost,
                    point.result.iteration_time,
                    point.result.logs.bottleneck.value,
                    "",
                ]
            )
            rec = point.to_record()
            rec["sweep_value"] = value
            records.append(rec)
    _write_csv(os.path.join(out_dir, "sweep.csv"), cfg, header, rows)
    _write_jsonl(os.path.join(out_dir, "results.jsonl"), cfg, records)
    return ["sweep.csv", "results.jsonl"]


def run_optimize(cfg: ExperimentConfig, out_dir: str) -> List[str]:
    a, o = cfg.arch, cfg.optimize
    settings = OptimizeSettings(
        total_compute=a.total_compute,
        initial=ArchVars(a.N, a.x, a.y, a.m, a.o, a.r),
        inner_budget=o.inner_budget,
        outer_budget=o.outer_budget,
        total_budget=o.total_budget,
        seed=cfg.seed,
        use_reuse=o.use_reuse,
        improvement_threshold=o.improvement_threshold,
        default_microbatches=o.default_microbatches,
        bounds=ArchBounds(m_max=o.m_max, dies_max=o.dies_max),
    )
    archive = optimize(cfg.model, cfg.tech, settings)
    header = [
        "throughput",
        "cost_total",
        "N",
        "x",
        "y",
        "m",
        "o",
        "r",
        "tp",
        "cp",
        "pp",
        "dp",
        "ep",
        "num_microbatches",
        "total_ocs",
    ]
    pts = sorted(archive.points, key=lambda p: (-p.throughput, p.total_cost))
    rows = [
        [
            p.throughput,
            p.total_cost,
            p.arch.N,
            p.arch.x,
            p.arch.y,
            p.arch.m,
            p.arch.o,
            p.arch.r,
            p.strategy.tp,
            p.strategy.cp,
            p.strategy.pp,
            p.strategy.dp,
            p.strategy.ep,
            p.strategy.num_microbatches,
            p.physical.total_ocs if p.physical else 0,
        ]
        for p in pts
    ]
    _write_csv(os.path.join(out_dir, "pareto.csv"), cfg, header, rows)
    _write_jsonl(
        os.path.join(out_dir, "results.jsonl"),
        cfg,
        [p.to_record() for p in archive.all_evaluated],
    )
    return ["pareto.csv", "results.jsonl"]


def run_baselines(cfg: ExperimentConfig, out_dir: str, jobs: int = 1) -> List[str]:
    b = cfg.baselines
    mcm_vars = None
    if cfg.arch is not None:
        mcm_vars = dataclasses.asdict(cfg.arch)
        mcm_vars.pop("total_compute")

    tasks = [(preset, c) for c in b.compute_grid for preset in b.presets]

    def one(task):
        preset, total = task
        point = bl.search_preset(
            preset,
            cfg.model,
            total,
            cfg.tech,
            budget=b.budget,
            seed=cfg.seed,
            mcm_vars=mcm_vars,
            use_reuse=b.use_reuse,
        )
        return preset, total, point

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(one, tasks))
    else:
        results = [one(t) for t in tasks]

    header = ["preset", "total_compute", "throughput", "cost_total", "iteration_time", "error"]
    rows, records = [], []
    for preset, total, point in results:
        if point is None:
            rows.append([preset, total, "", "", "", "NoFeasibleStrategy"])
        else:
            rows.append(
                [preset, total, point.throughput, point.total_cost, point.result.iteration_time, ""]
            )
            rec = point.to_record()
            rec["preset"] = preset
            records.append(rec)
    _write_csv(os.path.join(out_dir, "sweep.csv"), cfg, header, rows)
    _write_jsonl(os.path.join(out_dir, "results.jsonl"), cfg, records)
    return ["sweep.csv", "results.jsonl"]


def run(cfg: ExperimentConfig, jobs: int = 1) -> List[str]:
    """Execute one experiment config; returns the written file names."""
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    if cfg.mode == "evaluate":
        return run_evaluate(cfg, out_dir)
    if cfg.mode == "traffic":
        return run_traffic(cfg, out_dir)
    if cfg.mode == "sweep":
        return run_sweep(cfg, out_dir, jobs)
    if cfg.mode == "optimize":
        return run_optimize(cfg, out_dir)
    if cfg.mode == "baselines":
        return run_baselines(cfg, out_dir, jobs)
    raise ValueError(f"unknown mode {cfg.mode}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="opticlust",
        description="Analytical simulator and optimizer for chiplet + optical-circuit LLM training clusters",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("evaluate", "traffic", "sweep", "optimize", "baselines"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if cfg.mode != args.command:
            raise ValidationError(
                "mode", f"config mode '{cfg.mode}' does not match subcommand '{args.command}'"
            )
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.output_dir = args.out
        files = run(cfg, jobs=args.jobs)
    except OpticlustError as exc:
        sys.stderr.write(
            _json_line({"error": type(exc).__name__, "message": str(exc)}) + "\n"
        )
        return 1
    for f in files:
        print(os.path.join(cfg.output_dir, f))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
