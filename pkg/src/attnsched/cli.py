"""Command-line interface: explore, verify, alpha, export-platforms."""

from __future__ import annotations

import argparse
import os
import re
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import analysis
from .allocator import GAConfig, genetic_search
from .depgraph import fine_grained_graph, uniform_split_plan
from .hwmodel import (
    BUILTIN_PLATFORM_NAMES,
    HardwareSpec,
    builtin_platform_text,
    load_builtin,
    load_hardware,
)
from .mapper import load_mapping_overrides
from .scheduler import (
    SchedulePolicy,
    ScheduleResult,
    default_allocation,
    export_schedule_json,
    export_trace_csv,
    gantt_ascii,
    gantt_svg,
    memtrace_svg,
    schedule_template,
)
from .workload import LayerGraph, WorkloadSpec, build_mhsa, load_workload

EMIT_CHOICES = (
    "schedule_json",
    "memtrace_csv",
    "memtrace_svg",
    "gantt_svg",
    "gantt_ascii",
    "report_csv",
    "alpha_svg",
)

OUTPUT_DIR_ENV = "ATTNSCHED_OUT"


@dataclass
class RunConfig:
    workload: WorkloadSpec
    hw: HardwareSpec
    policy: str = "latency"
    lam: float = 0.5
    template: str | None = None
    ga: GAConfig = field(default_factory=GAConfig)
    seed: int = 0
    out_dir: Path = Path("out")
    emit: set[str] = field(default_factory=lambda: {"schedule_json", "memtrace_csv", "report_csv"})
    mapping_overrides: dict | None = None


def _parse_workload(arg: str, heads_override: int | None, word_bytes: int) -> WorkloadSpec:
    """Accept 'head_MxN', 'mhsa_MxN_hH' or a config file path."""
    m = re.fullmatch(r"head_(\d+)x(\d+)", arg)
    if m:
        spec = WorkloadSpec(int(m.group(1)), int(m.group(2)), 1, word_bytes)
    else:
        m = re.fullmatch(r"mhsa_(\d+)x(\d+)_h(\d+)", arg)
        if m:
            spec = WorkloadSpec(int(m.group(1)), int(m.group(2)), int(m.group(3)), word_bytes)
        else:
            path = Path(arg)
            if not path.exists():
                raise SystemExit(
                    f"workload {arg!r} is neither head_MxN, mhsa_MxN_hH nor a file"
                )
            spec = load_workload(path.read_text())
    if heads_override is not None:
        spec.heads = heads_override
    return spec


def _parse_hw(arg: str, word_bytes: int) -> HardwareSpec:
    if arg in BUILTIN_PLATFORM_NAMES:
        return load_builtin(arg, word_bytes=word_bytes)
    path = Path(arg)
    if not path.exists():
        raise SystemExit(
            f"hardware {arg!r} is not a builtin ({', '.join(BUILTIN_PLATFORM_NAMES)}) "
            "and no such file exists"
        )
    return load_hardware(path.read_text(), word_bytes=word_bytes)


def _pick_template(g: LayerGraph, hw: HardwareSpec, cfg: RunConfig, alloc) -> tuple[str, ScheduleResult, dict[str, ScheduleResult]]:
    candidates = ("lbl_memory_optimal", "fuse_q_qkt", "fuse_qkt_qktv")
    if cfg.template:
        result = schedule_template(g, hw, cfg.template, alloc, cfg.mapping_overrides)
        return cfg.template, result, {cfg.template: result}
    runs = {
        name: schedule_template(g, hw, name, alloc, cfg.mapping_overrides)
        for name in candidates
    }

    def score(item):
        name, res = item
        peak = max(res.trace.per_core_peak.values())
        if cfg.policy == "memory":
            return (peak, res.makespan, candidates.index(name))
        if cfg.policy == "latency":
            return (res.makespan, peak, candidates.index(name))
        return (
            cfg.lam * res.makespan + (1 - cfg.lam) * peak,
            candidates.index(name),
        )

    best_name, best_res = min(runs.items(), key=score)
    return best_name, best_res, runs


def run_explore(cfg: RunConfig) -> int:
    g = cfg.workload.graph()
    hw = cfg.hw
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)

    notes: list[str] = []
    if len(hw.cores) > 1:
        # allocate layers to cores with the GA before applying the template
        ga_ng = fine_grained_graph(g, uniform_split_plan(g, tile=None))
        outcome = genetic_search(ga_ng, hw, cfg.ga)
        alloc = outcome.allocation
        notes.append(
            f"GA allocation: fitness {outcome.fitness:g} after "
            f"{outcome.evaluations} evaluations"
        )
        (out / "ga_log.csv").write_text(outcome.fitness_log_csv())
    else:
        alloc = default_allocation(g, hw)

    name, result, runs = _pick_template(g, hw, cfg, alloc)
    m, n = cfg.workload.m, cfg.workload.n
    a, best_formula = analysis.alpha(m, n)

    if "schedule_json" in cfg.emit:
        (out / "schedule.json").write_text(export_schedule_json(result))
    if "memtrace_csv" in cfg.emit:
        (out / "memtrace.csv").write_text(export_trace_csv(result.trace))
    if "memtrace_svg" in cfg.emit:
        (out / "memtrace.svg").write_text(memtrace_svg(result.trace))
    if "gantt_svg" in cfg.emit:
        (out / "gantt.svg").write_text(gantt_svg(result))
    if "gantt_ascii" in cfg.emit:
        (out / "gantt.txt").write_text(gantt_ascii(result))
    if "report_csv" in cfg.emit:
        (out / "report.csv").write_text(analysis.report_csv([(m, n)]))
    if "alpha_svg" in cfg.emit:
        (out / "alpha.svg").write_text(analysis.alpha_svg(analysis.alpha_sweep()))

    print(f"workload: {cfg.workload.heads} head(s) of {m}x{n} on {hw.name}")
    for note in notes + result.notes:
        print(f"note: {note}")
    for rname, res in sorted(runs.items()):
        peak = max(res.trace.per_core_peak.values())
        marker = "*" if rname == name else " "
        print(
            f"{marker} {rname:24s} makespan {res.makespan:>12g}  "
            f"per-core peak {peak:>10d} words"
        )
    print(f"chosen template: {name}; formula alpha={a:.6g} ({best_formula})")
    print(f"artifacts in {out}")
    return 0


def run_verify(grid: list[int], hw: HardwareSpec | None) -> int:
    failures = 0
    for m in grid:
        for n in grid:
            rep = analysis.verify_against_simulation(m, n, hw)
            status = "ok" if rep.ok else "FAIL"
            print(f"verify M={m:<5d} N={n:<5d} {status}")
            for msg in rep.mismatches:
                print(f"  - {msg}")
            failures += len(rep.mismatches)

    limits = analysis.alpha_limits()
    print(
        f"alpha limits: flat err {limits.flat_limit_error:.5f}, "
        f"deep err {limits.deep_limit_error:.5f} "
        f"{'ok' if limits.ok else 'FAIL'}"
    )
    failures += 0 if limits.ok else 1

    scaling = analysis.seqlen_scaling_check()
    print(
        f"gap8like seqlen scaling: ratio {scaling.ratio:.4f} "
        f"(estimate {scaling.estimate_ratio:.4f}, measured {scaling.measured_ratio:.4f}, "
        f"macs {scaling.mac_ratio:.4f}), avg {scaling.avg_macs_per_cycle:.2f} MAC/cycle "
        f"{'ok' if scaling.ok else 'FAIL'}"
    )
    failures += 0 if scaling.ok else 1
    return 1 if failures else 0


def run_alpha(sweep: str, points_per_octave: int, out_dir: Path) -> int:
    m = re.fullmatch(r"([0-9]+(?:/[0-9]+)?)\.\.([0-9]+(?:/[0-9]+)?)", sweep)
    if not m:
        raise SystemExit(f"--sweep must look like '1/64..64', got {sweep!r}")
    lo, hi = Fraction(m.group(1)), Fraction(m.group(2))
    samples = analysis.alpha_sweep(lo, hi, points_per_octave)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "alpha.csv").write_text(analysis.alpha_sweep_csv(samples))
    (out_dir / "alpha.svg").write_text(analysis.alpha_svg(samples))
    print(f"alpha sweep: {len(samples)} points over M/N in [{lo}, {hi}] -> {out_dir}")
    return 0


def run_export_platforms(out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in BUILTIN_PLATFORM_NAMES:
        (out_dir / f"{name}.yaml").write_text(builtin_platform_text(name))
    print(f"wrote {len(BUILTIN_PLATFORM_NAMES)} platform files to {out_dir}")
    return 0


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUTPUT_DIR_ENV)
    return Path(env) if env else Path("out")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="attnsched",
        description="Explore attention-head schedules on modeled accelerators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_explore = sub.add_parser("explore", help="schedule a workload and emit artifacts")
    p_explore.add_argument("--workload", required=True, help="head_MxN, mhsa_MxN_hH or a YAML file")
    p_explore.add_argument("--hw", default="single64x64", help="builtin platform name or YAML file")
    p_explore.add_argument("--heads", type=int, default=None)
    p_explore.add_argument("--word-bytes", type=int, default=1)
    p_explore.add_argument("--policy", choices=("latency", "memory", "weighted"), default="memory")
    p_explore.add_argument("--lam", type=float, default=0.5)
    p_explore.add_argument("--template", choices=("lbl_memory_optimal", "lbl_memory_optimal_swapped", "fuse_q_qkt", "fuse_qkt_qktv", "fuse_q_qkt_qktv"))
    p_explore.add_argument("--seed", type=int, default=0)
    p_explore.add_argument("--ga-population", type=int, default=32)
    p_explore.add_argument("--ga-generations", type=int, default=50)
    p_explore.add_argument("--ga-mutation", type=float, default=0.1)
    p_explore.add_argument("--ga-crossover", type=float, default=0.9)
    p_explore.add_argument("--ga-objective", choices=("latency", "energy", "peak_memory", "weighted"), default="latency")
    p_explore.add_argument("--out", default=None)
    p_explore.add_argument("--emit", default="schedule_json,memtrace_csv,report_csv")
    p_explore.add_argument(
        "--mapping-overrides",
        default=None,
        help="YAML file forcing per-layer spatial/temporal mappings",
    )

    p_verify = sub.add_parser("verify", help="check simulation against the closed forms")
    p_verify.add_argument("--grid", default="64,128,256,512")
    p_verify.add_argument("--hw", default=None)
    p_verify.add_argument("--word-bytes", type=int, default=1)

    p_alpha = sub.add_parser("alpha", help="emit the footprint-gain curve")
    p_alpha.add_argument("--sweep", default="1/64..64")
    p_alpha.add_argument("--points-per-octave", type=int, default=4)
    p_alpha.add_argument("--out", default=None)

    p_export = sub.add_parser("export-platforms", help="write builtin platform configs")
    p_export.add_argument("--out", default=None)

    args = parser.parse_args(argv)

    if args.command == "explore":
        emit = {e.strip() for e in args.emit.split(",") if e.strip()}
        unknown = emit - set(EMIT_CHOICES)
        if unknown:
            raise SystemExit(f"unknown --emit entries: {sorted(unknown)}")
        workload = _parse_workload(args.workload, args.heads, args.word_bytes)
        hw = _parse_hw(args.hw, args.word_bytes)
        cfg = RunConfig(
            workload=workload,
            hw=hw,
            policy=args.policy,
            lam=args.lam,
            template=args.template,
            ga=GAConfig(
                population=args.ga_population,
                generations=args.ga_generations,
                mutation_rate=args.ga_mutation,
                crossover_rate=args.ga_crossover,
                seed=args.seed,
                objective=args.ga_objective,
                lam=args.lam,
            ),
            seed=args.seed,
            out_dir=_out_dir(args),
            emit=emit,
            mapping_overrides=(
                load_mapping_overrides(Path(args.mapping_overrides).read_text())
                if args.mapping_overrides
                else None
            ),
        )
        return run_explore(cfg)

    if args.command == "verify":
        grid = [int(x) for x in args.grid.split(",") if x]
        hw = _parse_hw(args.hw, args.word_bytes) if args.hw else None
        return run_verify(grid, hw)

    if args.command == "alpha":
        return run_alpha(args.sweep, args.points_per_octave, _out_dir(args))

    if args.command == "export-platforms":
        return run_export_platforms(_out_dir(args))

    return 2


if __name__ == "__main__":
    sys.exit(main())
