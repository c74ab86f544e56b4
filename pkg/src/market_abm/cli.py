"""Command-line entry point: run, ensemble, analyze, reproduce-paper.

All outputs live under a single --out root. Ensembles run their seeds
concurrently up to --workers (default from MARKET_ABM_WORKERS, else 1) and
write an experiment manifest recording the config hash, seed list and
per-run wall clock, so re-running a manifest reproduces identical outputs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import SimConfig, dump_config, load_config, parse_overrides
from .engine import _run_with_seed, run_simulation
from .runio import (
    find_run_dirs,
    load_run_dir,
    sha256_file,
    write_analysis,
    write_fundamental_trace,
    write_run,
)

WORKERS_ENV = "MARKET_ABM_WORKERS"


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _load_config(args) -> SimConfig:
    overrides = parse_overrides(args.override or [])
    if args.config is None:
        cfg = SimConfig(**overrides)
        cfg.validate()
        return cfg
    path = Path(args.config)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return load_config(path, overrides)


def _experiment_manifest(out_root: Path, args, cfg: SimConfig, seeds, run_entries) -> None:
    manifest = {
        "tool_version": __version__,
        "command": " ".join(sys.argv[1:]),
        "config_path": str(args.config) if getattr(args, "config", None) else None,
        "config_sha256": sha256_file(args.config) if getattr(args, "config", None) else None,
        "config": cfg.as_dict(),
        "seeds": list(seeds),
        "runs": run_entries,
    }
    with open(out_root / "experiment.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(args) -> int:
    cfg = _load_config(args)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    run = run_simulation(cfg, lob_snapshot_steps=args.lob_snapshot or ())
    elapsed = time.perf_counter() - started
    write_run(out_root, run)
    if args.trace_fundamental:
        write_fundamental_trace(out_root / "fundamental.csv", run.records)
    (out_root / "config.txt").write_text(dump_config(cfg))
    _experiment_manifest(
        out_root, args, cfg, [cfg.seed],
        [{"seed": cfg.seed, "path": str(out_root), "wall_clock_s": round(elapsed, 3)}],
    )
    print(f"run seed={cfg.seed}: {len(run.records)} steps, {len(run.trades)} trades "
          f"in {elapsed:.1f}s -> {out_root}")
    return 0


def _run_seeds_to_dirs(
    cfg: SimConfig, seeds, out_root: Path, workers: int, snapshots=(), reducer=None
) -> tuple[list[dict], dict]:
    """Execute seeds (possibly in parallel), writing each run as it finishes.

    `reducer(run)` is applied before the full run is discarded, so large
    ensembles never hold more than one run's step records at a time. Returns
    (manifest entries in seed order, reduced results keyed by seed).
    """
    jobs = {s: (cfg, s, tuple(snapshots)) for s in seeds}
    entries: dict[int, dict] = {}
    reduced: dict[int, object] = {}
    failures: list[tuple[int, str]] = []

    def _write(seed: int, run, elapsed: float) -> None:
        run_dir = out_root / "runs" / f"seed_{seed}"
        write_run(run_dir, run)
        if reducer is not None:
            reduced[seed] = reducer(run)
        entries[seed] = {"seed": seed, "path": str(run_dir), "wall_clock_s": round(elapsed, 3)}
        print(f"  seed {seed}: {len(run.trades)} trades in {elapsed:.1f}s")

    if workers <= 1:
        for seed, job in jobs.items():
            started = time.perf_counter()
            try:
                run = _run_with_seed(job)
            except Exception as exc:  # noqa: BLE001 - reported per seed
                failures.append((seed, str(exc)))
                continue
            _write(seed, run, time.perf_counter() - started)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_with_seed, job): seed for seed, job in jobs.items()}
            started = time.perf_counter()
            for fut in concurrent.futures.as_completed(futures):
                seed = futures[fut]
                try:
                    run = fut.result()
                except Exception as exc:  # noqa: BLE001
                    failures.append((seed, str(exc)))
                    continue
                _write(seed, run, time.perf_counter() - started)
    for seed, message in failures:
        print(f"  seed {seed} FAILED: {message}", file=sys.stderr)
    ordered = [entries[s] for s in seeds if s in entries]
    if not ordered:
        raise RuntimeError("every run failed")
    return ordered, reduced


def cmd_ensemble(args) -> int:
    cfg = _load_config(args)
    seeds = list(range(cfg.seed, cfg.seed + args.seeds))
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    entries, _ = _run_seeds_to_dirs(cfg, seeds, out_root, args.workers)
    _experiment_manifest(out_root, args, cfg, seeds, entries)
    print(f"ensemble: {len(entries)}/{len(seeds)} runs -> {out_root}")
    return 0 if len(entries) == len(seeds) else 1


def cmd_analyze(args) -> int:
    from .analytics import analyze_bundles, reduce_run

    run_dirs = find_run_dirs(args.indirs)
    if not run_dirs:
        print(f"no steps.csv found under: {', '.join(args.indirs)}", file=sys.stderr)
        return 1
    bundles = []
    spp = None
    for run_dir in run_dirs:
        records, manifest = load_run_dir(run_dir)
        run_spp = int(manifest.get("config", {}).get("steps_per_period", 100))
        spp = run_spp if spp is None else spp
        if run_spp != spp:
            print(f"{run_dir}: steps_per_period differs across runs", file=sys.stderr)
            return 1
        bundles.append(reduce_run(records, spp))
    report = analyze_bundles(
        bundles, spp, bin_width=args.bin_width, xmin_quantile=args.xmin_quantile,
        min_obs=args.min_obs, burn_periods=args.burn_periods,
    )
    out_root = Path(args.out)
    write_analysis(out_root, report)
    print(f"analyzed {len(bundles)} run(s) -> {out_root / 'analysis.json'}")
    return 0


def experiment_config(scale: float, homogeneous: bool, overrides: dict | None = None) -> SimConfig:
    """Canonical experiment recipe at a given scale.

    The heterogeneous market starts chartist-heavy with tight endowments so
    one run traverses collapse, the intermediate regimes and the efficient
    state; the control market holds only fundamentalists with switching off.
    """
    steps = max(100, int(round(1_000_000 * scale)))
    if homogeneous:
        base = dict(steps=steps, switching_enabled=False, init_frac_f=1.0, init_frac_opt=0.0,
                    init_cash=450.0, init_shares=1)
    else:
        base = dict(steps=steps, init_frac_f=0.15, init_frac_opt=0.425,
                    init_cash=450.0, init_shares=1)
    base.update(overrides or {})
    cfg = SimConfig(**base)
    cfg.validate()
    return cfg


def experiment_seeds(scale: float, first_seed: int = 0) -> list[int]:
    return list(range(first_seed, first_seed + max(1, int(round(100 * scale)))))


def cmd_reproduce_paper(args) -> int:
    from .analytics import analyze_bundles, reduce_run

    scale = args.scale
    if scale <= 0:
        print("--scale must be > 0", file=sys.stderr)
        return 2
    overrides = parse_overrides(args.override or [])
    cfg = experiment_config(scale, args.homogeneous, overrides)
    seeds = experiment_seeds(scale, cfg.seed)
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    label = "homogeneous" if args.homogeneous else "heterogeneous"
    print(f"{label} ensemble: {len(seeds)} seeds x {cfg.steps} steps (scale {scale})")
    entries, reduced = _run_seeds_to_dirs(
        cfg, seeds, out_root, args.workers,
        reducer=lambda run: reduce_run(run.records, cfg.steps_per_period),
    )
    _experiment_manifest(out_root, args, cfg, seeds, entries)

    bundles = [reduced[e["seed"]] for e in entries]
    report = analyze_bundles(
        bundles,
        cfg.steps_per_period,
        bin_width=args.bin_width,
        burn_periods=args.burn_periods,
    )
    write_analysis(out_root / "analysis", report)
    print(f"report -> {out_root / 'analysis' / 'analysis.json'}")
    return 0 if len(entries) == len(seeds) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="market-abm",
        description="Agent-based double-auction market simulator and analytics",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config=True):
        if config:
            p.add_argument("--config", help="key = value config file")
            p.add_argument(
                "-O", "--override", action="append", metavar="KEY=VALUE",
                help="override one config key (repeatable)",
            )
        p.add_argument("--out", required=True, help="output directory")

    p_run = sub.add_parser("run", help="single simulation run")
    add_common(p_run)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument(
        "--lob-snapshot", action="append", type=int, metavar="STEP",
        help="write a book snapshot CSV at this step (repeatable)",
    )
    p_run.add_argument("--trace-fundamental", action="store_true",
                       help="also dump the fundamental path as fundamental.csv")
    p_run.set_defaults(func=cmd_run)

    p_ens = sub.add_parser("ensemble", help="independent runs over consecutive seeds")
    add_common(p_ens)
    p_ens.add_argument("--seeds", type=int, required=True, help="number of seeds")
    p_ens.add_argument("--workers", type=int, default=_default_workers())
    p_ens.set_defaults(func=cmd_ensemble)

    p_an = sub.add_parser("analyze", help="statistics report over finished runs")
    p_an.add_argument("--in", dest="indirs", nargs="+", required=True, metavar="DIR")
    p_an.add_argument("--out", required=True)
    p_an.add_argument("--bin-width", type=float, default=0.01)
    p_an.add_argument("--xmin-quantile", type=float, default=0.95)
    p_an.add_argument("--min-obs", type=int, default=100,
                      help="bin population needed for regime boundaries and sigma curves")
    p_an.add_argument("--burn-periods", type=int, default=0,
                      help="initial trading periods excluded from temporal statistics")
    p_an.set_defaults(func=cmd_analyze)

    p_rep = sub.add_parser(
        "reproduce-paper",
        help="full experiment recipe: ensemble plus analytics report at a given scale",
    )
    add_common(p_rep)
    p_rep.add_argument(
        "--scale", type=float, default=0.1,
        help="1.0 = 100 seeds x 1e6 steps; default desk scale 0.1 = 10 seeds x 1e5 steps",
    )
    p_rep.add_argument("--homogeneous", action="store_true",
                       help="all-fundamentalist control market with switching disabled")
    p_rep.add_argument("--workers", type=int, default=_default_workers())
    p_rep.add_argument("--bin-width", type=float, default=0.05,
                       help="chartist-fraction bin width for the regime tables")
    p_rep.add_argument("--burn-periods", type=int, default=200,
                       help="initial trading periods excluded from temporal statistics")
    p_rep.set_defaults(func=cmd_reproduce_paper)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
