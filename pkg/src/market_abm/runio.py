"""On-disk formats for runs and analyses.

Each run directory holds `steps.csv` (one row per step, columns in the
declared order), `trades.csv`, `manifest.json` (config echo, seed, totals,
rejection counters) and optional `lob_<step>.csv` book snapshots with ask
volumes negative.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .book import Side
from .engine import STEP_COLUMNS, TRADE_COLUMNS, RunOutput, StepRecords, TradeRecords


def _fmt(value: float) -> str:
    return "" if not np.isfinite(value) else format(value, ".12g")


def write_steps_csv(path: Path, records: StepRecords) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(STEP_COLUMNS) + "\n")
        for i in range(len(records)):
            row = (
                f"{records.step[i]},{_fmt(records.price[i])},"
                f"{_fmt(records.fundamental_value[i])},{_fmt(records.best_bid[i])},"
                f"{_fmt(records.best_ask[i])},{_fmt(records.spread[i])},"
                f"{_fmt(records.bid_gap[i])},{_fmt(records.ask_gap[i])},"
                f"{records.depth[i]},{records.n_f[i]},{records.n_plus[i]},"
                f"{records.n_minus[i]},{int(records.traded[i])},{_fmt(records.trade_price[i])}\n"
            )
            fh.write(row)


def load_steps_csv(path: Path) -> StepRecords:
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float, filling_values=np.nan)
    data = np.atleast_1d(data)

    def col(name, dtype=None):
        arr = data[name]
        return arr.astype(dtype) if dtype else arr.copy()

    return StepRecords(
        step=col("step", np.int64),
        price=col("price"),
        fundamental_value=col("fundamental_value"),
        best_bid=col("best_bid"),
        best_ask=col("best_ask"),
        spread=col("spread"),
        bid_gap=col("bid_gap"),
        ask_gap=col("ask_gap"),
        depth=col("depth", np.int64),
        n_f=col("n_f", np.int64),
        n_plus=col("n_plus", np.int64),
        n_minus=col("n_minus", np.int64),
        traded=data["traded"].astype(bool),
        trade_price=col("trade_price"),
    )


def write_trades_csv(path: Path, trades: TradeRecords) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(TRADE_COLUMNS) + "\n")
        for i in range(len(trades)):
            side = "buy" if trades.aggressor[i] == int(Side.BUY) else "sell"
            fh.write(
                f"{trades.step[i]},{_fmt(trades.price[i])},"
                f"{trades.buyer_id[i]},{trades.seller_id[i]},{side}\n"
            )


def write_lob_snapshot(path: Path, rows: list[tuple[float, int]]) -> None:
    with open(path, "w") as fh:
        fh.write("price,volume\n")
        for price, volume in rows:
            fh.write(f"{_fmt(price)},{volume}\n")


def write_fundamental_trace(path: Path, records: StepRecords) -> None:
    """Two-column dump (step, value) of the fundamental path."""
    with open(path, "w") as fh:
        fh.write("step,value\n")
        for i in range(len(records)):
            fh.write(f"{records.step[i]},{_fmt(records.fundamental_value[i])}\n")


def run_manifest(run: RunOutput) -> dict:
    return {
        "seed": run.seed,
        "config": run.config.as_dict(),
        "steps": len(run.records),
        "trades": len(run.trades),
        "rejections": run.rejections,
        "clamp_events": run.clamp_events,
        "switches": run.switch_count,
        "totals": {
            "cash": float(sum(a.cash for a in run.final_agents)),
            "shares": int(sum(a.shares for a in run.final_agents)),
        },
    }


def write_run(out_dir: Path, run: RunOutput) -> dict:
    """Write one run directory; returns the manifest dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_steps_csv(out_dir / "steps.csv", run.records)
    write_trades_csv(out_dir / "trades.csv", run.trades)
    for step, rows in sorted(run.lob_snapshots.items()):
        write_lob_snapshot(out_dir / f"lob_{step}.csv", rows)
    manifest = run_manifest(run)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_run_dir(run_dir: Path) -> tuple[StepRecords, dict]:
    run_dir = Path(run_dir)
    records = load_steps_csv(run_dir / "steps.csv")
    manifest_path = run_dir / "manifest.json"
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
    return records, manifest


def find_run_dirs(roots) -> list[Path]:
    """Run directories (holding steps.csv) under any of the given roots."""
    dirs = []
    for root in roots:
        root = Path(root)
        if (root / "steps.csv").exists():
            dirs.append(root)
        dirs.extend(sorted(p.parent for p in root.glob("**/steps.csv") if p.parent != root))
    seen = set()
    unique = []
    for d in dirs:
        if d not in seen:
            seen.add(d)
            unique.append(d)
    return unique


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def _jsonable(obj):
    """Recursively convert numpy scalars/arrays and NaN into JSON-safe values."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if np.isfinite(value) else None
    return obj


def write_analysis(out_dir: Path, report) -> None:
    """analysis.json plus plot-ready CSV files for every exported curve."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "analysis.json", "w") as fh:
        json.dump(_jsonable(report.tables()), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for kind, data in report.plots.get("fn", {}).items():
        _write_columns(out_dir / f"fn_{kind}.csv", ["box_size", "fluctuation"],
                       [data["box_sizes"], data["fluctuations"]])
    for name, data in report.plots.get("ccdf", {}).items():
        _write_columns(out_dir / f"ccdf_{name}.csv", ["value", "prob"],
                       [data["values"], data["probs"]])
    for quantity, data in report.plots.get("sigma_vs_pc", {}).items():
        _write_columns(out_dir / f"sigma_vs_pc_{quantity}.csv", ["pc", "sigma_norm"],
                       [data["centers"], data["curve"]])
    for quantity, data in report.plots.get("ne_vs_pc", {}).items():
        _write_columns(out_dir / f"ne_vs_pc_{quantity}.csv", ["pc", "ne", "mean_depth"],
                       [data["centers"], data["ne"], data["mean_depth"]])


def _write_columns(path: Path, names: list[str], columns) -> None:
    arrays = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(len(arrays[0])):
            fh.write(",".join(_fmt(a[i]) for a in arrays) + "\n")
