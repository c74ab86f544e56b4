"""Run configuration: every model parameter plus the seed.

Configs round-trip through a flat `key = value` text format whose keys match
the SimConfig field names exactly, so experiment files stay greppable and
diffable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


@dataclass
class SimConfig:
    n_agents: int = 500
    steps: int = 1_000_000
    dt: float = 0.01
    steps_per_period: int = 100
    sigma_eps: float = 0.005
    k_scale: float = 0.1
    tick: float = 0.0005
    p0: float = 300.0
    pf0: float = 300.0
    gamma_f: float = 1.0
    gamma_c: float = 0.1
    horizon_f: int = 300
    horizon_c: int = 100
    v1: float = 2.0
    v2: float = 0.6
    alpha1: float = 0.6
    alpha2: float = 1.5
    alpha3: float = 1.0
    big_r: float = 0.0004
    s: float = 0.75
    band: float = 0.15
    init_frac_f: float = 0.5
    init_frac_opt: float = 0.25
    init_cash: float = 10_000.0
    init_shares: int = 10
    switching_enabled: bool = True
    switch_mode: str = "all_agents"  # or "per_trade": only the step's trader reconsiders
    allow_self_trades: bool = False
    sigma_window_aligned: bool = False
    u2_trend_horizon: str = "own"  # "own": evaluator's horizon; "chartist": strategy horizon
    seed: int = 0

    def validate(self) -> None:
        positive = [
            "n_agents", "dt", "steps_per_period", "k_scale", "tick", "p0", "pf0",
            "gamma_f", "gamma_c", "horizon_f", "horizon_c", "v1", "v2", "alpha1",
            "alpha2", "alpha3", "big_r", "s", "band", "init_cash",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"config field {name} must be > 0")
        if self.steps < 0 or self.init_shares < 0 or self.sigma_eps < 0:
            raise ValueError("steps, init_shares and sigma_eps must be >= 0")
        if abs(self.steps_per_period * self.dt - 1.0) > 1e-9:
            raise ValueError("steps_per_period * dt must equal one time unit")
        if not (self.gamma_f > self.gamma_c):
            raise ValueError("gamma_f must exceed gamma_c")
        if self.init_frac_f < 0 or self.init_frac_opt < 0 or self.init_frac_f + self.init_frac_opt > 1.0 + 1e-12:
            raise ValueError("initial composition fractions must be >= 0 and sum to <= 1")
        if self.u2_trend_horizon not in ("own", "chartist"):
            raise ValueError("u2_trend_horizon must be 'own' or 'chartist'")
        if self.switch_mode not in ("all_agents", "per_trade"):
            raise ValueError("switch_mode must be 'all_agents' or 'per_trade'")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f.type for f in dataclasses.fields(SimConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELDS[key]
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"config key {key!r}: cannot parse {raw!r} as bool")
    if kind == "int":
        try:
            return int(raw)
        except ValueError:
            # allow scientific notation like 1e5 for step counts
            value = float(raw)
            if value != int(value):
                raise ValueError(f"config key {key!r}: {raw!r} is not an integer") from None
            return int(value)
    if kind == "float":
        return float(raw)
    if kind == "str":
        return raw
    raise ValueError(f"config key {key!r} has unsupported type {kind}")


def parse_overrides(pairs: list[str]) -> dict:
    """Parse repeated `key=value` strings, rejecting unknown keys by name."""
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override {pair!r} is not of the form key=value")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ValueError(f"unknown config key {key!r}")
        out[key] = _parse_value(key, raw)
    return out


def load_config(path: str | Path, overrides: dict | None = None) -> SimConfig:
    """Read a `key = value` config file and apply overrides on top."""
    path = Path(path)
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    if overrides:
        values.update(overrides)
    cfg = SimConfig(**values)
    cfg.validate()
    return cfg


def dump_config(cfg: SimConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(SimConfig)]
    return "\n".join(lines) + "\n"
