"""Experiment grids over UE count, N_STBY and dispatching policy."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .edc import POLICIES
from .scenario import ConfigError, ScenarioConfig, Scenario, load_config, parse_config

log = logging.getLogger(__name__)

HEADER = ["scenario_id", "ue_count", "policy", "n_stby", "mean_delay_s", "mean_power_w",
          "peak_power_w", "messages_acked", "messages_discarded", "wall_time_s"]


@dataclass
class SweepSpec:
    base: ScenarioConfig
    ue_counts: list
    n_stby: list
    policies: list = field(default_factory=lambda: list(POLICIES))
    repetitions: int = 1
    workers: int = 1
    record_wall_time: bool = False

    def __post_init__(self):
        if not (self.ue_counts and self.n_stby and self.policies):
            raise ConfigError("", "sweep axes must be non-empty")
        if self.repetitions < 1:
            raise ConfigError("repetitions", "must be at least 1")
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError("policies", f"unknown policy {p!r}")

    def points(self):
        """Grid points as (ue_count, policy, n_stby, repetition), in key order."""
        return sorted((n, p, s, r) for n in self.ue_counts for p in self.policies
                      for s in self.n_stby for r in range(self.repetitions))


def load_sweep(path, **overrides) -> SweepSpec:
    """Read a sweep file: a ``base`` scenario (path or inline mapping) plus axes."""
    path = Path(path)
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    data = dict(data)
    base = data.pop("base", None)
    if isinstance(base, str):
        cfg = load_config(path.parent / base)
    elif isinstance(base, dict):
        cfg = parse_config(base, path.parent)
    else:
        raise ConfigError("base", "expected a scenario path or mapping")
    axes = {k: data.pop(k) for k in ("ue_counts", "n_stby", "policies", "repetitions")
            if k in data}
    for k in ("horizon", "seed"):
        if k in data:
            v = data.pop(k)
            cfg = replace(cfg, **{k: float(v) if k == "horizon" else int(v)})
    if data:
        raise ConfigError(sorted(data)[0], "unknown field")
    for k in ("ue_counts", "n_stby"):
        if k not in axes:
            raise ConfigError(k, "missing required field")
    if "policies" in axes:
        axes["policies"] = [str(p).lower() for p in axes["policies"]]
    spec = SweepSpec(cfg, **axes)
    for k, v in overrides.items():
        if v is not None:
            if k in ("horizon", "seed"):
                spec.base = replace(spec.base, **{k: v})
            else:
                setattr(spec, k, v)
    return spec


@dataclass
class Row:
    scenario_id: str
    ue_count: int
    policy: str
    n_stby: int
    mean_delay_s: float
    mean_power_w: float
    peak_power_w: float
    messages_acked: int
    messages_discarded: int
    wall_time_s: float | None = None
    error: str | None = None
    overflows: int = 0

    def key(self):
        return (self.ue_count, self.policy, self.n_stby, self.scenario_id)


def scenario_id(n, policy, n_stby, rep) -> str:
    return f"u{n:03d}-{policy}-s{n_stby:02d}-r{rep}"


def run_point(base: ScenarioConfig, point) -> Row:
    n, policy, n_stby, rep = point
    sid = scenario_id(n, policy, n_stby, rep)
    t0 = time.perf_counter()
    try:
        cfg = base.with_grid_point(n, policy, n_stby, seed=base.seed + rep)
        s = Scenario(cfg).run()
    except Exception as exc:  # a failed point is recorded, the sweep goes on
        log.error("%s failed: %s", sid, exc)
        return Row(sid, n, policy, n_stby, math.nan, math.nan, math.nan, 0, 0,
                   time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
    return Row(sid, n, policy, n_stby, s.mean_delay, s.mean_power, s.peak_power, s.acked,
               s.discarded, time.perf_counter() - t0, overflows=s.overflows)


def _run_point(args):
    return run_point(*args)


def run_sweep(spec: SweepSpec, progress=None) -> list[Row]:
    """Run every grid point; rows come back sorted by grid key."""
    points = spec.points()
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            rows = list(pool.map(_run_point, [(spec.base, p) for p in points]))
    else:
        rows = []
        for p in points:
            rows.append(run_point(spec.base, p))
            if progress is not None:
                progress(rows[-1])
    return sorted(rows, key=Row.key)


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def to_csv(rows, record_wall_time: bool = False) -> str:
    """CSV text with the fixed header. Wall time is left empty unless asked
    for, so that repeated sweeps give byte-identical files."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([r.scenario_id, r.ue_count, r.policy, r.n_stby, _fmt(r.mean_delay_s),
                    _fmt(r.mean_power_w), _fmt(r.peak_power_w), r.messages_acked,
                    r.messages_discarded,
                    _fmt(r.wall_time_s) if record_wall_time and r.wall_time_s is not None else ""])
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_plot_data(rows, out_dir) -> list[Path]:
    """gnuplot-ready tables: N_STBY against each metric, one column per UE
    count, one file per (policy, metric)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    counts = sorted({r.ue_count for r in rows})
    stbys = sorted({r.n_stby for r in rows})
    for policy in sorted({r.policy for r in rows}):
        for metric in ("mean_delay_s", "mean_power_w", "peak_power_w"):
            table = {}
            for r in rows:
                if r.policy == policy:
                    table.setdefault((r.n_stby, r.ue_count), []).append(getattr(r, metric))
            path = out_dir / f"{policy}_{metric}.dat"
            lines = ["# n_stby " + " ".join(f"ue{n}" for n in counts)]
            for s in stbys:
                vals = []
                for n in counts:
                    v = table.get((s, n))
                    vals.append(_fmt(math.fsum(v) / len(v)) if v else "nan")
                lines.append(f"{s} " + " ".join(vals))
            path.write_text("\n".join(lines) + "\n")
            written.append(path)
    return written


def check_monotone(values, increasing=True, tolerance=0.05) -> list[int]:
    """Indices ``i`` where the step values[i-1] -> values[i] breaks the trend
    by more than ``tolerance`` (relative)."""
    bad = []
    for i in range(1, len(values)):
        a, b = values[i - 1], values[i]
        if increasing and b < a * (1 - tolerance):
            bad.append(i)
        if not increasing and b > a * (1 + tolerance):
            bad.append(i)
    return bad
