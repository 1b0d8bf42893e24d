"""Command line: run, sweep, validate and trace-check."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .devs import ModelError
from .scenario import ConfigError, Scenario, TraceError, load_config, load_trace
from .sweep import load_sweep, run_sweep, to_csv, write_plot_data

log = logging.getLogger("edgesim")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_TRACE = 4
EXIT_MODEL = 5
EXIT_IO = 6

LOG_ENV = "EDGESIM_LOG_LEVEL"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgesim", description="Edge federation simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--horizon", type=float, help="simulated seconds (overrides the file)")
        sp.add_argument("--seed", type=int, help="random seed (overrides the file)")
        sp.add_argument("--out", type=Path, help="output file (CSV) or directory")

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("config", type=Path)
    common(r)
    r.add_argument("--log-events", type=Path, metavar="FILE",
                   help="write every DEVS event as a JSON line")

    s = sub.add_parser("sweep", help="simulate a grid of scenarios")
    s.add_argument("spec", type=Path)
    common(s)
    s.add_argument("--emit-plots", type=Path, metavar="DIR",
                   help="write gnuplot .dat files into DIR")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--wall-time", action="store_true",
                   help="fill the wall_time_s column (makes the CSV run-dependent)")

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("config", type=Path)

    t = sub.add_parser("trace-check", help="check a GPS trace file")
    t.add_argument("trace", type=Path)
    return p


def _cmd_run(a) -> int:
    cfg = load_config(a.config)
    if a.horizon is not None:
        cfg = replace(cfg, horizon=a.horizon)
    if a.seed is not None:
        cfg = replace(cfg, seed=a.seed)
    sink = open(a.log_events, "w") if a.log_events else None
    try:
        summary = Scenario(cfg, log_sink=sink).run()
    finally:
        if sink is not None:
            sink.close()
    text = json.dumps(asdict(summary), indent=2, sort_keys=True)
    if a.out:
        a.out.write_text(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_sweep(a) -> int:
    spec = load_sweep(a.spec, horizon=a.horizon, seed=a.seed)
    spec.workers = a.workers
    rows = run_sweep(spec, progress=lambda r: log.info("%s done in %.1fs", r.scenario_id,
                                                       r.wall_time_s))
    text = to_csv(rows, a.wall_time)
    if a.out:
        a.out.write_text(text)
    else:
        sys.stdout.write(text)
    if a.emit_plots:
        for path in write_plot_data(rows, a.emit_plots):
            log.info("wrote %s", path)
    failed = [r for r in rows if r.error]
    for r in failed:
        log.error("%s: %s", r.scenario_id, r.error)
    return EXIT_MODEL if failed else EXIT_OK


def _cmd_validate(a) -> int:
    cfg = load_config(a.config)
    n_ues = len(cfg.ues) + (cfg.synthetic.count if cfg.synthetic else 0)
    print(f"ok: {len(cfg.aps)} APs, {len(cfg.edcs)} EDCs, {n_ues} UEs, horizon {cfg.horizon:g} s")
    return EXIT_OK


def _cmd_trace_check(a) -> int:
    tr = load_trace(a.trace)
    print(f"ok: {len(tr)} samples over {tr.times[-1]:g} s starting at epoch {tr.epoch0:g}")
    return EXIT_OK


def main(argv=None) -> int:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        a = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "validate": _cmd_validate,
                "trace-check": _cmd_trace_check}
    try:
        return handlers[a.command](a)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
