"""Drive a UE from a cab-style GPS trace.

Writes a small synthetic trace (latitude longitude occupancy epoch, one
sample per line) that crosses between two access points, replays it, and
reports how often the UE handed over.

    python3 demos/gps_replay.py
"""
import tempfile
from pathlib import Path

from edgesim.scenario import load_trace, parse_config, run_scenario

origin = (37.75, -122.42)
with tempfile.TemporaryDirectory() as tmp:
    trace = Path(tmp) / "cab.txt"
    # eastbound at roughly 10 m/s, sampled every 30 s, newest first like the raw data
    lines = [f"{origin[0]:.6f} {origin[1] + 0.0034 * k / 10:.6f} 1 {1211000000 + 30 * k}"
             for k in range(40)]
    trace.write_text("\n".join(reversed(lines)) + "\n")
    tr = load_trace(trace)
    print(f"trace: {len(tr)} samples over {tr.times[-1]:g} s")

    cfg = parse_config({
        "origin": list(origin),
        "aps": [{"id": "AP_W", "position": [0, 100]}, {"id": "AP_E", "position": [1000, 100]}],
        "edcs": [{"id": "EDC0", "position": [500, 300], "n_stby": 1}],
        "ues": [{"id": "CAB", "trace": trace.name,
                 "services": [{"t_off": 5, "t_on": 600, "gen_offset": 0.5}]}],
        "horizon": tr.times[-1],
    }, tmp)
    summary, sc = run_scenario(cfg)

print(f"handovers {summary.handovers}, acked {summary.acked}, "
      f"discarded {summary.discarded}, mean delay {summary.mean_delay * 1e3:.2f} ms")
