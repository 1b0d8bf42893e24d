"""Hot standby trades power for latency.

Runs the desk scenario for a fixed UE count with a growing number of idle
processing units kept powered, under both dispatching policies, and prints
mean delay and mean power side by side. A short horizon keeps it quick;
pass a longer one for smoother numbers.

    python3 demos/standby_tradeoff.py [ue_count] [horizon_s]
"""
import sys
from pathlib import Path

from edgesim.scenario import load_config, run_scenario

n_ues = int(sys.argv[1]) if len(sys.argv) > 1 else 10
horizon = float(sys.argv[2]) if len(sys.argv) > 2 else 900.0

base = load_config(Path(__file__).resolve().parent.parent / "configs" / "desk.yaml")
print(f"{n_ues} UEs, {horizon:g} s simulated")
print(f"{'policy':>9} {'n_stby':>6} {'delay ms':>9} {'power W':>9} {'acked':>6}")
for policy in ("emptiest", "fullest"):
    for n_stby in (0, 2, 5, 10):
        cfg = base.with_grid_point(n_ues, policy, n_stby)
        s, _ = run_scenario(cfg, horizon)
        print(f"{policy:>9} {n_stby:>6} {s.mean_delay * 1e3:9.2f} {s.mean_power:9.1f} {s.acked:>6}")
