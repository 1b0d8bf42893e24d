"""Where does the time go for one offloaded package?

Builds a one-UE, one-AP, one-EDC federation with a warm processing unit,
sends a single 1 Mbit package and breaks its round trip into hops.

    python3 demos/link_budget.py [distance_m]
"""
import math
import sys

from edgesim.phys import V_FIBER, V_RADIO, XH_BANDWIDTH, fspl_attenuation
from edgesim.radio import (BOLTZMANN, UL, dbm_to_watts, default_tables, mcs_select,
                           shannon_capacity)
from edgesim.scenario import parse_config, run_scenario

d_radio = float(sys.argv[1]) if len(sys.argv) > 1 else 500.0
d_xh = 2000.0
size = 1e6

cfg = parse_config({
    "aps": [{"id": "AP0", "position": [0, 0]}],
    "edcs": [{"id": "EDC0", "position": [d_xh, 0], "n_pu": 1, "n_stby": 1}],
    "ues": [{"id": "UE0", "position": [d_radio, 0],
             "services": [{"t_off": 1, "t_on": 100, "t_pkg": 10, "gen_offset": 5}]}],
    "horizon": 5.5,
})
summary, sc = run_scenario(cfg)

# the same figure, by hand
rx_dbm = 30.0 - fspl_attenuation(d_radio, cfg.carrier_f)
snr = dbm_to_watts(rx_dbm) / (BOLTZMANN * 300.0 * 100e6)
eff = mcs_select(shannon_capacity(snr), default_tables()[UL])
print(f"UE at {d_radio:g} m: rx {rx_dbm:.1f} dBm, SNR {10 * math.log10(snr):.1f} dB, "
      f"UL efficiency {eff} bit/s/Hz")

hops = [
    ("radio uplink", size / (eff * 100e6) + d_radio / V_RADIO),
    ("crosshaul to EDC", size / XH_BANDWIDTH + d_xh / V_FIBER),
    ("crosshaul back", d_xh / V_FIBER),
    ("radio downlink", d_radio / V_RADIO),
]
for name, t in hops:
    print(f"  {name:18s} {t * 1e3:9.4f} ms")
total = sum(t for _, t in hops)
(rec,) = sc.recorder.delays
print(f"  {'sum':18s} {total * 1e3:9.4f} ms")
print(f"  {'simulated':18s} {rec.delay * 1e3:9.4f} ms")
