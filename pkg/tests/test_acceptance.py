"""End-to-end acceptance checks.

Each test carries a ``criterion`` marker; the conftest hook prints one
PASS/FAIL line per criterion after the run. The desk-scale sweep is shared
by the trend checks through a module-scoped fixture.
"""
import math
import random
import time
from collections import defaultdict
from pathlib import Path

import mpmath
import pytest

from edgesim.devs import Simulator
from edgesim.phys import PhysicalMessage, channel_delay, fspl_attenuation
from edgesim.radio import (DL, UL, compute_shares, default_tables, mcs_select,
                           shannon_capacity, snr_from_message)
from edgesim.scenario import load_config, parse_config, run_scenario
from edgesim.sweep import check_monotone, load_sweep, run_sweep, to_csv

from test_devs import pipeline

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

mpmath.mp.dps = 50
K_B = mpmath.mpf("1.380649e-23")
LIGHT = mpmath.mpf(299792458)

UL_NR = [0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.6953, 1.9141, 2.1602, 2.4063,
         2.5703, 2.7305, 3.0293, 3.3223, 3.6094, 3.9023, 4.2129, 4.5234, 4.8164, 5.1152,
         5.3320, 5.5547, 5.8906, 6.2266, 6.5703, 6.9141, 7.1602, 7.4063]


def rel_err(got, want):
    want = mpmath.mpf(want)
    return abs(mpmath.mpf(got) - want) / abs(want) if want != 0 else abs(mpmath.mpf(got))


# -- kernel ------------------------------------------------------------------------

@pytest.mark.criterion(1, "kernel oracle: hand-traced pipeline log with a confluent collision")
def test_kernel_oracle(note):
    t0 = time.perf_counter()
    root, gen, srv, sink = pipeline()
    sim = Simulator(root, record=True)
    sim.run()
    got = [(r.time, r.path, r.kind, r.port, r.payload) for r in sim.records]
    b = "{'in': ['%s']}"
    expected = [
        (2.0, "R/gen", "out", "out", "job1"), (2.0, "R/gen", "int", "", ""),
        (2.0, "R/proc", "ext", "in", b % "job1"),
        (4.0, "R/gen", "out", "out", "job2"), (4.0, "R/gen", "int", "", ""),
        (4.0, "R/proc", "ext", "in", b % "job2"),
        (6.0, "R/gen", "out", "out", "job3"), (6.0, "R/proc", "out", "out", "job1"),
        (6.0, "R/gen", "int", "", ""), (6.0, "R/proc", "con", "in", b % "job3"),
        (6.0, "R/sink", "ext", "in", b % "job1"),
        (8.0, "R/gen", "out", "out", "job4"), (8.0, "R/gen", "int", "", ""),
        (8.0, "R/proc", "ext", "in", b % "job4"),
        (10.0, "R/gen", "out", "out", "job5"), (10.0, "R/proc", "out", "out", "job3"),
        (10.0, "R/gen", "int", "", ""), (10.0, "R/proc", "con", "in", b % "job5"),
        (10.0, "R/sink", "ext", "in", b % "job3"),
        (14.0, "R/proc", "out", "out", "job5"), (14.0, "R/proc", "int", "", ""),
        (14.0, "R/sink", "ext", "in", b % "job5"),
    ]
    elapsed = time.perf_counter() - t0
    note(f"{len(got)} records in {elapsed * 1e3:.1f} ms")
    assert got == expected
    # the collision at t=6 runs the internal transition first: job3 is served, not lost
    assert srv.lost == ["job2", "job4"]
    assert elapsed < 1.0


# -- formulas ------------------------------------------------------------------------

@pytest.mark.criterion(2, "formula suite against 50-digit recomputation")
def test_formula_suite(note):
    t0 = time.perf_counter()
    rng = random.Random(2024)
    n = 200
    worst = defaultdict(float)
    for _ in range(n):
        d, f = 10 ** rng.uniform(0, 5), 10 ** rng.uniform(8, 11)
        want = 20 * mpmath.log10(4 * mpmath.pi * mpmath.mpf(d) * mpmath.mpf(f) / LIGHT)
        worst["fspl"] = max(worst["fspl"], rel_err(fspl_attenuation(d, f), want))

        size, bw, eff = rng.uniform(0, 1e7), 10 ** rng.uniform(5, 10), rng.uniform(0.2, 8)
        dist, v = rng.uniform(0, 5e4), rng.choice([2e8, 3e8])
        msg = PhysicalMessage("a", "b", None, bw, 0.0, eff, size)
        want = mpmath.mpf(size) / (mpmath.mpf(eff) * mpmath.mpf(bw)) + mpmath.mpf(dist) / v
        worst["channel_delay"] = max(worst["channel_delay"],
                                     rel_err(channel_delay(msg, dist, v), want))

        snr = 10 ** rng.uniform(-3, 6)
        want = mpmath.log(1 + mpmath.mpf(snr), 2)
        worst["shannon"] = max(worst["shannon"], rel_err(shannon_capacity(snr), want))

        pw, te = rng.uniform(-130, 60), rng.uniform(10, 1000)
        msg = PhysicalMessage("a", "b", None, bw, pw, 1.0, 0.0)
        want = mpmath.power(10, (mpmath.mpf(pw) - 30) / 10) / (K_B * mpmath.mpf(te) * mpmath.mpf(bw))
        worst["snr"] = max(worst["snr"], rel_err(snr_from_message(msg, te), want))

        effs = {f"u{i}": rng.uniform(0.2, 8) for i in range(rng.randint(1, 30))}
        shares = compute_shares(effs)
        inv = mpmath.fsum(1 / mpmath.mpf(e) for e in effs.values())
        for ue, e in effs.items():
            worst["shares"] = max(worst["shares"], rel_err(shares[ue], 1 / (mpmath.mpf(e) * inv)))
    elapsed = time.perf_counter() - t0
    note(f"{n} inputs each, worst rel err {float(max(worst.values())):.1e}, {elapsed:.2f} s")
    for name, err in worst.items():
        assert err <= 1e-9, name
    assert elapsed < 5.0


@pytest.mark.criterion(3, "MCS tables exact and selection never above capacity")
def test_mcs_boundaries(note):
    t = default_tables()
    ul, dl = t[UL], t[DL]
    assert (len(ul), ul.min, ul.max) == (28, 0.2344, 7.4063)
    assert (len(dl), dl.min, dl.max) == (29, 0.2344, 5.5547)
    assert list(ul.efficiencies) == UL_NR
    rng = random.Random(3)
    caps = [rng.uniform(0, 10) for _ in range(5000)]
    caps += [e for e in ul.efficiencies + dl.efficiencies]
    caps += [math.nextafter(e, 0.0) for e in ul.efficiencies + dl.efficiencies]
    for cap in caps:
        for table in (ul, dl):
            eff = mcs_select(cap, table)
            assert eff is None or eff <= cap
            assert eff is not None or cap < table.min
    note(f"{len(caps)} capacities incl. every table boundary")


# -- desk-scale sweep ------------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_sweep():
    spec = load_sweep(CONFIGS / "desk_sweep.yaml")
    t0 = time.perf_counter()
    rows = run_sweep(spec)
    return spec, rows, time.perf_counter() - t0


def _series(rows, fixed, axis, metric):
    groups = defaultdict(list)
    for r in rows:
        groups[tuple(getattr(r, k) for k in fixed)].append((getattr(r, axis), getattr(r, metric)))
    return {k: [v for _, v in sorted(g)] for k, g in groups.items()}


@pytest.mark.criterion(4, "capacity safety over the full desk-scale sweep")
def test_capacity_safety(desk_sweep, note):
    spec, rows, wall = desk_sweep
    assert spec.base.horizon == 3600.0
    assert sorted(spec.ue_counts) == [5, 10, 15, 20] and sorted(spec.n_stby) == [0, 2, 5, 10]
    assert sorted(spec.policies) == ["emptiest", "fullest"]
    note(f"{len(rows)} scenarios, {sum(r.overflows for r in rows)} overflows, {wall:.0f} s")
    assert len(rows) == 32
    assert [r.error for r in rows if r.error] == []
    assert all(r.overflows == 0 for r in rows)
    assert wall < 600.0


@pytest.mark.criterion(5, "mean delay non-decreasing in UE count (5% tolerance)")
def test_delay_grows_with_ues(desk_sweep, note):
    _, rows, _ = desk_sweep
    series = _series(rows, ("policy", "n_stby"), "ue_count", "mean_delay_s")
    bad = {k: check_monotone(v, increasing=True) for k, v in series.items()}
    bad = {k: v for k, v in bad.items() if v}
    note(f"{len(series)} series, {len(bad)} violations")
    assert not bad


@pytest.mark.criterion(6, "hot standby: delay non-increasing, power non-decreasing (5%)")
def test_standby_trades_power_for_delay(desk_sweep, note):
    _, rows, _ = desk_sweep
    delay = _series(rows, ("policy", "ue_count"), "n_stby", "mean_delay_s")
    power = _series(rows, ("policy", "ue_count"), "n_stby", "mean_power_w")
    bad_d = {k: v for k, v in delay.items() if check_monotone(v, increasing=False)}
    bad_p = {k: v for k, v in power.items() if check_monotone(v, increasing=True)}
    note(f"{len(delay)} series, {len(bad_d)} delay and {len(bad_p)} power violations")
    assert not bad_d and not bad_p


@pytest.mark.criterion(7, "FULLEST draws no more power than EMPTIEST")
def test_fullest_saves_power(desk_sweep, note):
    _, rows, _ = desk_sweep
    by = {(r.ue_count, r.n_stby, r.policy): r.mean_power_w for r in rows}
    points = sorted({(n, s) for n, s, _ in by})
    worse = [p for p in points if by[(*p, "fullest")] > by[(*p, "emptiest")]]
    dense = [p for p in points if p[0] >= 10]
    strict = [p for p in dense if by[(*p, "fullest")] < by[(*p, "emptiest")]]
    note(f"{len(worse)} points worse, strictly lower on {len(strict)}/{len(dense)} dense points")
    assert not worse
    assert len(strict) >= 0.5 * len(dense)


# -- closed-form latency ------------------------------------------------------------------

def _ul_efficiency_oracle(d_radio):
    fspl = 20 * mpmath.log10(4 * mpmath.pi * max(mpmath.mpf(d_radio), 1) * mpmath.mpf(33e9) / LIGHT)
    rx_dbm = 30 - fspl
    snr = mpmath.power(10, (rx_dbm - 30) / 10) / (K_B * 300 * mpmath.mpf(100e6))
    cap = mpmath.log(1 + snr, 2)
    fits = [e for e in UL_NR if e <= cap]
    # keep clear of an MCS boundary so float rounding cannot flip the choice
    assert min(abs(cap - e) for e in UL_NR) > 1e-6
    return max(fits)


@pytest.mark.criterion(8, "single-message latency equals the closed-form hop sum")
def test_closed_form_latency(note):
    ap, ue, edc = (0.0, 0.0), (300.0, 400.0), (3000.0, 4000.0)
    t_data = 0.003
    cfg = parse_config({
        "aps": [{"id": "AP0", "position": list(ap)}],
        "edcs": [{"id": "EDC0", "position": list(edc), "n_pu": 1, "n_stby": 1,
                  "pu": {"t_data": t_data}}],
        "ues": [{"id": "UE0", "position": list(ue),
                 # the session opens at t=1, after the controller has assigned the EDC
                 "services": [{"app": "adas", "t_off": 1, "t_on": 100, "t_pkg": 10,
                               "gen_offset": 5.0}]}],
        "sdnc": {"position": [0, 10]},
        "horizon": 5.5,
    })
    summary, sc = run_scenario(cfg)
    (rec,) = sc.recorder.delays
    assert rec.created == 5.0
    d_r = mpmath.mpf(500)  # 3-4-5 triangle
    d_x = mpmath.mpf(5000)
    eff_ul = _ul_efficiency_oracle(d_r)
    size = mpmath.mpf(1e6)
    want = (size / (mpmath.mpf(eff_ul) * mpmath.mpf(100e6)) + d_r / 3e8  # PUSCH
            + size / mpmath.mpf(10e9) + d_x / 2e8  # crosshaul uplink
            + d_x / 2e8  # crosshaul downlink (ack carries no payload)
            + d_r / 3e8  # PDSCH
            + mpmath.mpf(t_data))
    err = abs(mpmath.mpf(rec.delay) - want)
    note(f"eff_ul {eff_ul}, delay {rec.delay:.12f} s, |error| {float(err):.1e} s")
    assert sc.ues[0].acc.ap == "AP0"
    assert err <= 1e-9


# -- determinism ------------------------------------------------------------------------

@pytest.mark.criterion(9, "two sweeps with the same seed give byte-identical CSVs")
def test_sweep_determinism(note):
    spec = load_sweep(CONFIGS / "desk_sweep.yaml", horizon=600.0)
    first = to_csv(run_sweep(spec))
    again = load_sweep(CONFIGS / "desk_sweep.yaml", horizon=600.0)
    second = to_csv(run_sweep(again))
    note(f"{first.count(chr(10)) - 1} rows, {len(first)} bytes, horizon 600 s")
    assert first.encode() == second.encode()


# -- scale -------------------------------------------------------------------------------

@pytest.mark.criterion(10, "100 UEs over 1 h complete (growth check is informational)")
def test_scale_sanity(note):
    base = load_config(CONFIGS / "desk.yaml")
    walls = {}
    for n in (10, 50, 100):
        cfg = base.with_grid_point(n, "emptiest", 0)
        summary, _ = run_scenario(cfg)
        walls[n] = summary.wall_time
        assert summary.overflows == 0 and summary.acked > 0
    # fit the exponent of wall ~ n^k over the two steps
    k1 = math.log(walls[50] / walls[10]) / math.log(5)
    k2 = math.log(walls[100] / walls[50]) / math.log(2)
    quad = [walls[50] / walls[10] / 25, walls[100] / walls[50] / 4]
    within = all(1 / 3 <= q <= 3 for q in quad)
    note("wall " + ", ".join(f"{n}:{w:.1f}s" for n, w in walls.items())
         + f"; exponents {k1:.2f}/{k2:.2f}; quadratic-within-3x "
         + ("yes" if within else "no (informational)"))
