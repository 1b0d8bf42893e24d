import math
import random

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from edgesim.devs import Coupled, Simulator
from edgesim.phys import (D_MIN, FIBER, RADIO, SPEED_OF_LIGHT, V_FIBER, V_RADIO, Channel,
                          Geometry, PhysicalMessage, build_rad, build_xh, channel_delay,
                          fspl_attenuation, transmission_delay)

mpmath.mp.dps = 50


def fspl_oracle(d, f):
    d = max(mpmath.mpf(d), D_MIN)
    return 20 * mpmath.log10(4 * mpmath.pi * d * mpmath.mpf(f) / mpmath.mpf(SPEED_OF_LIGHT))


def test_fspl_reference_values():
    # 1 m at 33 GHz, computed once with mpmath at 50 digits
    assert fspl_attenuation(1.0, 33e9) == pytest.approx(62.818062019441123, rel=1e-12)
    assert fspl_attenuation(1000.0, 33e9) == pytest.approx(122.81806201944112, rel=1e-12)
    # clamp below one meter
    assert fspl_attenuation(0.0, 33e9) == fspl_attenuation(1.0, 33e9)
    assert fspl_attenuation(0.25, 33e9) == fspl_attenuation(D_MIN, 33e9)


def test_fspl_matches_oracle_on_random_inputs():
    rng = random.Random(7)
    for _ in range(200):
        d = 10 ** rng.uniform(-1, 5)
        f = 10 ** rng.uniform(8, 11)
        want = fspl_oracle(d, f)
        assert abs(fspl_attenuation(d, f) - float(want)) <= 1e-9 * abs(float(want))


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 1e5), st.floats(1e8, 1e11))
def test_fspl_grows_6db_per_doubling(d, f):
    assert fspl_attenuation(2 * d, f) - fspl_attenuation(d, f) == pytest.approx(
        20 * math.log10(2), abs=1e-9)


def test_transmission_delay_examples():
    assert transmission_delay(0, 0, 0) == 0.0
    # share 0.25 of 100 MHz at 2 bit/s/Hz, 1 Mbit
    assert transmission_delay(1e6, 0.25 * 100e6, 2.0) == pytest.approx(0.02, rel=1e-15)
    with pytest.raises(ValueError):
        transmission_delay(10, 0.0, 1.0)


def test_channel_delay_oracle():
    rng = random.Random(11)
    for _ in range(200):
        size = rng.choice([0.0, rng.uniform(1, 1e7)])
        bw, eff = rng.uniform(1e5, 1e10), rng.uniform(0.2, 8)
        d, v = rng.uniform(0, 5e4), rng.choice([V_FIBER, V_RADIO])
        msg = PhysicalMessage("a", "b", None, bw, 0.0, eff, size)
        want = mpmath.mpf(size) / (mpmath.mpf(eff) * mpmath.mpf(bw)) + mpmath.mpf(d) / mpmath.mpf(v)
        got = channel_delay(msg, d, v)
        assert abs(got - float(want)) <= 1e-9 * max(float(want), 1e-300)


def test_physical_message_invariants():
    with pytest.raises(ValueError):
        PhysicalMessage("a", "b", None, 1.0, 0.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        PhysicalMessage("a", "b", None, 0.0, 0.0, 1.0, 10.0)
    m = PhysicalMessage("a", "b", "x", 1e6, 30.0, 1.0, 8.0)
    assert m.attenuated(12.5).pw == 17.5


class Feed(Coupled):
    """Injects messages into a channel at given times and collects outputs."""


def _run_channel(ch, arrivals):
    from edgesim.devs import INFINITY, Atomic

    class Src(Atomic):
        def __init__(self):
            super().__init__("src")
            self.o = self.add_out_port("out")
            self.items = sorted(arrivals, key=lambda a: a[0])
            self.k = 0
            self.sigma = self.items[0][0] if self.items else INFINITY

        def output(self):
            t = self.items[self.k][0]
            return [(self.o, m) for tt, m in self.items if tt == t]

        def deltint(self):
            t = self.items[self.k][0]
            while self.k < len(self.items) and self.items[self.k][0] == t:
                self.k += 1
            self.sigma = self.items[self.k][0] - t if self.k < len(self.items) else INFINITY

    class Dst(Atomic):
        def __init__(self):
            super().__init__("dst")
            self.i = self.add_in_port("in")
            self.got = []

        def deltext(self, e, bag):
            self.got.extend((self.now, m) for m in bag[self.i])

    root = Feed("R")
    src, dst = Src(), Dst()
    for m in (src, ch, dst):
        root.add(m)
    root.couple(src.o, ch.i_in)
    root.couple(ch.o_out, dst.i)
    Simulator(root).run()
    return dst.got


def test_fiber_channel_is_fifo_with_serialization():
    ch = Channel("CH", "a", "b", lambda t: 2000.0, medium=FIBER)
    m1 = PhysicalMessage("a", "b", 1, 1e9, 0.0, 1.0, 1e6)  # 1 ms on the wire
    m2 = PhysicalMessage("a", "b", 2, 1e9, 0.0, 1.0, 0.0)
    got = _run_channel(ch, [(0.0, m1), (0.0005, m2)])
    prop = 2000.0 / V_FIBER
    assert [m.data for _, m in got] == [1, 2]
    assert got[0][0] == pytest.approx(1e-3 + prop, rel=1e-12)
    # m2 waits for m1 to be delivered, then takes its own delay
    assert got[1][0] == pytest.approx(1e-3 + 2 * prop, rel=1e-12)
    assert got[1][1].pw == 0.0
    assert ch.delivered == 2


def test_radio_channel_attenuates_by_fspl():
    ch = Channel("CH", "ap", "ue", lambda t: 1000.0, medium=RADIO, carrier_f=33e9)
    m = PhysicalMessage("ap", "ue", None, 1e8, 50.0, 1.0, 0.0)
    (t, out), = _run_channel(ch, [(1.0, m)])
    assert t == pytest.approx(1.0 + 1000.0 / V_RADIO, rel=1e-12)
    assert out.pw == pytest.approx(50.0 - fspl_attenuation(1000.0, 33e9), rel=1e-12)


def test_channel_samples_distance_at_transmission_start():
    calls = []

    def dist(t):
        calls.append(t)
        return 300.0 * (1 + t)

    ch = Channel("CH", "x", "y", dist, medium=RADIO)
    m = PhysicalMessage("x", "y", None, 1e6, 0.0, 1.0, 1e6)  # 1 s on air
    _run_channel(ch, [(0.0, m), (0.0, m)])
    assert calls[0] == 0.0
    assert calls[1] == pytest.approx(1.0 + 300.0 / V_RADIO)


def _geo(nodes):
    g = Geometry()
    for i, n in enumerate(nodes):
        g.place(n, (100.0 * i, 0.0))
    return g


def test_build_xh_single_nodes_has_four_channels():
    xh = build_xh(["EDC"], ["AP"], "SDNC", _geo(["EDC", "AP", "SDNC"]))
    names = sorted(xh.components)
    assert names == ["DLCH(EDC,AP)", "DLCH(SDNC,AP)", "ULCH(AP,EDC)", "ULCH(EDC,SDNC)"]
    assert sorted(xh.in_ports) == ["in_dl(EDC)", "in_dl(SDNC)", "in_ul(AP)", "in_ul(EDC)"]
    assert sorted(xh.out_ports) == ["out_dl(AP)", "out_ul(EDC)", "out_ul(SDNC)"]


def test_build_xh_counts_scale():
    nodes = ["E0", "E1", "E2", "A0", "A1", "SDNC"]
    xh = build_xh(["E0", "E1", "E2"], ["A0", "A1"], "SDNC", _geo(nodes))
    # 2 per (AP, EDC) pair, one uplink per EDC, one downlink per AP
    assert len(xh.components) == 2 * 3 * 2 + 3 + 2
    with pytest.raises(ValueError):
        build_xh(["E9"], ["A0"], "SDNC", _geo(nodes))


def test_xh_routes_by_destination():
    g = _geo(["E0", "E1", "A0", "SDNC"])
    xh = build_xh(["E0", "E1"], ["A0"], "SDNC", g)
    root = Coupled("R")
    root.add(xh)
    from edgesim.devs import INFINITY, Atomic

    class Src(Atomic):
        def __init__(self):
            super().__init__("src")
            self.o = self.add_out_port("out")
            self.sigma = 0.0

        def output(self):
            return [(self.o, PhysicalMessage("A0", "E1", "hello", 1e10, 0.0, 1.0, 0.0))]

        def deltint(self):
            self.sigma = INFINITY

    class Dst(Atomic):
        def __init__(self, name):
            super().__init__(name)
            self.i = self.add_in_port("in")
            self.got = []

        def deltext(self, e, bag):
            self.got.extend((self.now, m.data) for m in bag[self.i])

    src, d0, d1 = Src(), Dst("d0"), Dst("d1")
    for m in (src, d0, d1):
        root.add(m)
    root.couple(src.o, xh.in_ports["in_ul(A0)"])
    root.couple(xh.out_ports["out_ul(E0)"], d0.i)
    root.couple(xh.out_ports["out_ul(E1)"], d1.i)
    Simulator(root).run()
    assert d0.got == []
    assert d1.got == [(pytest.approx(g.distance("A0", "E1") / V_FIBER), "hello")]


def test_build_rad_counts():
    g = _geo(["A0", "A1", "U0", "U1", "U2"])
    rad = build_rad(["U0", "U1", "U2"], ["A0", "A1"], g)
    assert len(rad.components) == 5 * 2 * 3
    assert "PBCH(A0,U2)" in rad.components and "PUSCH(U1,A1)" in rad.components
    assert len(rad.in_ports) == 3 * 2 + 2 * 3
    assert len(rad.out_ports) == 3 * 3 + 2 * 2


def test_geometry_tracks_mobile_nodes():
    class Line:
        def position(self, t):
            return (10.0 * t, 0.0)

    g = Geometry()
    g.place("A", (0.0, 0.0))
    g.attach("U", Line())
    assert g.distance("A", "U", 3.0) == 30.0
    assert "U" in g and "B" not in g
