"""Physical messages, point-to-point channels and the crosshaul/radio
interconnects."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable

from .devs import INFINITY, Atomic, Coupled

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
D_MIN = 1.0  # m, lower clamp for free-space path loss
V_FIBER = 2e8
V_RADIO = 3e8
XH_BANDWIDTH = 10e9
XH_EFFICIENCY = 1.0
DEFAULT_CARRIER = 33e9

RADIO = "radio"
FIBER = "fiber"


@dataclass(slots=True)
class PhysicalMessage:
    """Wire-level envelope.

    ``pw`` is in dBm, ``bw`` in Hz, ``eff`` in bit/s/Hz and ``size`` in bits.
    """

    src: str
    to: str | None
    data: object
    bw: float
    pw: float
    eff: float
    size: float = 0.0

    def __post_init__(self):
        if self.size < 0:
            raise ValueError("negative message size")
        if self.size > 0 and (self.bw <= 0 or self.eff <= 0):
            raise ValueError("non-empty message needs positive bandwidth and efficiency")

    def attenuated(self, loss_db: float) -> "PhysicalMessage":
        return PhysicalMessage(self.src, self.to, self.data, self.bw,
                               self.pw - loss_db, self.eff, self.size)

    def __str__(self):
        return f"M({self.src}->{self.to}: {self.data}, {self.size:g}b)"


def fspl_attenuation(d: float, f: float) -> float:
    """Free-space path loss in dB for distance ``d`` (m) and carrier ``f`` (Hz).

    Distances below ``D_MIN`` are clamped.
    """
    if f <= 0:
        raise ValueError("carrier frequency must be positive")
    d = max(d, D_MIN)
    return 20.0 * math.log10(4.0 * math.pi * d * f / SPEED_OF_LIGHT)


def transmission_delay(size: float, bw: float, eff: float) -> float:
    if size == 0:
        return 0.0
    capacity = eff * bw
    if capacity <= 0:
        raise ValueError(f"zero-capacity link for a {size} bit message")
    return size / capacity


def channel_delay(msg: PhysicalMessage, d: float, v_prop: float) -> float:
    """Transmission plus propagation delay of ``msg`` over ``d`` meters."""
    return transmission_delay(msg.size, msg.bw, msg.eff) + d / v_prop


class Geometry:
    """Node positions. Static nodes map to an (x, y) pair, mobile nodes to an
    object with a ``position(t)`` method."""

    def __init__(self):
        self.static: dict[str, tuple[float, float]] = {}
        self.mobile: dict[str, object] = {}

    def place(self, node: str, xy) -> None:
        self.static[node] = (float(xy[0]), float(xy[1]))

    def attach(self, node: str, tracker) -> None:
        self.mobile[node] = tracker

    def position(self, node: str, t: float = 0.0) -> tuple[float, float]:
        xy = self.static.get(node)
        if xy is not None:
            return xy
        return self.mobile[node].position(t)

    def distance(self, a: str, b: str, t: float = 0.0) -> float:
        xa, ya = self.position(a, t)
        xb, yb = self.position(b, t)
        return math.hypot(xa - xb, ya - yb)

    def __contains__(self, node):
        return node in self.static or node in self.mobile


class Channel(Atomic):
    """FIFO channel CH(FROM, TO).

    A message reaching an idle channel starts transmitting at once; otherwise
    it waits in the queue. The delivered copy has its power reduced by the
    channel loss: FSPL for radio, a fixed (default zero) budget for fiber.
    The sender-receiver distance is sampled when transmission starts.
    """

    def __init__(self, name: str, sender: str, receiver: str, distance: Callable[[float], float],
                 medium: str = FIBER, carrier_f: float = DEFAULT_CARRIER,
                 v_prop: float | None = None, loss_db: float = 0.0):
        super().__init__(name)
        self.sender = sender
        self.receiver = receiver
        self.distance = distance
        self.medium = medium
        self.carrier_f = carrier_f
        self.v_prop = v_prop or (V_RADIO if medium == RADIO else V_FIBER)
        self.loss_db = loss_db
        self.i_in = self.add_in_port("in")
        self.o_out = self.add_out_port("out")
        self.sigma = INFINITY
        self.next: PhysicalMessage | None = None
        self.queue: deque[PhysicalMessage] = deque()
        self.delivered = 0
        self._clamp_warned = False

    def loss(self, d: float) -> float:
        if self.medium != RADIO:
            return self.loss_db
        if d < D_MIN and not self._clamp_warned:
            self._clamp_warned = True
            log.debug("%s: distance %.3f m clamped to %.1f m", self.path, d, D_MIN)
        return fspl_attenuation(d, self.carrier_f)

    def _begin(self, msg: PhysicalMessage) -> None:
        d = self.distance(self.now)
        self.next = msg.attenuated(self.loss(d)) if self.medium == RADIO or self.loss_db else msg
        self.sigma = channel_delay(msg, d, self.v_prop)

    def output(self):
        if self.next is not None:
            return ((self.o_out, self.next),)
        return ()

    def deltint(self):
        self.delivered += 1
        if self.queue:
            self._begin(self.queue.popleft())
        else:
            self.next = None
            self.sigma = INFINITY

    def deltext(self, e, bag):
        msgs = bag[self.i_in]
        if self.next is not None:
            self.sigma -= e
            self.queue.extend(msgs)
        else:
            self.queue.extend(msgs)
            self._begin(self.queue.popleft())


def _port(model, name, inp):
    table = model.in_ports if inp else model.out_ports
    return table.get(name) or (model.add_in_port(name) if inp else model.add_out_port(name))


def build_xh(edcs: list[str], aps: list[str], sdnc: str, geometry: Geometry,
             v_prop: float = V_FIBER, loss_db: float = 0.0, name: str = "XH") -> Coupled:
    """Crosshaul: fiber uplink/downlink channel pairs between APs, EDCs and the SDNC."""
    if not edcs or not aps:
        raise ValueError("crosshaul needs at least one EDC and one AP")
    for node in [*edcs, *aps, sdnc]:
        if node not in geometry:
            raise ValueError(f"unknown node {node!r}")
    xh = Coupled(name)

    def chan(kind, a, b):
        ch = Channel(f"{kind}({a},{b})", a, b, _fixed_distance(geometry, a, b),
                     medium=FIBER, v_prop=v_prop, loss_db=loss_db)
        xh.add(ch)
        return ch

    out_ul_sdnc = _port(xh, f"out_ul({sdnc})", False)
    in_dl_sdnc = _port(xh, f"in_dl({sdnc})", True)
    for edc in edcs:
        in_ul_edc = _port(xh, f"in_ul({edc})", True)
        in_dl_edc = _port(xh, f"in_dl({edc})", True)
        out_ul_edc = _port(xh, f"out_ul({edc})", False)
        ch = chan("ULCH", edc, sdnc)
        xh.couple(in_ul_edc, ch.i_in)
        xh.couple(ch.o_out, out_ul_sdnc)
        for ap in aps:
            in_ul_ap = _port(xh, f"in_ul({ap})", True)
            out_dl_ap = _port(xh, f"out_dl({ap})", False)
            up = chan("ULCH", ap, edc)
            xh.couple(in_ul_ap, up.i_in, where=("to", edc))
            xh.couple(up.o_out, out_ul_edc)
            down = chan("DLCH", edc, ap)
            xh.couple(in_dl_edc, down.i_in, where=("to", ap))
            xh.couple(down.o_out, out_dl_ap)
    for ap in aps:
        ch = chan("DLCH", sdnc, ap)
        xh.couple(in_dl_sdnc, ch.i_in, where=("to", ap))
        xh.couple(ch.o_out, xh.out_ports[f"out_dl({ap})"])
    return xh


def build_rad(ues: list[str], aps: list[str], geometry: Geometry,
              carrier_f: float = DEFAULT_CARRIER, v_prop: float = V_RADIO,
              name: str = "RAD") -> Coupled:
    """Radio interface: PBCH, PDCCH, PDSCH downlinks and PUCCH, PUSCH uplinks
    for every (AP, UE) pair."""
    if not aps:
        raise ValueError("radio interface needs at least one AP")
    for node in [*ues, *aps]:
        if node not in geometry:
            raise ValueError(f"unknown node {node!r}")
    rad = Coupled(name)
    for ap in aps:
        for kind in ("pbch", "pdcch", "pdsch"):
            _port(rad, f"in_{kind}({ap})", True)
        for kind in ("pucch", "pusch"):
            _port(rad, f"out_{kind}({ap})", False)
    for ue in ues:
        for kind in ("pucch", "pusch"):
            _port(rad, f"in_{kind}({ue})", True)
        for kind in ("pbch", "pdcch", "pdsch"):
            _port(rad, f"out_{kind}({ue})", False)

    for ap in aps:
        for ue in ues:
            dist = _live_distance(geometry, ap, ue)
            for kind in ("PBCH", "PDCCH", "PDSCH"):
                ch = Channel(f"{kind}({ap},{ue})", ap, ue, dist, medium=RADIO,
                             carrier_f=carrier_f, v_prop=v_prop)
                rad.add(ch)
                low = kind.lower()
                # PBCH is a broadcast: every UE gets every PSS
                where = None if kind == "PBCH" else ("to", ue)
                rad.couple(rad.in_ports[f"in_{low}({ap})"], ch.i_in, where=where)
                rad.couple(ch.o_out, rad.out_ports[f"out_{low}({ue})"])
            for kind in ("PUCCH", "PUSCH"):
                ch = Channel(f"{kind}({ue},{ap})", ue, ap, dist, medium=RADIO,
                             carrier_f=carrier_f, v_prop=v_prop)
                rad.add(ch)
                low = kind.lower()
                rad.couple(rad.in_ports[f"in_{low}({ue})"], ch.i_in, where=("to", ap))
                rad.couple(ch.o_out, rad.out_ports[f"out_{low}({ap})"])
    return rad


def _fixed_distance(geometry, a, b):
    d = geometry.distance(a, b)
    return lambda t: d


def _live_distance(geometry, a, b):
    return lambda t: geometry.distance(a, b, t)
