"""User equipment: services (generator + manager), access manager with
handover, mobility and the UE radio antenna."""
from __future__ import annotations

import bisect
import logging
from collections import deque
from dataclasses import dataclass, replace

from .devs import INFINITY, Atomic, Coupled, Outbox
from .messages import (DATA, START, STOP, ConnectRequest, PSS, ServiceAck, ServiceMessage,
                       ShareAssignment, UplinkFrame)
from .phys import PhysicalMessage
from .radio import UL, default_tables, snr_from_message, to_db

log = logging.getLogger(__name__)


@dataclass
class ServiceConfig:
    app: str = "adas"
    u: float = 0.2
    t_off: float = 30.0
    t_on: float = 60.0
    size: float = 1e6
    t_pkg: float = 1.0
    offset: float = 0.0  # shifts the first activation (desynchronizes UEs)
    gen_offset: float | None = None  # first package instant, default t_pkg

    def __post_init__(self):
        if self.t_pkg <= 0:
            raise ValueError("t_pkg must be positive")
        if self.size <= 0:
            raise ValueError("size must be positive")
        if self.t_on < 0 or self.t_off < 0 or self.offset < 0:
            raise ValueError("t_on, t_off and offset must be non-negative")


@dataclass
class UEAntennaConfig:
    power: float = 30.0  # dBm
    gain: float = 0.0  # dB
    noise_temp: float = 300.0  # K
    bandwidth: float = 100e6  # used for control messages before a share is known


class Generator(Atomic):
    """GEN: emits one package of ``size`` bits every ``t_pkg`` seconds."""

    def __init__(self, name, config: ServiceConfig):
        super().__init__(name)
        self.config = config
        self.o_out = self.add_out_port("out")
        first = config.gen_offset
        self.sigma = config.t_pkg if first is None else first
        self.count = 0

    def output(self):
        return ((self.o_out, self.config.size),)

    def deltint(self):
        self.count += 1
        self.sigma = self.config.t_pkg


OFF = "off"
WAIT_CONN = "wait_conn"
WAIT_START = "wait_start"
RETRY = "retry"
SEND_DATA = "send_data"
WAIT_ACK = "wait_ack"
WAIT_STOP = "wait_stop"


class ServiceManager(Atomic):
    """MNG: the on/off offloading session of one service.

    Data is sent stop-and-wait: one message in flight, the next one leaves
    when the previous is acknowledged. The active budget ``t`` starts when
    the service announces itself; once spent, the session is stopped and
    whatever is left in the queue is discarded.
    """

    def __init__(self, name, ue_id: str, config: ServiceConfig, recorder=None):
        super().__init__(name)
        self.ue_id = ue_id
        self.config = config
        self.recorder = recorder
        self.i_data = self.add_in_port("in_data")
        self.i_conn = self.add_in_port("in_conn")
        self.i_ack = self.add_in_port("in_ack")
        self.o_st = self.add_out_port("out_st")
        self.o_start = self.add_out_port("out_start")
        self.o_stop = self.add_out_port("out_stop")
        self.o_data = self.add_out_port("out_data")
        self.phase = OFF
        self.edc: str | None = None
        self.q: deque[ServiceMessage] = deque()
        self.t = 0.0
        self.sigma = config.offset + config.t_off
        self.seq = 0
        self.sent = 0
        self.acked = 0
        self.discarded = 0
        self.rejected = 0
        self.cycles = 0

    def _msg(self, kind, size=0.0, created=None):
        return ServiceMessage(kind, self.ue_id, self.config.app, self.edc, self.config.u,
                              size, self.now if created is None else created)

    def output(self):
        ph = self.phase
        if ph == OFF:
            return ((self.o_st, (self.config.app, True)),)
        if ph == WAIT_CONN:
            if self.t <= self.sigma:
                return ((self.o_st, (self.config.app, False)),)
            return ((self.o_start, self._msg(START)),)
        if ph == RETRY:
            if self.t <= self.sigma:
                return ((self.o_st, (self.config.app, False)),)
            return ((self.o_start, self._msg(START)),)
        if ph == SEND_DATA:
            if self.t <= self.sigma:
                return ((self.o_stop, self._msg(STOP)),)
            if self.q:
                # bind the message to the hosting EDC as it leaves
                return ((self.o_data, replace(self.q[0], edc=self.edc)),)
            return ()
        if ph == WAIT_STOP:
            return ((self.o_st, (self.config.app, False)),)
        return ()

    def _end_cycle(self):
        self.discarded += len(self.q)
        if self.recorder is not None and self.q:
            self.recorder.discard(self.ue_id, self.config.app, len(self.q))
        self.q.clear()
        self.phase, self.edc, self.t = OFF, None, 0.0
        self.sigma = self.config.t_off
        self.cycles += 1

    def deltint(self):
        ph, sigma = self.phase, self.sigma
        if ph == OFF:
            self.phase, self.sigma, self.t = WAIT_CONN, self.config.t_on, self.config.t_on
        elif ph in (WAIT_CONN, RETRY):
            if self.t <= sigma:
                self._end_cycle()
            else:
                self.phase, self.sigma, self.t = WAIT_START, INFINITY, self.t - sigma
        elif ph == SEND_DATA:
            if self.t <= sigma:
                self.phase, self.sigma, self.t = WAIT_STOP, INFINITY, 0.0
            elif self.q:
                self.sent += 1
                self.phase, self.sigma, self.t = WAIT_ACK, INFINITY, self.t - sigma
            else:
                self.t -= sigma
                self.sigma = self.t
        elif ph == WAIT_STOP:
            self._end_cycle()
        else:
            raise RuntimeError(f"{self.path}: internal transition in phase {ph}")

    def deltext(self, e, bag):
        self.sigma -= e
        if self.phase != OFF:
            self.t -= e
        cfg = self.config
        for size in bag.get(self.i_data, ()):
            if self.phase == OFF:
                self.discarded += 1
                if self.recorder is not None:
                    self.recorder.discard(self.ue_id, cfg.app, 1)
                continue
            self.seq += 1
            msg = ServiceMessage(DATA, self.ue_id, cfg.app, None, cfg.u, size, self.now, self.seq)
            self.q.append(msg)
            if self.phase == SEND_DATA:
                self.sigma = 0.0
        for connected in bag.get(self.i_conn, ()):
            if connected and self.phase == WAIT_CONN:
                self.sigma = 0.0
        for ack in bag.get(self.i_ack, ()):
            self._ack(ack)

    def _ack(self, ack: ServiceAck):
        req = ack.request
        if req.app != self.config.app or req.ue != self.ue_id:
            return
        ph = self.phase
        if ph == WAIT_START and req.kind == START:
            if ack.ok:
                self.edc = ack.edc
                self.phase, self.sigma = SEND_DATA, 0.0
            else:
                self.rejected += 1
                self.phase, self.sigma = RETRY, self.config.t_pkg
        elif ph == WAIT_ACK and req.kind == DATA and self.q and req.seq == self.q[0].seq:
            if ack.ok:
                msg = self.q.popleft()
                self.acked += 1
                if self.recorder is not None:
                    self.recorder.delay(self.ue_id, self.config.app, msg.created, self.now)
                self.phase, self.sigma = SEND_DATA, 0.0
            else:
                self.phase, self.sigma = SEND_DATA, self.config.t_pkg
        elif ph == WAIT_STOP and req.kind == STOP:
            self.sigma = 0.0
        else:
            log.debug("%s: unexpected %s ack in phase %s", self.path, req.kind, ph)


class Service(Coupled):
    """SRV: one GEN/MNG pair."""

    def __init__(self, ue_id: str, config: ServiceConfig, recorder=None):
        super().__init__(config.app)
        self.gen = Generator("GEN", config)
        self.mng = ServiceManager("MNG", ue_id, config, recorder)
        self.add(self.gen)
        self.add(self.mng)
        self.i_conn = self.add_in_port("in_conn")
        self.i_ack = self.add_in_port("in_ack")
        c = self.couple
        c(self.i_conn, self.mng.i_conn)
        c(self.i_ack, self.mng.i_ack)
        c(self.gen.o_out, self.mng.i_data)
        for name in ("out_st", "out_start", "out_stop", "out_data"):
            c(self.mng.out_ports[name], self.add_out_port(name))


ACC_OFF = "off"
CONNECT = "connect"
ON = "on"
CHANGE = "change"
DISCONNECT = "disconnect"


def best_ap(snr: dict, order, current=None, hysteresis: float = 0.0):
    """AP with the highest SNR, ties to the first in ``order``.

    The current AP is kept unless another beats it by more than
    ``hysteresis`` dB.
    """
    best, best_snr = None, None
    for ap in order:
        s = snr.get(ap)
        if s is not None and (best is None or s > best_snr):
            best, best_snr = ap, s
    if current is not None and current in snr and best != current:
        if best_snr - snr[current] <= hysteresis:
            return current
    return best


class AccessManager(Atomic):
    """ACC: connects the UE when a service needs it and hands over to the
    AP with the best SNR."""

    def __init__(self, name, aps, hysteresis: float = 0.0):
        super().__init__(name)
        self.aps = list(aps)
        self.hysteresis = hysteresis
        self.i_srv = self.add_in_port("in_srv")
        self.i_snr = self.add_in_port("in_snr")
        self.o_srv = self.add_out_port("out_srv")
        self.o_connect = self.add_out_port("out_connect")
        self.o_connected = self.add_out_port("out_connected")
        self.o_disconnect = self.add_out_port("out_disconnect")
        self.phase = ACC_OFF
        self.snr: dict[str, float] = {}
        self.srvs: set[str] = set()
        self.ap: str | None = None
        self.target: str | None = None
        self.handovers = 0

    def output(self):
        ph = self.phase
        if ph == CONNECT:
            return ((self.o_connect, self.target), (self.o_connected, self.target),
                    (self.o_srv, True))
        if ph == CHANGE:
            return ((self.o_disconnect, self.ap), (self.o_connect, self.target),
                    (self.o_connected, self.target), (self.o_srv, True))
        if ph == DISCONNECT:
            return ((self.o_disconnect, self.ap), (self.o_connected, None), (self.o_srv, False))
        return ((self.o_srv, self.ap is not None),)

    def deltint(self):
        ph = self.phase
        if ph in (CONNECT, CHANGE):
            if ph == CHANGE:
                self.handovers += 1
            self.phase, self.ap = ON, self.target
        elif ph == DISCONNECT:
            self.phase, self.ap = ACC_OFF, None
        self.target = None
        self.sigma = INFINITY

    def deltext(self, e, bag):
        self.sigma -= e
        relay = False
        for ap, snr in bag.get(self.i_snr, ()):
            self.snr[ap] = snr
        for app, active in bag.get(self.i_srv, ()):
            (self.srvs.add if active else self.srvs.discard)(app)
            relay = True
        ph = self.phase
        if ph == ACC_OFF:
            if self.srvs and self.snr:
                self.phase, self.target, self.sigma = CONNECT, best_ap(self.snr, self.aps), 0.0
            elif relay:
                self.sigma = 0.0
        elif ph == ON:
            best = best_ap(self.snr, self.aps, self.ap, self.hysteresis)
            if not self.srvs:
                self.phase, self.sigma = DISCONNECT, 0.0
            elif best != self.ap:
                self.phase, self.target, self.sigma = CHANGE, best, 0.0
            elif relay:
                self.sigma = 0.0
        # connect/change/disconnect are already due at this instant


class Trajectory:
    """Piecewise-linear path through (t, x, y) samples, clamped at the ends."""

    def __init__(self, times, xs, ys):
        if not times:
            raise ValueError("empty trajectory")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trajectory times must be strictly increasing")
        self.times = list(times)
        self.xs = list(xs)
        self.ys = list(ys)

    @classmethod
    def static(cls, xy):
        return cls([0.0], [xy[0]], [xy[1]])

    def position(self, t: float) -> tuple[float, float]:
        ts = self.times
        if t <= ts[0]:
            return self.xs[0], self.ys[0]
        if t >= ts[-1]:
            return self.xs[-1], self.ys[-1]
        i = bisect.bisect_right(ts, t)
        t0, t1 = ts[i - 1], ts[i]
        a = (t - t0) / (t1 - t0)
        return (self.xs[i - 1] + a * (self.xs[i] - self.xs[i - 1]),
                self.ys[i - 1] + a * (self.ys[i] - self.ys[i - 1]))


class Mobility(Atomic):
    """MOB: reports the UE location at every trajectory sample."""

    def __init__(self, name, trajectory: Trajectory, horizon: float = INFINITY):
        super().__init__(name)
        self.trajectory = trajectory
        self.o_location = self.add_out_port("out_location")
        self.horizon = horizon
        self.k = 0
        self.sigma = trajectory.times[0] if len(trajectory.times) > 1 else INFINITY

    def position(self, t):
        return self.trajectory.position(t)

    def output(self):
        return ((self.o_location, self.trajectory.position(self.now)),)

    def deltint(self):
        ts = self.trajectory.times
        self.k += 1
        if self.k < len(ts) and ts[self.k] <= self.horizon:
            self.sigma = ts[self.k] - ts[self.k - 1]
        else:
            self.sigma = INFINITY


class UEAntenna(Outbox):
    """ANT of a UE: radio codec, SNR estimation from PSS and share tracking."""

    def __init__(self, name, ue_id: str, config: UEAntennaConfig | None = None, tables=None):
        super().__init__(name)
        self.ue_id = ue_id
        self.config = config or UEAntennaConfig()
        self.ul_min = (tables or default_tables())[UL].min
        self.i_pbch = self.add_in_port("in_pbch")
        self.i_pdcch = self.add_in_port("in_pdcch")
        self.i_pdsch = self.add_in_port("in_pdsch")
        self.i_connect = self.add_in_port("in_connect")
        self.i_connected = self.add_in_port("in_connected")
        self.i_disconnect = self.add_in_port("in_disconnect")
        self.i_srv = self.add_in_port("in_srv")
        self.o_pucch = self.add_out_port("out_pucch")
        self.o_pusch = self.add_out_port("out_pusch")
        self.o_snr = self.add_out_port("out_snr")
        self.o_ack = self.add_out_port("out_ack")
        self.ap: str | None = None
        self.share: ShareAssignment | None = None
        self.snr: dict[str, float] = {}
        self.buffer: deque[ServiceMessage] = deque()

    @property
    def tx_power(self):
        return self.config.power + self.config.gain

    def _uplink(self, payload, share=None):
        if share is not None:
            bw, eff = share.bw, share.eff_ul
        else:
            bw, eff = self.config.bandwidth, self.ul_min
        frame = UplinkFrame(payload, self.snr.get(self.ap))
        return PhysicalMessage(self.ue_id, self.ap, frame, bw, self.tx_power, eff, frame.size)

    def _flush(self):
        while self.buffer and self.ap is not None:
            msg = self.buffer[0]
            if msg.size > 0 and self.share is None:
                break
            self.buffer.popleft()
            self.pending.append((self.o_pusch, self._uplink(msg, self.share)))

    def deltext(self, e, bag):
        pend = self.pending
        for m in bag.get(self.i_pbch, ()):
            if isinstance(m.data, PSS):
                snr = to_db(snr_from_message(m, self.config.noise_temp))
                self.snr[m.src] = snr
                pend.append((self.o_snr, (m.src, snr)))
        for ap in bag.get(self.i_disconnect, ()):
            pend.append((self.o_pucch, self._uplink(ConnectRequest(self.ue_id, False))))
            self.share = None
        for ap in bag.get(self.i_connected, ()):
            self.ap = ap
        for ap in bag.get(self.i_connect, ()):
            pend.append((self.o_pucch, PhysicalMessage(
                self.ue_id, ap, UplinkFrame(ConnectRequest(self.ue_id, True), self.snr.get(ap)),
                self.config.bandwidth, self.tx_power, self.ul_min, 0.0)))
        for m in bag.get(self.i_pdcch, ()):
            if m.src == self.ap and isinstance(m.data, ShareAssignment):
                self.share = m.data
        for m in bag.get(self.i_pdsch, ()):
            pend.append((self.o_ack, m.data))
        self.buffer.extend(bag.get(self.i_srv, ()))
        self._flush()


class UserEquipment(Coupled):
    def __init__(self, ue_id: str, aps, services, trajectory: Trajectory,
                 antenna: UEAntennaConfig | None = None, recorder=None,
                 hysteresis: float = 0.0, horizon: float = INFINITY, tables=None):
        super().__init__(ue_id)
        self.ue_id = ue_id
        self.acc = AccessManager("ACC", aps, hysteresis)
        self.mob = Mobility("MOB", trajectory, horizon)
        self.ant = UEAntenna("ANT", ue_id, antenna, tables)
        for m in (self.acc, self.mob, self.ant):
            self.add(m)
        for n in ("in_pbch", "in_pdcch", "in_pdsch"):
            self.couple(self.add_in_port(n), self.ant.in_ports[n])
        for n in ("out_pucch", "out_pusch"):
            self.couple(self.ant.out_ports[n], self.add_out_port(n))
        c = self.couple
        c(self.ant.o_snr, self.acc.i_snr)
        c(self.acc.o_connect, self.ant.i_connect)
        c(self.acc.o_connected, self.ant.i_connected)
        c(self.acc.o_disconnect, self.ant.i_disconnect)
        self.services = []
        for cfg in services:
            srv = Service(ue_id, cfg, recorder)
            self.add(srv)
            self.services.append(srv)
            c(srv.out_ports["out_st"], self.acc.i_srv)
            for n in ("out_start", "out_stop", "out_data"):
                c(srv.out_ports[n], self.ant.i_srv)
            c(self.acc.o_srv, srv.i_conn)
            c(self.ant.o_ack, srv.i_ack)

    def position(self, t):
        return self.mob.position(t)
