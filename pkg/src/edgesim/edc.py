"""Edge data center: processing units, service queues, resource manager and
the crosshaul interface."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

from .devs import INFINITY, Atomic, Coupled, Outbox
from .messages import DATA, START, STOP, ServiceAck, ServiceMessage
from .phys import XH_BANDWIDTH, XH_EFFICIENCY, PhysicalMessage

log = logging.getLogger(__name__)

OFF = "off"
TO_ON = "to_on"
ON = "on"
TO_OFF = "to_off"
BUSY = "busy"

EMPTIEST = "emptiest"
FULLEST = "fullest"
POLICIES = (EMPTIEST, FULLEST)

EPS = 1e-9  # slack for summed resource fractions


class CapacityError(RuntimeError):
    pass


# -- power models ------------------------------------------------------------

class PowerModel(Protocol):
    def __call__(self, u: float, capacity: float, phase: str) -> float: ...


@dataclass(frozen=True)
class LinearPowerModel:
    """Idle power plus a term proportional to utilization.

    Transitional phases (``to_on``/``to_off``) draw idle power.
    """

    idle: float = 50.0
    peak: float = 250.0

    def __call__(self, u, capacity, phase):
        if phase == OFF:
            return 0.0
        return self.idle + (self.peak - self.idle) * (u / capacity)


@dataclass(frozen=True)
class TablePowerModel:
    """Piecewise-linear power curve over utilization fraction."""

    points: tuple = ((0.0, 50.0), (1.0, 250.0))

    def __call__(self, u, capacity, phase):
        if phase == OFF:
            return 0.0
        x = u / capacity
        pts = sorted(self.points)
        if x <= pts[0][0]:
            return pts[0][1]
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x <= x1:
                return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        return pts[-1][1]


def power_draw(model: PowerModel, u: float, capacity: float, phase: str) -> float:
    if not 0 <= u <= capacity + EPS:
        raise ValueError(f"utilization {u} outside [0, {capacity}]")
    return model(u, capacity, phase)


def make_power_model(spec: dict | None) -> PowerModel:
    spec = dict(spec or {})
    kind = spec.pop("model", "linear")
    if kind == "linear":
        return LinearPowerModel(**spec)
    if kind == "table":
        return TablePowerModel(tuple(tuple(p) for p in spec["points"]))
    raise ValueError(f"unknown power model {kind!r}")


# -- status records ------------------------------------------------------------

@dataclass
class PUConfig:
    t_pw: float = 1.0
    t_srv: float = 0.2
    t_data: float = 0.0
    capacity: float = 1.0
    power_model: PowerModel = field(default_factory=LinearPowerModel)

    def __post_init__(self):
        if min(self.t_pw, self.t_srv, self.t_data) < 0:
            raise ValueError("PU times must be non-negative")
        if self.capacity <= 0:
            raise ValueError("PU capacity must be positive")


@dataclass(frozen=True)
class PUStatus:
    index: int
    phase: str
    srv: frozenset
    pw: float
    u: float
    capacity: float


@dataclass(frozen=True)
class EDCStatus:
    edc: str
    srv: frozenset
    pw: float
    u: float
    capacity: float
    size: float = 0.0

    def key(self):
        return (round(self.u, 9), self.capacity, len(self.srv))


def aggregate_status(edc: str, statuses) -> EDCStatus:
    """Union of hosted services and sums of power, usage and capacity."""
    srv = frozenset().union(*(s.srv for s in statuses))
    return EDCStatus(edc, srv, sum(s.pw for s in statuses),
                     sum(s.u for s in statuses), sum(s.capacity for s in statuses))


class PowerMeter:
    """Collects the per-EDC power step function (instrumentation only)."""

    def __init__(self, edc: str, n_pu: int, recorder=None):
        self.edc = edc
        self.draw = [0.0] * n_pu
        self.total = 0.0
        self.recorder = recorder

    def update(self, index: int, watts: float, t: float) -> None:
        if self.draw[index] == watts:
            return
        self.draw[index] = watts
        self.total = sum(self.draw)
        if self.recorder is not None:
            self.recorder.power(t, self.edc, self.total)


# -- dispatching and hot standby ------------------------------------------------

def dispatch(policy: str, used, capacity, demand: float, powered=None) -> int | None:
    """Pick the PU for a new service.

    ``used`` and ``capacity`` are per-PU sequences. EMPTIEST minimizes and
    FULLEST maximizes the utilization ratio among PUs with room for
    ``demand``. Ties go to a powered PU (when ``powered`` is given), then
    to the lowest index. Returns None when nothing fits.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown dispatching policy {policy!r}")
    sign = -1.0 if policy == FULLEST else 1.0
    best, best_key = None, None
    for i, (u, cap) in enumerate(zip(used, capacity)):
        if u + demand > cap + EPS:
            continue
        off = 0 if powered is None or powered[i] else 1
        key = (sign * (u / cap), off)
        if best is None or key < best_key:
            best, best_key = i, key
    return best


def hot_standby_control(phases, loaded, n_stby: int) -> list[bool]:
    """Desired power state per PU.

    Loaded PUs (hosting or about to host a service) stay on. Among idle PUs,
    ``min(n_stby, idle)`` are kept on, preferring ones already powered and
    then the lowest index; the rest are switched off.
    """
    want = [bool(x) for x in loaded]
    idle = [i for i, x in enumerate(loaded) if not x]
    powered = [i for i in idle if phases[i] in (ON, TO_ON, BUSY)]
    unpowered = [i for i in idle if phases[i] not in (ON, TO_ON, BUSY)]
    for i in (powered + unpowered)[:max(0, n_stby)]:
        want[i] = True
    return want


# -- atomic models ----------------------------------------------------------------

class ProcessingUnit(Atomic):
    """A PU with power phases, hosted services and one outstanding ack.

    Status reports carry the phase the PU is entering, so a report sent at
    the end of a power-up already says ``on``.
    """

    def __init__(self, name, index: int, config: PUConfig, edc_id: str,
                 powered: bool = False, meter: PowerMeter | None = None):
        super().__init__(name)
        self.index = index
        self.config = config
        self.edc_id = edc_id
        self.meter = meter
        self.i_power = self.add_in_port("in_power")
        self.i_start = self.add_in_port("in_start")
        self.i_data = self.add_in_port("in_data")
        self.i_stop = self.add_in_port("in_stop")
        self.o_status = self.add_out_port("out_status")
        self.o_ack = self.add_out_port("out_ack")
        self.phase = ON if powered else OFF
        self.resume = self.phase  # phase to return to after BUSY
        self.srv: dict[tuple[str, str], float] = {}
        self.ack: ServiceAck | None = None
        self.sigma = INFINITY
        self.rejections = 0
        self.overflows = 0  # starts that would have exceeded capacity
        self.max_used = 0.0

    @property
    def used(self) -> float:
        return sum(self.srv.values())

    def _pw(self, phase) -> float:
        if phase == BUSY:
            phase = self.resume
        return self.config.power_model(self.used, self.config.capacity, phase)

    @property
    def pw(self) -> float:
        return self._pw(self.phase)

    def _next_phase(self):
        if self.phase == TO_ON:
            return ON
        if self.phase == TO_OFF:
            return OFF
        if self.phase == BUSY:
            return self.resume
        return self.phase

    def status(self, phase=None) -> PUStatus:
        phase = phase or self.phase
        return PUStatus(self.index, phase, frozenset(self.srv), self._pw(phase),
                        self.used, self.config.capacity)

    def initialize(self):
        self._meter()

    def _meter(self):
        if self.meter is not None:
            self.meter.update(self.index, self.pw, self.now)

    def output(self):
        out = [(self.o_status, self.status(self._next_phase()))]
        if self.ack is not None:
            out.append((self.o_ack, self.ack))
        return out

    def deltint(self):
        self.phase = self._next_phase()
        self.ack = None
        self.sigma = INFINITY
        self._meter()

    def deltext(self, e, bag):
        self.sigma -= e
        for kind, port in ((STOP, self.i_stop), (START, self.i_start), (DATA, self.i_data)):
            for msg in bag.get(port, ()):
                self._request(kind, msg)
        for on in bag.get(self.i_power, ()):
            if on and self.phase == OFF:
                self.phase, self.sigma = TO_ON, self.config.t_pw
            elif not on and self.phase == ON and not self.srv:
                self.phase, self.sigma = TO_OFF, self.config.t_pw
            else:
                # the RM re-evaluates on the next status report
                log.debug("%s: ignored power=%s in phase %s", self.path, on, self.phase)
                if self.phase == ON:
                    # re-announce so the queue does not wait on a stale command
                    self.resume, self.phase, self.sigma = ON, BUSY, 0.0
        if self.used > self.config.capacity + EPS:
            raise CapacityError(f"{self.path}: {self.used} units in use exceed {self.config.capacity}")
        self._meter()

    def _request(self, kind, msg: ServiceMessage):
        cfg = self.config
        if self.ack is not None:
            raise RuntimeError(f"{self.path}: request {msg} while another is in progress")
        if self.phase != ON:
            self.rejections += 1
            log.warning("%s: %s request while %s", self.path, kind, self.phase)
            self.ack = ServiceAck(msg, None)
            if self.phase == OFF:
                self.resume, self.phase, self.sigma = OFF, BUSY, 0.0
            # during a power transition the ack leaves when the transition ends
            return
        key = (msg.ue, msg.app)
        if kind == START:
            used = self.used
            if used + msg.u > cfg.capacity + EPS:
                self.rejections += 1
                self.overflows += 1
                log.warning("%s: start of %s needs %g with %g/%g in use", self.path, key,
                            msg.u, used, cfg.capacity)
                self.ack = ServiceAck(msg, None)
                self.resume, self.phase, self.sigma = ON, BUSY, cfg.t_srv
                return
            self.srv[key] = msg.u
            self.max_used = max(self.max_used, used + msg.u)
            delay = cfg.t_srv
        elif kind == STOP:
            self.srv.pop(key, None)
            delay = cfg.t_srv
        else:
            delay = cfg.t_data
        self.ack = ServiceAck(msg, self.edc_id)
        self.resume, self.phase, self.sigma = ON, BUSY, delay


class ServiceQueue(Atomic):
    """Forwards requests to its PU one at a time, stop before start before data.

    It also listens to the PU status and power commands so that nothing is
    forwarded while the PU is not powered on.
    """

    def __init__(self, name, powered: bool = False):
        super().__init__(name)
        self.i_start = self.add_in_port("in_start")
        self.i_data = self.add_in_port("in_data")
        self.i_stop = self.add_in_port("in_stop")
        self.i_ack = self.add_in_port("in_ack")
        self.i_status = self.add_in_port("in_status")
        self.i_power = self.add_in_port("in_power")
        self.o_start = self.add_out_port("out_start")
        self.o_data = self.add_out_port("out_data")
        self.o_stop = self.add_out_port("out_stop")
        self.busy = False
        self.ready = powered
        self.stop: deque = deque()
        self.start: deque = deque()
        self.data: deque = deque()

    def __len__(self):
        return len(self.stop) + len(self.start) + len(self.data)

    def ta(self):
        if self.busy or not self.ready:
            return INFINITY
        return 0.0 if (self.stop or self.start or self.data) else INFINITY

    def output(self):
        if self.stop:
            return ((self.o_stop, self.stop[0]),)
        if self.start:
            return ((self.o_start, self.start[0]),)
        return ((self.o_data, self.data[0]),)

    def deltint(self):
        if self.stop:
            self.stop.popleft()
        elif self.start:
            self.start.popleft()
        else:
            self.data.popleft()
        self.busy = True

    def deltext(self, e, bag):
        if self.i_ack in bag:
            self.busy = False
        for st in bag.get(self.i_status, ()):
            self.ready = st.phase == ON
        if self.i_power in bag:
            # hold everything until the PU reports it is on again
            self.ready = False
        self.stop.extend(bag.get(self.i_stop, ()))
        self.start.extend(bag.get(self.i_start, ()))
        self.data.extend(bag.get(self.i_data, ()))


class ResourceManager(Atomic):
    """RM: dispatches new services, drives PU power states and aggregates
    PU reports into the EDC status sent to the SDNC."""

    def __init__(self, name, edc_id: str, n_pu: int, config: PUConfig, policy: str,
                 n_stby: int, initial_phases):
        super().__init__(name)
        if policy not in POLICIES:
            raise ValueError(f"unknown dispatching policy {policy!r}")
        if not 0 <= n_stby <= n_pu:
            raise ValueError(f"n_stby={n_stby} outside [0, {n_pu}]")
        self.edc_id = edc_id
        self.n_pu = n_pu
        self.config = config
        self.policy = policy
        self.n_stby = n_stby
        self.i_srv = self.add_in_port("in_srv")
        self.i_status = self.add_in_port("in_status")
        self.i_ack = self.add_in_port("in_ack")
        self.o_ack = self.add_out_port("out_ack")
        self.o_status = self.add_out_port("out_status")
        self.o_start = [self.add_out_port(f"out_start({i})") for i in range(n_pu)]
        self.o_data = [self.add_out_port(f"out_data({i})") for i in range(n_pu)]
        self.o_stop = [self.add_out_port(f"out_stop({i})") for i in range(n_pu)]
        self.o_power = [self.add_out_port(f"out_power({i})") for i in range(n_pu)]
        self.phases = list(initial_phases)
        self.commanded = [False] * n_pu  # power command awaiting completion
        self.reserved = [0.0] * n_pu
        self.hosting: dict[tuple[str, str], tuple[int, float]] = {}
        self.statuses = [
            PUStatus(i, ph, frozenset(), config.power_model(0.0, config.capacity, ph),
                     0.0, config.capacity)
            for i, ph in enumerate(self.phases)]
        self.edc_status = aggregate_status(edc_id, self.statuses)
        self.pending: list = [(self.o_status, self.edc_status)]
        self.rejected = 0
        self.sigma = 0.0

    def ta(self):
        return 0.0 if self.pending else INFINITY

    def output(self):
        return self.pending

    def deltint(self):
        self.pending = []

    def deltcon(self, bag):
        self.pending = []
        self.deltext(0.0, bag)

    def deltext(self, e, bag):
        out = self.pending
        sts = bag.get(self.i_status)
        if sts:
            for st in sts:
                self.statuses[st.index] = st
                self.phases[st.index] = st.phase
                self.commanded[st.index] = False
            new = aggregate_status(self.edc_id, self.statuses)
            if new.key() != self.edc_status.key():
                out.append((self.o_status, new))
            self.edc_status = new
        for ack in bag.get(self.i_ack, ()):
            req = ack.request
            if req.kind == STOP or (req.kind == START and not ack.ok):
                self._release((req.ue, req.app))
            out.append((self.o_ack, ack))
        for msg in bag.get(self.i_srv, ()):
            self._route(msg, out)
        self._power_control(out)

    def _release(self, key):
        entry = self.hosting.pop(key, None)
        if entry is not None:
            i, u = entry
            self.reserved[i] = max(0.0, self.reserved[i] - u)

    def _route(self, msg: ServiceMessage, out):
        key = (msg.ue, msg.app)
        i, _ = self.hosting.get(key, (None, 0.0))
        if msg.kind == START:
            if i is not None:
                out.append((self.o_ack, ServiceAck(msg, self.edc_id)))
                return
            caps = [s.capacity for s in self.statuses]
            powered = [ph in (ON, TO_ON, BUSY) for ph in self.phases]
            i = dispatch(self.policy, self.reserved, caps, msg.u, powered)
            if i is None:
                self.rejected += 1
                out.append((self.o_ack, ServiceAck(msg, None)))
                return
            self.reserved[i] += msg.u
            self.hosting[key] = (i, msg.u)
            out.append((self.o_start[i], msg))
        elif i is None:
            log.debug("%s: %s for unknown service %s", self.path, msg.kind, key)
            out.append((self.o_ack, ServiceAck(msg, self.edc_id)))
        elif msg.kind == STOP:
            out.append((self.o_stop[i], msg))
        else:
            out.append((self.o_data[i], msg))

    def _power_control(self, out):
        loaded = [r > EPS or s.srv for r, s in zip(self.reserved, self.statuses)]
        want = hot_standby_control(self.phases, loaded, self.n_stby)
        for i, on in enumerate(want):
            if self.commanded[i]:
                continue
            ph = self.phases[i]
            if on and ph == OFF:
                out.append((self.o_power[i], True))
                self.commanded[i] = True
                self.phases[i] = TO_ON
            elif not on and ph == ON:
                out.append((self.o_power[i], False))
                self.commanded[i] = True
                self.phases[i] = TO_OFF


class EdgeInterface(Outbox):
    """ITF: decapsulates crosshaul traffic for the RM and encapsulates the
    RM's acknowledgments and status reports."""

    def __init__(self, name, edc_id: str, sdnc_id: str = "SDNC"):
        super().__init__(name)
        self.edc_id = edc_id
        self.sdnc_id = sdnc_id
        self.i_phys = self.add_in_port("in_phys")
        self.i_ack = self.add_in_port("in_ack")
        self.i_status = self.add_in_port("in_status")
        self.o_srv = self.add_out_port("out_srv")
        self.o_ul = self.add_out_port("out_ul")
        self.o_dl = self.add_out_port("out_dl")
        self.via: dict[tuple[str, str], str] = {}  # service -> AP it last came through
        self.dropped = 0

    def encapsulate(self, msg, to: str) -> PhysicalMessage:
        return PhysicalMessage(self.edc_id, to, msg, XH_BANDWIDTH, 0.0, XH_EFFICIENCY, msg.size)

    def decapsulate(self, m: PhysicalMessage):
        if m.to != self.edc_id:
            self.dropped += 1
            log.warning("%s: dropped message addressed to %s", self.path, m.to)
            return None
        return m.data

    def deltext(self, e, bag):
        for m in bag.get(self.i_phys, ()):
            msg = self.decapsulate(m)
            if msg is None:
                continue
            self.via[(msg.ue, msg.app)] = m.src
            self.pending.append((self.o_srv, msg))
        for ack in bag.get(self.i_ack, ()):
            req = ack.request
            ap = self.via.get((req.ue, req.app))
            if ap is None:
                log.warning("%s: no route back to %s", self.path, req.ue)
                continue
            self.pending.append((self.o_dl, self.encapsulate(ack, ap)))
        for st in bag.get(self.i_status, ()):
            self.pending.append((self.o_ul, self.encapsulate(st, self.sdnc_id)))


class EdgeDataCenter(Coupled):
    def __init__(self, edc_id: str, n_pu: int = 10, config: PUConfig | None = None,
                 policy: str = EMPTIEST, n_stby: int = 0, sdnc_id: str = "SDNC",
                 recorder=None):
        super().__init__(edc_id)
        config = config or PUConfig()
        self.edc_id = edc_id
        self.meter = PowerMeter(edc_id, n_pu, recorder)
        # hot-standby PUs start powered so the run begins in steady state
        powered = hot_standby_control([OFF] * n_pu, [False] * n_pu, n_stby)
        self.itf = EdgeInterface("ITF", edc_id, sdnc_id)
        self.rm = ResourceManager("RM", edc_id, n_pu, config, policy, n_stby,
                                  [ON if p else OFF for p in powered])
        self.add(self.itf)
        self.add(self.rm)
        self.i_ul = self.add_in_port("in_ul")
        self.o_ul = self.add_out_port("out_ul")
        self.o_dl = self.add_out_port("out_dl")
        c = self.couple
        c(self.i_ul, self.itf.i_phys)
        c(self.itf.o_srv, self.rm.i_srv)
        c(self.rm.o_ack, self.itf.i_ack)
        c(self.rm.o_status, self.itf.i_status)
        c(self.itf.o_ul, self.o_ul)
        c(self.itf.o_dl, self.o_dl)
        self.pus, self.queues = [], []
        for i in range(n_pu):
            pu = ProcessingUnit(f"PU{i}", i, config, edc_id, powered[i], self.meter)
            q = ServiceQueue(f"Q{i}", powered[i])
            self.add(pu)
            self.add(q)
            self.pus.append(pu)
            self.queues.append(q)
            c(self.rm.o_start[i], q.i_start)
            c(self.rm.o_data[i], q.i_data)
            c(self.rm.o_stop[i], q.i_stop)
            c(self.rm.o_power[i], pu.i_power)
            c(self.rm.o_power[i], q.i_power)
            c(q.o_start, pu.i_start)
            c(q.o_data, pu.i_data)
            c(q.o_stop, pu.i_stop)
            c(pu.o_ack, q.i_ack)
            c(pu.o_ack, self.rm.i_ack)
            c(pu.o_status, q.i_status)
            c(pu.o_status, self.rm.i_status)
