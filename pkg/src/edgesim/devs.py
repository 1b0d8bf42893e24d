"""Parallel DEVS kernel.

Atomic models implement ``ta``, ``deltint``, ``deltext``, ``deltcon`` and
``output``. Coupled models hold components and couplings. :class:`Simulator`
flattens the hierarchy into atomic-to-atomic routes at construction and runs
the classic two-phase PDEVS step: collect every imminent output, then apply
all transitions.

Within a bag, values arriving on the same port are ordered by
(source model path, source port name, emission index), which makes every run
reproducible.
"""
from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

log = logging.getLogger(__name__)

INFINITY = math.inf

Bag = dict  # Port -> list of values


class ModelError(RuntimeError):
    """A model raised or misbehaved during a transition."""

    def __init__(self, path: str, clock: float, message: str):
        super().__init__(f"{path} at t={clock!r}: {message}")
        self.path = path
        self.clock = clock


class Port:
    __slots__ = ("name", "owner", "is_input", "links")

    def __init__(self, name: str, owner: "Model", is_input: bool):
        self.name = name
        self.owner = owner
        self.is_input = is_input
        # outgoing couplings: (destination port, filter or None)
        self.links: list[tuple[Port, tuple | None]] = []

    @property
    def direction(self) -> str:
        return "input" if self.is_input else "output"

    def __repr__(self):
        return f"<Port {self.owner.path}.{self.name} ({self.direction})>"


class Model:
    def __init__(self, name: str):
        if not name or "/" in name:
            raise ValueError(f"invalid model name {name!r}")
        self.name = name
        self.parent: Coupled | None = None
        self.in_ports: dict[str, Port] = {}
        self.out_ports: dict[str, Port] = {}

    @property
    def path(self) -> str:
        if self.parent is None:
            return self.name
        return f"{self.parent.path}/{self.name}"

    def add_in_port(self, name: str) -> Port:
        return self._add_port(name, True, self.in_ports)

    def add_out_port(self, name: str) -> Port:
        return self._add_port(name, False, self.out_ports)

    def _add_port(self, name, is_input, table):
        if name in table:
            raise ValueError(f"{self.path}: duplicate port {name!r}")
        port = Port(name, self, is_input)
        table[name] = port
        return port

    def __repr__(self):
        return f"<{type(self).__name__} {self.path}>"


class Atomic(Model):
    """Base class for atomic models.

    Subclasses usually keep their remaining time in ``self.sigma`` and rely on
    the default :meth:`ta`. ``self.now`` holds the simulation time of the
    transition being executed.
    """

    sigma: float = INFINITY

    def __init__(self, name: str):
        super().__init__(name)
        self.now = 0.0
        self._tl = 0.0
        self._tn = INFINITY
        self._ver = 0
        self._rank = 0

    def initialize(self) -> None:
        pass

    def ta(self) -> float:
        return self.sigma

    def deltint(self) -> None:
        raise NotImplementedError

    def deltext(self, e: float, bag: Bag) -> None:
        raise NotImplementedError

    def deltcon(self, bag: Bag) -> None:
        # Typical confluent behavior: internal first, then external with e = 0.
        self.deltint()
        self.deltext(0.0, bag)

    def output(self) -> Iterable[tuple[Port, Any]]:
        return ()

    @property
    def time_last(self) -> float:
        return self._tl

    @property
    def time_next(self) -> float:
        return self._tn


class Coupled(Model):
    def __init__(self, name: str):
        super().__init__(name)
        self.components: dict[str, Model] = {}

    def add(self, child: Model) -> str:
        """Register ``child`` as a component and return its model path."""
        if child.parent is not None:
            raise ValueError(f"{child.name!r} already belongs to {child.parent.path}")
        if child.name in self.components:
            raise ValueError(f"{self.path}: duplicate component name {child.name!r}")
        self.components[child.name] = child
        child.parent = self
        return child.path

    def couple(self, src: Port, dst: Port, where: tuple[str, Any] | None = None) -> None:
        """Add an EIC, IC or EOC coupling from ``src`` to ``dst``.

        ``where`` is an optional ``(attribute, value)`` filter: only payloads
        whose attribute equals ``value`` travel along this coupling.
        """
        s_own, d_own = src.owner, dst.owner
        if s_own is self and src.is_input:
            ok = d_own.parent is self and dst.is_input  # EIC
        elif s_own.parent is self and not src.is_input:
            if d_own is self:
                ok = not dst.is_input  # EOC
            else:
                ok = d_own.parent is self and dst.is_input  # IC
                if ok and d_own is s_own:
                    raise ValueError(f"{self.path}: IC self-loop on {s_own.name!r}")
        else:
            ok = False
        if not ok:
            raise ValueError(f"{self.path}: invalid coupling {src!r} -> {dst!r}")
        src.links.append((dst, where))

    def atomics(self) -> list[Atomic]:
        out = []
        for child in self.components.values():
            if isinstance(child, Coupled):
                out.extend(child.atomics())
            else:
                out.append(child)
        return out

    def find(self, path: str) -> Model:
        """Look up a descendant by a path relative to this model."""
        node: Model = self
        for part in path.split("/"):
            node = node.components[part]  # type: ignore[attr-defined]
        return node


@dataclass
class EventRecord:
    time: float
    path: str
    kind: str  # "out", "int", "ext" or "con"
    port: str
    payload: str

    def to_json(self) -> str:
        return json.dumps(
            {"time": self.time, "model": self.path, "kind": self.kind,
             "port": self.port, "payload": self.payload},
            separators=(",", ":"))


@dataclass
class SimulationReport:
    clock: float
    transitions: int
    outputs: int
    steps: int
    quiescent: bool
    counts: dict = field(default_factory=dict)


def _summary(value: Any, limit: int = 120) -> str:
    text = str(value)
    return text if len(text) <= limit else text[: limit - 3] + "..."


class _Routes:
    """Flattened destinations of one atomic output port."""

    __slots__ = ("plain", "keyed", "other")

    def __init__(self):
        self.plain: list[tuple[Atomic, Port]] = []
        self.keyed: dict[str, dict[Any, list[tuple[Atomic, Port]]]] = {}
        self.other: list[tuple[Atomic, Port, tuple]] = []

    def add(self, dst: Port, filters: tuple) -> None:
        target = (dst.owner, dst)
        if not filters:
            self.plain.append(target)
        elif len(filters) == 1:
            attr, value = filters[0]
            self.keyed.setdefault(attr, {}).setdefault(value, []).append(target)
        else:
            self.other.append((dst.owner, dst, filters))


def _resolve(port: Port, filters: tuple, acc: _Routes, seen: set) -> None:
    for dst, where in port.links:
        f = filters + (where,) if where is not None else filters
        if isinstance(dst.owner, Atomic):
            if not dst.is_input:
                raise ValueError(f"coupling ends on atomic output {dst!r}")
            acc.add(dst, f)
        else:
            key = (id(dst), f)
            if key in seen:
                raise ValueError(f"coupling cycle through {dst!r}")
            _resolve(dst, f, acc, seen | {key})


class Simulator:
    """Runs a coupled model under Parallel DEVS semantics.

    ``log_sink`` receives one JSON object per line for every output and
    transition when given; ``record`` keeps :class:`EventRecord` objects in
    memory (``self.records``) instead.
    """

    def __init__(self, root: Model, log_sink=None, record: bool = False):
        self.root = root
        self.clock = 0.0
        self._sink = log_sink
        self.records: list[EventRecord] | None = [] if record else None
        self._logging = log_sink is not None or record
        self.transitions = 0
        self.outputs = 0
        self.steps = 0
        self.counts = {"int": 0, "ext": 0, "con": 0}

        if isinstance(root, Coupled):
            atomics = root.atomics()
        else:
            atomics = [root]
        atomics.sort(key=lambda m: m.path)
        self.atomics = atomics
        self._routes: dict[Port, _Routes] = {}
        for rank, m in enumerate(atomics):
            m._rank = rank
            for port in m.out_ports.values():
                acc = _Routes()
                _resolve(port, (), acc, set())
                self._routes[port] = acc

        self._heap: list = []
        for m in atomics:
            m.now = 0.0
            try:
                m.initialize()
                self._schedule(m, 0.0)
            except ModelError:
                raise
            except Exception as exc:
                raise ModelError(m.path, 0.0, f"{type(exc).__name__}: {exc}") from exc

    # scheduling -----------------------------------------------------------
    def _schedule(self, m: Atomic, t: float) -> None:
        sigma = m.ta()
        if sigma < 0 or sigma != sigma:
            raise ModelError(m.path, t, f"invalid time advance {sigma!r}")
        m._tl = t
        tn = t + sigma
        m._tn = tn
        m._ver += 1
        if tn != INFINITY:
            heapq.heappush(self._heap, (tn, m._rank, m._ver, m))

    def _clean(self) -> None:
        heap = self._heap
        while heap:
            tn, _, ver, m = heap[0]
            if ver == m._ver:
                return
            heapq.heappop(heap)

    def advance(self) -> tuple[float, list[Atomic]]:
        """Return the next event time and the imminent models, without executing."""
        self._clean()
        if not self._heap:
            return INFINITY, []
        t = self._heap[0][0]
        return t, [m for m in self.atomics if m._tn == t]

    def next_time(self) -> float:
        self._clean()
        return self._heap[0][0] if self._heap else INFINITY

    # stepping -------------------------------------------------------------
    def step(self) -> list[EventRecord]:
        """Execute one simulation step and return its event records."""
        keep = self.records
        self.records = []
        was_logging = self._logging
        self._logging = True
        try:
            self._step()
            return self.records
        finally:
            if keep is not None:
                keep.extend(self.records)
            self.records = keep
            self._logging = was_logging

    def _emit_log(self, rec: EventRecord) -> None:
        if self.records is not None:
            self.records.append(rec)
        if self._sink is not None:
            self._sink.write(rec.to_json() + "\n")

    def _step(self) -> None:
        heap = self._heap
        self._clean()
        if not heap:
            return
        t = heap[0][0]
        if t < self.clock:
            raise ModelError(heap[0][3].path, t, "event time moved backwards")
        self.clock = t
        logging_on = self._logging

        imminent = []
        while heap and heap[0][0] == t:
            _, _, ver, m = heapq.heappop(heap)
            if ver == m._ver:
                imminent.append(m)

        inbox: dict[Atomic, dict] = {}
        routes = self._routes
        current = None
        try:
            for m in imminent:
                current = m
                m.now = t
                out = m.output()
                if not out:
                    continue
                if len(out) > 1:
                    out = sorted(out, key=lambda pv: pv[0].name)
                for port, value in out:
                    self.outputs += 1
                    if logging_on:
                        self._emit_log(EventRecord(t, m.path, "out", port.name, _summary(value)))
                    r = routes[port]
                    for dm, dp in r.plain:
                        bag = inbox.get(dm)
                        if bag is None:
                            inbox[dm] = {dp: [value]}
                        elif dp in bag:
                            bag[dp].append(value)
                        else:
                            bag[dp] = [value]
                    if r.keyed:
                        for attr, table in r.keyed.items():
                            targets = table.get(getattr(value, attr, None))
                            if targets:
                                for dm, dp in targets:
                                    bag = inbox.get(dm)
                                    if bag is None:
                                        inbox[dm] = {dp: [value]}
                                    elif dp in bag:
                                        bag[dp].append(value)
                                    else:
                                        bag[dp] = [value]
                    for dm, dp, filters in r.other:
                        if all(getattr(value, a, None) == v for a, v in filters):
                            bag = inbox.setdefault(dm, {})
                            bag.setdefault(dp, []).append(value)

            counts = self.counts
            for m in imminent:
                current = m
                bag = inbox.pop(m, None)
                if bag is None:
                    m.deltint()
                    kind = "int"
                else:
                    m.deltcon(bag)
                    kind = "con"
                counts[kind] += 1
                if logging_on:
                    self._log_transition(t, m, kind, bag)
                self._schedule(m, t)
            for m, bag in inbox.items():
                current = m
                m.now = t
                m.deltext(t - m._tl, bag)
                counts["ext"] += 1
                if logging_on:
                    self._log_transition(t, m, "ext", bag)
                self._schedule(m, t)
        except ModelError:
            raise
        except Exception as exc:
            path = current.path if current is not None else "?"
            raise ModelError(path, t, f"{type(exc).__name__}: {exc}") from exc
        self.transitions += len(imminent) + len(inbox)
        self.steps += 1

    def _log_transition(self, t, m, kind, bag):
        if bag:
            ports = ",".join(sorted(p.name for p in bag))
            payload = _summary({p.name: [str(v) for v in vals] for p, vals in bag.items()})
        else:
            ports, payload = "", ""
        self._emit_log(EventRecord(t, m.path, kind, ports, payload))

    def run_until(self, t_end: float) -> SimulationReport:
        """Advance until the next event would happen after ``t_end``."""
        if t_end < self.clock:
            raise ValueError(f"t_end={t_end} is before the current clock {self.clock}")
        step = self._step
        while True:
            self._clean()
            if not self._heap or self._heap[0][0] > t_end:
                break
            step()
        quiescent = self.next_time() == INFINITY
        return SimulationReport(
            clock=self.clock, transitions=self.transitions, outputs=self.outputs,
            steps=self.steps, quiescent=quiescent, counts=dict(self.counts))

    def run(self) -> SimulationReport:
        return self.run_until(INFINITY)


def register_model(parent: Coupled, child: Model) -> str:
    return parent.add(child)


class Outbox(Atomic):
    """Atomic helper for zero-time forwarding models.

    Subclasses append ``(port, value)`` pairs to ``self.pending`` in
    :meth:`deltext`; they are emitted immediately and cleared afterwards.
    """

    def __init__(self, name: str):
        super().__init__(name)
        self.pending: list[tuple[Port, Any]] = []

    def ta(self) -> float:
        return 0.0 if self.pending else INFINITY

    def output(self):
        return self.pending

    def deltint(self) -> None:
        self.pending = []

    def deltcon(self, bag: Bag) -> None:
        self.pending = []
        self.deltext(0.0, bag)

