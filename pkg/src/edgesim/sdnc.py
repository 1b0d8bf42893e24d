"""Software-defined network controller: picks the offloading EDC of every AP."""
from __future__ import annotations

import logging
import math

from .devs import INFINITY, Atomic
from .messages import EDCAssignment
from .phys import XH_BANDWIDTH, XH_EFFICIENCY, PhysicalMessage

log = logging.getLogger(__name__)


def assign_edcs(st: dict, positions: dict, aps, edcs, previous: dict | None = None) -> dict:
    """For each AP, the closest EDC whose usage is below its capacity.

    ``st`` maps EDC id to its latest status (anything with ``u`` and
    ``capacity``). ``edcs`` gives the index order used to break distance ties.
    When no EDC is feasible the previous entry (or None) is kept.
    """
    previous = previous or {}
    feasible = [e for e in edcs if e in st and st[e].u < st[e].capacity]
    out = {}
    for ap in aps:
        best, best_d = None, math.inf
        xa, ya = positions[ap]
        for e in feasible:
            xe, ye = positions[e]
            d = math.hypot(xa - xe, ya - ye)
            if d < best_d:
                best, best_d = e, d
        out[ap] = best if best is not None else previous.get(ap)
    return out


class SDNController(Atomic):
    def __init__(self, name: str, aps, edcs, positions: dict):
        super().__init__(name)
        self.aps = list(aps)
        self.edcs = list(edcs)
        self.positions = positions
        self.i_ul = self.add_in_port("in_ul")
        self.o_dl = self.add_out_port("out_dl")
        self.st: dict = {}
        self.assignment: dict = {}
        self.rejected = 0
        self.updates = 0

    def output(self):
        return [(self.o_dl, PhysicalMessage(self.name, ap, EDCAssignment(ap, self.assignment.get(ap)),
                                            XH_BANDWIDTH, 0.0, XH_EFFICIENCY, 0.0))
                for ap in self.aps]

    def deltint(self):
        self.sigma = INFINITY

    def deltext(self, e, bag):
        for m in bag[self.i_ul]:
            status = m.data
            if status.edc not in self.edcs:
                self.rejected += 1
                log.warning("%s: status from unknown EDC %r rejected", self.path, status.edc)
                continue
            self.st[status.edc] = status
            self.updates += 1
        if self.st:
            self.assignment = assign_edcs(self.st, self.positions, self.aps, self.edcs,
                                          self.assignment)
            self.sigma = 0.0
        else:
            self.sigma -= e
