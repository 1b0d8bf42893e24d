"""Access point models and the radio link budget.

The AP is a coupled model of four atomics: access and control (A&C), the
transport router (TRANS), the fiber transceiver (XCVR) and the radio antenna
(ANT).
"""
from __future__ import annotations

import bisect
import csv
import io
import logging
import math
from dataclasses import dataclass
from importlib import resources

from .devs import INFINITY, Atomic, Coupled, Outbox
from .messages import (PSS, START, EDCAssignment, LinkReport,
                       Routed, ServiceAck, ShareAssignment)
from .phys import XH_BANDWIDTH, XH_EFFICIENCY, PhysicalMessage

log = logging.getLogger(__name__)

BOLTZMANN = 1.380649e-23
UL = "UL"
DL = "DL"


class MCSTable:
    """Spectral efficiencies (bit/s/Hz) available in one link direction."""

    def __init__(self, direction: str, efficiencies):
        effs = sorted(float(e) for e in efficiencies)
        if not effs:
            raise ValueError("empty MCS table")
        if any(b <= a for a, b in zip(effs, effs[1:])):
            raise ValueError("MCS efficiencies must be distinct")
        self.direction = direction
        self.efficiencies = tuple(effs)

    def __len__(self):
        return len(self.efficiencies)

    @property
    def min(self) -> float:
        return self.efficiencies[0]

    @property
    def max(self) -> float:
        return self.efficiencies[-1]

    def select(self, capacity: float) -> float | None:
        return mcs_select(capacity, self)

    def __repr__(self):
        return f"MCSTable({self.direction}, {len(self)} entries, {self.min}..{self.max})"


def load_mcs_tables(source=None) -> dict[str, MCSTable]:
    """Read MCS tables from a CSV with ``direction,index,efficiency`` rows.

    Without ``source`` the bundled NR tables are returned.
    """
    if source is None:
        text = resources.files("edgesim.data").joinpath("mcs_tables.csv").read_text()
    elif hasattr(source, "read"):
        text = source.read()
    else:
        with open(source) as fh:
            text = fh.read()
    rows: dict[str, list[tuple[int, float]]] = {}
    for i, row in enumerate(csv.DictReader(io.StringIO(text)), start=2):
        try:
            rows.setdefault(row["direction"].strip().upper(), []).append(
                (int(row["index"]), float(row["efficiency"])))
        except (KeyError, ValueError, AttributeError) as exc:
            raise ValueError(f"MCS table line {i}: {exc}") from exc
    return {d: MCSTable(d, [e for _, e in sorted(r)]) for d, r in rows.items()}


_DEFAULT_TABLES: dict[str, MCSTable] | None = None


def default_tables() -> dict[str, MCSTable]:
    global _DEFAULT_TABLES
    if _DEFAULT_TABLES is None:
        _DEFAULT_TABLES = load_mcs_tables()
    return _DEFAULT_TABLES


def shannon_capacity(snr: float) -> float:
    """Capacity per unit bandwidth, log2(1 + snr), for a linear SNR."""
    if snr < 0:
        raise ValueError("negative SNR")
    return math.log2(1.0 + snr)


def mcs_select(capacity: float, table: MCSTable) -> float | None:
    """Largest efficiency not above ``capacity``; None if none fits."""
    i = bisect.bisect_right(table.efficiencies, capacity)
    return table.efficiencies[i - 1] if i else None


def compute_shares(effs_ul: dict[str, float]) -> dict[str, float]:
    """Bandwidth fraction per UE, inversely proportional to its UL efficiency."""
    if not effs_ul:
        return {}
    inv_total = math.fsum(1.0 / e for e in effs_ul.values())
    return {ue: 1.0 / (e * inv_total) for ue, e in effs_ul.items()}


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def to_db(ratio: float) -> float:
    return 10.0 * math.log10(ratio) if ratio > 0 else -math.inf


def from_db(db: float) -> float:
    return 10.0 ** (db / 10.0)


def snr_from_message(msg: PhysicalMessage, te: float) -> float:
    """Linear SNR of a received message against thermal noise k*Te*bw."""
    if msg.bw <= 0:
        raise ValueError("bandwidth must be positive")
    return dbm_to_watts(msg.pw) / (BOLTZMANN * te * msg.bw)


@dataclass
class APConfig:
    bandwidth: float = 100e6  # Hz
    power: float = 50.0  # dBm
    gain: float = 0.0  # dB
    noise_temp: float = 300.0  # K
    t_pss: float = 1.0  # s

    def __post_init__(self):
        if self.bandwidth <= 0 or self.noise_temp <= 0 or self.t_pss <= 0:
            raise ValueError("AP bandwidth, noise temperature and t_pss must be positive")


class AccessControl(Atomic):
    """A&C: tracks connected UEs, broadcasts PSS every ``t_pss`` seconds and
    recomputes spectral efficiencies and bandwidth shares from link reports.

    Only assignments that actually change are re-emitted on ``out_share``.
    """

    def __init__(self, name, ap_id: str, config: APConfig, tables=None):
        super().__init__(name)
        self.ap_id = ap_id
        self.config = config
        tables = tables or default_tables()
        self.mcs_ul = tables[UL]
        self.mcs_dl = tables[DL]
        self.i_connect = self.add_in_port("in_connect")
        self.i_disconnect = self.add_in_port("in_disconnect")
        self.i_connected = self.add_in_port("in_connected")
        self.o_broadcast = self.add_out_port("out_broadcast")
        self.o_share = self.add_out_port("out_share")
        self.pss_left = 0.0
        self.effs: dict[str, tuple[float, float]] = {}  # ue -> (eff_ul, eff_dl)
        self.share: dict[str, ShareAssignment] = {}
        self.pending: list[ShareAssignment] = []
        self.ignored_reports = 0

    def ta(self):
        return 0.0 if self.pending else self.pss_left

    def output(self):
        out = [(self.o_share, s) for s in self.pending]
        if self._pss_due():
            out.append((self.o_broadcast, PSS(self.ap_id)))
        return out

    def _pss_due(self):
        return not self.pending or self.pss_left == 0.0

    def deltint(self):
        if self._pss_due():
            self.pss_left = self.config.t_pss
        self.pending = []

    def deltcon(self, bag):
        self.deltint()
        self.deltext(0.0, bag)

    def deltext(self, e, bag):
        self.pss_left = max(self.pss_left - e, 0.0)
        changed = False
        for ue in bag.get(self.i_connect, ()):
            if ue not in self.effs:
                self.effs[ue] = (self.mcs_ul.min, self.mcs_dl.min)
                changed = True
        for ue in bag.get(self.i_disconnect, ()):
            if self.effs.pop(ue, None) is not None:
                self.share.pop(ue, None)
                changed = True
        for rep in bag.get(self.i_connected, ()):
            if rep.ue not in self.effs:
                self.ignored_reports += 1
                log.debug("%s: report for unconnected %s ignored", self.path, rep.ue)
                continue
            eff = (self._select(rep.snr_ul, self.mcs_ul), self._select(rep.snr_dl, self.mcs_dl))
            if eff != self.effs[rep.ue]:
                self.effs[rep.ue] = eff
                changed = True
        if changed:
            self._reshare()

    @staticmethod
    def _select(snr_db, table):
        if snr_db is None:
            return table.min
        eff = mcs_select(shannon_capacity(from_db(snr_db)), table)
        # out-of-range links fall back to the most robust MCS
        return table.min if eff is None else eff

    def _reshare(self):
        fractions = compute_shares({ue: e[0] for ue, e in self.effs.items()})
        for ue, frac in fractions.items():
            eff_ul, eff_dl = self.effs[ue]
            new = ShareAssignment(ue, frac, eff_ul, eff_dl, self.config.bandwidth, self.ap_id)
            old = self.share.get(ue)
            if old is None or (old.bw_share, old.eff_ul, old.eff_dl) != (frac, eff_ul, eff_dl):
                self.share[ue] = new
                self.pending.append(new)


class Transport(Atomic):
    """TRANS: routes UE requests to EDCs and EDC replies back to UEs.

    Start requests go to the EDC currently designated by the SDNC; stop and
    data messages go to the EDC already hosting the service.
    """

    def __init__(self, name):
        super().__init__(name)
        self.i_sdnc = self.add_in_port("in_sdnc")
        self.i_edc = self.add_in_port("in_edc")
        self.i_ue = self.add_in_port("in_ue")
        self.o_edc = self.add_out_port("out_edc")
        self.o_ue = self.add_out_port("out_ue")
        self.edc: str | None = None
        self.to_edc: list[Routed] = []
        self.to_ue: list[Routed] = []
        self.rejected = 0

    def ta(self):
        return 0.0 if (self.to_edc or self.to_ue) else INFINITY

    def output(self):
        return [(self.o_edc, r) for r in self.to_edc] + [(self.o_ue, r) for r in self.to_ue]

    def deltint(self):
        self.to_edc = []
        self.to_ue = []

    def deltcon(self, bag):
        self.deltint()
        self.deltext(0.0, bag)

    def deltext(self, e, bag):
        for upd in bag.get(self.i_sdnc, ()):
            self.edc = upd.edc
        for ack in bag.get(self.i_edc, ()):
            self.to_ue.append(Routed(ack.request.ue, ack))
        for msg in bag.get(self.i_ue, ()):
            if msg.kind == START:
                if self.edc is None:
                    self.rejected += 1
                    self.to_ue.append(Routed(msg.ue, ServiceAck(msg, None)))
                else:
                    self.to_edc.append(Routed(self.edc, msg))
            else:
                self.to_edc.append(Routed(msg.edc, msg))


class Transceiver(Outbox):
    """XCVR: fiber codec between TRANS and the crosshaul."""

    def __init__(self, name, ap_id: str, sdnc_id: str = "SDNC"):
        super().__init__(name)
        self.ap_id = ap_id
        self.sdnc_id = sdnc_id
        self.i_trans = self.add_in_port("in_trans")
        self.i_xh = self.add_in_port("in_xh")
        self.o_xh = self.add_out_port("out_xh")
        self.o_sdnc = self.add_out_port("out_sdnc")
        self.o_edc = self.add_out_port("out_edc")
        self.dropped = 0

    def deltext(self, e, bag):
        for r in bag.get(self.i_trans, ()):
            self.pending.append((self.o_xh, PhysicalMessage(
                self.ap_id, r.dest, r.msg, XH_BANDWIDTH, 0.0, XH_EFFICIENCY, r.msg.size)))
        for m in bag.get(self.i_xh, ()):
            if m.to != self.ap_id:
                self.dropped += 1
                continue
            if isinstance(m.data, EDCAssignment):
                self.pending.append((self.o_sdnc, m.data))
            else:
                self.pending.append((self.o_edc, m.data))


class APAntenna(Outbox):
    """ANT of an access point: radio codec and SNR reporting."""

    def __init__(self, name, ap_id: str, config: APConfig):
        super().__init__(name)
        self.ap_id = ap_id
        self.config = config
        self.i_share = self.add_in_port("in_share")
        self.i_broadcast = self.add_in_port("in_broadcast")
        self.i_trans = self.add_in_port("in_trans")
        self.i_pucch = self.add_in_port("in_pucch")
        self.i_pusch = self.add_in_port("in_pusch")
        self.o_pbch = self.add_out_port("out_pbch")
        self.o_pdcch = self.add_out_port("out_pdcch")
        self.o_pdsch = self.add_out_port("out_pdsch")
        self.o_connect = self.add_out_port("out_connect")
        self.o_disconnect = self.add_out_port("out_disconnect")
        self.o_report = self.add_out_port("out_report")
        self.o_trans = self.add_out_port("out_trans")
        self.share: dict[str, ShareAssignment] = {}
        self.connected: set[str] = set()

    @property
    def tx_power(self) -> float:
        return self.config.power + self.config.gain

    def _downlink(self, ue, payload):
        share = self.share.get(ue)
        if share is not None:
            bw, eff = share.bw, share.eff_dl
        else:
            bw, eff = self.config.bandwidth, default_tables()[DL].min
        return PhysicalMessage(self.ap_id, ue, payload, bw, self.tx_power, eff, payload.size)

    def _report(self, m, snr_dl):
        snr_ul = to_db(snr_from_message(m, self.config.noise_temp))
        self.pending.append((self.o_report, LinkReport(m.src, snr_dl, snr_ul)))

    def deltext(self, e, bag):
        pend = self.pending
        for s in bag.get(self.i_share, ()):
            self.share[s.ue] = s
            pend.append((self.o_pdcch, self._downlink(s.ue, s)))
        for _ in bag.get(self.i_broadcast, ()):
            pend.append((self.o_pbch, PhysicalMessage(
                self.ap_id, None, PSS(self.ap_id), self.config.bandwidth, self.tx_power, 1.0, 0.0)))
        for r in bag.get(self.i_trans, ()):
            pend.append((self.o_pdsch, self._downlink(r.dest, r.msg)))
        for m in bag.get(self.i_pucch, ()):
            frame = m.data
            req = frame.payload
            if req.connect:
                self.connected.add(req.ue)
                pend.append((self.o_connect, req.ue))
                self._report(m, frame.snr_dl)
            else:
                self.connected.discard(req.ue)
                self.share.pop(req.ue, None)
                pend.append((self.o_disconnect, req.ue))
        for m in bag.get(self.i_pusch, ()):
            # traffic sent just before a handover is still delivered
            pend.append((self.o_trans, m.data.payload))
            if m.src in self.connected:
                self._report(m, m.data.snr_dl)


class AccessPoint(Coupled):
    def __init__(self, ap_id: str, config: APConfig | None = None, sdnc_id: str = "SDNC",
                 tables=None):
        super().__init__(ap_id)
        self.ap_id = ap_id
        self.config = config or APConfig()
        self.ac = AccessControl("AC", ap_id, self.config, tables)
        self.trans = Transport("TRANS")
        self.xcvr = Transceiver("XCVR", ap_id, sdnc_id)
        self.ant = APAntenna("ANT", ap_id, self.config)
        for m in (self.ac, self.trans, self.xcvr, self.ant):
            self.add(m)
        p = {n: self.add_in_port(n) for n in ("in_pucch", "in_pusch", "in_xh")}
        q = {n: self.add_out_port(n) for n in ("out_pbch", "out_pdcch", "out_pdsch", "out_xh")}
        c = self.couple
        c(p["in_pucch"], self.ant.i_pucch)
        c(p["in_pusch"], self.ant.i_pusch)
        c(p["in_xh"], self.xcvr.i_xh)
        c(self.ant.o_pbch, q["out_pbch"])
        c(self.ant.o_pdcch, q["out_pdcch"])
        c(self.ant.o_pdsch, q["out_pdsch"])
        c(self.xcvr.o_xh, q["out_xh"])
        c(self.ac.o_broadcast, self.ant.i_broadcast)
        c(self.ac.o_share, self.ant.i_share)
        c(self.ant.o_connect, self.ac.i_connect)
        c(self.ant.o_disconnect, self.ac.i_disconnect)
        c(self.ant.o_report, self.ac.i_connected)
        c(self.ant.o_trans, self.trans.i_ue)
        c(self.trans.o_ue, self.ant.i_trans)
        c(self.trans.o_edc, self.xcvr.i_trans)
        c(self.xcvr.o_sdnc, self.trans.i_sdnc)
        c(self.xcvr.o_edc, self.trans.i_edc)

