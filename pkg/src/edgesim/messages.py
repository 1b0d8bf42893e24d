"""Service-level message types exchanged between UEs, APs, EDCs and the SDNC."""
from __future__ import annotations

from dataclasses import dataclass, field

START = "start"
STOP = "stop"
DATA = "data"


@dataclass(slots=True)
class ServiceMessage:
    """A FaaS request travelling from a UE service to an EDC.

    Only data messages carry a non-zero size.
    """

    kind: str
    ue: str
    app: str
    edc: str | None = None
    u: float = 0.0
    size: float = 0.0
    created: float = 0.0
    seq: int = 0

    def __str__(self):
        return f"{self.kind}({self.ue},{self.app},{self.edc},#{self.seq})"


@dataclass(slots=True)
class ServiceAck:
    """Acknowledgment of a :class:`ServiceMessage`.

    ``edc`` is ``None`` for a negative acknowledgment (request rejected).
    """

    request: ServiceMessage
    edc: str | None
    size: float = 0.0

    @property
    def ok(self) -> bool:
        return self.edc is not None

    @property
    def ue(self) -> str:
        return self.request.ue

    def __str__(self):
        return f"ack[{self.request}->{self.edc}]"


@dataclass(slots=True)
class ShareAssignment:
    """Radio bandwidth share and spectral efficiencies granted to one UE."""

    ue: str
    bw_share: float
    eff_ul: float
    eff_dl: float
    bandwidth: float = 100e6  # total bandwidth of the granting AP, Hz
    ap: str | None = None
    size: float = 0.0

    @property
    def bw(self) -> float:
        return self.bw_share * self.bandwidth


@dataclass(slots=True)
class LinkReport:
    ue: str
    snr_dl: float  # dB
    snr_ul: float  # dB


@dataclass(slots=True)
class ConnectRequest:
    ue: str
    connect: bool
    size: float = 0.0


@dataclass(slots=True)
class PSS:
    ap: str
    size: float = 0.0


@dataclass(slots=True)
class UplinkFrame:
    """Radio uplink payload: the service/control message plus the DL SNR
    (dB) the UE currently measures for the addressed AP."""

    payload: object
    snr_dl: float | None = None

    @property
    def size(self) -> float:
        return self.payload.size


@dataclass(slots=True)
class EDCAssignment:
    ap: str
    edc: str | None
    size: float = 0.0


@dataclass(slots=True)
class Routed:
    """A payload tagged with the node it has to reach."""

    dest: str
    msg: object = field(default=None)
