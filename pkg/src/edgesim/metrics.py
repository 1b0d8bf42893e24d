"""Per-run measurements: UE-perceived delays and EDC power."""
from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class DelayRecord:
    """Round trip of one data message, from generation to acknowledgment."""

    ue: str
    app: str
    created: float
    acked: float

    def __post_init__(self):
        if self.acked < self.created:
            raise ValueError("acknowledgment before generation")

    @property
    def delay(self) -> float:
        return self.acked - self.created


@dataclass(frozen=True)
class PowerSample:
    time: float
    edc: str
    pw: float


@dataclass
class Recorder:
    delays: list = field(default_factory=list)
    power_samples: list = field(default_factory=list)
    discarded: int = 0

    def delay(self, ue, app, created, acked):
        self.delays.append(DelayRecord(ue, app, created, acked))

    def discard(self, ue, app, n=1):
        self.discarded += n

    def power(self, t, edc, pw):
        self.power_samples.append(PowerSample(t, edc, pw))


def federation_series(samples, edcs) -> list[tuple[float, float]]:
    """Step function of the summed EDC power as (time, watts) pairs.

    Samples sharing a timestamp collapse to the last value, so zero-length
    blips do not show up in the series.
    """
    current = {e: 0.0 for e in edcs}
    series: list[tuple[float, float]] = []
    for s in sorted(samples, key=lambda s: s.time):  # stable: keeps emission order
        current[s.edc] = s.pw
        total = math.fsum(current.values())
        if series and series[-1][0] == s.time:
            series[-1] = (s.time, total)
        else:
            series.append((s.time, total))
    return series


def mean_power(series, horizon: float) -> float:
    """Time-weighted mean of a step function over [0, horizon]."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    area = []
    for (t0, p), (t1, _) in zip(series, series[1:] + [(horizon, 0.0)]):
        t0, t1 = min(t0, horizon), min(t1, horizon)
        if t1 > t0:
            area.append(p * (t1 - t0))
    return math.fsum(area) / horizon


def peak_power(series, horizon: float) -> float:
    return max((p for t, p in series if t <= horizon), default=0.0)


@dataclass
class RunSummary:
    mean_delay: float
    mean_power: float
    peak_power: float
    acked: int
    discarded: int
    generated: int = 0
    outstanding: int = 0
    events: int = 0
    wall_time: float = 0.0
    overflows: int = 0
    rejections: int = 0
    handovers: int = 0


def summarize(recorder: Recorder, edcs, horizon: float, **extra) -> RunSummary:
    series = federation_series(recorder.power_samples, edcs)
    delays = [d.delay for d in recorder.delays]
    mean_delay = math.fsum(delays) / len(delays) if delays else math.nan
    return RunSummary(mean_delay, mean_power(series, horizon), peak_power(series, horizon),
                      len(delays), recorder.discarded, **extra)
