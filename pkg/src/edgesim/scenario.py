"""Scenario configuration, mobility traces and assembly of the root model."""
from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .devs import Coupled, Simulator
from .edc import POLICIES, EdgeDataCenter, PUConfig, make_power_model
from .metrics import Recorder, RunSummary, summarize
from .phys import DEFAULT_CARRIER, V_FIBER, Geometry, build_rad, build_xh
from .radio import APConfig, AccessPoint
from .sdnc import SDNController
from .ue import ServiceConfig, Trajectory, UEAntennaConfig, UserEquipment

log = logging.getLogger(__name__)

EARTH_RADIUS = 6_371_000.0


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` locates the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class TraceError(ValueError):
    pass


# -- traces ------------------------------------------------------------------

@dataclass
class MobilityTrace:
    times: list  # seconds, rebased to start at 0
    lat: list
    lon: list
    occupied: list
    epoch0: float = 0.0

    def __len__(self):
        return len(self.times)


def load_trace(path) -> MobilityTrace:
    """Read a cab-style GPS trace: ``latitude longitude occupancy epoch`` per line.

    Samples are sorted by time and rebased so that the first one is at t=0.
    Samples repeating an earlier timestamp are dropped.
    """
    rows = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise TraceError(f"{path}:{n}: expected 4 fields, got {len(parts)}")
            try:
                lat, lon = float(parts[0]), float(parts[1])
                occ = int(parts[2])
                epoch = float(parts[3])
            except ValueError as exc:
                raise TraceError(f"{path}:{n}: {exc}") from None
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                raise TraceError(f"{path}:{n}: coordinates out of range")
            rows.append((epoch, lat, lon, occ))
    rows.sort(key=lambda r: r[0])
    dedup = []
    for r in rows:
        if dedup and r[0] == dedup[-1][0]:
            log.debug("%s: duplicate timestamp %s dropped", path, r[0])
            continue
        dedup.append(r)
    if len(dedup) < 2:
        raise TraceError(f"{path}: a trace needs at least 2 samples, got {len(dedup)}")
    t0 = dedup[0][0]
    return MobilityTrace([r[0] - t0 for r in dedup], [r[1] for r in dedup],
                         [r[2] for r in dedup], [r[3] for r in dedup], t0)


def project(lat: float, lon: float, origin) -> tuple[float, float]:
    """Local equirectangular projection around ``origin`` = (lat0, lon0), in meters."""
    lat0, lon0 = origin
    x = EARTH_RADIUS * math.cos(math.radians(lat0)) * math.radians(lon - lon0)
    y = EARTH_RADIUS * math.radians(lat - lat0)
    return x, y


def trace_trajectory(trace: MobilityTrace, origin) -> Trajectory:
    xy = [project(a, o, origin) for a, o in zip(trace.lat, trace.lon)]
    return Trajectory(trace.times, [p[0] for p in xy], [p[1] for p in xy])


def random_waypoint(rng: np.random.Generator, bbox, speed, pause, horizon) -> Trajectory:
    """Random-waypoint path inside ``bbox`` = (xmin, ymin, xmax, ymax)."""
    xmin, ymin, xmax, ymax = bbox
    x, y = rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)
    ts, xs, ys = [0.0], [x], [y]
    t = 0.0
    while t < horizon:
        nx, ny = rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)
        v = rng.uniform(*speed)
        d = math.hypot(nx - x, ny - y)
        if d > 0:
            t += d / v
            ts.append(t)
            xs.append(nx)
            ys.append(ny)
        wait = rng.uniform(0.0, pause) if pause > 0 else 0.0
        if wait > 0:
            t += wait
            ts.append(t)
            xs.append(nx)
            ys.append(ny)
        x, y = nx, ny
    return Trajectory(ts, xs, ys)


# -- configuration -----------------------------------------------------------

@dataclass
class APSpec:
    id: str
    position: tuple
    config: APConfig


@dataclass
class EDCSpec:
    id: str
    position: tuple
    n_pu: int = 10
    pu: PUConfig = field(default_factory=PUConfig)
    policy: str = "emptiest"
    n_stby: int = 0


@dataclass
class UESpec:
    id: str
    services: list
    position: tuple | None = None
    trace: str | None = None
    trajectory: Trajectory | None = None


@dataclass
class SyntheticUEs:
    count: int
    bbox: tuple
    speed: tuple = (5.0, 15.0)  # m/s
    pause: float = 30.0  # s, upper bound of the pause at each waypoint
    services: list = field(default_factory=lambda: [ServiceConfig()])
    prefix: str = "UE"


@dataclass
class ScenarioConfig:
    aps: list
    edcs: list
    ues: list = field(default_factory=list)
    synthetic: SyntheticUEs | None = None
    horizon: float = 3600.0
    seed: int = 0
    carrier_f: float = DEFAULT_CARRIER
    sdnc_id: str = "SDNC"
    sdnc_position: tuple = (0.0, 0.0)
    xh_v_prop: float = V_FIBER
    xh_loss_db: float = 0.0
    hysteresis: float = 0.0
    ue_antenna: UEAntennaConfig = field(default_factory=UEAntennaConfig)
    origin: tuple | None = None
    outputs: dict = field(default_factory=dict)

    def with_grid_point(self, ue_count: int, policy: str, n_stby: int, seed: int | None = None):
        """Copy with a synthetic UE count and the same policy/N_STBY on every EDC."""
        if self.synthetic is None:
            raise ConfigError("synthetic_ues", "a sweep over UE counts needs synthetic UEs")
        edcs = [replace(e, policy=policy, n_stby=n_stby) for e in self.edcs]
        for i, e in enumerate(edcs):
            _check_stby(e, f"edcs[{i}]")
        return replace(self, edcs=edcs, synthetic=replace(self.synthetic, count=ue_count),
                       seed=self.seed if seed is None else seed)


class _Section:
    """Typed access to one mapping of the raw config, tracking its path."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.used: set = set()

    def where(self, key):
        return f"{self.path}.{key}" if self.path else key

    def get(self, key, kind=float, default=None, required=False):
        self.used.add(key)
        if key not in self.data or self.data[key] is None:
            if required:
                raise ConfigError(self.where(key), "missing required field")
            return default
        value = self.data[key]
        try:
            if kind is float:
                if isinstance(value, bool):
                    raise TypeError
                return float(value)
            if kind is int:
                if isinstance(value, bool) or float(value) != int(value):
                    raise TypeError
                return int(value)
            if kind is str:
                if not isinstance(value, str):
                    raise TypeError
                return value
            if kind == "xy":
                if len(value) != 2:
                    raise TypeError
                return (float(value[0]), float(value[1]))
            if kind is list:
                if not isinstance(value, list):
                    raise TypeError
                return value
            if kind is dict:
                if not isinstance(value, dict):
                    raise TypeError
                return value
        except (TypeError, ValueError):
            raise ConfigError(self.where(key), f"invalid value {value!r}") from None
        raise AssertionError(kind)

    def sub(self, key, required=False):
        raw = self.get(key, dict, None, required)
        return None if raw is None else _Section(raw, self.where(key))

    def done(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(self.where(extra[0]), "unknown field")


def _positive(value, where):
    if value is not None and value <= 0:
        raise ConfigError(where, "must be positive")
    return value


def _non_negative(value, where):
    if value is not None and value < 0:
        raise ConfigError(where, "must be non-negative")
    return value


def _check_stby(e: EDCSpec, where):
    if not 0 <= e.n_stby <= e.n_pu:
        raise ConfigError(f"{where}.n_stby", f"{e.n_stby} outside [0, {e.n_pu}]")
    if e.policy not in POLICIES:
        raise ConfigError(f"{where}.policy", f"unknown policy {e.policy!r}")


def _service(sec: _Section) -> ServiceConfig:
    d = ServiceConfig()
    kw = dict(app=sec.get("app", str, d.app), u=sec.get("u", float, d.u),
              t_off=sec.get("t_off", float, d.t_off), t_on=sec.get("t_on", float, d.t_on),
              size=sec.get("size", float, d.size), t_pkg=sec.get("t_pkg", float, d.t_pkg),
              offset=sec.get("offset", float, d.offset),
              gen_offset=sec.get("gen_offset", float, None))
    sec.done()
    _positive(kw["t_pkg"], sec.where("t_pkg"))
    _positive(kw["size"], sec.where("size"))
    _positive(kw["u"], sec.where("u"))
    for k in ("t_on", "t_off", "offset"):
        _non_negative(kw[k], sec.where(k))
    return ServiceConfig(**kw)


def _services(sec: _Section, key="services") -> list:
    raw = sec.get(key, list, None)
    if raw is None:
        return [ServiceConfig()]
    out = [_service(_Section(s, f"{sec.where(key)}[{i}]")) for i, s in enumerate(raw)]
    apps = [s.app for s in out]
    if len(set(apps)) != len(apps):
        raise ConfigError(sec.where(key), "duplicate app names")
    return out


def parse_config(data: dict, base_dir: str | os.PathLike = ".") -> ScenarioConfig:
    """Validate a raw (JSON-compatible) mapping and apply defaults."""
    root = _Section(data, "")
    base_dir = Path(base_dir)

    aps = []
    for i, raw in enumerate(root.get("aps", list, required=True)):
        s = _Section(raw, f"aps[{i}]")
        d = APConfig()
        cfg = dict(bandwidth=s.get("bandwidth", float, d.bandwidth),
                   power=s.get("power", float, d.power), gain=s.get("gain", float, d.gain),
                   noise_temp=s.get("noise_temp", float, d.noise_temp),
                   t_pss=s.get("t_pss", float, d.t_pss))
        for k in ("bandwidth", "noise_temp", "t_pss"):
            _positive(cfg[k], s.where(k))
        aps.append(APSpec(s.get("id", str, required=True), s.get("position", "xy", required=True),
                          APConfig(**cfg)))
        s.done()
    if not aps:
        raise ConfigError("aps", "at least one AP is required")

    edcs = []
    for i, raw in enumerate(root.get("edcs", list, required=True)):
        s = _Section(raw, f"edcs[{i}]")
        pu_sec = s.sub("pu") or _Section({}, s.where("pu"))
        d = PUConfig()
        power = pu_sec.get("power", dict, None)
        try:
            model = make_power_model(power)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(pu_sec.where("power"), str(exc)) from None
        pu = dict(t_pw=pu_sec.get("t_pw", float, d.t_pw), t_srv=pu_sec.get("t_srv", float, d.t_srv),
                  t_data=pu_sec.get("t_data", float, d.t_data),
                  capacity=pu_sec.get("capacity", float, d.capacity))
        pu_sec.done()
        for k in ("t_pw", "t_srv", "t_data"):
            _non_negative(pu[k], pu_sec.where(k))
        _positive(pu["capacity"], pu_sec.where("capacity"))
        spec = EDCSpec(s.get("id", str, required=True), s.get("position", "xy", required=True),
                       s.get("n_pu", int, 10), PUConfig(power_model=model, **pu),
                       s.get("policy", str, "emptiest").lower(), s.get("n_stby", int, 0))
        s.done()
        _positive(spec.n_pu, s.where("n_pu"))
        _check_stby(spec, f"edcs[{i}]")
        edcs.append(spec)
    if not edcs:
        raise ConfigError("edcs", "at least one EDC is required")

    origin = root.get("origin", "xy", None)
    ues = []
    for i, raw in enumerate(root.get("ues", list, [])):
        s = _Section(raw, f"ues[{i}]")
        ue = UESpec(s.get("id", str, required=True), _services(s),
                    s.get("position", "xy", None), s.get("trace", str, None))
        s.done()
        if (ue.position is None) == (ue.trace is None):
            raise ConfigError(f"ues[{i}]", "give exactly one of position or trace")
        if ue.trace is not None:
            if origin is None:
                raise ConfigError("origin", "required when UEs follow GPS traces")
            path = base_dir / ue.trace
            try:
                ue.trajectory = trace_trajectory(load_trace(path), origin)
            except (OSError, TraceError) as exc:
                raise ConfigError(f"ues[{i}].trace", str(exc)) from None
        else:
            ue.trajectory = Trajectory.static(ue.position)
        ues.append(ue)

    synthetic = None
    syn = root.sub("synthetic_ues")
    if syn is not None:
        bbox = syn.get("bbox", list, required=True)
        if len(bbox) != 4:
            raise ConfigError(syn.where("bbox"), "expected [xmin, ymin, xmax, ymax]")
        speed = syn.get("speed", "xy", (5.0, 15.0))
        synthetic = SyntheticUEs(syn.get("count", int, required=True),
                                 tuple(float(b) for b in bbox), speed,
                                 syn.get("pause", float, 30.0), _services(syn),
                                 syn.get("prefix", str, "UE"))
        syn.done()
        _non_negative(synthetic.count, syn.where("count"))
        if not 0 < speed[0] <= speed[1]:
            raise ConfigError(syn.where("speed"), "need 0 < min <= max")

    sdnc = root.sub("sdnc") or _Section({}, "sdnc")
    xh = root.sub("crosshaul") or _Section({}, "crosshaul")
    ant = root.sub("ue_antenna") or _Section({}, "ue_antenna")
    da = UEAntennaConfig()
    cfg = ScenarioConfig(
        aps=aps, edcs=edcs, ues=ues, synthetic=synthetic,
        horizon=_positive(root.get("horizon", float, 3600.0), "horizon"),
        seed=root.get("seed", int, 0),
        carrier_f=_positive(root.get("carrier_f", float, DEFAULT_CARRIER), "carrier_f"),
        sdnc_id=sdnc.get("id", str, "SDNC"),
        sdnc_position=sdnc.get("position", "xy", (0.0, 0.0)),
        xh_v_prop=_positive(xh.get("v_prop", float, V_FIBER), "crosshaul.v_prop"),
        xh_loss_db=xh.get("loss_db", float, 0.0),
        hysteresis=_non_negative(root.get("hysteresis", float, 0.0), "hysteresis"),
        ue_antenna=UEAntennaConfig(ant.get("power", float, da.power), ant.get("gain", float, da.gain),
                                   ant.get("noise_temp", float, da.noise_temp),
                                   ant.get("bandwidth", float, da.bandwidth)),
        origin=origin,
        outputs=root.get("outputs", dict, {}),
    )
    for s in (sdnc, xh, ant):
        s.done()
    root.done()
    ap_power = min(a.config.power for a in aps)
    if cfg.ue_antenna.power > ap_power:
        raise ConfigError("ue_antenna.power", "UE power must not exceed AP power")
    ids = [a.id for a in aps] + [e.id for e in edcs] + [u.id for u in ues] + [cfg.sdnc_id]
    dup = {x for x in ids if ids.count(x) > 1}
    if dup:
        raise ConfigError("", f"duplicate ids: {sorted(dup)}")
    return cfg


def load_config(path) -> ScenarioConfig:
    """Load a YAML (or JSON) scenario file."""
    path = Path(path)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{path}: not valid YAML/JSON: {exc}") from None
    if data is None:
        raise ConfigError("", f"{path}: empty configuration")
    return parse_config(data, path.parent)


# -- assembly ------------------------------------------------------------------

def synthetic_ues(cfg: ScenarioConfig) -> list[UESpec]:
    """Random-waypoint UEs. Each UE draws from its own stream, keyed by
    (seed, index), so a smaller population is a prefix of a larger one."""
    syn = cfg.synthetic
    if syn is None:
        return []
    out = []
    for i in range(syn.count):
        rng = np.random.default_rng([cfg.seed, i])
        traj = random_waypoint(rng, syn.bbox, syn.speed, syn.pause, cfg.horizon)
        services = []
        for s in syn.services:
            period = s.t_on + s.t_off
            services.append(replace(
                s, offset=s.offset + float(rng.uniform(0.0, period)),
                gen_offset=s.gen_offset if s.gen_offset is not None
                else float(rng.uniform(0.0, s.t_pkg)) or s.t_pkg))
        out.append(UESpec(f"{syn.prefix}{i}", services, trajectory=traj))
    return out


class Scenario:
    """The ROOT coupled model of one configuration, ready to simulate."""

    def __init__(self, cfg: ScenarioConfig, recorder: Recorder | None = None,
                 log_sink=None):
        self.config = cfg
        self.recorder = recorder or Recorder()
        ue_specs = list(cfg.ues) + synthetic_ues(cfg)
        ids = [u.id for u in ue_specs]
        if len(set(ids)) != len(ids):
            raise ConfigError("ues", "duplicate UE ids")
        ap_ids = [a.id for a in cfg.aps]
        edc_ids = [e.id for e in cfg.edcs]

        geo = Geometry()
        for a in cfg.aps:
            geo.place(a.id, a.position)
        for e in cfg.edcs:
            geo.place(e.id, e.position)
        geo.place(cfg.sdnc_id, cfg.sdnc_position)
        for u in ue_specs:
            geo.attach(u.id, u.trajectory)
        self.geometry = geo

        root = Coupled("ROOT")
        self.root = root
        self.xh = build_xh(edc_ids, ap_ids, cfg.sdnc_id, geo, cfg.xh_v_prop, cfg.xh_loss_db)
        self.rad = build_rad(ids, ap_ids, geo, cfg.carrier_f)
        positions = {n: geo.position(n) for n in ap_ids + edc_ids}
        self.sdnc = SDNController(cfg.sdnc_id, ap_ids, edc_ids, positions)
        self.aps = [AccessPoint(a.id, a.config, cfg.sdnc_id) for a in cfg.aps]
        self.edcs = [EdgeDataCenter(e.id, e.n_pu, e.pu, e.policy, e.n_stby, cfg.sdnc_id,
                                    self.recorder) for e in cfg.edcs]
        self.ues = [UserEquipment(u.id, ap_ids, u.services, u.trajectory, cfg.ue_antenna,
                                  self.recorder, cfg.hysteresis, cfg.horizon) for u in ue_specs]
        for m in [self.xh, self.rad, self.sdnc, *self.ues, *self.aps, *self.edcs]:
            root.add(m)

        c = root.couple
        xi, xo = self.xh.in_ports, self.xh.out_ports
        ri, ro = self.rad.in_ports, self.rad.out_ports
        for ue in self.ues:
            n = ue.name
            c(ue.out_ports["out_pucch"], ri[f"in_pucch({n})"])
            c(ue.out_ports["out_pusch"], ri[f"in_pusch({n})"])
            for k in ("pbch", "pdcch", "pdsch"):
                c(ro[f"out_{k}({n})"], ue.in_ports[f"in_{k}"])
        for ap in self.aps:
            n = ap.name
            c(ro[f"out_pucch({n})"], ap.in_ports["in_pucch"])
            c(ro[f"out_pusch({n})"], ap.in_ports["in_pusch"])
            for k in ("pbch", "pdcch", "pdsch"):
                c(ap.out_ports[f"out_{k}"], ri[f"in_{k}({n})"])
            c(ap.out_ports["out_xh"], xi[f"in_ul({n})"])
            c(xo[f"out_dl({n})"], ap.in_ports["in_xh"])
        for edc in self.edcs:
            n = edc.name
            c(xo[f"out_ul({n})"], edc.i_ul)
            c(edc.o_ul, xi[f"in_ul({n})"])
            c(edc.o_dl, xi[f"in_dl({n})"])
        c(xo[f"out_ul({cfg.sdnc_id})"], self.sdnc.i_ul)
        c(self.sdnc.o_dl, xi[f"in_dl({cfg.sdnc_id})"])

        self.simulator = Simulator(root, log_sink=log_sink)

    def root_couplings(self) -> int:
        return sum(len(p.links) for m in self.root.components.values()
                   for p in m.out_ports.values())

    def run(self, horizon: float | None = None) -> RunSummary:
        horizon = self.config.horizon if horizon is None else horizon
        t0 = time.perf_counter()
        report = self.simulator.run_until(horizon)
        wall = time.perf_counter() - t0
        mngs = [s.mng for ue in self.ues for s in ue.services]
        gens = [s.gen for ue in self.ues for s in ue.services]
        pus = [pu for e in self.edcs for pu in e.pus]
        return summarize(
            self.recorder, [e.name for e in self.edcs], horizon,
            generated=sum(g.count for g in gens),
            outstanding=sum(len(m.q) for m in mngs),
            events=report.transitions, wall_time=wall,
            overflows=sum(p.overflows for p in pus),
            rejections=sum(m.rejected for m in mngs),
            handovers=sum(ue.acc.handovers for ue in self.ues))


def run_scenario(cfg: ScenarioConfig, horizon: float | None = None, log_sink=None):
    """Build and run one scenario; returns (summary, scenario)."""
    sc = Scenario(cfg, log_sink=log_sink)
    return sc.run(horizon), sc

