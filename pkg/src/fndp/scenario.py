"""JSON scenario files: network, demand, utilities, algorithm settings and experiment knobs."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .logit import BETA_AV, BETA_LV, ModeSplit
from .network import (CONNECTOR_LENGTH, DemandProfile, FundamentalDiagram, LaneDesign,
                      LaneKind, Network, ODPair, build_lanes_full_connectivity,
                      validate_network)
from .sodta import ROUNDING_MODES, WAVE_MODES, SubproblemOptions

SCHEMA_VERSION = 1
MSA_RESET_MODES = ("per-benders", "global")
DATA_DIR = Path(__file__).parent / "data"


class ScenarioError(ValueError):
    """Malformed or invalid scenario; the message names the offending field."""


@dataclass(frozen=True)
class AlgorithmConfig:
    epsilon_msa: float = 1e-3
    gap: float = 1e-4
    max_benders: int = 200
    max_fp: int = 500
    time_limit: float | None = None  # s, wall clock for a whole command
    wave_speed_mode: str = "as-printed"
    msa_reset: str = "per-benders"
    rounding: str = "floor"
    instant_connectors: bool = False
    workers: int = 1

    def problems(self) -> list[str]:
        out = []
        for name in ("epsilon_msa", "gap"):
            if not getattr(self, name) > 0:
                out.append(f"algorithm.{name} must be positive")
        for name in ("max_benders", "max_fp", "workers"):
            if not (isinstance(getattr(self, name), int) and getattr(self, name) > 0):
                out.append(f"algorithm.{name} must be a positive integer")
        if self.time_limit is not None and not self.time_limit > 0:
            out.append("algorithm.time_limit must be positive")
        if self.wave_speed_mode not in WAVE_MODES:
            out.append(f"algorithm.wave_speed_mode must be one of {list(WAVE_MODES)}")
        if self.msa_reset not in MSA_RESET_MODES:
            out.append(f"algorithm.msa_reset must be one of {list(MSA_RESET_MODES)}")
        if self.rounding not in ROUNDING_MODES:
            out.append(f"algorithm.rounding must be one of {list(ROUNDING_MODES)}")
        return out

    @property
    def subproblem_options(self) -> SubproblemOptions:
        return SubproblemOptions(self.wave_speed_mode, self.rounding, self.instant_connectors)


@dataclass(frozen=True)
class Knobs:
    """Multiplicative sensitivity factors applied on top of the base network."""

    demand_scale: float = 1.0
    q_av_scale: float = 1.0
    beta_av_scale: float = 1.0

    def problems(self) -> list[str]:
        return [f"knobs.{k} must be positive" for k, v in asdict(self).items() if not v > 0]


@dataclass(frozen=True)
class Scenario:
    name: str
    base_network: Network
    algorithm: AlgorithmConfig = AlgorithmConfig()
    knobs: Knobs = Knobs()
    design: LaneDesign | None = None
    mode_split: ModeSplit | None = None
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def network(self) -> Network:
        """The network with the experiment knobs applied."""
        net = self.base_network
        k = self.knobs
        if k.demand_scale != 1.0:
            net = net.with_demand(net.demand.scaled(k.demand_scale))
        if k.q_av_scale != 1.0:
            net = net.with_fd(replace(net.fd, capacity_av=net.fd.capacity_av * k.q_av_scale))
        if k.beta_av_scale != 1.0:
            net = net.with_od_pairs([replace(od, beta_av=od.beta_av * k.beta_av_scale)
                                     for od in net.od_pairs])
        return net

    def with_overrides(self, **algo) -> "Scenario":
        algo = {k: v for k, v in algo.items() if v is not None}
        cfg = replace(self.algorithm, **algo)
        bad = cfg.problems()
        if bad:
            raise ScenarioError("; ".join(bad))
        return replace(self, algorithm=cfg)

    def with_knobs(self, **knobs) -> "Scenario":
        knobs = {k: v for k, v in knobs.items() if v is not None}
        new = replace(self, knobs=replace(self.knobs, **knobs))
        bad = new.knobs.problems()
        if bad:
            raise ScenarioError("; ".join(bad))
        return new

    def with_loading_window(self, window_s: float) -> "Scenario":
        """Re-spread every OD total uniformly over the loading steps starting before ``window_s``."""
        net = self.base_network
        dem = net.demand
        steps = int(math.ceil(window_s / dem.dt - 1e-9))
        if not window_s > 0 or steps > dem.num_steps:
            raise ScenarioError(f"loading window must lie in (0, {dem.horizon:g}] s")
        entries = {od: {r: dem.total(od) / steps for r in range(steps)} for od in dem.entries}
        return replace(self, base_network=net.with_demand(DemandProfile(entries, dem.horizon, dem.dt)))

    def with_horizon(self, horizon_s: float) -> "Scenario":
        """Same scenario simulated over a different horizon (loading steps unchanged)."""
        net = self.base_network
        dem = net.demand
        if not horizon_s > 0:
            raise ScenarioError("time.horizon_s must be positive")
        new_dem = DemandProfile(dem.entries, float(horizon_s), dem.dt)
        last = max((r for prof in dem.entries.values() for r in prof), default=-1)
        if last >= new_dem.num_steps:
            raise ScenarioError(f"time.horizon_s: demand is loaded at step {last}, "
                                f"beyond the {new_dem.num_steps}-step horizon")
        net = net.with_demand(new_dem)
        issues = validate_network(net)
        if issues:
            raise ScenarioError("; ".join(issues))
        return replace(self, base_network=net)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _od_label(o: str, d: str) -> str:
    return f"{o}->{d}"


def _get(obj: Mapping, key: str, where: str, kind=None, default=...):
    if key not in obj:
        if default is ...:
            raise ScenarioError(f"{where}.{key}: required field missing")
        return default
    v = obj[key]
    if kind is not None and not isinstance(v, kind) or isinstance(v, bool) and kind in (int, float, (int, float)):
        raise ScenarioError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {type(v).__name__}")
    return v


def _num(obj, key, where, default=...):
    return _get(obj, key, where, (int, float), default)


def _parse_demand(spec: Mapping, where: str, dt: float, n: int) -> dict[int, float]:
    if "profile" in spec:
        prof = _get(spec, "profile", where, dict)
        out = {}
        for step, v in prof.items():
            try:
                r = int(step)
            except ValueError:
                raise ScenarioError(f"{where}.profile.{step}: step index must be an integer") from None
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ScenarioError(f"{where}.profile.{step}: expected a number")
            out[r] = float(v)
        return out
    total = float(_num(spec, "total_veh", where))
    steps = _get(spec, "loading_steps", where, list)
    if not steps:
        raise ScenarioError(f"{where}.loading_steps: must not be empty")
    if not all(isinstance(s, int) and not isinstance(s, bool) for s in steps):
        raise ScenarioError(f"{where}.loading_steps: entries must be integers")
    out = {}
    for s in steps:
        out[s] = out.get(s, 0.0) + total / len(steps)
    return out


def scenario_from_dict(doc: Mapping[str, Any]) -> Scenario:
    """Build and validate a :class:`Scenario` from its JSON document."""
    if not isinstance(doc, Mapping):
        raise ScenarioError("scenario: top level must be an object")
    version = _get(doc, "schema_version", "scenario", int)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"scenario.schema_version: unsupported version {version}")
    name = _get(doc, "name", "scenario", str, default="scenario")

    fd_doc = _get(doc, "fundamental_diagram", "scenario", dict, default={})
    fd_fields = FundamentalDiagram.__dataclass_fields__
    for k in fd_doc:
        if k not in fd_fields:
            raise ScenarioError(f"fundamental_diagram.{k}: unknown field")
    fd = FundamentalDiagram(**{k: float(_num(fd_doc, k, "fundamental_diagram")) for k in fd_doc})

    time_doc = _get(doc, "time", "scenario", dict)
    dt = float(_num(time_doc, "dt_s", "time"))
    horizon = float(_num(time_doc, "horizon_s", "time"))
    n = int(round(horizon / dt)) if dt > 0 else 0

    links_doc = _get(doc, "links", "scenario", list)
    link_lanes: dict[str, list] = {}
    link_lengths: dict[str, float] = {}
    link_succ: dict[str, list] = {}
    for q, ld in enumerate(links_doc):
        where = f"links[{q}]"
        if not isinstance(ld, Mapping):
            raise ScenarioError(f"{where}: expected an object")
        lid = str(_get(ld, "id", where))
        if lid in link_lanes:
            raise ScenarioError(f"{where}.id: duplicate link id {lid!r}")
        kind = _get(ld, "kind", where, str, default="freeway")
        if kind not in ("freeway", "source", "sink"):
            raise ScenarioError(f"{where}.kind: must be freeway, source or sink")
        default_len = CONNECTOR_LENGTH if kind != "freeway" else ...
        link_lengths[lid] = float(_num(ld, "length_km", where, default=default_len))
        lanes = []
        if kind == "freeway":
            for r, lane in enumerate(_get(ld, "lanes", where, list)):
                lw = f"{where}.lanes[{r}]"
                if not isinstance(lane, Mapping):
                    raise ScenarioError(f"{lw}: expected an object")
                lk = _get(lane, "kind", lw, str, default="regular")
                if lk not in ("regular", "candidate_av"):
                    raise ScenarioError(f"{lw}.kind: must be regular or candidate_av")
                lanes.append((str(_get(lane, "id", lw)), LaneKind(lk)))
        else:
            lanes.append((str(ld.get("lane_id", lid)), LaneKind(kind)))
        link_lanes[lid] = lanes
        link_succ[lid] = [str(s) for s in _get(ld, "successors", where, list, default=[])]
    for lid, ss in link_succ.items():
        for s in ss:
            if s not in link_lanes:
                raise ScenarioError(f"links[{lid}].successors: unknown link {s!r}")

    overrides = {}
    ov_doc = _get(doc, "lane_overrides", "scenario", dict, default={})
    for lane_id, ov in ov_doc.items():
        where = f"lane_overrides.{lane_id}"
        entry = {}
        if "successors" in ov:
            entry["successors"] = [str(s) for s in _get(ov, "successors", where, list)]
        if "capacity_veh_h" in ov:
            entry["capacity"] = float(_num(ov, "capacity_veh_h", where))
        if "jam_density_veh_km" in ov:
            entry["jam_density"] = float(_num(ov, "jam_density_veh_km", where))
        overrides[str(lane_id)] = entry
    try:
        lanes, links = build_lanes_full_connectivity(link_lanes, link_lengths, link_succ, overrides)
    except KeyError as exc:
        raise ScenarioError(f"lane_overrides: unknown lane {exc}") from None

    od_pairs, demand = [], {}
    for q, od in enumerate(_get(doc, "od_pairs", "scenario", list)):
        where = f"od_pairs[{q}]"
        o = str(_get(od, "origin", where))
        d = str(_get(od, "destination", where))
        paths = _get(od, "paths", where, list)
        if not paths or not all(isinstance(p, list) and p for p in paths):
            raise ScenarioError(f"{where}.paths: must be a non-empty list of non-empty link lists")
        beta_lv = float(_num(od, "beta_lv", where, default=BETA_LV))
        beta_av = float(_num(od, "beta_av", where, default=BETA_AV))
        od_pairs.append(ODPair(o, d, tuple(tuple(str(l) for l in p) for p in paths), beta_lv, beta_av))
        demand[(o, d)] = _parse_demand(_get(od, "demand", where, dict), f"{where}.demand", dt, n)

    net = Network(lanes, links, tuple(od_pairs), fd, DemandProfile(demand, horizon, dt))
    issues = validate_network(net)

    algo_doc = dict(_get(doc, "algorithm", "scenario", dict, default={}))
    fields = AlgorithmConfig.__dataclass_fields__
    for k in algo_doc:
        if k not in fields:
            raise ScenarioError(f"algorithm.{k}: unknown field")
    algo = AlgorithmConfig(**algo_doc)
    issues += algo.problems()
    knob_doc = _get(doc, "knobs", "scenario", dict, default={})
    for k in knob_doc:
        if k not in Knobs.__dataclass_fields__:
            raise ScenarioError(f"knobs.{k}: unknown field")
    knobs = Knobs(**{k: float(_num(knob_doc, k, "knobs")) for k in knob_doc})
    issues += knobs.problems()

    design = None
    if "design" in doc:
        dd = _get(doc, "design", "scenario", dict)
        for lane, v in dd.items():
            if v not in (0, 1) or isinstance(v, bool):
                raise ScenarioError(f"design.{lane}: must be 0 or 1")
            if lane not in net.candidate_lanes:
                raise ScenarioError(f"design.{lane}: not a candidate AV lane")
        design = LaneDesign({l: int(dd.get(l, 0)) for l in net.candidate_lanes})

    split = None
    if "mode_split" in doc:
        md = _get(doc, "mode_split", "scenario", dict)
        shares = {}
        for od in net.od_pairs:
            label = _od_label(*od.key)
            if label not in md:
                raise ScenarioError(f"mode_split.{label}: required field missing")
            v = md[label]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                raise ScenarioError(f"mode_split.{label}: AV share must be a number in [0, 1] (got {v!r})")
            shares[od.key] = float(v)
        split = ModeSplit(shares)

    if issues:
        raise ScenarioError("invalid scenario: " + "; ".join(issues))
    return Scenario(name, net, algo, knobs, design, split, raw=dict(doc))


def parse_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc)


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package (``"single_od"`` or ``"single_od.json"``)."""
    fname = name if name.endswith(".json") else name + ".json"
    path = DATA_DIR / fname
    if not path.exists():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return path


def resolve(path_or_name: str | Path) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    return bundled(str(path_or_name))


def load(path_or_name: str | Path) -> Scenario:
    return parse_scenario(resolve(path_or_name))


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    """Canonical JSON document; parsing it gives back an equal scenario."""
    net = sc.base_network
    links = []
    lane_overrides = {}
    for lid in net.link_ids:
        link = net.links[lid]
        first = net.lanes[link.lane_ids[0]]
        entry: dict[str, Any] = {"id": lid}
        if first.is_connector:
            entry["kind"] = first.kind.value
            entry["length_km"] = link.length
            if first.id != lid:
                entry["lane_id"] = first.id
        else:
            entry["kind"] = "freeway"
            entry["length_km"] = link.length
            entry["lanes"] = [{"id": l, "kind": net.lanes[l].kind.value} for l in link.lane_ids]
        succ_links = []
        for l in link.lane_ids:
            for s in net.lanes[l].successors:
                sl = net.lanes[s].link_id
                if sl not in succ_links:
                    succ_links.append(sl)
        entry["successors"] = succ_links
        links.append(entry)
    for lid in net.link_ids:
        link = net.links[lid]
        for l in link.lane_ids:
            lane = net.lanes[l]
            ov: dict[str, Any] = {}
            full = [m for sl in _ordered_succ_links(net, lid) for m in net.links[sl].lane_ids]
            if sorted(lane.successors) != sorted(full):
                ov["successors"] = list(lane.successors)
            if lane.capacity is not None:
                ov["capacity_veh_h"] = lane.capacity
            if lane.jam_density is not None:
                ov["jam_density_veh_km"] = lane.jam_density
            if ov:
                lane_overrides[l] = ov
    ods = []
    for od in net.od_pairs:
        prof = net.demand.entries.get(od.key, {})
        ods.append({"origin": od.origin, "destination": od.destination,
                    "paths": [list(p) for p in od.paths], "beta_lv": od.beta_lv,
                    "beta_av": od.beta_av,
                    "demand": {"profile": {str(k): float(v) for k, v in sorted(prof.items())}}})
    doc: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "name": sc.name,
        "fundamental_diagram": asdict(net.fd),
        "time": {"dt_s": net.demand.dt, "horizon_s": net.demand.horizon},
        "links": links,
        "od_pairs": ods,
        "algorithm": asdict(sc.algorithm),
        "knobs": asdict(sc.knobs),
    }
    if lane_overrides:
        doc["lane_overrides"] = lane_overrides
    if sc.design is not None:
        doc["design"] = dict(sc.design.assignment)
    if sc.mode_split is not None:
        doc["mode_split"] = {_od_label(*k): v for k, v in sc.mode_split.shares.items()}
    return doc


def _ordered_succ_links(net: Network, link_id: str) -> list[str]:
    out = []
    for l in net.links[link_id].lane_ids:
        for s in net.lanes[l].successors:
            sl = net.lanes[s].link_id
            if sl not in out:
                out.append(sl)
    return out


def write_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")
