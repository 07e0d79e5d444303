"""Freeway network data model: lanes, links, connectors, OD pairs and demand."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

# Connector defaults used when a connector lane carries no explicit override.
CONNECTOR_LENGTH = 0.0001  # km
CONNECTOR_CAPACITY = 360000.0  # veh/h
CONNECTOR_JAM_DENSITY = 100000.0  # veh/km

_CFL_SLACK = 1e-9


class LaneKind(str, enum.Enum):
    REGULAR = "regular"
    CANDIDATE = "candidate_av"
    SOURCE = "source"
    SINK = "sink"

    @property
    def is_connector(self) -> bool:
        return self in (LaneKind.SOURCE, LaneKind.SINK)


def natural_key(s: str):
    """Sort key that orders ``"2a" < "10"`` the way a person would."""
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", str(s))]


@dataclass(frozen=True)
class FundamentalDiagram:
    free_flow_speed: float = 90.0  # km/h
    capacity_regular: float = 2160.0  # veh/h
    capacity_av: float = 4320.0  # veh/h
    wave_speed_regular: float = 12.2  # km/h
    wave_speed_av: float = 28.4  # km/h
    jam_density: float = 200.0  # veh/km

    def problems(self) -> list[str]:
        out = []
        for name in ("free_flow_speed", "capacity_regular", "capacity_av",
                     "wave_speed_regular", "wave_speed_av", "jam_density"):
            if not getattr(self, name) > 0:
                out.append(f"fd.{name} must be positive (got {getattr(self, name)})")
        if self.capacity_av < self.capacity_regular:
            out.append("fd.capacity_av must be >= fd.capacity_regular")
        if self.wave_speed_av < self.wave_speed_regular:
            out.append("fd.wave_speed_av must be >= fd.wave_speed_regular")
        return out


@dataclass(frozen=True)
class Lane:
    id: str
    link_id: str
    kind: LaneKind
    length: float
    predecessors: tuple[str, ...] = ()
    successors: tuple[str, ...] = ()
    capacity: float | None = None  # veh/h override
    jam_density: float | None = None  # veh/km override

    @property
    def is_connector(self) -> bool:
        return self.kind.is_connector


@dataclass(frozen=True)
class Link:
    id: str
    lane_ids: tuple[str, ...]
    length: float


@dataclass(frozen=True)
class ODPair:
    origin: str  # source connector link id
    destination: str  # sink connector link id
    paths: tuple[tuple[str, ...], ...]
    beta_lv: float = 10.0 / 3600.0
    beta_av: float = 6.5 / 3600.0

    @property
    def key(self) -> tuple[str, str]:
        return (self.origin, self.destination)


@dataclass(frozen=True)
class DemandProfile:
    """Vehicles released per OD pair at each loading step (step index on the flow grid)."""

    entries: Mapping[tuple[str, str], Mapping[int, float]]
    horizon: float  # s
    dt: float  # s

    @property
    def num_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def total(self, od: tuple[str, str]) -> float:
        return float(sum(self.entries.get(od, {}).values()))

    def scaled(self, factor: float) -> "DemandProfile":
        return DemandProfile(
            {od: {r: v * factor for r, v in prof.items()} for od, prof in self.entries.items()},
            self.horizon, self.dt)


@dataclass(frozen=True)
class LaneDesign:
    """Binary AV-exclusive assignment over the candidate lanes (1 = AV-exclusive)."""

    assignment: Mapping[str, int]

    @classmethod
    def zeros(cls, lanes: Iterable[str]) -> "LaneDesign":
        return cls({lane: 0 for lane in lanes})

    @classmethod
    def from_bits(cls, lanes: Sequence[str], bits: Sequence[int]) -> "LaneDesign":
        if len(lanes) != len(bits):
            raise ValueError("design bit vector does not match candidate lanes")
        return cls({lane: int(bit) for lane, bit in zip(lanes, bits)})

    def bits(self, lanes: Sequence[str]) -> tuple[int, ...]:
        return tuple(int(self.assignment[lane]) for lane in lanes)

    def __getitem__(self, lane: str) -> int:
        return int(self.assignment[lane])

    def count(self) -> int:
        return sum(int(v) for v in self.assignment.values())


@dataclass(frozen=True)
class Network:
    lanes: Mapping[str, Lane]
    links: Mapping[str, Link]
    od_pairs: tuple[ODPair, ...]
    fd: FundamentalDiagram
    demand: DemandProfile
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    # -- lane sets ---------------------------------------------------------
    def _sorted(self, kinds) -> tuple[str, ...]:
        key = ("sorted", kinds)
        if key not in self._cache:
            self._cache[key] = tuple(sorted((lid for lid, ln in self.lanes.items() if ln.kind in kinds),
                                            key=natural_key))
        return self._cache[key]

    @property
    def lane_ids(self) -> tuple[str, ...]:
        return self._sorted(tuple(LaneKind))

    @property
    def candidate_lanes(self) -> tuple[str, ...]:
        return self._sorted((LaneKind.CANDIDATE,))

    @property
    def source_lanes(self) -> tuple[str, ...]:
        return self._sorted((LaneKind.SOURCE,))

    @property
    def sink_lanes(self) -> tuple[str, ...]:
        return self._sorted((LaneKind.SINK,))

    @property
    def link_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.links, key=natural_key))

    def connector_lane(self, link_id: str) -> str:
        """The single lane of a connector link."""
        link = self.links[link_id]
        return link.lane_ids[0]

    # -- per-lane parameters ----------------------------------------------
    def capacity(self, lane_id: str) -> float:
        """Regular-mode capacity of a lane in veh/h."""
        lane = self.lanes[lane_id]
        if lane.capacity is not None:
            return lane.capacity
        if lane.is_connector:
            return CONNECTOR_CAPACITY
        return self.fd.capacity_regular

    def jam_density(self, lane_id: str) -> float:
        lane = self.lanes[lane_id]
        if lane.jam_density is not None:
            return lane.jam_density
        if lane.is_connector:
            return CONNECTOR_JAM_DENSITY
        return self.fd.jam_density

    def with_demand(self, demand: DemandProfile) -> "Network":
        return Network(self.lanes, self.links, self.od_pairs, self.fd, demand)

    def with_fd(self, fd: FundamentalDiagram) -> "Network":
        return Network(self.lanes, self.links, self.od_pairs, fd, self.demand)

    def with_od_pairs(self, od_pairs: Sequence[ODPair]) -> "Network":
        return Network(self.lanes, self.links, tuple(od_pairs), self.fd, self.demand)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def lane_adjacency(net: Network, lane: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Predecessor and successor lanes of ``lane``, ordered by lane id."""
    try:
        ln = net.lanes[lane]
    except KeyError:
        raise KeyError(f"unknown lane id {lane!r}") from None
    return (tuple(sorted(ln.predecessors, key=natural_key)),
            tuple(sorted(ln.successors, key=natural_key)))


def free_flow_path_time(net: Network, path: Sequence[str]) -> float:
    """Free-flow traversal time of a link sequence, in seconds."""
    total = 0.0
    for link_id in path:
        if link_id not in net.links:
            raise KeyError(f"unknown link id {link_id!r}")
        total += net.links[link_id].length / net.fd.free_flow_speed * 3600.0
    return total


def link_successors(net: Network, link_id: str) -> set[str]:
    out = set()
    for lane_id in net.links[link_id].lane_ids:
        for succ in net.lanes[lane_id].successors:
            if succ in net.lanes:
                out.add(net.lanes[succ].link_id)
    return out


def _lv_path_ok(net: Network, path: Sequence[str]) -> bool:
    for link_id in path:
        link = net.links.get(link_id)
        if link is None:
            return False
        if not any(net.lanes[l].kind != LaneKind.CANDIDATE for l in link.lane_ids if l in net.lanes):
            return False
    return True


def validate_network(net: Network) -> list[str]:
    """Every violated structural precondition, as human-readable strings.

    An empty list means the network is usable by the subproblem builder.
    """
    issues: list[str] = list(net.fd.problems())
    dt = net.demand.dt
    if not dt > 0:
        issues.append(f"demand.dt must be positive (got {dt})")
    if not net.demand.horizon > 0:
        issues.append(f"demand.horizon must be positive (got {net.demand.horizon})")

    for lid in net.lane_ids:
        lane = net.lanes[lid]
        if not lane.length > 0:
            issues.append(f"lane {lid}: length must be positive")
        if lane.capacity is not None and not lane.capacity > 0:
            issues.append(f"lane {lid}: capacity must be positive")
        if lane.jam_density is not None and not lane.jam_density > 0:
            issues.append(f"lane {lid}: jam_density must be positive")
        if lane.link_id not in net.links:
            issues.append(f"lane {lid}: unknown link {lane.link_id!r}")
        elif lid not in net.links[lane.link_id].lane_ids:
            issues.append(f"lane {lid}: not listed in link {lane.link_id}")
        if lane.kind == LaneKind.SOURCE and lane.predecessors:
            issues.append(f"lane {lid}: source connector has predecessors")
        if lane.kind == LaneKind.SINK and lane.successors:
            issues.append(f"lane {lid}: sink connector has successors")
        for p in lane.predecessors:
            if p not in net.lanes:
                issues.append(f"lane {lid}: dangling predecessor {p!r}")
            elif lid not in net.lanes[p].successors:
                issues.append(f"lane {lid}: predecessor {p} does not list it as successor")
        for s in lane.successors:
            if s not in net.lanes:
                issues.append(f"lane {lid}: dangling successor {s!r}")
            elif lid not in net.lanes[s].predecessors:
                issues.append(f"lane {lid}: successor {s} does not list it as predecessor")
        # CFL on physical lanes only; connectors are exempt
        if not lane.is_connector and dt > 0 and lane.length > 0:
            ff = lane.length / net.fd.free_flow_speed * 3600.0
            if dt > ff + _CFL_SLACK:
                issues.append(f"lane {lid}: CFL violated (dt={dt:g}s > L/v_f={ff:.4g}s)")

    for link_id in net.link_ids:
        link = net.links[link_id]
        if not link.lane_ids:
            issues.append(f"link {link_id}: has no lanes")
        for l in link.lane_ids:
            if l not in net.lanes:
                issues.append(f"link {link_id}: unknown lane {l!r}")
            elif abs(net.lanes[l].length - link.length) > 1e-12:
                issues.append(f"link {link_id}: lane {l} length differs from link length")

    seen = set()
    for od in net.od_pairs:
        tag = f"od ({od.origin},{od.destination})"
        if od.key in seen:
            issues.append(f"{tag}: duplicate OD pair")
        seen.add(od.key)
        if od.beta_lv < 0 or od.beta_av < 0:
            issues.append(f"{tag}: travel-time coefficients must be nonnegative")
        o_ok = od.origin in net.links and all(
            net.lanes[l].kind == LaneKind.SOURCE for l in net.links[od.origin].lane_ids)
        d_ok = od.destination in net.links and all(
            net.lanes[l].kind == LaneKind.SINK for l in net.links[od.destination].lane_ids)
        if not o_ok:
            issues.append(f"{tag}: origin is not a source connector link")
        if not d_ok:
            issues.append(f"{tag}: destination is not a sink connector link")
        if not od.paths:
            issues.append(f"{tag}: no paths")
        for k, path in enumerate(od.paths):
            bad = [l for l in path if l not in net.links]
            if bad:
                issues.append(f"{tag}: path {k} has unknown links {bad}")
                continue
            if not path or not (o_ok and d_ok):
                continue
            chain = [od.origin, *path, od.destination]
            for a, b in zip(chain, chain[1:]):
                if b not in link_successors(net, a):
                    issues.append(f"{tag}: path {k} is not connected at {a}->{b}")
                    break
        if od.paths and not any(_lv_path_ok(net, p) for p in od.paths):
            issues.append(f"{tag}: no path made only of links with a regular lane (LV-path rule)")

    od_keys = {od.key for od in net.od_pairs}
    n = net.demand.num_steps
    for od, prof in net.demand.entries.items():
        if od not in od_keys:
            issues.append(f"demand for unknown OD pair {od}")
        for r, v in prof.items():
            if v < 0:
                issues.append(f"demand {od} at step {r} is negative")
            if not 0 <= r < n:
                issues.append(f"demand {od} at step {r} lies outside the horizon")
    return issues


def build_lanes_full_connectivity(
        link_lanes: Mapping[str, Sequence[tuple[str, LaneKind]]],
        link_lengths: Mapping[str, float],
        link_successors_map: Mapping[str, Sequence[str]],
        lane_overrides: Mapping[str, Mapping] | None = None,
) -> tuple[dict[str, Lane], dict[str, Link]]:
    """Expand link-level topology into lanes with full inter-link lane connectivity.

    Every lane of a link feeds every lane of each downstream link unless
    ``lane_overrides[lane]["successors"]`` pins an explicit list.
    """
    lane_overrides = lane_overrides or {}
    succ: dict[str, list[str]] = {}
    for link_id, lanes in link_lanes.items():
        for lane_id, _ in lanes:
            ov = lane_overrides.get(lane_id, {})
            if "successors" in ov:
                succ[lane_id] = list(ov["successors"])
            else:
                succ[lane_id] = [l for nxt in link_successors_map.get(link_id, ())
                                 for l, _ in link_lanes[nxt]]
    pred: dict[str, list[str]] = {l: [] for l in succ}
    for l, ss in succ.items():
        for s in ss:
            pred.setdefault(s, []).append(l)
    lanes: dict[str, Lane] = {}
    links: dict[str, Link] = {}
    for link_id, members in link_lanes.items():
        length = link_lengths[link_id]
        for lane_id, kind in members:
            ov = lane_overrides.get(lane_id, {})
            lanes[lane_id] = Lane(
                id=lane_id, link_id=link_id, kind=kind, length=length,
                predecessors=tuple(sorted(pred.get(lane_id, ()), key=natural_key)),
                successors=tuple(sorted(succ[lane_id], key=natural_key)),
                capacity=ov.get("capacity"), jam_density=ov.get("jam_density"))
        links[link_id] = Link(link_id, tuple(l for l, _ in members), length)
    return lanes, links
