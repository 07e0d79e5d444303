"""System-optimum DTA subproblem on a two-class, lane-based link transmission model.

For a lane design ``b`` and mode split ``p`` the subproblem is an LP over
transfer flows ``y[i->j, class, dest, t]`` and cumulative in/out counts
``z+[i, class, dest, t]``, ``z-[i, class, dest, t]``.  Its structure does not
depend on ``b`` or ``p``; only the right-hand side does, and it is affine in
``b``.  :class:`SubproblemTemplate` builds the structure once per network and
time grid and produces right-hand sides on demand.

Cumulative counts are kept as variables and chained step to step
(``z(t+1) = z(t) + flow(t)``), which keeps the rows short.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .lp import GE, LE, EQ, LinearProgram, LPOutcome
from .logit import ModeSplit
from .network import LaneDesign, LaneKind, Network, natural_key

CLASSES = ("lv", "av")
LV, AV = 0, 1

WAVE_AS_PRINTED = "as-printed"
WAVE_LANE_TYPE = "lane-type"
WAVE_MODES = (WAVE_AS_PRINTED, WAVE_LANE_TYPE)

ROUNDING_MODES = ("floor", "nearest", "ceil")
EPS_CURVE = 1e-9  # veh; cumulative counts below this are treated as zero

# row families
FAMILIES = (
    "source_load", "inflow", "outflow", "sending", "send_cap", "receiving",
    "recv_cap", "lv_send", "lv_recv", "trip_end",
)
_FAM = {name: k for k, name in enumerate(FAMILIES)}


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_0 .. t_n`` with spacing ``dt``; ``loading`` is the demand step set."""

    dt: float
    n: int
    loading: tuple[int, ...] = ()

    @classmethod
    def from_network(cls, net: Network) -> "TimeGrid":
        d = net.demand
        loading = sorted({r for prof in d.entries.values() for r in prof})
        return cls(d.dt, d.num_steps, tuple(loading))

    @property
    def steps(self) -> range:
        return range(self.n + 1)

    @property
    def horizon(self) -> float:
        return self.n * self.dt

    def time(self, step: int) -> float:
        return step * self.dt


def time_shift(t: int, length: float, speed: float, grid: TimeGrid,
               rounding: str = "floor") -> int | None:
    """Grid step holding ``t + dt - L/speed``.

    Returns ``None`` when the shifted time falls before ``t_0`` (the cumulative
    count there is zero) and clamps to ``t_n`` at the far end.
    """
    if not speed > 0:
        raise ValueError("speed must be positive")
    shifted = grid.time(t) + grid.dt - length / speed * 3600.0
    pos = shifted / grid.dt
    if rounding == "floor":
        idx = math.floor(pos + 1e-9)
    elif rounding == "ceil":
        idx = math.ceil(pos - 1e-9)
    elif rounding == "nearest":
        idx = math.floor(pos + 0.5)
    else:
        raise ValueError(f"unknown rounding mode {rounding!r}")
    if idx < 0:
        return None
    return min(idx, grid.n)


@dataclass(frozen=True)
class SubproblemOptions:
    """Discretisation knobs.

    ``wave_speed_mode="as-printed"`` uses the LV wave speed for the LV storage
    term and the AV wave speed for the AV term on every lane;
    ``"lane-type"`` uses the AV wave speed for both terms on AV-exclusive
    lanes and the LV one elsewhere, which makes the LP structure depend on
    the design.  ``instant_connectors`` lets vehicles cross a centroid
    connector within the step they arrive.
    """

    wave_speed_mode: str = WAVE_AS_PRINTED
    rounding: str = "floor"
    instant_connectors: bool = False

    def __post_init__(self):
        if self.wave_speed_mode not in WAVE_MODES:
            raise ValueError(f"wave_speed_mode must be one of {WAVE_MODES}")
        if self.rounding not in ROUNDING_MODES:
            raise ValueError(f"rounding must be one of {ROUNDING_MODES}")


@dataclass
class VarIndex:
    """Column indices of every variable block; each value is an int array over time."""

    zp: dict[tuple[str, int, str], np.ndarray] = field(default_factory=dict)
    zm: dict[tuple[str, int, str], np.ndarray] = field(default_factory=dict)
    y: dict[tuple[str, str, int, str], np.ndarray] = field(default_factory=dict)
    num_vars: int = 0

    def new(self, size: int) -> np.ndarray:
        out = np.arange(self.num_vars, self.num_vars + size)
        self.num_vars += size
        return out


class _Rows:
    def __init__(self):
        self.ri: list[np.ndarray] = []
        self.ci: list[np.ndarray] = []
        self.v: list[np.ndarray] = []
        self.sense: list[np.ndarray] = []
        self.rhs: list[np.ndarray] = []
        self.tag: list[np.ndarray] = []
        self.count = 0

    def add(self, terms: Sequence[tuple[np.ndarray, float]], sense: str, rhs, family: str) -> np.ndarray:
        """Add ``len(rows)`` rows; each term is ``(cols, coef)`` with cols shaped like the rows.

        A column index of ``-1`` drops that term for that row.
        """
        size = None
        for cols, _ in terms:
            size = len(cols)
            break
        if size is None:
            size = len(np.atleast_1d(rhs))
        rows = np.arange(self.count, self.count + size)
        self.count += size
        for cols, coef in terms:
            cols = np.asarray(cols)
            keep = cols >= 0
            self.ri.append(rows[keep])
            self.ci.append(cols[keep])
            self.v.append(np.full(int(keep.sum()), float(coef)))
        self.sense.append(np.full(size, sense, dtype=object))
        self.rhs.append(np.broadcast_to(np.asarray(rhs, float), (size,)).copy())
        self.tag.append(np.full(size, _FAM[family], dtype=np.int8))
        return rows


@dataclass
class ParamLP:
    """Subproblem LP with right-hand side ``rhs0 + sum_lane coeff * b_lane``.

    ``lp.rhs`` is the right-hand side at ``b = 0`` (``rhs0``) for the mode split
    the object was built with.
    """

    lp: LinearProgram
    sens_rows: np.ndarray
    sens_lanes: np.ndarray  # positions into ``candidate_lanes``
    sens_coef: np.ndarray
    candidate_lanes: tuple[str, ...]
    row_tags: np.ndarray
    shares: ModeSplit
    design: LaneDesign | None = None

    @property
    def rhs0(self) -> np.ndarray:
        return self.lp.rhs

    def rhs_at(self, b: LaneDesign | Sequence[int]) -> np.ndarray:
        bits = np.asarray(b.bits(self.candidate_lanes) if isinstance(b, LaneDesign) else b, float)
        rhs = self.lp.rhs.copy()
        np.add.at(rhs, self.sens_rows, self.sens_coef * bits[self.sens_lanes])
        return rhs

    def lp_at(self, b) -> LinearProgram:
        return self.lp.with_rhs(self.rhs_at(b))

    def instance(self) -> LinearProgram:
        """The LP at the design this object was built for."""
        if self.design is None:
            return self.lp
        return self.lp_at(self.design)

    def sensitivity(self) -> sp.csr_matrix:
        """Rows x candidate-lanes matrix of right-hand-side coefficients."""
        return sp.csr_matrix((self.sens_coef, (self.sens_rows, self.sens_lanes)),
                             shape=(self.lp.num_rows, len(self.candidate_lanes)))

    def family(self, row: int) -> str:
        return FAMILIES[int(self.row_tags[row])]


class SubproblemTemplate:
    """Design- and split-independent structure of the subproblem for one network."""

    def __init__(self, net: Network, grid: TimeGrid | None = None,
                 options: SubproblemOptions | None = None,
                 design: LaneDesign | None = None):
        self.net = net
        self.grid = grid or TimeGrid.from_network(net)
        self.options = options or SubproblemOptions()
        self.candidates = net.candidate_lanes
        self._cand_pos = {l: k for k, l in enumerate(self.candidates)}
        self.design_for_structure = design  # only used by the lane-type wave mode
        self.od_keys = [od.key for od in net.od_pairs]
        self._build()

    # -- commodity bookkeeping ---------------------------------------------
    def _commodity_lanes(self) -> dict[str, set[str]]:
        net = self.net
        out: dict[str, set[str]] = {}
        for sink in net.sink_lanes:
            sink_link = net.lanes[sink].link_id
            origins = [net.connector_lane(od.origin) for od in net.od_pairs
                       if od.destination == sink_link]
            if not origins:
                continue
            fwd = set()
            stack = list(origins)
            while stack:
                l = stack.pop()
                if l in fwd:
                    continue
                fwd.add(l)
                stack.extend(net.lanes[l].successors)
            back = set()
            stack = [sink]
            while stack:
                l = stack.pop()
                if l in back:
                    continue
                back.add(l)
                stack.extend(net.lanes[l].predecessors)
            lanes = fwd & back
            # other sinks and sources not serving this destination carry nothing
            lanes = {l for l in lanes
                     if (net.lanes[l].kind != LaneKind.SINK or l == sink)
                     and (net.lanes[l].kind != LaneKind.SOURCE or l in origins)}
            out[sink] = lanes
        return out

    def _shift(self, t: np.ndarray, length: float, speed: float) -> np.ndarray:
        out = np.empty(len(t), dtype=int)
        for k, tt in enumerate(t):
            s = time_shift(int(tt), length, speed, self.grid, self.options.rounding)
            out[k] = -1 if s is None else s
        return out

    def _lane_shift_length(self, lane_id: str) -> float:
        lane = self.net.lanes[lane_id]
        if lane.is_connector and self.options.instant_connectors:
            return 0.0
        return lane.length

    def _build(self) -> None:
        net, grid = self.net, self.grid
        n, dt = grid.n, grid.dt
        fd = net.fd
        V = VarIndex()
        R = _Rows()
        comm = self._commodity_lanes()
        self.commodities = {k: tuple(sorted(v, key=natural_key)) for k, v in comm.items()}
        T_all = np.arange(n + 1)
        T_flow = np.arange(n)

        # columns
        for k, lanes in self.commodities.items():
            members = set(lanes)
            for c in (LV, AV):
                for i in lanes:
                    V.zp[(i, c, k)] = V.new(n + 1)
                    if net.lanes[i].kind != LaneKind.SINK:
                        V.zm[(i, c, k)] = V.new(n + 1)
                for i in lanes:
                    for j in net.lanes[i].successors:
                        if j in members:
                            V.y[(i, j, c, k)] = V.new(n)
        self.index = V
        nv = V.num_vars
        lb = np.zeros(nv)
        ub = np.full(nv, np.inf)
        obj = np.zeros(nv)
        for (i, c, k), cols in V.zp.items():
            ub[cols[0]] = 0.0
            if net.lanes[i].kind != LaneKind.SINK:
                obj[cols] += dt
        for cols in V.zm.values():
            ub[cols[0]] = 0.0
            obj[cols] -= dt

        # incoming / outgoing y blocks per (lane, class, dest)
        y_in: dict[tuple[str, int, str], list[np.ndarray]] = {}
        y_out: dict[tuple[str, int, str], list[np.ndarray]] = {}
        for (i, j, c, k), cols in V.y.items():
            y_out.setdefault((i, c, k), []).append(cols)
            y_in.setdefault((j, c, k), []).append(cols)

        # demand bookkeeping: source rows and trip-end rows have rhs = volume * share
        dem_rows, dem_od, dem_cls, dem_vol = [], [], [], []
        od_index = {key: q for q, key in enumerate(self.od_keys)}
        cum = {}
        for od in net.od_pairs:
            prof = net.demand.entries.get(od.key, {})
            per_step = np.zeros(n + 1)
            for r, v in prof.items():
                per_step[r] += v
            # z+(t) = sum over t' < t
            cum[od.key] = np.concatenate([[0.0], np.cumsum(per_step)[:-1]])
        self.cumulative_demand = cum

        for (i, c, k), cols in V.zp.items():
            lane = net.lanes[i]
            if lane.kind == LaneKind.SOURCE:
                od_key = (lane.link_id, net.lanes[k].link_id)
                rows = R.add([(cols[1:], 1.0)], EQ, 0.0, "source_load")
                dem_rows.append(rows)
                dem_od.append(np.full(n, od_index[od_key]))
                dem_cls.append(np.full(n, c))
                dem_vol.append(cum[od_key][1:])
            else:
                terms = [(cols[1:], 1.0), (cols[:-1], -1.0)]
                terms += [(yc, -1.0) for yc in y_in.get((i, c, k), [])]
                R.add(terms, EQ, 0.0, "inflow")
        for (i, c, k), cols in V.zm.items():
            terms = [(cols[1:], 1.0), (cols[:-1], -1.0)]
            terms += [(yc, -1.0) for yc in y_out.get((i, c, k), [])]
            R.add(terms, EQ, 0.0, "outflow")

        # sending flow: out(t) <= z+(t_s) - z-(t)
        shift_cache = {}
        for (i, c, k), zm_cols in V.zm.items():
            L = self._lane_shift_length(i)
            if L not in shift_cache:
                shift_cache[L] = self._shift(T_flow, L, fd.free_flow_speed)
            ts = shift_cache[L]
            zp_cols = V.zp[(i, c, k)]
            zp_at = np.where(ts >= 0, zp_cols[np.maximum(ts, 0)], -1)
            terms = [(yc, 1.0) for yc in y_out.get((i, c, k), [])]
            terms += [(zm_cols[:-1], 1.0), (zp_at, -1.0)]
            R.add(terms, LE, 0.0, "sending")

        sens_rows, sens_lanes, sens_coef = [], [], []

        def cap_rows(lane_id, blocks, family):
            if not blocks:
                return
            cap = net.capacity(lane_id)
            rows = R.add([(b, 1.0) for b in blocks], LE, dt * cap / 3600.0, family)
            if lane_id in self._cand_pos:
                sens_rows.append(rows)
                sens_lanes.append(np.full(len(rows), self._cand_pos[lane_id]))
                sens_coef.append(np.full(len(rows), dt * (fd.capacity_av - cap) / 3600.0))

        def lv_rows(lane_id, blocks, family):
            if not blocks or lane_id not in self._cand_pos:
                return
            q = dt * net.capacity(lane_id) / 3600.0
            rows = R.add([(b, 1.0) for b in blocks], LE, q, family)
            sens_rows.append(rows)
            sens_lanes.append(np.full(len(rows), self._cand_pos[lane_id]))
            sens_coef.append(np.full(len(rows), -q))

        lanes_all = net.lane_ids
        for i in lanes_all:
            out_all = [cols for (a, _, c, k), cols in V.y.items() if a == i]
            in_all = [cols for (_, b, c, k), cols in V.y.items() if b == i]
            cap_rows(i, out_all, "send_cap")
            cap_rows(i, in_all, "recv_cap")
            lv_rows(i, [cols for (a, _, c, k), cols in V.y.items() if a == i and c == LV], "lv_send")
            lv_rows(i, [cols for (_, b, c, k), cols in V.y.items() if b == i and c == LV], "lv_recv")

        # receiving flow on physical lanes
        for j in lanes_all:
            lane = net.lanes[j]
            if lane.is_connector:
                continue
            keys = [(j, c, k) for k, lanes in self.commodities.items() if j in lanes for c in (LV, AV)]
            if not keys:
                continue
            storage = net.jam_density(j) * lane.length
            speeds = self._wave_speeds(j)
            shifts = {c: self._shift(T_all, lane.length, speeds[c]) for c in (LV, AV)}
            pad = np.full(1, -1)  # no transfer flow at the final step
            flat = [(np.concatenate([y, pad]), 1.0)
                    for key in keys for y in y_in.get(key, [])]
            for (jj, c, k) in keys:
                zp_cols = V.zp[(jj, c, k)]
                zm_cols = V.zm[(jj, c, k)]
                ts = shifts[c]
                flat.append((zp_cols, 1.0))
                flat.append((np.where(ts >= 0, zm_cols[np.maximum(ts, 0)], -1), -1.0))
            R.add(flat, LE, storage, "receiving")

        # trip completion at each sink
        for k in self.commodities:
            sink_link = net.lanes[k].link_id
            ods = [od.key for od in net.od_pairs if od.destination == sink_link]
            for c in (LV, AV):
                row = R.add([(V.zp[(k, c, k)][-1:], 1.0)], EQ, 0.0, "trip_end")
                for od_key in ods:
                    dem_rows.append(row)
                    dem_od.append(np.array([od_index[od_key]]))
                    dem_cls.append(np.array([c]))
                    dem_vol.append(np.array([net.demand.total(od_key)]))

        m = R.count
        A = sp.csr_matrix((np.concatenate(R.v), (np.concatenate(R.ri), np.concatenate(R.ci))),
                          shape=(m, nv))
        A.sum_duplicates()
        self.base_rhs = np.concatenate(R.rhs)
        self.sense = np.concatenate(R.sense)
        self.row_tags = np.concatenate(R.tag)
        self.A = A
        self.c = obj
        self.lb, self.ub = lb, ub
        cat = lambda xs, dtype=float: (np.concatenate(xs).astype(dtype) if xs else np.zeros(0, dtype))
        self.dem_rows = cat(dem_rows, int)
        self.dem_od = cat(dem_od, int)
        self.dem_cls = cat(dem_cls, int)
        self.dem_vol = cat(dem_vol)
        self.sens_rows = cat(sens_rows, int)
        self.sens_lanes = cat(sens_lanes, int)
        self.sens_coef = cat(sens_coef)

    def _wave_speeds(self, lane_id: str) -> dict[int, float]:
        fd = self.net.fd
        if self.options.wave_speed_mode == WAVE_AS_PRINTED:
            return {LV: fd.wave_speed_regular, AV: fd.wave_speed_av}
        d = self.design_for_structure
        exclusive = d is not None and lane_id in self._cand_pos and d[lane_id] == 1
        w = fd.wave_speed_av if exclusive else fd.wave_speed_regular
        return {LV: w, AV: w}

    # -- right-hand sides --------------------------------------------------
    @property
    def num_rows(self) -> int:
        return self.base_rhs.shape[0]

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    def share_vector(self, p: ModeSplit) -> np.ndarray:
        return np.array(p.vector(self.od_keys), float)

    def rhs0(self, p: ModeSplit) -> np.ndarray:
        """Right-hand side at ``b = 0`` for mode split ``p``."""
        pv = self.share_vector(p)
        share = np.where(self.dem_cls == AV, pv[self.dem_od], 1.0 - pv[self.dem_od])
        rhs = self.base_rhs.copy()
        np.add.at(rhs, self.dem_rows, self.dem_vol * share)
        return rhs

    def rhs(self, b: LaneDesign, p: ModeSplit) -> np.ndarray:
        rhs = self.rhs0(p)
        bits = np.asarray(b.bits(self.candidates), float)
        np.add.at(rhs, self.sens_rows, self.sens_coef * bits[self.sens_lanes])
        return rhs

    def linear_program(self, rhs: np.ndarray | None = None) -> LinearProgram:
        return LinearProgram(self.c, self.A, self.sense,
                             self.base_rhs if rhs is None else rhs, self.lb, self.ub)

    def paramlp(self, b: LaneDesign | None, p: ModeSplit) -> ParamLP:
        return ParamLP(self.linear_program(self.rhs0(p)), self.sens_rows, self.sens_lanes,
                       self.sens_coef, self.candidates, self.row_tags, p, b)

    def check_design(self, b: LaneDesign) -> None:
        if set(b.assignment) != set(self.candidates):
            raise ValueError("lane design keys must equal the candidate AV lanes")
        for lane, v in b.assignment.items():
            if v not in (0, 1):
                raise ValueError(f"lane design value for {lane} must be 0 or 1")


def build_subproblem(net: Network, b: LaneDesign, p: ModeSplit, grid: TimeGrid | None = None,
                     options: SubproblemOptions | None = None) -> ParamLP:
    """The subproblem LP for design ``b`` and split ``p`` with its design sensitivity."""
    options = options or SubproblemOptions()
    tpl = SubproblemTemplate(net, grid, options,
                             design=b if options.wave_speed_mode == WAVE_LANE_TYPE else None)
    tpl.check_design(b)
    if set(p.shares) != set(tpl.od_keys):
        raise ValueError("mode split must cover exactly the network's OD pairs")
    return tpl.paramlp(b, p)


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------

@dataclass
class FlowSolution:
    zp: dict[tuple[str, int, str], np.ndarray]
    zm: dict[tuple[str, int, str], np.ndarray]
    y: dict[tuple[str, str, int, str], np.ndarray]
    objective: float
    dt: float
    duals: np.ndarray | None = None
    rhs: np.ndarray | None = None

    @classmethod
    def from_outcome(cls, tpl: SubproblemTemplate, out: LPOutcome, rhs: np.ndarray | None = None):
        x = out.primal
        V = tpl.index
        return cls({k: x[c] for k, c in V.zp.items()},
                   {k: x[c] for k, c in V.zm.items()},
                   {k: x[c] for k, c in V.y.items()},
                   float(out.objective), tpl.grid.dt, out.duals, rhs)

    def occupancy(self, lane: str, c: int) -> float:
        """Sum over dest and t of ``z+ - z-`` on one lane (vehicle-steps)."""
        total = 0.0
        for (i, cc, k), zp in self.zp.items():
            if i == lane and cc == c:
                zm = self.zm.get((i, cc, k))
                total += float(np.sum(zp - (zm if zm is not None else 0.0)))
        return total

    def entered(self, lane: str, c: int) -> float:
        return float(sum(zp[-1] for (i, cc, k), zp in self.zp.items() if i == lane and cc == c))


def tstt(sol: FlowSolution) -> float:
    """Total system travel time in veh*s (sink lanes excluded)."""
    total = 0.0
    for key, zp in sol.zp.items():
        zm = sol.zm.get(key)
        if zm is None:  # sink lane
            continue
        total += float(np.sum(zp) - np.sum(zm))
    return total * sol.dt


def link_travel_times(sol: FlowSolution, net: Network, grid: TimeGrid | None = None) -> dict[str, tuple[float, float]]:
    """Average (LV, AV) time spent on each non-sink link, in seconds.

    A class with no vehicles on a link gets the link's free-flow time.
    """
    dt = sol.dt if grid is None else grid.dt
    num: dict[tuple[str, int], float] = {}
    den: dict[tuple[str, int], float] = {}
    for (i, c, k), zp in sol.zp.items():
        zm = sol.zm.get((i, c, k))
        if zm is None:
            continue
        link = net.lanes[i].link_id
        num[(link, c)] = num.get((link, c), 0.0) + float(np.sum(zp - zm)) * dt
        den[(link, c)] = den.get((link, c), 0.0) + float(zp[-1])
    out = {}
    for link_id in net.link_ids:
        link = net.links[link_id]
        if all(net.lanes[l].kind == LaneKind.SINK for l in link.lane_ids):
            continue
        ff = link.length / net.fd.free_flow_speed * 3600.0
        vals = []
        for c in (LV, AV):
            d = den.get((link_id, c), 0.0)
            vals.append(num[(link_id, c)] / d if d > 1e-9 else ff)
        out[link_id] = (vals[0], vals[1])
    return out


def od_travel_times(link_tt: Mapping[str, tuple[float, float]], od) -> tuple[float, float]:
    """Mean over the OD's paths of summed link times, plus the on-ramp connector."""
    missing = [l for path in od.paths for l in path if l not in link_tt]
    if missing or od.origin not in link_tt:
        raise KeyError(f"no travel time for links {missing or [od.origin]}")
    lv = sum(sum(link_tt[l][0] for l in path) for path in od.paths) / len(od.paths)
    av = sum(sum(link_tt[l][1] for l in path) for path in od.paths) / len(od.paths)
    return link_tt[od.origin][0] + lv, link_tt[od.origin][1] + av


# ---------------------------------------------------------------------------
# independent re-evaluation of the constraint families
# ---------------------------------------------------------------------------

def check_solution(net: Network, b: LaneDesign, p: ModeSplit, grid: TimeGrid | None,
                   sol: FlowSolution, options: SubproblemOptions | None = None) -> dict[str, float]:
    """Max absolute violation per constraint family, recomputed from the flow arrays.

    Cumulative counts are checked in their summed form rather than the
    step-to-step form the LP uses.  Also reports ``nonneg``, ``monotone``
    (nondecreasing cumulative curves, ``z- <= z+``) and ``lv_on_av`` (LV
    transfers touching AV-exclusive lanes).
    """
    grid = grid or TimeGrid.from_network(net)
    options = options or SubproblemOptions()
    n, dt = grid.n, grid.dt
    fd = net.fd
    res = {name: 0.0 for name in FAMILIES}
    res.update(nonneg=0.0, monotone=0.0, lv_on_av=0.0)

    def bump(name, v):
        if v > res[name]:
            res[name] = float(v)

    y_in: dict[tuple[str, int, str], np.ndarray] = {}
    y_out: dict[tuple[str, int, str], np.ndarray] = {}
    for (i, j, c, k), flow in sol.y.items():
        y_out[(i, c, k)] = y_out.get((i, c, k), 0.0) + flow
        y_in[(j, c, k)] = y_in.get((j, c, k), 0.0) + flow
        bump("nonneg", float(np.max(-flow, initial=0.0)))

    def cum_before(flow):
        # value at t = sum over t' < t
        return np.concatenate([[0.0], np.cumsum(flow)])

    def instant(lane):
        return net.lanes[lane].is_connector and options.instant_connectors

    # cumulative demand from the raw demand profile
    for (i, c, k), zp in sol.zp.items():
        lane = net.lanes[i]
        bump("nonneg", float(np.max(-zp, initial=0.0)))
        bump("monotone", float(np.max(-np.diff(zp), initial=0.0)))
        if lane.kind == LaneKind.SOURCE:
            od_key = (lane.link_id, net.lanes[k].link_id)
            share = p[od_key] if c == AV else 1.0 - p[od_key]
            per = np.zeros(n + 1)
            for r, v in net.demand.entries.get(od_key, {}).items():
                per[r] += v
            target = np.array([per[:t].sum() for t in range(n + 1)]) * share
            bump("source_load", float(np.max(np.abs(zp - target))))
        else:
            flow = y_in.get((i, c, k), np.zeros(n))
            bump("inflow", float(np.max(np.abs(zp - cum_before(flow)))))
        zm = sol.zm.get((i, c, k))
        if zm is not None:
            bump("nonneg", float(np.max(-zm, initial=0.0)))
            bump("monotone", float(np.max(-np.diff(zm), initial=0.0)))
            flow = y_out.get((i, c, k), np.zeros(n))
            bump("outflow", float(np.max(np.abs(zm - cum_before(flow)))))
            L = 0.0 if instant(i) else lane.length
            for t in range(n):
                ts = time_shift(t, L, fd.free_flow_speed, grid, options.rounding)
                avail = (zp[ts] if ts is not None else 0.0) - zm[t]
                bump("sending", float(flow[t] - avail))

    bits = {l: b[l] for l in net.candidate_lanes}
    for lane_id in net.lane_ids:
        lane = net.lanes[lane_id]
        q = dt * net.capacity(lane_id) / 3600.0
        if lane_id in bits:
            cap = q * (1 - bits[lane_id]) + dt * fd.capacity_av / 3600.0 * bits[lane_id]
        else:
            cap = q
        out_tot = sum((f for (i, c, k), f in y_out.items() if i == lane_id), np.zeros(n))
        in_tot = sum((f for (i, c, k), f in y_in.items() if i == lane_id), np.zeros(n))
        bump("send_cap", float(np.max(out_tot - cap, initial=0.0)))
        bump("recv_cap", float(np.max(in_tot - cap, initial=0.0)))
        if lane_id in bits:
            lv_cap = (1 - bits[lane_id]) * q
            lv_out = sum((f for (i, c, k), f in y_out.items() if i == lane_id and c == LV), np.zeros(n))
            lv_in = sum((f for (i, c, k), f in y_in.items() if i == lane_id and c == LV), np.zeros(n))
            bump("lv_send", float(np.max(lv_out - lv_cap, initial=0.0)))
            bump("lv_recv", float(np.max(lv_in - lv_cap, initial=0.0)))
            if bits[lane_id]:
                bump("lv_on_av", float(max(np.max(lv_out, initial=0.0), np.max(lv_in, initial=0.0))))
        if lane.is_connector:
            continue
        storage = net.jam_density(lane_id) * lane.length
        if options.wave_speed_mode == WAVE_AS_PRINTED:
            w = {LV: fd.wave_speed_regular, AV: fd.wave_speed_av}
        else:
            ex = bits.get(lane_id, 0) == 1
            ww = fd.wave_speed_av if ex else fd.wave_speed_regular
            w = {LV: ww, AV: ww}
        keys = [key for key in sol.zp if key[0] == lane_id]
        for t in range(n + 1):
            occ = 0.0
            for (i, c, k) in keys:
                tr = time_shift(t, lane.length, w[c], grid, options.rounding)
                occ += sol.zp[(i, c, k)][t] - (sol.zm[(i, c, k)][tr] if tr is not None else 0.0)
            inflow = float(in_tot[t]) if t < n else 0.0
            bump("receiving", inflow + occ - storage)

    for k in {key[2] for key in sol.zp}:
        sink_link = net.lanes[k].link_id
        for c in (LV, AV):
            want = 0.0
            for od in net.od_pairs:
                if od.destination == sink_link:
                    share = p[od.key] if c == AV else 1.0 - p[od.key]
                    want += net.demand.total(od.key) * share
            bump("trip_end", abs(float(sol.zp[(k, c, k)][-1]) - want))
    return res


def _fmt_count(v: float) -> str:
    # round first so solver noise like -1e-13 does not print as "-0.000000"
    return f"{round(float(v), 6) + 0.0:.6f}"


def write_curves_csv(sol: FlowSolution, path, skip_empty: bool = True) -> int:
    """Cumulative curves as rows ``lane, class, destination, t_s, z_in_veh, z_out_veh``.

    Curves that stay at zero are left out unless ``skip_empty`` is false.
    Returns the number of data rows written.
    """
    rows = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lane", "class", "destination", "t_s", "z_in_veh", "z_out_veh"])
        for (i, c, k), zp in sorted(sol.zp.items(), key=lambda kv: (natural_key(kv[0][0]), kv[0][1], natural_key(kv[0][2]))):
            zm = sol.zm.get((i, c, k))
            if skip_empty and not np.any(np.abs(zp) > EPS_CURVE) and (zm is None or not np.any(np.abs(zm) > EPS_CURVE)):
                continue
            for t, v in enumerate(zp):
                w.writerow([i, CLASSES[c], k, t * sol.dt, _fmt_count(v),
                            "" if zm is None else _fmt_count(zm[t])])
                rows += 1
    return rows
