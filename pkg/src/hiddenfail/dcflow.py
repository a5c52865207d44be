"""DC power flow, post-contingency screening criteria and minimum load shed."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy.optimize import linprog

from .netmodel import Branch, GridCase, islands

RESIDUAL_TOL = 1e-10
_COND_LIMIT = 1e12


class DCFlowError(ValueError):
    pass


class SingularSystemError(DCFlowError):
    pass


@dataclass(frozen=True)
class SusceptanceSystem:
    bprime: np.ndarray
    bus_index: dict[int, int]
    injections: np.ndarray
    slack: int
    buses: tuple[int, ...]
    branches: tuple[Branch, ...]
    base_power: float


@dataclass(frozen=True)
class FlowSolution:
    theta: dict[int, float]
    flow: dict[int, float]
    converged: bool = True
    base_power: float = 100.0

    def flow_pu(self, branch_id: int) -> float:
        return self.flow[branch_id] / self.base_power

    def loading(self, case: GridCase) -> dict[int, float]:
        return {i: abs(f) / case.branch(i).rating for i, f in self.flow.items()}


def island_slack(case: GridCase, island: Iterable[int]) -> int | None:
    """The designated slack bus in ``island``; None if there is none.

    Raises when the island holds more than one slack bus.
    """
    found = sorted(b.id for b in case.buses if b.is_slack and b.id in set(island))
    if len(found) > 1:
        raise DCFlowError(f"island {sorted(island)} has {len(found)} slack buses")
    return found[0] if found else None


def net_injection_mw(case: GridCase) -> dict[int, float]:
    p = {b: 0.0 for b in case.bus_ids}
    for g in case.generators:
        p[g.bus] += g.p
    for ld in case.loads:
        p[ld.bus] -= ld.p
    return p


def build_system(case: GridCase, island: Iterable[int], slack: int | None = None) -> SusceptanceSystem:
    buses = tuple(sorted(set(island)))
    if not buses:
        raise DCFlowError("empty island")
    if slack is None:
        slack = island_slack(case, buses)
        if slack is None:
            raise DCFlowError(f"no slack bus in island {list(buses)}")
    elif slack not in buses:
        raise DCFlowError(f"slack {slack} is not in island {list(buses)}")
    inside = set(buses)
    branches = tuple(br for br in sorted(case.in_service, key=lambda b: b.id)
                     if br.from_bus in inside and br.to_bus in inside)
    others = [b for b in buses if b != slack]
    index = {b: i for i, b in enumerate(others)}
    n = len(others)
    bp = np.zeros((n, n))
    for br in branches:
        y = 1.0 / br.reactance
        i, j = index.get(br.from_bus), index.get(br.to_bus)
        if i is not None:
            bp[i, i] += y
        if j is not None:
            bp[j, j] += y
        if i is not None and j is not None:
            bp[i, j] -= y
            bp[j, i] -= y
    p = net_injection_mw(case)
    inj = np.array([p[b] for b in others]) / case.base_power
    return SusceptanceSystem(bp, index, inj, slack, buses, branches, case.base_power)


def _check_nonsingular(bp: np.ndarray):
    if bp.shape[0] and np.linalg.cond(bp) > _COND_LIMIT:
        raise SingularSystemError("singular susceptance matrix (island not connected)")


def solve_dc(sys: SusceptanceSystem) -> FlowSolution:
    _check_nonsingular(sys.bprime)
    n = sys.bprime.shape[0]
    th = np.linalg.solve(sys.bprime, sys.injections) if n else np.zeros(0)
    if n and np.max(np.abs(sys.bprime @ th - sys.injections)) > RESIDUAL_TOL:
        # one step of iterative refinement for badly scaled systems
        th = th + np.linalg.solve(sys.bprime, sys.injections - sys.bprime @ th)
    theta = {sys.slack: 0.0}
    for b, i in sys.bus_index.items():
        theta[b] = float(th[i])
    flow = {br.id: sys.base_power * (theta[br.from_bus] - theta[br.to_bus]) / br.reactance
            for br in sys.branches}
    return FlowSolution({b: theta[b] for b in sorted(theta)}, flow, True, sys.base_power)


def solve_case(case: GridCase) -> FlowSolution:
    """DC flow of every island; each island needs its own slack bus."""
    theta, flow = {}, {}
    for isl in islands(case):
        sol = solve_dc(build_system(case, isl))
        theta.update(sol.theta)
        flow.update(sol.flow)
    return FlowSolution({b: theta[b] for b in sorted(theta)},
                        {i: flow[i] for i in sorted(flow)}, True, case.base_power)


# --------------------------------------------------------------------------- #
# screening criteria
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Thresholds:
    c1: float = 0.10
    c2: float = 1.00
    c3: float = 0.05
    c4: float = 0.10


@dataclass(frozen=True)
class CriteriaReport:
    contingency: tuple[int, ...]
    c1: float
    c2: float
    c3: float
    c4: float
    flags: tuple[bool, bool, bool, bool]
    stranded: tuple[int, ...] = ()

    @property
    def any_flag(self) -> bool:
        return any(self.flags)


def _slack_reduced(case: GridCase, exclude: set[int]):
    """Reduced B' over every bus still tied to a slack bus, slack rows dropped."""
    post = case.with_outages(exclude) if exclude else case
    kept, stranded, slacks = [], [], set()
    for isl in islands(post):
        s = island_slack(case, isl)
        if s is None:
            stranded.extend(isl)
        else:
            slacks.add(s)
            kept.extend(isl)
    order = sorted(b for b in kept if b not in slacks)
    index = {b: i for i, b in enumerate(order)}
    n = len(order)
    bp = np.zeros((n, n))
    live = []
    for br in post.in_service:
        if br.from_bus in stranded or br.to_bus in stranded:
            continue
        live.append(br)
        y = 1.0 / br.reactance
        i, j = index.get(br.from_bus), index.get(br.to_bus)
        if i is not None:
            bp[i, i] += y
        if j is not None:
            bp[j, j] += y
        if i is not None and j is not None:
            bp[i, j] -= y
            bp[j, i] -= y
    p = net_injection_mw(case)
    inj = np.array([p[b] for b in order]) / case.base_power
    return bp, order, inj, sorted(stranded), live


def screening_criteria(case: GridCase, base: FlowSolution, contingency: Iterable[int],
                       thresholds: Thresholds | None = None) -> CriteriaReport:
    """Cascading-risk indicators of removing ``contingency`` from ``case``.

    c1 is the relative change of det(B') on the buses still tied to a slack,
    c2 the worst post-contingency loading, c3 / c4 the max and 2-norm of the
    first-iteration angle correction starting from the base angles.
    """
    thresholds = thresholds or Thresholds()
    out = tuple(sorted(set(contingency)))
    for i in out:
        if not case.branch(i).status:
            raise DCFlowError(f"contingency branch {i} is not in service")

    if not out:
        c2 = max((abs(f) / case.branch(i).rating for i, f in base.flow.items()), default=0.0)
        return CriteriaReport(out, 0.0, c2, 0.0, 0.0, (False, c2 > thresholds.c2, False, False))

    bp0, _, _, _, _ = _slack_reduced(case, set())
    bp1, order, inj, stranded, live = _slack_reduced(case, set(out))
    sign0, log0 = np.linalg.slogdet(bp0) if bp0.size else (1.0, 0.0)
    sign1, log1 = np.linalg.slogdet(bp1) if bp1.size else (1.0, 0.0)
    if sign0 == 0:
        raise SingularSystemError("base-case B' is singular")
    if sign1 == 0:
        c1 = 1.0
    else:
        c1 = abs(sign0 * sign1 * np.exp(log1 - log0) - 1.0)

    if order:
        _check_nonsingular(bp1)
        th0 = np.array([base.theta[b] for b in order])
        mismatch = inj - bp1 @ th0
        dtheta = np.linalg.solve(bp1, mismatch)
        th1 = th0 + dtheta
    else:
        dtheta = th1 = np.zeros(0)
    theta = {b: float(t) for b, t in zip(order, th1)}
    loading = 0.0
    for br in live:
        f = case.base_power * (theta.get(br.from_bus, 0.0) - theta.get(br.to_bus, 0.0)) / br.reactance
        loading = max(loading, abs(f) / br.rating)
    c3 = float(np.max(np.abs(dtheta))) if dtheta.size else 0.0
    c4 = float(np.linalg.norm(dtheta)) if dtheta.size else 0.0
    vals = (float(c1), loading, c3, c4)
    lim = (thresholds.c1, thresholds.c2, thresholds.c3, thresholds.c4)
    return CriteriaReport(out, *vals, tuple(v > t for v, t in zip(vals, lim)), tuple(stranded))


# --------------------------------------------------------------------------- #
# minimum load shed
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class ShedPlan:
    shed: dict[int, float]
    total_shed: float
    feasible: bool = True
    generation: dict[int, float] = field(default_factory=dict)
    flow: dict[int, float] = field(default_factory=dict)


def reference_bus(case: GridCase, island: Iterable[int]) -> int:
    """Slack bus of the island, else the bus of its largest generator, else its lowest bus."""
    isl = set(island)
    slack = island_slack(case, isl)
    if slack is not None:
        return slack
    gens = [g for g in case.generators if g.bus in isl and g.p_max > 0]
    if gens:
        return min(gens, key=lambda g: (-g.p_max, g.bus)).bus
    return min(isl)


def _clean(x, lo, hi, tol=1e-9):
    x = min(max(x, lo), hi)
    if x - lo < tol:
        return lo
    if hi - x < tol:
        return hi
    return x


def min_load_shed(case: GridCase, outages: Iterable[int] = (), redispatch: str = "free") -> ShedPlan:
    """Least total curtailment that leaves a within-rating DC flow after ``outages``.

    ``redispatch="free"`` lets every generator move within [0, p_max];
    ``"proportional"`` moves all generators of an island by one common
    fraction of their p_max.
    """
    if redispatch not in ("free", "proportional"):
        raise ValueError(f"unknown redispatch mode {redispatch!r}")
    post = case.with_outages(outages)
    shed: dict[int, float] = {}
    generation: dict[int, float] = {}
    flow: dict[int, float] = {}
    for isl in islands(post):
        loads = [ld for ld in post.loads if ld.bus in isl]
        gens = [g for g in post.generators if g.bus in isl]
        if sum(g.p_max for g in gens) <= 0:
            for ld in loads:
                shed[ld.id] = ld.p
            for g in gens:
                generation[g.id] = 0.0
            continue
        s, gen, fl = _island_lp(post, isl, loads, gens, redispatch)
        shed.update(s)
        generation.update(gen)
        flow.update(fl)
    shed = {i: shed[i] for i in sorted(shed)}
    return ShedPlan(shed, float(sum(shed.values())), True,
                    {i: generation[i] for i in sorted(generation)}, {i: flow[i] for i in sorted(flow)})


def _island_lp(case, isl, loads, gens, redispatch):
    buses = sorted(isl)
    ref = reference_bus(case, isl)
    others = [b for b in buses if b != ref]
    tidx = {b: i for i, b in enumerate(others)}
    branches = sorted((br for br in case.in_service if br.from_bus in isl), key=lambda b: b.id)
    nl = len(loads)
    ng = 1 if redispatch == "proportional" else len(gens)
    nt = len(others)
    nv = nl + ng + nt
    bidx = {b: i for i, b in enumerate(buses)}
    base = case.base_power

    a_eq = np.zeros((len(buses), nv))
    b_eq = np.zeros(len(buses))
    for k, ld in enumerate(loads):
        a_eq[bidx[ld.bus], k] = 1.0
        b_eq[bidx[ld.bus]] += ld.p
    for k, g in enumerate(gens):
        col = nl if redispatch == "proportional" else nl + k
        a_eq[bidx[g.bus], col] += g.p_max if redispatch == "proportional" else 1.0

    flow_rows = []
    for br in branches:
        row = np.zeros(nv)
        y = base / br.reactance
        if br.from_bus in tidx:
            row[nl + ng + tidx[br.from_bus]] += y
        if br.to_bus in tidx:
            row[nl + ng + tidx[br.to_bus]] -= y
        flow_rows.append(row)
        # flow leaves from_bus and enters to_bus
        a_eq[bidx[br.from_bus]] -= row
        a_eq[bidx[br.to_bus]] += row

    a_ub = np.array(flow_rows + [-r for r in flow_rows]) if flow_rows else None
    b_ub = np.array([br.rating for br in branches] * 2) if flow_rows else None
    bounds = [(0.0, ld.p) for ld in loads]
    if redispatch == "proportional":
        bounds.append((0.0, 1.0))
    else:
        bounds += [(0.0, g.p_max) for g in gens]
    bounds += [(None, None)] * nt
    cost = np.zeros(nv)
    cost[:nl] = 1.0
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise DCFlowError(f"load-shed LP failed: {res.message}")
    x = res.x
    shed = {ld.id: _clean(float(x[k]), 0.0, ld.p) for k, ld in enumerate(loads)}
    if redispatch == "proportional":
        gen = {g.id: float(x[nl]) * g.p_max for g in gens}
    else:
        gen = {g.id: _clean(float(x[nl + k]), 0.0, g.p_max) for k, g in enumerate(gens)}
    fl = {br.id: float(r @ x) for br, r in zip(branches, flow_rows)}
    return shed, gen, fl
