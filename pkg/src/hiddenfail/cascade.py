"""Quasi-steady-state cascade engine.

A run has two phases. Step 0 is the protection response to the initiating
fault(s): the faulted element is cleared (or remote backup removes more),
and latent hidden failures inside the region of vulnerability get their
one chance to misoperate. Steps 1.. alternate island balancing, a DC
re-solve and simultaneous overload tripping until nothing else trips.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .dcflow import FlowSolution, build_system, reference_bus, solve_dc
from .netmodel import ElementRef, GridCase, bus_ref, branch_ref, islands, region_of_vulnerability
from .relays import (Classification, FaultStimulus, HiddenFailureMode, Location, evaluate_scheme,
                     normalize_health)

_TRIP_TOL = 1e-9
_BALANCE_TOL = 1e-9


class Cause(enum.Enum):
    INITIATING_FAULT = "INITIATING_FAULT"
    CORRECT_CLEARING = "CORRECT_CLEARING"
    MISOPERATION = "MISOPERATION"
    REMOTE_BACKUP = "REMOTE_BACKUP"
    BREAKER_FAILURE_SPREAD = "BREAKER_FAILURE_SPREAD"
    OVERLOAD_TRIP = "OVERLOAD_TRIP"
    ISLAND_SHED = "ISLAND_SHED"
    ISLAND_BLACKOUT = "ISLAND_BLACKOUT"


@dataclass(frozen=True)
class ScenarioSpec:
    initiating_fault: ElementRef
    hidden_failures: tuple[tuple[int, HiddenFailureMode], ...] = ()
    rov_depth: int = 1
    overload_trip_factor: float = 1.25
    max_steps: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.overload_trip_factor < 1:
            raise ValueError("overload_trip_factor must be >= 1")
        if self.rov_depth < 0:
            raise ValueError("rov_depth must be >= 0")
        object.__setattr__(self, "hidden_failures", tuple(self.hidden_failures))


@dataclass(frozen=True)
class CascadeEvent:
    step: int
    cause: Cause
    element: ElementRef
    detail: str = ""
    mw: float = 0.0

    def to_dict(self) -> dict:
        return {"step": self.step, "cause": self.cause.value, "element": str(self.element),
                "detail": self.detail, "mw": self.mw}


@dataclass(frozen=True)
class CascadeTrace:
    events: tuple[CascadeEvent, ...]
    load_lost: float
    lines_tripped: int
    depth: int
    terminal_state: GridCase
    island_flows: tuple[tuple[frozenset[int], FlowSolution], ...] = ()
    truncated: bool = False
    initial_load: float = 0.0

    @property
    def tripped(self) -> tuple[int, ...]:
        return tuple(sorted(br.id for br in self.terminal_state.branches if not br.status))

    @property
    def served_load(self) -> float:
        return self.terminal_state.total_load

    def summary(self) -> dict:
        return {
            "case": self.terminal_state.name,
            "initial_load_mw": self.initial_load,
            "served_load_mw": self.served_load,
            "load_lost_mw": self.load_lost,
            "lines_tripped": self.lines_tripped,
            "tripped": list(self.tripped),
            "depth": self.depth,
            "truncated": self.truncated,
            "events": len(self.events),
        }


def trace_to_ndjson(trace: CascadeTrace) -> str:
    return "".join(json.dumps(e.to_dict()) + "\n" for e in trace.events)


def trace_summary_json(trace: CascadeTrace) -> str:
    return json.dumps(trace.summary(), indent=2) + "\n"


# --------------------------------------------------------------------------- #
# stimulus mapping
# --------------------------------------------------------------------------- #

def _bus_distances(case: GridCase, source: int, skip_branch: int) -> dict[int, int]:
    adj: dict[int, set[int]] = {}
    for br in case.in_service:
        if br.id == skip_branch:
            continue
        adj.setdefault(br.from_bus, set()).add(br.to_bus)
        adj.setdefault(br.to_bus, set()).add(br.from_bus)
    dist = {source: 0}
    queue = deque([source])
    while queue:
        b = queue.popleft()
        for nxt in sorted(adj.get(b, ())):
            if nxt not in dist:
                dist[nxt] = dist[b] + 1
                queue.append(nxt)
    return dist


def enumerate_stimulus(case: GridCase, fault_element: ElementRef, protected_branch: int) -> FaultStimulus:
    """Where ``fault_element`` sits as seen by the relays of ``protected_branch``.

    The fault is placed beyond whichever terminal it is topologically
    nearer to (ties go beyond bus B). One adjacency hop past the remote bus
    is inside the opposite end's Zone-2 overreach (FORWARD_EXTERNAL), two
    hops is Zone-3 only (REVERSE of the near end), farther is NONE.
    """
    prot = case.branch(protected_branch)
    if fault_element.kind == "branch":
        if fault_element.id == protected_branch:
            return FaultStimulus(Location.IN_ZONE)
        fault_buses = set(case.branch(fault_element.id).buses)
    else:
        case.bus(fault_element.id)
        fault_buses = {fault_element.id}

    def reach(terminal):
        dist = _bus_distances(case, terminal, prot.id)
        d = [dist[b] for b in fault_buses if b in dist]
        return min(d) + 1 if d else None

    ra, rb = reach(prot.from_bus), reach(prot.to_bus)
    if rb is not None and (ra is None or rb <= ra):
        near, hops = "B", rb
    elif ra is not None:
        near, hops = "A", ra
    else:
        return FaultStimulus(Location.NONE)
    if hops == 1:
        return FaultStimulus(Location.FORWARD_EXTERNAL_A if near == "B" else Location.FORWARD_EXTERNAL_B)
    if hops == 2:
        return FaultStimulus(Location.REVERSE_B if near == "B" else Location.REVERSE_A)
    return FaultStimulus(Location.NONE)


# --------------------------------------------------------------------------- #
# engine
# --------------------------------------------------------------------------- #

def latent_health(case: GridCase, hidden: Iterable[tuple[int, HiddenFailureMode]] = ()) -> dict[int, dict[str, str]]:
    """Non-nominal health per branch: the case's own state plus injected modes."""
    out: dict[int, dict[str, str]] = {}
    for g in case.protection:
        if g.health:
            out[g.branch] = dict(g.health)
    for branch_id, mode in hidden:
        g = case.group(branch_id)
        if g is None:
            raise ValueError(f"branch {branch_id} has no protection group")
        if g.scheme is not mode.scheme:
            raise ValueError(f"{mode} does not apply to branch {branch_id} ({g.scheme.value})")
        out.setdefault(branch_id, {})[mode.component] = mode.state
    for branch_id, h in out.items():
        normalize_health(case.group(branch_id).scheme, h)
    return {b: out[b] for b in sorted(out)}


class _Tripper:
    def __init__(self, case: GridCase):
        self.status = {br.id: br.status for br in case.branches}
        self.events: list[CascadeEvent] = []

    def trip(self, step, cause, branch_id, detail=""):
        if not self.status.get(branch_id, False):
            return False
        self.status[branch_id] = False
        self.events.append(CascadeEvent(step, cause, branch_ref(branch_id), detail))
        return True

    def trip_bus(self, step, cause, case, bus_id, detail=""):
        for i in case.branches_at(bus_id):
            self.trip(step, cause, i, detail)


def _evaluate(case, branch_id, health, stimulus):
    br = case.branch(branch_id)
    g = case.group(branch_id)
    return evaluate_scheme(g.scheme, health.get(branch_id), stimulus, ends=br.buses)


def protection_response(case: GridCase, faults: Sequence[ElementRef],
                        health: Mapping[int, Mapping[str, str]], rov_depth: int = 1) -> _Tripper:
    """Step-0 trips for simultaneous ``faults`` given latent ``health``."""
    tripper = _Tripper(case)
    for f in faults:
        if not case.has_element(f):
            raise ValueError(f"unknown element {f}")
    faults = sorted(set(faults), key=lambda r: r.sort_key)
    for f in faults:
        tripper.events.append(CascadeEvent(0, Cause.INITIATING_FAULT, f))
    for f in faults:
        if f.kind == "bus":
            tripper.trip_bus(0, Cause.CORRECT_CLEARING, case, f.id, f"bus fault {f.id}")
            continue
        br = case.branch(f.id)
        if not br.status:
            continue
        if case.group(f.id) is None:
            tripper.trip(0, Cause.CORRECT_CLEARING, f.id)
            continue
        d = _evaluate(case, f.id, health, FaultStimulus(Location.IN_ZONE))
        if d.classification is Classification.FAILURE_TO_TRIP:
            tripper.trip(0, Cause.REMOTE_BACKUP, f.id, "local protection failed to trip")
            for end, tripped in ((br.from_bus, d.trip_A), (br.to_bus, d.trip_B)):
                if not tripped:
                    tripper.trip_bus(0, Cause.REMOTE_BACKUP, case, end, f"remote backup for bus {end}")
        else:
            tripper.trip(0, Cause.CORRECT_CLEARING, f.id)
        if d.transfer_trip_bus is not None:
            tripper.trip_bus(0, Cause.BREAKER_FAILURE_SPREAD, case, d.transfer_trip_bus,
                             f"transfer trip of bus {d.transfer_trip_bus}")

    for b in sorted(health):
        push = []
        for f in faults:
            if f == branch_ref(b) or not case.branch(b).status:
                continue
            if branch_ref(b) not in region_of_vulnerability(case, f, rov_depth):
                continue
            stim = enumerate_stimulus(case, f, b)
            d = _evaluate(case, b, health, stim)
            if d.classification is Classification.MISOPERATION:
                push.append((d, f, stim))
        for d, f, stim in push:
            tripper.trip(0, Cause.MISOPERATION, b, f"{stim.location.value} fault {f}")
            if d.transfer_trip_bus is not None:
                tripper.trip_bus(0, Cause.BREAKER_FAILURE_SPREAD, case, d.transfer_trip_bus,
                                 f"transfer trip of bus {d.transfer_trip_bus}")
    return tripper


def _with_status(case: GridCase, status: Mapping[int, bool]) -> GridCase:
    return replace(case, branches=tuple(replace(br, status=status[br.id]) for br in case.branches))


def _balance(case, served, dispatch, step, events):
    """Rebalance every island in place; emit shed / blackout events."""
    for isl in islands(case):
        loads = [ld for ld in case.loads if ld.bus in isl]
        gens = [g for g in case.generators if g.bus in isl]
        demand = sum(served[ld.id] for ld in loads)
        cap = sum(g.p_max for g in gens)
        ref = bus_ref(min(isl))
        if demand <= _BALANCE_TOL:
            for ld in loads:
                served[ld.id] = 0.0
            for g in gens:
                dispatch[g.id] = 0.0
            continue
        if cap <= 0:
            for ld in loads:
                served[ld.id] = 0.0
            events.append(CascadeEvent(step, Cause.ISLAND_BLACKOUT, ref,
                                       f"no generation in island {sorted(isl)}", demand))
            continue
        if demand > cap + _BALANCE_TOL:
            frac = cap / demand
            for ld in loads:
                served[ld.id] *= frac
            for g in gens:
                dispatch[g.id] = g.p_max
            events.append(CascadeEvent(step, Cause.ISLAND_SHED, ref,
                                       f"generation deficit in island {sorted(isl)}", demand - cap))
            continue
        current = sum(dispatch[g.id] for g in gens)
        delta = demand - current
        if delta > 0:
            room = sum(g.p_max - dispatch[g.id] for g in gens)
            for g in gens:
                dispatch[g.id] += delta * (g.p_max - dispatch[g.id]) / room
        elif delta < 0:
            for g in gens:
                dispatch[g.id] *= demand / current


def _snapshot(case, status, served, dispatch):
    return replace(
        case,
        branches=tuple(replace(br, status=status[br.id]) for br in case.branches),
        generators=tuple(replace(g, p=dispatch[g.id]) for g in case.generators),
        loads=tuple(replace(ld, p=served[ld.id]) for ld in case.loads),
    )


def _solve_islands(snap: GridCase):
    out = []
    for isl in islands(snap):
        if len(isl) < 2:
            continue
        ref = reference_bus(snap, isl)
        out.append((isl, solve_dc(build_system(snap, isl, slack=ref))))
    return tuple(out)


def _propagate(case: GridCase, tripper: _Tripper, overload_trip_factor: float, max_steps: int) -> CascadeTrace:
    served = {ld.id: ld.p for ld in case.loads}
    dispatch = {g.id: g.p for g in case.generators}
    status = tripper.status
    events = tripper.events
    truncated = False
    step = 0
    while True:
        step += 1
        snap = _snapshot(case, status, served, dispatch)
        _balance(snap, served, dispatch, step, events)
        snap = _snapshot(case, status, served, dispatch)
        flows = _solve_islands(snap)
        over = sorted(i for _, sol in flows for i, f in sol.flow.items()
                      if abs(f) > snap.branch(i).rating * overload_trip_factor + _TRIP_TOL)
        if not over:
            break
        for i in over:
            f = next(sol.flow[i] for _, sol in flows if i in sol.flow)
            tripper.trip(step, Cause.OVERLOAD_TRIP, i, f"|flow| {abs(f):.6g} MW > "
                         f"{overload_trip_factor:g} x rating {snap.branch(i).rating:g} MW")
        if step >= max_steps:
            snap = _snapshot(case, status, served, dispatch)
            _balance(snap, served, dispatch, step, events)
            snap = _snapshot(case, status, served, dispatch)
            flows = _solve_islands(snap)
            # out of steps with branches still above their trip level
            truncated = any(abs(f) > snap.branch(i).rating * overload_trip_factor + _TRIP_TOL
                            for _, sol in flows for i, f in sol.flow.items())
            break
    load_lost = sum(ld.p - served[ld.id] for ld in case.loads)
    tripped = sum(1 for br in case.branches if br.status and not status[br.id])
    depth = max((e.step for e in events), default=0)
    return CascadeTrace(tuple(events), max(load_lost, 0.0), tripped, depth, snap, flows, truncated,
                        case.total_load)


def run_cascade(case: GridCase, spec: ScenarioSpec) -> CascadeTrace:
    health = latent_health(case, spec.hidden_failures)
    tripper = protection_response(case, [spec.initiating_fault], health, spec.rov_depth)
    return _propagate(case, tripper, spec.overload_trip_factor, spec.max_steps)


def run_multi_fault(case: GridCase, faults: Sequence[ElementRef], rov_depth: int = 1,
                    overload_trip_factor: float = 1.25, max_steps: int = 50,
                    hidden: Iterable[tuple[int, HiddenFailureMode]] = ()) -> CascadeTrace:
    """Cascade from several coincident faults, each exposing latent failures."""
    health = latent_health(case, hidden)
    tripper = protection_response(case, list(faults), health, rov_depth)
    return _propagate(case, tripper, overload_trip_factor, max_steps)


def simulate_outages(case: GridCase, outages: Iterable[int], overload_trip_factor: float = 1.25,
                     max_steps: int = 50) -> CascadeTrace:
    """Cascade after removing ``outages`` at once, with no relay involvement."""
    tripper = _Tripper(case)
    for i in sorted(set(outages)):
        tripper.trip(0, Cause.INITIATING_FAULT, i, "forced outage")
    return _propagate(case, tripper, overload_trip_factor, max_steps)
