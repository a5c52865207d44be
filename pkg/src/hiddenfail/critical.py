"""Critical-relay ranking, random-chemistry search for minimal cascading
outage sets, and the n-k versus cascade comparison."""

from __future__ import annotations

import itertools
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

from .cascade import Cause, ScenarioSpec, run_cascade, run_multi_fault, simulate_outages
from .dcflow import Thresholds, min_load_shed, screening_criteria, solve_case
from .netmodel import GridCase, branch_ref, region_of_vulnerability
from .relays import HiddenFailureMode, enumerate_hidden_failures

#: share of protective operations that are misoperations, used as the default prior
DEFAULT_PRIOR_MISOP = 0.10
#: share of n-2 contingencies caused by relay misoperation; cited in reports only
CITED_N2_MISOP_SHARE = 0.70
DEFAULT_BLACKOUT_FRACTION = 0.10


class EnumerationCapError(ValueError):
    pass


@dataclass(frozen=True)
class RelayImpact:
    branch: int
    scheme: str
    worst_load_lost: float
    expected_load_lost: float
    scenarios: int
    flagged_by_criteria: int
    modes: int


@dataclass(frozen=True)
class MinimalSet:
    elements: tuple[int, ...]
    load_lost: float
    minimal: bool


@dataclass(frozen=True)
class NkRow:
    outages: tuple[int, ...]
    mls_loss: float
    cascade_loss: float

    @property
    def amplification(self) -> float:
        return self.cascade_loss - self.mls_loss


def nominal(case: GridCase) -> GridCase:
    """``case`` with every protection group restored to all-OK health."""
    return replace(case, protection=tuple(replace(g, health=()) for g in case.protection))


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def relay_scenarios(case: GridCase, rov_depth: int = 1) -> list[tuple[int, HiddenFailureMode, int]]:
    """(relay branch, failure mode, faulted branch) triples in a fixed order."""
    lines = sorted(br.id for br in case.in_service)
    regions = {f: region_of_vulnerability(case, branch_ref(f), rov_depth) for f in lines}
    out = []
    for b in lines:
        g = case.group(b)
        if g is None:
            continue
        for mode in enumerate_hidden_failures(g.scheme, g.profile):
            for f in lines:
                if branch_ref(b) in regions[f]:
                    out.append((b, mode, f))
    return out


def rank_relays(case: GridCase, prior_misop: float = DEFAULT_PRIOR_MISOP, rov_depth: int = 1,
                overload_trip_factor: float = 1.25, thresholds: Thresholds | None = None,
                jobs: int = 1) -> list[RelayImpact]:
    """Score each relay by the extra load lost when one of its failure modes is latent.

    Each scenario pairs one mode with one branch fault inside the relay's
    region; the loss counted is what the latent failure adds over the same
    fault with healthy protection. ``expected_load_lost`` is the prior times
    the mean scenario loss. Equal scores are broken first in favour of relays
    that already carry a recorded latent failure in ``case``, then by branch id.
    """
    if not 0.0 <= prior_misop <= 1.0:
        raise ValueError("prior_misop must lie in [0, 1]")
    base_case = nominal(case)
    base_flow = solve_case(base_case)
    lines = sorted(br.id for br in base_case.in_service)

    def run(f, hidden=()):
        return run_cascade(base_case, ScenarioSpec(branch_ref(f), hidden, rov_depth, overload_trip_factor))

    baseline = dict(zip(lines, (t.load_lost for t in _map(run, lines, jobs))))
    triples = relay_scenarios(base_case, rov_depth)

    def score(triple):
        b, mode, f = triple
        trace = run(f, ((b, mode),))
        step0 = {e.element.id for e in trace.events
                 if e.step == 0 and e.element.kind == "branch" and e.cause is not Cause.INITIATING_FAULT}
        crit = screening_criteria(base_case, base_flow, step0, thresholds)
        return max(trace.load_lost - baseline[f], 0.0), crit.any_flag

    results = _map(score, triples, jobs)
    per: dict[int, list] = {b: [] for b in lines}
    for (b, _, _), res in zip(triples, results):
        per[b].append(res)
    out = []
    recorded = {g.branch: len(g.health) for g in case.protection}
    for b in lines:
        g = base_case.group(b)
        if g is None:
            continue
        rows = per[b]
        losses = [r[0] for r in rows]
        worst = max(losses, default=0.0)
        expected = prior_misop * sum(losses) / len(losses) if losses else 0.0
        out.append(RelayImpact(b, g.scheme.value, worst, expected, len(rows), sum(1 for r in rows if r[1]),
                               len(enumerate_hidden_failures(g.scheme, g.profile))))
    out.sort(key=lambda r: (-r.expected_load_lost, -recorded.get(r.branch, 0), r.branch))
    return out


class _LossOracle:
    def __init__(self, case, overload_trip_factor, max_steps=50):
        self.case = case
        self.factor = overload_trip_factor
        self.max_steps = max_steps
        self.cache: dict[frozenset, float] = {}

    def __call__(self, outages: Iterable[int]) -> float:
        key = frozenset(outages)
        if key not in self.cache:
            self.cache[key] = simulate_outages(self.case, key, self.factor, self.max_steps).load_lost
        return self.cache[key]


def minimal_cascading_sets(case: GridCase, blackout_threshold: float | None = None, k0: int = 3,
                           trials: int = 1000, seed: int = 0,
                           overload_trip_factor: float = 1.25) -> list[MinimalSet]:
    """Random-chemistry search for small outage sets whose cascade sheds at least the threshold.

    Each trial draws ``k0`` branches; if their joint outage reaches the
    threshold, members are dropped in random order while the property
    holds, until no single removal keeps it.
    """
    if k0 < 1 or trials < 1:
        raise ValueError("k0 and trials must be >= 1")
    if blackout_threshold is None:
        blackout_threshold = DEFAULT_BLACKOUT_FRACTION * case.total_load
    rng = random.Random(seed)
    loss = _LossOracle(case, overload_trip_factor)
    if loss(()) >= blackout_threshold:
        # the intact case cascades by itself; the empty set is the only minimal one
        return [MinimalSet((), loss(()), True)]
    lines = sorted(br.id for br in case.in_service)
    k = min(k0, len(lines))
    found: set[tuple[int, ...]] = set()
    if k == 0:
        return []
    for _ in range(trials):
        current = set(rng.sample(lines, k))
        if loss(current) < blackout_threshold:
            continue
        shrunk = True
        while shrunk:
            shrunk = False
            order = sorted(current)
            rng.shuffle(order)
            for e in order:
                trial = current - {e}
                if loss(trial) >= blackout_threshold:
                    current = trial
                    shrunk = True
        found.add(tuple(sorted(current)))
    out = []
    for s in sorted(found, key=lambda t: (len(t), t)):
        minimal = all(loss(set(s) - {e}) < blackout_threshold for e in s)
        out.append(MinimalSet(s, loss(s), minimal))
    return out


def n_minus_k_distinction_report(case: GridCase, k: int, cap: int = 10000, rov_depth: int = 1,
                                 overload_trip_factor: float = 1.25, jobs: int = 1) -> list[NkRow]:
    """Direct load-shed loss versus cascade loss for every k-branch fault set."""
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    lines = sorted(br.id for br in case.in_service)
    count = math.comb(len(lines), k)
    if count > cap:
        raise EnumerationCapError(f"{count} subsets of size {k} exceed the enumeration cap {cap}")
    subsets = list(itertools.combinations(lines, k))

    def row(s):
        a = min_load_shed(case, s).total_shed
        b = run_multi_fault(case, [branch_ref(i) for i in s], rov_depth, overload_trip_factor).load_lost
        return NkRow(s, a, b)

    rows = _map(row, subsets, jobs)
    rows.sort(key=lambda r: (-r.amplification, r.outages))
    return rows
