import itertools
import time
from concurrent.futures import ThreadPoolExecutor

import pytest

import oracle_cascade
from hiddenfail.cascade import (
    Cause, ScenarioSpec, enumerate_stimulus, run_cascade, simulate_outages, trace_summary_json,
    trace_to_ndjson,
)
from hiddenfail.critical import nominal
from hiddenfail.fixtures import NAMES, load_fixture
from hiddenfail.netmodel import branch_ref, bus_ref, islands
from hiddenfail.relays import Location, enumerate_hidden_failures, lookup_mode, SchemeKind


def spec(fault, hidden=(), **kw):
    return ScenarioSpec(fault, tuple(hidden), **kw)


def test_parallel_lines_misoperation():
    case = load_fixture("parallel")
    t = run_cascade(case, spec(branch_ref(1)))
    assert t.load_lost == 100.0 and t.lines_tripped == 2
    causes = [(e.cause, str(e.element)) for e in t.events]
    assert (Cause.CORRECT_CLEARING, "branch:1") in causes
    assert (Cause.MISOPERATION, "branch:2") in causes


def test_parallel_lines_nominal_is_secure():
    t = run_cascade(nominal(load_fixture("parallel")), spec(branch_ref(1)))
    assert t.load_lost == 0.0 and t.tripped == (1,)
    flow = dict(t.island_flows)[frozenset({1, 2})].flow
    assert abs(abs(flow[2]) - 100.0) < 1e-9


def test_idaho_motif():
    t = run_cascade(load_fixture("idaho"), spec(branch_ref(1), overload_trip_factor=1.0))
    seq = [(e.step, e.cause, str(e.element)) for e in t.events if e.element.kind == "branch"]
    assert seq == [
        (0, Cause.INITIATING_FAULT, "branch:1"),
        (0, Cause.CORRECT_CLEARING, "branch:1"),
        (0, Cause.MISOPERATION, "branch:2"),
        (1, Cause.OVERLOAD_TRIP, "branch:3"),
    ]
    assert t.load_lost == 120.0 and t.lines_tripped == 3
    assert t.events[-1].cause is Cause.ISLAND_BLACKOUT


def test_stimulus_mapping():
    path = load_fixture("path4")
    assert enumerate_stimulus(path, branch_ref(2), 2).location is Location.IN_ZONE
    # relay on branch 2 (2-3): branch 3 (3-4) lies just beyond bus B, branch 1 just beyond bus A
    assert enumerate_stimulus(path, branch_ref(3), 2).location is Location.FORWARD_EXTERNAL_A
    assert enumerate_stimulus(path, branch_ref(1), 2).location is Location.FORWARD_EXTERNAL_B
    assert enumerate_stimulus(path, branch_ref(3), 1).location is Location.REVERSE_B
    # bus faults: the remote terminal itself is one hop, the next bus two
    assert enumerate_stimulus(path, bus_ref(2), 1).location is Location.FORWARD_EXTERNAL_A
    assert enumerate_stimulus(path, bus_ref(3), 1).location is Location.REVERSE_B
    assert enumerate_stimulus(path, bus_ref(4), 1).location is Location.NONE
    ring = load_fixture("ring6")
    long_path = ring.with_outages([6, 7])
    # relay on 1-2, fault on 4-5: three hops beyond bus 2
    assert enumerate_stimulus(long_path, branch_ref(4), 1).location is Location.NONE


def test_truncation_flag():
    case = load_fixture("ring6")
    t = simulate_outages(case, [1], overload_trip_factor=1.0, max_steps=1)
    assert t.depth <= 1
    full = simulate_outages(case, [1], overload_trip_factor=1.0)
    assert t.truncated == (full.lines_tripped > t.lines_tripped)
    short = simulate_outages(load_fixture("idaho"), [1, 2], overload_trip_factor=1.0, max_steps=1)
    assert not short.truncated and short.load_lost == 120.0


def test_serialisation_is_stable():
    case = load_fixture("ring6")
    s = spec(branch_ref(1))
    a, b = run_cascade(case, s), run_cascade(case, s)
    assert trace_to_ndjson(a) == trace_to_ndjson(b)
    assert trace_summary_json(a) == trace_summary_json(b)
    first = trace_to_ndjson(a).splitlines()[0]
    assert first.startswith('{"step": 0, "cause": "INITIATING_FAULT", "element": "branch:1"')
    with ThreadPoolExecutor(4) as pool:
        outs = list(pool.map(lambda _: trace_to_ndjson(run_cascade(case, s)), range(8)))
    assert set(outs) == {trace_to_ndjson(a)}


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(branch_ref(1), max_steps=0)
    with pytest.raises(ValueError):
        ScenarioSpec(branch_ref(1), overload_trip_factor=0.9)
    with pytest.raises(ValueError):
        run_cascade(load_fixture("ring6"), spec(branch_ref(99)))


def _conservation(t):
    snap = t.terminal_state
    for isl in islands(snap):
        gen = sum(g.p for g in snap.generators if g.bus in isl)
        load = sum(ld.p for ld in snap.loads if ld.bus in isl)
        assert abs(gen - load) < 1e-6


def scenarios(case):
    """Every initiating fault with up to two latent failures on a nominal case."""
    base = nominal(case)
    modes = [(g.branch, m) for g in base.protection for m in enumerate_hidden_failures(g.scheme, g.profile)]
    faults = [branch_ref(br.id) for br in base.branches] + [bus_ref(b) for b in base.bus_ids]
    hidden_sets = [()] + [(m,) for m in modes] + [
        pair for pair in itertools.combinations(modes, 2) if pair[0][0] != pair[1][0]]
    return base, faults, hidden_sets


def _health(hidden):
    out = {}
    for b, m in hidden:
        out.setdefault(b, {})[m.component] = m.state
    return out


def test_cascade_matches_state_space_oracle():
    start = time.perf_counter()
    runs = 0
    for name in NAMES:
        case = load_fixture(name)
        # the fixture's own recorded latent failures
        own = {g.branch: dict(g.health) for g in case.protection if g.health}
        for br in case.branches:
            t = run_cascade(case, spec(branch_ref(br.id)))
            assert (list(t.tripped), t.load_lost) == pytest.approx(
                oracle_cascade.run(case, ("branch", br.id), own)), (name, br.id)
            _conservation(t)
            runs += 1
        base, faults, hidden_sets = scenarios(case)
        for hidden in hidden_sets:
            h = _health(hidden)
            for f in faults:
                t = run_cascade(base, spec(f, hidden))
                want = oracle_cascade.run(base, (f.kind, f.id), h)
                assert list(t.tripped) == want[0], (name, f, hidden)
                assert abs(t.load_lost - want[1]) < 1e-9, (name, f, hidden)
                runs += 1
    assert runs > 1000
    assert time.perf_counter() - start < 10.0


@pytest.mark.parametrize("name", NAMES)
def test_forced_outages_exhaustive(name):
    case = load_fixture(name)
    ids = [br.id for br in case.branches]
    for k in range(len(ids) + 1):
        for outs in itertools.combinations(ids, k):
            t = simulate_outages(case, outs)
            state, lost = oracle_cascade.fixed_point(case, set(outs))
            assert list(t.tripped) == sorted(state)
            assert abs(t.load_lost - lost) < 1e-9


@pytest.mark.parametrize("name", NAMES)
def test_n_minus_1_secure_without_latent_failures(name):
    case = nominal(load_fixture(name))
    for br in case.branches:
        t = run_cascade(case, spec(branch_ref(br.id)))
        t_out = simulate_outages(case, [br.id])
        assert t.load_lost == t_out.load_lost
        if t_out.lines_tripped == 1 and t_out.load_lost == 0.0:
            assert t.tripped == (br.id,)


def test_rov_depth_monotone_exposure():
    ring = load_fixture("ring6")
    from hiddenfail.netmodel import region_of_vulnerability
    for br in ring.branches:
        prev = set()
        for depth in range(4):
            now = set(region_of_vulnerability(ring, branch_ref(br.id), depth).branches)
            assert prev <= now
            prev = now


def test_hidden_mode_must_match_scheme():
    ring = load_fixture("ring6")
    wrong = lookup_mode(SchemeKind.DIFFERENTIAL, "restraint", "SHORTED")
    with pytest.raises(ValueError):
        run_cascade(ring, spec(branch_ref(1), [(1, wrong)]))
