"""Command-line front end.

Every subcommand writes a table (CSV, or JSON with ``--format json``) to
stdout, or into ``--out DIR`` as ``<command>.csv`` / ``<command>.json``.
``cascade`` additionally writes ``cascade.ndjson`` (one event per line).

Exit status: 0 on success, 1 on usage errors, 2 on data errors. Errors go
to stderr prefixed with ``error:``.

CSV headers:

    validate      element,rule,message
    flow          branch,from_bus,to_bus,flow_mw,flow_pu,loading
    screen        contingency,c1,c2,c3,c4,flag_c1,flag_c2,flag_c3,flag_c4,stranded
    cascade       step,cause,element,detail,mw
    rank          branch,scheme,worst_load_lost,expected_load_lost,scenarios,flagged_by_criteria,modes
    minimal-sets  size,elements,load_lost,minimal
    nminusk       outages,mls_loss,cascade_loss,amplification
    mitigate      strategy,effective_prior,failure_modes,total_expected_load_lost,total_worst_load_lost
    estimate      bus,theta_hat
    catalog       scheme,component,state,detectability,digital,digital_with_monitoring
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from . import fixtures
from .cascade import ScenarioSpec, run_cascade, trace_to_ndjson
from .critical import (DEFAULT_PRIOR_MISOP, EnumerationCapError, minimal_cascading_sets,
                       n_minus_k_distinction_report, rank_relays, _map)
from .dcflow import DCFlowError, Thresholds, screening_criteria, solve_case
from .mitigate import (Measurement, MeasurementKind, apply_monitoring, dc_state_estimate,
                       mitigation_comparison)
from .netmodel import CaseError, ElementRef, UnknownElementError, load_case, parse_case, validate
from .relays import HealthError, RelayProfile, UnknownFailureMode, catalog, lookup_mode


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fault(text: str) -> ElementRef:
    try:
        return ElementRef.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _hidden(text: str) -> tuple[int, str, str]:
    # BRANCH:component=STATE
    try:
        branch, rest = text.split(":", 1)
        comp, state = rest.split("=", 1)
        return int(branch), comp, state
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected BRANCH:component=STATE, got {text!r}") from None


def _profile(text: str) -> RelayProfile:
    try:
        return RelayProfile[text.upper()]
    except KeyError:
        names = ", ".join(p.name for p in RelayProfile)
        raise argparse.ArgumentTypeError(f"unknown profile {text!r} (choose from {names})") from None


def _probability(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--case", required=True, help="case file, or the name of a shipped fixture")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--rov-depth", type=int, default=1)
    common.add_argument("--prior", type=_probability, default=DEFAULT_PRIOR_MISOP)
    common.add_argument("--profile", type=_profile, default=None,
                        help="upgrade every relay to at least this profile first")
    for name, default in Thresholds().__dict__.items():
        common.add_argument(f"--threshold-{name}", type=float, default=default)
    common.add_argument("--overload-factor", type=float, default=1.25)
    common.add_argument("--out", type=Path, default=None, help="write output files into this directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for sweeps")

    parser = _Parser(prog="hiddenfail", description="Relay hidden-failure cascade analysis.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("validate", parents=[common], help="check a case file")
    sub.add_parser("flow", parents=[common], help="DC power flow")
    sub.add_parser("screen", parents=[common], help="criteria sweep over single-branch outages")
    p = sub.add_parser("cascade", parents=[common], help="simulate one initiating fault")
    p.add_argument("--fault", type=_fault, required=True, help="branch:ID or bus:ID")
    p.add_argument("--hidden", type=_hidden, action="append", default=[],
                   help="latent failure BRANCH:component=STATE (repeatable)")
    p.add_argument("--max-steps", type=int, default=50)
    sub.add_parser("rank", parents=[common], help="rank relays by expected load lost")
    p = sub.add_parser("minimal-sets", parents=[common], help="random-chemistry minimal cascading sets")
    p.add_argument("--threshold", type=float, default=None, help="blackout threshold in MW")
    p.add_argument("--k0", type=int, default=3)
    p.add_argument("--trials", type=int, default=1000)
    p = sub.add_parser("nminusk", parents=[common], help="load-shed loss versus cascade loss")
    p.add_argument("--k", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--cap", type=int, default=10000)
    p = sub.add_parser("mitigate", parents=[common], help="compare mitigation strategies")
    p.add_argument("--voting-n", type=int, default=3)
    p.add_argument("--voting-k", type=int, default=2)
    p = sub.add_parser("estimate", parents=[common], help="DC state estimation with bad-data rejection")
    p.add_argument("--measurements", type=Path, required=True)
    p.add_argument("--confidence", type=float, default=0.99)
    catalog_parser = sub.add_parser("catalog", help="list every enumerated failure mode")
    catalog_parser.add_argument("--out", type=Path, default=None)
    catalog_parser.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


# --------------------------------------------------------------------------- #
# output
# --------------------------------------------------------------------------- #

def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _table(header, rows) -> dict[str, str]:
    rows = [list(r) for r in rows]
    return {"csv": _csv(header, rows), "json": _json([dict(zip(header, r)) for r in rows])}


def _emit(args, name: str, outputs: dict[str, str], extra: dict[str, str] | None = None):
    text = outputs[args.format]
    if args.out is None:
        sys.stdout.write(text)
        return
    args.out.mkdir(parents=True, exist_ok=True)
    files = {f"{name}.{args.format}": text}
    files.update(extra or {})
    for fname, body in sorted(files.items()):
        with open(args.out / fname, "w", encoding="utf-8", newline="") as fh:
            fh.write(body)


# --------------------------------------------------------------------------- #
# commands
# --------------------------------------------------------------------------- #

def _read_case(args, strict=True):
    path = args.case
    if not os.path.exists(path):
        stem = Path(path).name.removesuffix(".json")
        if stem in fixtures.NAMES:
            return parse_case(fixtures.fixture_text(stem), strict=strict)
        raise DataError(f"case file not found: {path}")
    case = load_case(path, strict=strict)
    return case


def _prepared(args):
    case = _read_case(args)
    if args.profile is not None:
        case = apply_monitoring(case, args.profile)
    return case


def _thresholds(args) -> Thresholds:
    return Thresholds(args.threshold_c1, args.threshold_c2, args.threshold_c3, args.threshold_c4)


def cmd_validate(args) -> int:
    case = _read_case(args, strict=False)
    found = validate(case)
    _emit(args, "validate", _table(("element", "rule", "message"),
                                   ((v.element, v.rule, v.message) for v in found)))
    if found:
        for v in found:
            print(f"error: {v}", file=sys.stderr)
        return 2
    return 0


def cmd_flow(args) -> int:
    case = _prepared(args)
    sol = solve_case(case)
    rows = []
    for br in case.in_service:
        f = sol.flow[br.id]
        rows.append((br.id, br.from_bus, br.to_bus, f, f / case.base_power, abs(f) / br.rating))
    out = _table(("branch", "from_bus", "to_bus", "flow_mw", "flow_pu", "loading"), rows)
    out["json"] = _json({"theta": {str(b): t for b, t in sorted(sol.theta.items())},
                         "branches": json.loads(out["json"])})
    _emit(args, "flow", out)
    return 0


def cmd_screen(args) -> int:
    case = _prepared(args)
    base = solve_case(case)
    th = _thresholds(args)
    lines = sorted(br.id for br in case.in_service)
    reports = _map(lambda b: screening_criteria(case, base, (b,), th), lines, args.jobs)
    rows = [(" ".join(map(str, r.contingency)), r.c1, r.c2, r.c3, r.c4, *map(int, r.flags),
             " ".join(map(str, r.stranded))) for r in reports]
    _emit(args, "screen", _table(("contingency", "c1", "c2", "c3", "c4", "flag_c1", "flag_c2",
                                  "flag_c3", "flag_c4", "stranded"), rows))
    return 0


def cmd_cascade(args) -> int:
    case = _prepared(args)
    hidden = []
    for branch, comp, state in args.hidden:
        group = case.group(branch)
        if group is None:
            raise DataError(f"branch {branch} has no protection group")
        hidden.append((branch, lookup_mode(group.scheme, comp, state)))
    spec = ScenarioSpec(args.fault, tuple(hidden), args.rov_depth, args.overload_factor,
                        args.max_steps, args.seed)
    trace = run_cascade(case, spec)
    events = [e.to_dict() for e in trace.events]
    header = ("step", "cause", "element", "detail", "mw")
    out = {"csv": _csv(header, ([e[h] for h in header] for e in events)),
           "json": _json({**trace.summary(), "event_log": events})}
    _emit(args, "cascade", out, {"cascade.ndjson": trace_to_ndjson(trace)})
    return 0


def cmd_rank(args) -> int:
    case = _prepared(args)
    impacts = rank_relays(case, args.prior, args.rov_depth, args.overload_factor, _thresholds(args), args.jobs)
    header = ("branch", "scheme", "worst_load_lost", "expected_load_lost", "scenarios",
              "flagged_by_criteria", "modes")
    _emit(args, "rank", _table(header, ([getattr(r, h) for h in header] for r in impacts)))
    return 0


def cmd_minimal_sets(args) -> int:
    case = _prepared(args)
    found = minimal_cascading_sets(case, args.threshold, args.k0, args.trials, args.seed, args.overload_factor)
    rows = ((len(s.elements), " ".join(map(str, s.elements)), s.load_lost, int(s.minimal)) for s in found)
    _emit(args, "minimal-sets", _table(("size", "elements", "load_lost", "minimal"), rows))
    return 0


def cmd_nminusk(args) -> int:
    case = _prepared(args)
    rows = n_minus_k_distinction_report(case, args.k, args.cap, args.rov_depth, args.overload_factor, args.jobs)
    _emit(args, "nminusk", _table(("outages", "mls_loss", "cascade_loss", "amplification"),
                                  ((" ".join(map(str, r.outages)), r.mls_loss, r.cascade_loss, r.amplification)
                                   for r in rows)))
    return 0


def cmd_mitigate(args) -> int:
    case = _prepared(args)
    rows = mitigation_comparison(case, args.prior, args.rov_depth, args.overload_factor,
                                 (args.voting_n, args.voting_k), args.jobs)
    header = ("strategy", "effective_prior", "failure_modes", "total_expected_load_lost", "total_worst_load_lost")
    _emit(args, "mitigate", _table(header, ([getattr(r, h) for h in header] for r in rows)))
    return 0


def _read_measurements(path: Path) -> list[Measurement]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read measurements: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"measurements: {exc}") from None
    if isinstance(doc, dict):
        doc = doc.get("measurements")
    if not isinstance(doc, list):
        raise DataError("measurements must be a list of {kind, element, value, sigma}")
    out = []
    for i, m in enumerate(doc):
        try:
            out.append(Measurement(MeasurementKind(m["kind"]), int(m["element"]), float(m["value"]),
                                   float(m["sigma"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"measurement {i}: {exc}") from None
    return out


def cmd_estimate(args) -> int:
    case = _prepared(args)
    res = dc_state_estimate(case, _read_measurements(args.measurements), args.confidence)
    out = {"csv": _csv(("bus", "theta_hat"), sorted(res.theta_hat.items())), "json": _json(res.to_dict())}
    _emit(args, "estimate", out)
    return 0


def cmd_catalog(args) -> int:
    header = ("scheme", "component", "state", "detectability", "digital", "digital_with_monitoring")
    _emit(args, "catalog", _table(header, ([row[h] for h in header] for row in catalog())))
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "flow": cmd_flow,
    "screen": cmd_screen,
    "cascade": cmd_cascade,
    "rank": cmd_rank,
    "minimal-sets": cmd_minimal_sets,
    "nminusk": cmd_nminusk,
    "mitigate": cmd_mitigate,
    "estimate": cmd_estimate,
    "catalog": cmd_catalog,
}

_DATA_ERRORS = (DataError, CaseError, DCFlowError, UnknownElementError, UnknownFailureMode, HealthError,
                EnumerationCapError, ValueError, OSError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except _DATA_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        if isinstance(exc, UnknownFailureMode):
            msg = f"unknown failure mode {msg}"
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
