"""Bus/branch grid model, ``relaycase-1`` JSON ingestion and topology queries."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .relays import HealthError, RelayProfile, SchemeKind, normalize_health

FORMAT = "relaycase-1"


class CaseError(ValueError):
    pass


class CaseSyntaxError(CaseError):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"syntax error at line {line}, column {column}: {msg}")
        self.line = line
        self.column = column


class CaseSchemaError(CaseError):
    pass


class CaseSemanticError(CaseError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


class UnknownElementError(KeyError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    is_slack: bool = False


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    reactance: float
    rating: float
    status: bool = True

    @property
    def buses(self) -> tuple[int, int]:
        return (self.from_bus, self.to_bus)


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p: float
    p_max: float


@dataclass(frozen=True)
class Load:
    id: int
    bus: int
    p: float


@dataclass(frozen=True)
class ProtectionGroup:
    """Scheme attached to one branch plus its current (latent) component health.

    ``health`` keeps only non-OK components, sorted, so groups compare and
    hash by value.
    """

    branch: int
    scheme: SchemeKind
    profile: RelayProfile = RelayProfile.ELECTROMECHANICAL
    health: tuple[tuple[str, str], ...] = ()

    @property
    def health_map(self) -> dict[str, str]:
        return dict(self.health)


def make_health(items: Mapping[str, str] | Iterable[tuple[str, str]]) -> tuple[tuple[str, str], ...]:
    pairs = items.items() if isinstance(items, Mapping) else items
    return tuple(sorted((c, s) for c, s in pairs if s != "OK"))


@dataclass(frozen=True)
class ElementRef:
    kind: str  # "branch" | "bus"
    id: int

    def __post_init__(self):
        if self.kind not in ("branch", "bus"):
            raise ValueError(f"element kind must be 'branch' or 'bus', not {self.kind!r}")

    def __str__(self):
        return f"{self.kind}:{self.id}"

    @classmethod
    def parse(cls, text: str) -> ElementRef:
        kind, _, ident = text.partition(":")
        if not ident:
            kind, ident = "branch", kind
        return cls(kind, int(ident))

    @property
    def sort_key(self):
        return (0 if self.kind == "bus" else 1, self.id)


def branch_ref(i: int) -> ElementRef:
    return ElementRef("branch", i)


def bus_ref(i: int) -> ElementRef:
    return ElementRef("bus", i)


@dataclass(frozen=True)
class GridCase:
    base_power: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...] = ()
    loads: tuple[Load, ...] = ()
    protection: tuple[ProtectionGroup, ...] = ()
    name: str = ""

    def branch(self, branch_id: int) -> Branch:
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise UnknownElementError(f"unknown branch {branch_id}")

    def bus(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise UnknownElementError(f"unknown bus {bus_id}")

    def group(self, branch_id: int) -> ProtectionGroup | None:
        for g in self.protection:
            if g.branch == branch_id:
                return g
        return None

    @property
    def bus_ids(self) -> list[int]:
        return sorted(b.id for b in self.buses)

    @property
    def in_service(self) -> list[Branch]:
        return [br for br in self.branches if br.status]

    @property
    def total_load(self) -> float:
        return sum(ld.p for ld in self.loads)

    def branches_at(self, bus_id: int, in_service_only: bool = True) -> list[int]:
        return sorted(br.id for br in self.branches
                      if bus_id in br.buses and (br.status or not in_service_only))

    def has_element(self, ref: ElementRef) -> bool:
        ids = self.bus_ids if ref.kind == "bus" else [br.id for br in self.branches]
        return ref.id in ids

    def with_outages(self, outages: Iterable[int]) -> GridCase:
        out = set(outages)
        return replace(self, branches=tuple(replace(br, status=False) if br.id in out else br
                                            for br in self.branches))


@dataclass(frozen=True)
class Violation:
    element: str
    rule: str
    message: str = ""

    def __str__(self):
        return f"{self.element}: {self.rule}" + (f" ({self.message})" if self.message else "")


@dataclass(frozen=True)
class RegionOfVulnerability:
    center: ElementRef
    depth: int
    members: tuple[ElementRef, ...] = field(default=())

    def __contains__(self, ref: ElementRef) -> bool:
        return ref in self.members

    @property
    def branches(self) -> list[int]:
        return [m.id for m in self.members if m.kind == "branch"]

    @property
    def buses(self) -> list[int]:
        return [m.id for m in self.members if m.kind == "bus"]


# --------------------------------------------------------------------------- #
# parsing
# --------------------------------------------------------------------------- #

_TOP = {"format": True, "name": False, "base_mw": True, "buses": True, "branches": True,
        "generators": False, "loads": False, "protection": False}
_BUS = {"id": True, "is_slack": False}
_BRANCH = {"id": True, "from_bus": True, "to_bus": True, "reactance": True, "rating": True, "status": False}
_GEN = {"id": True, "bus": True, "p": True, "p_max": True}
_LOAD = {"id": True, "bus": True, "p": True}
_PROT = {"branch": True, "scheme": True, "profile": False, "health": False}


def _check_keys(obj, spec, where):
    if not isinstance(obj, dict):
        raise CaseSchemaError(f"{where}: expected an object")
    unknown = sorted(set(obj) - set(spec))
    if unknown:
        raise CaseSchemaError(f"{where}: unknown field(s) {', '.join(unknown)}")
    missing = sorted(k for k, req in spec.items() if req and k not in obj)
    if missing:
        raise CaseSchemaError(f"{where}: missing field(s) {', '.join(missing)}")


def _int(v, where):
    if isinstance(v, bool) or not isinstance(v, int):
        raise CaseSchemaError(f"{where}: expected integer, got {v!r}")
    return v


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CaseSchemaError(f"{where}: expected number, got {v!r}")
    return float(v)


def _bool(v, where):
    if not isinstance(v, bool):
        raise CaseSchemaError(f"{where}: expected boolean, got {v!r}")
    return v


def _list(doc, key):
    v = doc.get(key, [])
    if not isinstance(v, list):
        raise CaseSchemaError(f"{key}: expected a list")
    return v


def _enum(cls, v, where):
    try:
        return cls[v] if isinstance(v, str) else None
    except KeyError:
        pass
    raise CaseSchemaError(f"{where}: unknown {cls.__name__} {v!r}; expected one of "
                          f"{', '.join(m.name for m in cls)}")


def parse_case(text: str, strict: bool = True) -> GridCase:
    """Parse a ``relaycase-1`` JSON document.

    With ``strict`` (the default) any invariant violation raises
    :class:`CaseSemanticError`; otherwise the case is returned as-is for
    :func:`validate` to report on.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    _check_keys(doc, _TOP, "case")
    if doc["format"] != FORMAT:
        raise CaseSchemaError(f"format: expected {FORMAT!r}, got {doc['format']!r}")

    buses = []
    for i, b in enumerate(_list(doc, "buses")):
        w = f"buses[{i}]"
        _check_keys(b, _BUS, w)
        buses.append(Bus(_int(b["id"], w + ".id"), _bool(b.get("is_slack", False), w + ".is_slack")))

    branches = []
    for i, b in enumerate(_list(doc, "branches")):
        w = f"branches[{i}]"
        _check_keys(b, _BRANCH, w)
        branches.append(Branch(
            _int(b["id"], w + ".id"), _int(b["from_bus"], w + ".from_bus"), _int(b["to_bus"], w + ".to_bus"),
            _num(b["reactance"], w + ".reactance"), _num(b["rating"], w + ".rating"),
            _bool(b.get("status", True), w + ".status")))

    gens = []
    for i, g in enumerate(_list(doc, "generators")):
        w = f"generators[{i}]"
        _check_keys(g, _GEN, w)
        gens.append(Generator(_int(g["id"], w + ".id"), _int(g["bus"], w + ".bus"),
                              _num(g["p"], w + ".p"), _num(g["p_max"], w + ".p_max")))

    loads = []
    for i, ld in enumerate(_list(doc, "loads")):
        w = f"loads[{i}]"
        _check_keys(ld, _LOAD, w)
        loads.append(Load(_int(ld["id"], w + ".id"), _int(ld["bus"], w + ".bus"), _num(ld["p"], w + ".p")))

    groups = []
    for i, p in enumerate(_list(doc, "protection")):
        w = f"protection[{i}]"
        _check_keys(p, _PROT, w)
        health = p.get("health", {})
        if not isinstance(health, dict) or not all(isinstance(s, str) for s in health.values()):
            raise CaseSchemaError(f"{w}.health: expected an object of component -> state")
        groups.append(ProtectionGroup(
            _int(p["branch"], w + ".branch"),
            _enum(SchemeKind, p["scheme"], w + ".scheme"),
            _enum(RelayProfile, p.get("profile", "ELECTROMECHANICAL"), w + ".profile"),
            make_health(health)))

    name = doc.get("name", "")
    if not isinstance(name, str):
        raise CaseSchemaError("name: expected string")
    case = GridCase(_num(doc["base_mw"], "base_mw"), tuple(buses), tuple(branches), tuple(gens),
                    tuple(loads), tuple(groups), name)
    if strict:
        report = validate(case)
        if report:
            raise CaseSemanticError(report)
    return case


def load_case(path, strict: bool = True) -> GridCase:
    with open(path, encoding="utf-8") as fh:
        return parse_case(fh.read(), strict=strict)


def case_to_dict(case: GridCase) -> dict:
    doc = {"format": FORMAT}
    if case.name:
        doc["name"] = case.name
    doc["base_mw"] = case.base_power
    doc["buses"] = [{"id": b.id, "is_slack": b.is_slack} for b in case.buses]
    doc["branches"] = [{"id": b.id, "from_bus": b.from_bus, "to_bus": b.to_bus,
                        "reactance": b.reactance, "rating": b.rating, "status": b.status}
                       for b in case.branches]
    doc["generators"] = [{"id": g.id, "bus": g.bus, "p": g.p, "p_max": g.p_max} for g in case.generators]
    doc["loads"] = [{"id": ld.id, "bus": ld.bus, "p": ld.p} for ld in case.loads]
    doc["protection"] = [{"branch": g.branch, "scheme": g.scheme.name, "profile": g.profile.name,
                          "health": dict(g.health)} for g in case.protection]
    return doc


def serialize_case(case: GridCase) -> str:
    return json.dumps(case_to_dict(case), indent=2) + "\n"


# --------------------------------------------------------------------------- #
# validation and topology
# --------------------------------------------------------------------------- #

def _duplicates(ids):
    seen, dup = set(), []
    for i in ids:
        if i in seen and i not in dup:
            dup.append(i)
        seen.add(i)
    return dup


def validate(case: GridCase) -> list[Violation]:
    """All invariant violations of ``case``; empty when the case is valid."""
    out: list[Violation] = []
    for i in _duplicates(b.id for b in case.buses):
        out.append(Violation(f"bus:{i}", "unique bus id"))
    for i in _duplicates(b.id for b in case.branches):
        out.append(Violation(f"branch:{i}", "unique branch id"))
    for i in _duplicates(g.id for g in case.generators):
        out.append(Violation(f"generator:{i}", "unique generator id"))
    for i in _duplicates(ld.id for ld in case.loads):
        out.append(Violation(f"load:{i}", "unique load id"))
    if case.base_power <= 0:
        out.append(Violation("case", "base_mw > 0"))

    known = {b.id for b in case.buses}
    dangling = False
    for br in case.branches:
        el = f"branch:{br.id}"
        for end in br.buses:
            if end not in known:
                out.append(Violation(el, "known bus", f"unknown bus {end}"))
                dangling = True
        if br.from_bus == br.to_bus:
            out.append(Violation(el, "from_bus != to_bus"))
        if not br.reactance > 0:
            out.append(Violation(el, "reactance > 0", f"reactance {br.reactance}"))
        if not br.rating > 0:
            out.append(Violation(el, "rating > 0", f"rating {br.rating}"))
    for g in case.generators:
        el = f"generator:{g.id}"
        if g.bus not in known:
            out.append(Violation(el, "known bus", f"unknown bus {g.bus}"))
        if g.p < 0:
            out.append(Violation(el, "p >= 0"))
        if g.p > g.p_max:
            out.append(Violation(el, "p <= p_max"))
    for ld in case.loads:
        el = f"load:{ld.id}"
        if ld.bus not in known:
            out.append(Violation(el, "known bus", f"unknown bus {ld.bus}"))
        if ld.p < 0:
            out.append(Violation(el, "p >= 0"))

    branch_ids = {br.id for br in case.branches}
    for i in _duplicates(g.branch for g in case.protection):
        out.append(Violation(f"branch:{i}", "one protection group per branch", "duplicate group"))
    for g in case.protection:
        if g.branch not in branch_ids:
            out.append(Violation(f"protection:{g.branch}", "protection references branch",
                                 f"unknown branch {g.branch}"))
        try:
            normalize_health(g.scheme, g.health_map)
        except HealthError as exc:
            out.append(Violation(f"protection:{g.branch}", "valid health", str(exc)))
    grouped = {g.branch for g in case.protection}
    for br in case.branches:
        if br.status and br.id not in grouped:
            out.append(Violation(f"branch:{br.id}", "one protection group per branch", "no group"))

    if not dangling:
        slack = {b.id for b in case.buses if b.is_slack}
        for isl in islands(case):
            n = len(slack & isl)
            if n != 1:
                out.append(Violation(f"bus:{min(isl)}", "single slack per island",
                                     f"{n} slack buses in island {sorted(isl)}"))
    return out


def islands(case: GridCase, exclude: Iterable[int] = ()) -> list[frozenset[int]]:
    """Connected components over in-service branches, sorted by smallest bus id."""
    skip = set(exclude)
    parent = {b: b for b in case.bus_ids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for br in case.branches:
        if br.status and br.id not in skip and br.from_bus in parent and br.to_bus in parent:
            ra, rb = find(br.from_bus), find(br.to_bus)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, set[int]] = {}
    for b in parent:
        groups.setdefault(find(b), set()).add(b)
    return sorted((frozenset(g) for g in groups.values()), key=min)


def region_of_vulnerability(case: GridCase, center: ElementRef, depth: int = 1) -> RegionOfVulnerability:
    """Elements within ``depth`` adjacency steps of ``center``.

    One step moves from a branch to the branches sharing a terminal bus (or
    from a bus to its neighbour buses), i.e. two hops on the bus-branch
    incidence graph; buses met on the way are members too.
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if not case.has_element(center):
        raise UnknownElementError(f"unknown element {center}")
    adj: dict[ElementRef, list[ElementRef]] = {}
    for br in sorted(case.in_service, key=lambda b: b.id):
        node = branch_ref(br.id)
        for end in br.buses:
            adj.setdefault(node, []).append(bus_ref(end))
            adj.setdefault(bus_ref(end), []).append(node)
    dist = {center: 0}
    queue = deque([center])
    limit = 2 * depth
    while queue:
        node = queue.popleft()
        if dist[node] == limit:
            continue
        for nxt in adj.get(node, ()):
            if nxt not in dist:
                dist[nxt] = dist[node] + 1
                queue.append(nxt)
    members = tuple(sorted(dist, key=lambda r: r.sort_key))
    return RegionOfVulnerability(center, depth, members)
