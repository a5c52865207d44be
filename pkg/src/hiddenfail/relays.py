"""Truth-table models of line and element protection schemes and their
latent (hidden) failure modes.

Every scheme protects one element with two ends, ``A`` (from bus) and
``B`` (to bus). A relay is described by the health of its components; a
:class:`FaultStimulus` describes where a disturbance sits relative to the
protected element. :func:`evaluate_scheme` is a pure function of the two.

Detector pickup by stimulus location (nominal health)::

    location              fwd/overreach  reverse   zone3     underreach  PC hi/lo  residual
    IN_ZONE               A, B           -         A, B      A, B        A, B      A, B
    FORWARD_EXTERNAL_A    A              B         A         -           A, B      A, B
    FORWARD_EXTERNAL_B    B              A         B         -           A, B      A, B
    REVERSE_A             -              A         B         -           -         -
    REVERSE_B             -              B         A         -           -         -
    NONE                  -              -         -         -           -         -

``FORWARD_EXTERNAL_A`` is a fault just beyond bus B (inside end A's
Zone-2 overreach); ``REVERSE_B`` is a fault two hops beyond bus B, behind
end B and only inside end A's Zone-3 reach.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterator, Mapping


class SchemeKind(enum.Enum):
    DCB = "DCB"
    DCUB = "DCUB"
    PUTT = "PUTT"
    POTT = "POTT"
    ZONE123 = "ZONE123"
    PHASE_COMPARISON = "PHASE_COMPARISON"
    DIRECTIONAL_GROUND = "DIRECTIONAL_GROUND"
    DIFFERENTIAL = "DIFFERENTIAL"
    BREAKER_FAILURE = "BREAKER_FAILURE"


class RelayProfile(enum.IntEnum):
    """Relay technology; a higher value never exposes more failure modes."""

    ELECTROMECHANICAL = 0
    DIGITAL = 1
    DIGITAL_WITH_MONITORING = 2


class Location(enum.Enum):
    NONE = "NONE"
    IN_ZONE = "IN_ZONE"
    FORWARD_EXTERNAL_A = "FORWARD_EXTERNAL_A"
    FORWARD_EXTERNAL_B = "FORWARD_EXTERNAL_B"
    REVERSE_A = "REVERSE_A"
    REVERSE_B = "REVERSE_B"


class Condition(enum.Enum):
    FAULT = "FAULT"
    HIGH_LOAD = "HIGH_LOAD"
    ENERGIZATION = "ENERGIZATION"


class DelayClass(enum.Enum):
    INSTANTANEOUS = "INSTANTANEOUS"
    ZONE2_DELAY = "ZONE2_DELAY"
    ZONE3_DELAY = "ZONE3_DELAY"


class Classification(enum.Enum):
    CORRECT_TRIP = "CORRECT_TRIP"
    CORRECT_RESTRAIN = "CORRECT_RESTRAIN"
    MISOPERATION = "MISOPERATION"
    FAILURE_TO_TRIP = "FAILURE_TO_TRIP"


class Detectability(enum.Enum):
    SELF_TEST = "SELF_TEST"
    MONITORING = "MONITORING"
    UNDETECTABLE = "UNDETECTABLE"


OK = "OK"
STUCK_ASSERTED = "STUCK_ASSERTED"
STUCK_DEASSERTED = "STUCK_DEASSERTED"
STUCK_UNBLOCK = "STUCK_UNBLOCK"
STUCK_CLOSED = "STUCK_CLOSED"
FAILED = "FAILED"
LOST = "LOST"
SHORTED = "SHORTED"

_DETECTOR = (OK, STUCK_ASSERTED, STUCK_DEASSERTED)
_RECEIVER = (OK, STUCK_UNBLOCK)
_CHANNEL = (OK, FAILED)

#: Representable states per component, in a fixed order (OK first).
COMPONENTS: dict[SchemeKind, dict[str, tuple[str, ...]]] = {
    SchemeKind.DCB: {
        "fwd_detector_A": _DETECTOR,
        "fwd_detector_B": _DETECTOR,
        "rev_detector_A": _DETECTOR,
        "rev_detector_B": _DETECTOR,
        "channel": _CHANNEL,
    },
    SchemeKind.DCUB: {
        "fwd_detector_A": _DETECTOR,
        "fwd_detector_B": _DETECTOR,
        "receiver_A": _RECEIVER,
        "receiver_B": _RECEIVER,
        "channel_AB": _CHANNEL,
        "channel_BA": _CHANNEL,
    },
    SchemeKind.PUTT: {
        "overreach_A": _DETECTOR,
        "overreach_B": _DETECTOR,
        "underreach_A": _DETECTOR,
        "underreach_B": _DETECTOR,
        "receiver_A": _RECEIVER,
        "receiver_B": _RECEIVER,
        "channel_AB": _CHANNEL,
        "channel_BA": _CHANNEL,
    },
    SchemeKind.POTT: {
        "overreach_A": _DETECTOR,
        "overreach_B": _DETECTOR,
        "receiver_A": _RECEIVER,
        "receiver_B": _RECEIVER,
        "channel_AB": _CHANNEL,
        "channel_BA": _CHANNEL,
    },
    SchemeKind.ZONE123: {
        "zone2_timer": (OK, STUCK_CLOSED),
        "zone3_timer": (OK, STUCK_CLOSED),
    },
    SchemeKind.PHASE_COMPARISON: {
        "fd_high_A": (OK, STUCK_ASSERTED),
        "fd_high_B": (OK, STUCK_ASSERTED),
        "fd_low_A": (OK, STUCK_DEASSERTED),
        "fd_low_B": (OK, STUCK_DEASSERTED),
        "channel": _CHANNEL,
    },
    SchemeKind.DIRECTIONAL_GROUND: {"polarizing": (OK, LOST)},
    SchemeKind.DIFFERENTIAL: {"restraint": (OK, SHORTED)},
    SchemeKind.BREAKER_FAILURE: {"status_contacts": (OK, SHORTED)},
}


class HealthError(ValueError):
    """A health record names a component or state the scheme does not have."""


class UnknownFailureMode(KeyError):
    pass


@dataclass(frozen=True)
class FaultStimulus:
    """Disturbance seen by one protection group.

    Faults (``location != NONE``) always carry ``condition=FAULT``; the
    non-fault stressors HIGH_LOAD and ENERGIZATION only occur with
    ``location=NONE``. ``breaker_stuck`` marks the protected element's own
    end-A breaker as truly failing to open.
    """

    location: Location = Location.NONE
    condition: Condition = Condition.FAULT
    breaker_stuck: bool = False

    def __post_init__(self):
        if self.location is not Location.NONE and self.condition is not Condition.FAULT:
            raise ValueError(f"{self.condition.value} stress cannot accompany a fault at {self.location.value}")

    @property
    def faulted(self) -> bool:
        return self.location is not Location.NONE


def all_stimuli() -> list[FaultStimulus]:
    """Every valid stimulus, in a fixed order."""
    out = []
    for stuck in (False, True):
        for cond in Condition:
            out.append(FaultStimulus(Location.NONE, cond, stuck))
        for loc in Location:
            if loc is not Location.NONE:
                out.append(FaultStimulus(loc, Condition.FAULT, stuck))
    return out


@dataclass(frozen=True)
class TripDecision:
    trip_A: bool
    trip_B: bool
    delay_class: DelayClass
    classification: Classification
    transfer_trip_bus: int | None = None
    transfer_trip_end: str | None = None

    @property
    def tripped(self) -> bool:
        return self.trip_A or self.trip_B


@dataclass(frozen=True)
class HiddenFailureMode:
    scheme: SchemeKind
    component: str
    state: str
    detectability: Detectability = Detectability.UNDETECTABLE

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.scheme.value, self.component, self.state)

    def __str__(self):
        return f"{self.scheme.value}:{self.component}={self.state}"


def default_health(kind: SchemeKind) -> dict[str, str]:
    return {name: OK for name in COMPONENTS[kind]}


def normalize_health(kind: SchemeKind, health: Mapping[str, str] | None) -> dict[str, str]:
    """Fill unspecified components with OK and reject anything unrepresentable."""
    table = COMPONENTS[kind]
    full = default_health(kind)
    for name, state in (health or {}).items():
        if name not in table:
            raise HealthError(f"{kind.value} has no component {name!r}")
        if state not in table[name]:
            raise HealthError(f"{kind.value}.{name} cannot be {state!r}; allowed {table[name]}")
        full[name] = state
    return full


def iter_health(kind: SchemeKind) -> Iterator[dict[str, str]]:
    """All representable health records for ``kind`` (cartesian product)."""
    names = list(COMPONENTS[kind])
    for states in itertools.product(*(COMPONENTS[kind][n] for n in names)):
        yield dict(zip(names, states))


def classify(location: Location, trip_A: bool, trip_B: bool) -> Classification:
    if location is Location.IN_ZONE:
        return Classification.CORRECT_TRIP if trip_A and trip_B else Classification.FAILURE_TO_TRIP
    if trip_A or trip_B:
        return Classification.MISOPERATION
    return Classification.CORRECT_RESTRAIN


def _detector(state: str, nominal: bool) -> bool:
    if state == STUCK_ASSERTED:
        return True
    if state == STUCK_DEASSERTED:
        return False
    return nominal


_FWD = {"A": {Location.IN_ZONE, Location.FORWARD_EXTERNAL_A},
        "B": {Location.IN_ZONE, Location.FORWARD_EXTERNAL_B}}
_REV = {"A": {Location.FORWARD_EXTERNAL_B, Location.REVERSE_A},
        "B": {Location.FORWARD_EXTERNAL_A, Location.REVERSE_B}}
_ZONE3 = {"A": {Location.IN_ZONE, Location.FORWARD_EXTERNAL_A, Location.REVERSE_B},
          "B": {Location.IN_ZONE, Location.FORWARD_EXTERNAL_B, Location.REVERSE_A}}
_NEAR = {Location.IN_ZONE, Location.FORWARD_EXTERNAL_A, Location.FORWARD_EXTERNAL_B}
_REMOTE = {"A": "B", "B": "A"}


def _dcb(h, s):
    trips = {}
    for x, r in _REMOTE.items():
        fwd = _detector(h[f"fwd_detector_{x}"], s.location in _FWD[x])
        rev_remote = _detector(h[f"rev_detector_{r}"], s.location in _REV[r])
        block = rev_remote and h["channel"] == OK
        trips[x] = fwd and not block
    return trips


def _permissive(h, s, *, local: str, remote_unit: str, remote_nominal):
    trips = {}
    for x, r in _REMOTE.items():
        local_ok = _detector(h[f"{local}_{x}"], s.location in _FWD[x])
        remote = _detector(h[f"{remote_unit}_{r}"], s.location in remote_nominal[r])
        received = (remote and h[f"channel_{r}{x}"] == OK) or h[f"receiver_{x}"] == STUCK_UNBLOCK
        trips[x] = local_ok and received
    return trips


def _dcub(h, s):
    return _permissive(h, s, local="fwd_detector", remote_unit="fwd_detector", remote_nominal=_FWD)


def _putt(h, s):
    under = {"A": {Location.IN_ZONE}, "B": {Location.IN_ZONE}}
    return _permissive(h, s, local="overreach", remote_unit="underreach", remote_nominal=under)


def _pott(h, s):
    return _permissive(h, s, local="overreach", remote_unit="overreach", remote_nominal=_FWD)


def _phase_comparison(h, s):
    near = s.location in _NEAR
    internal = s.location is Location.IN_ZONE
    trips = {}
    for x, r in _REMOTE.items():
        high = _detector(h[f"fd_high_{x}"], near)
        low_remote = _detector(h[f"fd_low_{r}"], near)
        # without a fault, a healthy channel carries the through-current sign continuously
        received = h["channel"] == OK and (low_remote or not s.faulted)
        trips[x] = high and (internal or not received)
    return trips


def _directional_ground(h, s):
    residual = s.location in _NEAR
    forward = s.location is Location.IN_ZONE
    trip = residual and (forward or h["polarizing"] == LOST)
    return {"A": trip, "B": trip}


def _differential(h, s):
    stressed = s.location in (Location.FORWARD_EXTERNAL_A, Location.FORWARD_EXTERNAL_B) or (
        not s.faulted and s.condition is not Condition.FAULT)
    trip = s.location is Location.IN_ZONE or (h["restraint"] == SHORTED and stressed)
    return {"A": trip, "B": trip}


def _breaker_failure(h, s):
    # end-A breaker is shared with elements at bus A (FORWARD_EXTERNAL_B faults open it too)
    initiated = s.location in (Location.IN_ZONE, Location.FORWARD_EXTERNAL_B)
    believes_failed = initiated and h["status_contacts"] == SHORTED
    truly_failed = s.location is Location.IN_ZONE and s.breaker_stuck
    trip = s.location is Location.IN_ZONE or believes_failed
    return {"A": trip, "B": trip, "transfer": trip and (truly_failed or believes_failed)}


def _zone123(h, s):
    trips = {"A": False, "B": False}
    if s.location is Location.IN_ZONE:
        return {"A": True, "B": True}
    for x in ("A", "B"):
        zone2 = s.location in _FWD[x]
        zone3 = s.location in _ZONE3[x]
        # the fault is cleared by its own protection before T2/T3 expire
        if zone2 and h["zone2_timer"] == STUCK_CLOSED:
            trips[x] = True
        if zone3 and h["zone3_timer"] == STUCK_CLOSED:
            trips[x] = True
    return trips


_LOGIC = {
    SchemeKind.DCB: _dcb,
    SchemeKind.DCUB: _dcub,
    SchemeKind.PUTT: _putt,
    SchemeKind.POTT: _pott,
    SchemeKind.ZONE123: _zone123,
    SchemeKind.PHASE_COMPARISON: _phase_comparison,
    SchemeKind.DIRECTIONAL_GROUND: _directional_ground,
    SchemeKind.DIFFERENTIAL: _differential,
    SchemeKind.BREAKER_FAILURE: _breaker_failure,
}

# pickup of the starting element that supervises every scheme except
# phase comparison (which behaves as plain overcurrent once the channel is lost)
# and differential (which responds to load and inrush stress)
_UNSUPERVISED = {SchemeKind.PHASE_COMPARISON, SchemeKind.DIFFERENTIAL}


def evaluate_scheme(kind: SchemeKind, health: Mapping[str, str] | None, stimulus: FaultStimulus,
                    ends: tuple[int, int] | None = None) -> TripDecision:
    """Evaluate one protection group against one stimulus.

    ``ends`` optionally gives the (A, B) bus ids so a breaker-failure
    transfer trip can name its bus.
    """
    h = normalize_health(kind, health)
    if not stimulus.faulted and kind not in _UNSUPERVISED:
        out = {"A": False, "B": False}
    else:
        out = _LOGIC[kind](h, stimulus)
    trip_A, trip_B = out["A"], out["B"]
    transfer_end = "A" if out.get("transfer") else None
    transfer_bus = ends[0] if (transfer_end and ends is not None) else None
    return TripDecision(
        trip_A=trip_A,
        trip_B=trip_B,
        delay_class=DelayClass.INSTANTANEOUS,
        classification=classify(stimulus.location, trip_A, trip_B),
        transfer_trip_bus=transfer_bus,
        transfer_trip_end=transfer_end,
    )


def _mode(kind, component, state, det=Detectability.UNDETECTABLE):
    return HiddenFailureMode(kind, component, state, det)


_M = Detectability.MONITORING

_MODES: dict[SchemeKind, tuple[HiddenFailureMode, ...]] = {
    SchemeKind.DCB: (
        _mode(SchemeKind.DCB, "rev_detector_A", STUCK_DEASSERTED),
        _mode(SchemeKind.DCB, "rev_detector_B", STUCK_DEASSERTED),
        _mode(SchemeKind.DCB, "channel", FAILED),
    ),
    SchemeKind.DCUB: (
        _mode(SchemeKind.DCUB, "fwd_detector_A", STUCK_ASSERTED),
        _mode(SchemeKind.DCUB, "fwd_detector_B", STUCK_ASSERTED),
        _mode(SchemeKind.DCUB, "receiver_A", STUCK_UNBLOCK, _M),
        _mode(SchemeKind.DCUB, "receiver_B", STUCK_UNBLOCK, _M),
    ),
    SchemeKind.PUTT: (
        _mode(SchemeKind.PUTT, "underreach_A", STUCK_ASSERTED),
        _mode(SchemeKind.PUTT, "underreach_B", STUCK_ASSERTED),
        _mode(SchemeKind.PUTT, "receiver_A", STUCK_UNBLOCK, _M),
        _mode(SchemeKind.PUTT, "receiver_B", STUCK_UNBLOCK, _M),
    ),
    SchemeKind.POTT: (
        _mode(SchemeKind.POTT, "overreach_A", STUCK_ASSERTED),
        _mode(SchemeKind.POTT, "overreach_B", STUCK_ASSERTED),
        _mode(SchemeKind.POTT, "receiver_A", STUCK_UNBLOCK, _M),
        _mode(SchemeKind.POTT, "receiver_B", STUCK_UNBLOCK, _M),
    ),
    SchemeKind.ZONE123: (
        _mode(SchemeKind.ZONE123, "zone2_timer", STUCK_CLOSED),
        _mode(SchemeKind.ZONE123, "zone3_timer", STUCK_CLOSED),
    ),
    SchemeKind.PHASE_COMPARISON: (
        _mode(SchemeKind.PHASE_COMPARISON, "channel", FAILED),
        _mode(SchemeKind.PHASE_COMPARISON, "fd_high_A", STUCK_ASSERTED),
        _mode(SchemeKind.PHASE_COMPARISON, "fd_high_B", STUCK_ASSERTED),
        _mode(SchemeKind.PHASE_COMPARISON, "fd_low_A", STUCK_DEASSERTED),
        _mode(SchemeKind.PHASE_COMPARISON, "fd_low_B", STUCK_DEASSERTED),
    ),
    SchemeKind.DIRECTIONAL_GROUND: (
        # polarizing-source loss is a lost instrument signal
        _mode(SchemeKind.DIRECTIONAL_GROUND, "polarizing", LOST, _M),
    ),
    SchemeKind.DIFFERENTIAL: (
        _mode(SchemeKind.DIFFERENTIAL, "restraint", SHORTED),
    ),
    SchemeKind.BREAKER_FAILURE: (
        _mode(SchemeKind.BREAKER_FAILURE, "status_contacts", SHORTED),
    ),
}

# electromechanical-only hardware: mechanical timers and restraint windings
_ELECTROMECHANICAL_ONLY = {
    (SchemeKind.ZONE123, "zone2_timer"),
    (SchemeKind.ZONE123, "zone3_timer"),
    (SchemeKind.DIFFERENTIAL, "restraint"),
}


def _present(mode: HiddenFailureMode, profile: RelayProfile) -> bool:
    if profile >= RelayProfile.DIGITAL and (mode.scheme, mode.component) in _ELECTROMECHANICAL_ONLY:
        return False
    if profile >= RelayProfile.DIGITAL_WITH_MONITORING and mode.detectability is Detectability.MONITORING:
        return False
    return True


def enumerate_hidden_failures(kind: SchemeKind,
                              profile: RelayProfile = RelayProfile.ELECTROMECHANICAL) -> list[HiddenFailureMode]:
    """Latent failure modes of ``kind`` that can exist under ``profile``."""
    return [m for m in _MODES[kind] if _present(m, profile)]


def detectability(mode: HiddenFailureMode,
                  profile: RelayProfile = RelayProfile.ELECTROMECHANICAL) -> Detectability:
    for known in _MODES.get(mode.scheme, ()):
        if (known.component, known.state) == (mode.component, mode.state):
            if not _present(known, min(profile, RelayProfile.DIGITAL)):
                raise UnknownFailureMode(f"{mode} does not exist on {profile.name} relays")
            return known.detectability
    raise UnknownFailureMode(str(mode))


def lookup_mode(kind: SchemeKind, component: str, state: str) -> HiddenFailureMode:
    for known in _MODES[kind]:
        if (known.component, known.state) == (component, state):
            return known
    raise UnknownFailureMode(f"{kind.value}:{component}={state}")


def catalog() -> list[dict]:
    """Machine-readable scheme catalog, one row per failure mode."""
    rows = []
    for kind in SchemeKind:
        for mode in _MODES[kind]:
            rows.append({
                "scheme": kind.value,
                "components": ";".join(COMPONENTS[kind]),
                "component": mode.component,
                "state": mode.state,
                "detectability": mode.detectability.value,
                "digital": _present(mode, RelayProfile.DIGITAL),
                "digital_with_monitoring": _present(mode, RelayProfile.DIGITAL_WITH_MONITORING),
            })
    return rows
