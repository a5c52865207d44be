"""Reference truth tables for the protection schemes, written separately from
the package so the two can be cross-checked.

Locations use short codes: "-" no fault, "IN" in zone, "FA"/"FB" forward
external beyond the remote bus as seen from end A/B, "RA"/"RB" behind end A/B.
"""

import itertools

LOCS = ["-", "IN", "FA", "FB", "RA", "RB"]

# which relay elements pick up, per end, for each location
SEES = {
    #        fwd_A  fwd_B  rev_A  rev_B  z3_A   z3_B
    "-":   (False, False, False, False, False, False),
    "IN":  (True,  True,  False, False, True,  True),
    "FA":  (True,  False, False, True,  True,  False),
    "FB":  (False, True,  True,  False, False, True),
    "RA":  (False, False, True,  False, False, True),
    "RB":  (False, False, False, True,  True,  False),
}


def sees(loc, what, end):
    col = {"fwd": 0, "rev": 2, "z3": 4}[what] + (0 if end == "A" else 1)
    return SEES[loc][col]


def det(state, healthy_output):
    return {"OK": healthy_output, "STUCK_ASSERTED": True, "STUCK_DEASSERTED": False}[state]


def other(end):
    return "B" if end == "A" else "A"


def dcb(h, loc, cond, stuck):
    out = []
    for e in "AB":
        blocked = det(h["rev_detector_" + other(e)], sees(loc, "rev", other(e))) and h["channel"] != "FAILED"
        out.append(det(h["fwd_detector_" + e], sees(loc, "fwd", e)) and not blocked)
    return out[0], out[1], False


def _pilot(h, loc, local, remote, remote_sees):
    out = []
    for e in "AB":
        r = other(e)
        permission = det(h[f"{remote}_{r}"], remote_sees(loc, r)) and h[f"channel_{r}{e}"] == "OK"
        if h["receiver_" + e] == "STUCK_UNBLOCK":
            permission = True
        out.append(det(h[f"{local}_{e}"], sees(loc, "fwd", e)) and permission)
    return out[0], out[1], False


def dcub(h, loc, cond, stuck):
    return _pilot(h, loc, "fwd_detector", "fwd_detector", lambda l, e: sees(l, "fwd", e))


def putt(h, loc, cond, stuck):
    # underreaching elements at both ends cover only the protected line
    return _pilot(h, loc, "overreach", "underreach", lambda l, e: l == "IN")


def pott(h, loc, cond, stuck):
    return _pilot(h, loc, "overreach", "overreach", lambda l, e: sees(l, "fwd", e))


def zone123(h, loc, cond, stuck):
    if loc == "IN":
        return True, True, False
    res = []
    for e in "AB":
        t = (h["zone2_timer"] == "STUCK_CLOSED" and sees(loc, "fwd", e)) or (
            h["zone3_timer"] == "STUCK_CLOSED" and sees(loc, "z3", e))
        res.append(t)
    return res[0], res[1], False


def phase_comparison(h, loc, cond, stuck):
    through = loc in ("IN", "FA", "FB")
    res = []
    for e in "AB":
        r = other(e)
        high = True if h["fd_high_" + e] == "STUCK_ASSERTED" else through
        low_r = False if h["fd_low_" + r] == "STUCK_DEASSERTED" else through
        if loc == "-":
            signal = h["channel"] == "OK"
        else:
            signal = h["channel"] == "OK" and low_r
        res.append(high and (loc == "IN" or not signal))
    return res[0], res[1], False


def directional_ground(h, loc, cond, stuck):
    t = loc == "IN" or (loc in ("FA", "FB") and h["polarizing"] == "LOST")
    return t, t, False


def differential(h, loc, cond, stuck):
    if loc == "IN":
        return True, True, False
    stress = loc in ("FA", "FB") or (loc == "-" and cond in ("HIGH_LOAD", "ENERGIZATION"))
    t = stress and h["restraint"] == "SHORTED"
    return t, t, False


def breaker_failure(h, loc, cond, stuck):
    # the end-A breaker also serves the element beyond bus A, so FB faults start the timer
    started = loc in ("IN", "FB")
    false_fail = started and h["status_contacts"] == "SHORTED"
    trip = loc == "IN" or false_fail
    transfer = false_fail or (loc == "IN" and stuck)
    return trip, trip, transfer


SUPERVISED = {"DCB", "DCUB", "PUTT", "POTT", "ZONE123", "DIRECTIONAL_GROUND", "BREAKER_FAILURE"}

TABLES = {
    "DCB": dcb, "DCUB": dcub, "PUTT": putt, "POTT": pott, "ZONE123": zone123,
    "PHASE_COMPARISON": phase_comparison, "DIRECTIONAL_GROUND": directional_ground,
    "DIFFERENTIAL": differential, "BREAKER_FAILURE": breaker_failure,
}

DET = ["OK", "STUCK_ASSERTED", "STUCK_DEASSERTED"]
RCV = ["OK", "STUCK_UNBLOCK"]
CH = ["OK", "FAILED"]

STATES = {
    "DCB": {"fwd_detector_A": DET, "fwd_detector_B": DET, "rev_detector_A": DET, "rev_detector_B": DET,
            "channel": CH},
    "DCUB": {"fwd_detector_A": DET, "fwd_detector_B": DET, "receiver_A": RCV, "receiver_B": RCV,
             "channel_AB": CH, "channel_BA": CH},
    "PUTT": {"overreach_A": DET, "overreach_B": DET, "underreach_A": DET, "underreach_B": DET,
             "receiver_A": RCV, "receiver_B": RCV, "channel_AB": CH, "channel_BA": CH},
    "POTT": {"overreach_A": DET, "overreach_B": DET, "receiver_A": RCV, "receiver_B": RCV,
             "channel_AB": CH, "channel_BA": CH},
    "ZONE123": {"zone2_timer": ["OK", "STUCK_CLOSED"], "zone3_timer": ["OK", "STUCK_CLOSED"]},
    "PHASE_COMPARISON": {"fd_high_A": ["OK", "STUCK_ASSERTED"], "fd_high_B": ["OK", "STUCK_ASSERTED"],
                         "fd_low_A": ["OK", "STUCK_DEASSERTED"], "fd_low_B": ["OK", "STUCK_DEASSERTED"],
                         "channel": CH},
    "DIRECTIONAL_GROUND": {"polarizing": ["OK", "LOST"]},
    "DIFFERENTIAL": {"restraint": ["OK", "SHORTED"]},
    "BREAKER_FAILURE": {"status_contacts": ["OK", "SHORTED"]},
}


def healths(scheme):
    names = list(STATES[scheme])
    for combo in itertools.product(*(STATES[scheme][n] for n in names)):
        yield dict(zip(names, combo))


def decide(scheme, h, loc, cond="FAULT", stuck=False):
    """(trip_A, trip_B, transfer, classification)."""
    if loc == "-" and scheme in SUPERVISED:
        a = b = t = False
    else:
        a, b, t = TABLES[scheme](h, loc, cond, stuck)
    if loc == "IN":
        cls = "CORRECT_TRIP" if (a and b) else "FAILURE_TO_TRIP"
    else:
        cls = "MISOPERATION" if (a or b) else "CORRECT_RESTRAIN"
    return a, b, t, cls


# the enumerated latent failures, per scheme and relay generation
EXPECTED_MODES = {
    "DCB": [("rev_detector_A", "STUCK_DEASSERTED"), ("rev_detector_B", "STUCK_DEASSERTED"), ("channel", "FAILED")],
    "DCUB": [("fwd_detector_A", "STUCK_ASSERTED"), ("fwd_detector_B", "STUCK_ASSERTED"),
             ("receiver_A", "STUCK_UNBLOCK"), ("receiver_B", "STUCK_UNBLOCK")],
    "DIFFERENTIAL": [("restraint", "SHORTED")],
    "BREAKER_FAILURE": [("status_contacts", "SHORTED")],
    "ZONE123": [("zone2_timer", "STUCK_CLOSED"), ("zone3_timer", "STUCK_CLOSED")],
    "DIRECTIONAL_GROUND": [("polarizing", "LOST")],
}
