"""Mitigation measures: redundant voting, series supervision, relay monitoring
and a bad-data-rejecting DC state estimator."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import chi2

from .critical import DEFAULT_PRIOR_MISOP, rank_relays
from .dcflow import DCFlowError, island_slack
from .netmodel import GridCase, islands, make_health
from .relays import RelayProfile, enumerate_hidden_failures


@dataclass(frozen=True)
class VotingConfig:
    """k-out-of-n redundant relays.

    Relays fail independently except for a common-cause share ``beta`` of
    each failure probability that hits all n relays at once.
    """

    n: int
    k: int
    p_misop: float = 0.0
    q_fail: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError("need 1 <= k <= n")
        for name in ("p_misop", "q_fail", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def binomial_tail(n: int, j0: int, p: float) -> float:
    """P[at least j0 of n independent events with probability p]."""
    return math.fsum(math.comb(n, j) * p**j * (1.0 - p) ** (n - j) for j in range(max(j0, 0), n + 1))


def _with_common_cause(n, need, p, beta):
    if beta == 0.0:
        return binomial_tail(n, need, p)
    common = beta * p
    return common + (1.0 - common) * binomial_tail(n, need, (1.0 - beta) * p)


def k_of_n_misoperation(cfg: VotingConfig) -> float:
    """The scheme misoperates when at least k relays misoperate."""
    return _with_common_cause(cfg.n, cfg.k, cfg.p_misop, cfg.beta)


def k_of_n_failure_to_trip(cfg: VotingConfig) -> float:
    """The scheme fails to trip when more than n - k relays fail."""
    return _with_common_cause(cfg.n, cfg.n - cfg.k + 1, cfg.q_fail, cfg.beta)


def supervisory_and(p_relay: float, p_super: float, q_relay: float, q_super: float) -> tuple[float, float]:
    """Relay and supervisor contacts in series: (misoperation, failure-to-trip)."""
    for v in (p_relay, p_super, q_relay, q_super):
        if not 0.0 <= v <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
    return p_relay * p_super, q_relay + q_super - q_relay * q_super


def apply_monitoring(case: GridCase, profile: RelayProfile) -> GridCase:
    """Upgrade every relay to at least ``profile`` and drop failure states it removes.

    Groups already on a more capable profile are left alone, so the
    failure-mode space only shrinks and repeated application is a no-op.
    """
    profile = RelayProfile(profile)
    groups = []
    for g in case.protection:
        new = max(g.profile, profile)
        allowed = {(m.component, m.state) for m in enumerate_hidden_failures(g.scheme, new)}
        health = make_health((c, s) for c, s in g.health if (c, s) in allowed)
        groups.append(replace(g, profile=new, health=health))
    return replace(case, protection=tuple(groups))


# --------------------------------------------------------------------------- #
# state estimation
# --------------------------------------------------------------------------- #

class MeasurementKind(enum.Enum):
    BRANCH_FLOW = "BRANCH_FLOW"
    BUS_INJECTION = "BUS_INJECTION"


@dataclass(frozen=True)
class Measurement:
    kind: MeasurementKind
    element: int
    value: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "element": self.element, "value": self.value, "sigma": self.sigma}


class UnobservableError(DCFlowError):
    pass


@dataclass(frozen=True)
class EstimationResult:
    theta_hat: dict[int, float]
    rejected: tuple[Measurement, ...]
    chi2: float
    dof: int
    passed: bool
    threshold: float
    iterations: int
    diagnostic: str = ""

    def to_dict(self) -> dict:
        return {
            "theta_hat": {str(b): t for b, t in self.theta_hat.items()},
            "rejected": [m.to_dict() for m in self.rejected],
            "chi2": self.chi2,
            "dof": self.dof,
            "threshold": None if math.isnan(self.threshold) else self.threshold,
            "passed": self.passed,
            "iterations": self.iterations,
            "diagnostic": self.diagnostic,
        }


def measurement_matrix(case: GridCase, measurements: Sequence[Measurement]):
    """Rows of the linear DC measurement model (MW per radian) over non-slack angles."""
    slacks = []
    for isl in islands(case):
        s = island_slack(case, isl)
        if s is None:
            raise UnobservableError(f"island {sorted(isl)} has no slack bus")
        slacks.append(s)
    states = [b for b in case.bus_ids if b not in slacks]
    col = {b: i for i, b in enumerate(states)}
    h = np.zeros((len(measurements), len(states)))
    base = case.base_power
    for r, m in enumerate(measurements):
        if m.kind is MeasurementKind.BRANCH_FLOW:
            br = case.branch(m.element)
            if not br.status:
                raise ValueError(f"flow measurement on out-of-service branch {br.id}")
            rows = [(br.from_bus, br.to_bus, base / br.reactance)]
        else:
            case.bus(m.element)
            rows = []
            for br in case.in_service:
                if m.element == br.from_bus:
                    rows.append((br.from_bus, br.to_bus, base / br.reactance))
                elif m.element == br.to_bus:
                    rows.append((br.to_bus, br.from_bus, base / br.reactance))
        for i, j, y in rows:
            if i in col:
                h[r, col[i]] += y
            if j in col:
                h[r, col[j]] -= y
    return h, states, slacks


def _wls(h, z, w):
    g = h.T @ (w[:, None] * h)
    x = np.linalg.solve(g, h.T @ (w * z))
    r = z - h @ x
    return x, r, g


def dc_state_estimate(case: GridCase, measurements: Sequence[Measurement],
                      confidence: float = 0.99) -> EstimationResult:
    """Weighted least squares with chi-squared bad-data rejection.

    While the weighted residual sum exceeds the chi-squared quantile, the
    measurement with the largest normalized residual is dropped and the
    estimate repeated. The loop stops early, with ``passed=False``, when
    that removal would leave the system unobservable.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    active = list(measurements)
    h_all, states, slacks = measurement_matrix(case, active)
    n = len(states)
    if n and (not active or np.linalg.matrix_rank(h_all) < n):
        raise UnobservableError("measurement set does not observe every bus angle")
    rejected: list[Measurement] = []
    keep = list(range(len(active)))
    iterations = 0
    while True:
        h = h_all[keep]
        z = np.array([active[i].value for i in keep])
        sig = np.array([active[i].sigma for i in keep])
        w = 1.0 / sig**2
        x, r, g = _wls(h, z, w)
        iterations += 1
        j = float(np.sum(w * r**2))
        dof = len(keep) - n
        theta = {b: 0.0 for b in slacks}
        theta.update({b: float(t) for b, t in zip(states, x)})
        theta = {b: theta[b] for b in sorted(theta)}
        if dof <= 0:
            return EstimationResult(theta, tuple(rejected), j, dof, False, float("nan"), iterations,
                                    "no redundancy: bad data cannot be detected")
        thr = float(chi2.ppf(confidence, dof))
        if j <= thr:
            return EstimationResult(theta, tuple(rejected), j, dof, True, thr, iterations)
        # residual covariance diagonal R - H G^-1 H^T
        omega = sig**2 - np.einsum("ij,ji->i", h, np.linalg.solve(g, h.T))
        rn = np.where(omega > 1e-12 * sig**2, np.abs(r) / np.sqrt(np.clip(omega, 1e-300, None)), 0.0)
        worst = int(np.argmax(rn))
        rest = keep[:worst] + keep[worst + 1:]
        if rn[worst] == 0.0 or np.linalg.matrix_rank(h_all[rest]) < n:
            return EstimationResult(theta, tuple(rejected), j, dof, False, thr, iterations,
                                    f"rejecting {active[keep[worst]].kind.value}:{active[keep[worst]].element} "
                                    "would make the system unobservable")
        rejected.append(active[keep[worst]])
        keep = rest


def exact_measurements(case: GridCase, theta: dict[int, float], flows: Iterable[int] = (),
                       injections: Iterable[int] = (), sigma: float = 1.0) -> list[Measurement]:
    """Noise-free measurements consistent with the angles ``theta``."""
    out = []
    base = case.base_power
    for i in flows:
        br = case.branch(i)
        out.append(Measurement(MeasurementKind.BRANCH_FLOW, i,
                               base * (theta[br.from_bus] - theta[br.to_bus]) / br.reactance, sigma))
    for b in injections:
        p = 0.0
        for br in case.in_service:
            if b == br.from_bus:
                p += base * (theta[br.from_bus] - theta[br.to_bus]) / br.reactance
            elif b == br.to_bus:
                p += base * (theta[br.to_bus] - theta[br.from_bus]) / br.reactance
        out.append(Measurement(MeasurementKind.BUS_INJECTION, b, p, sigma))
    return out


# --------------------------------------------------------------------------- #
# comparison
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class StrategyRow:
    strategy: str
    effective_prior: float
    failure_modes: int
    total_expected_load_lost: float
    total_worst_load_lost: float


def mitigation_comparison(case: GridCase, prior: float = DEFAULT_PRIOR_MISOP, rov_depth: int = 1,
                          overload_trip_factor: float = 1.25, voting: tuple[int, int] = (3, 2),
                          jobs: int = 1) -> list[StrategyRow]:
    """Total expected load lost under each mitigation strategy.

    Monitoring profiles prune failure modes; voting and series supervision
    keep the failure-mode space but lower the per-relay misoperation prior.
    """
    rows = []

    def total(c, p):
        impacts = rank_relays(c, p, rov_depth, overload_trip_factor, jobs=jobs)
        modes = sum(len(enumerate_hidden_failures(g.scheme, g.profile)) for g in c.protection)
        return (modes, math.fsum(r.expected_load_lost for r in impacts),
                math.fsum(r.worst_load_lost for r in impacts))

    for profile in RelayProfile:
        c = apply_monitoring(case, profile)
        modes, exp, worst = total(c, prior)
        rows.append(StrategyRow(profile.name, prior, modes, exp, worst))
    n, k = voting
    p_vote = k_of_n_misoperation(VotingConfig(n, k, prior))
    base = apply_monitoring(case, RelayProfile.ELECTROMECHANICAL)
    modes, exp, worst = total(base, p_vote)
    rows.append(StrategyRow(f"VOTING_{k}oo{n}", p_vote, modes, exp, worst))
    p_sup, _ = supervisory_and(prior, prior, 0.0, 0.0)
    modes, exp, worst = total(base, p_sup)
    rows.append(StrategyRow("SUPERVISED", p_sup, modes, exp, worst))
    return rows
