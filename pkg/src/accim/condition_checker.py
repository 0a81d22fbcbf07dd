"""Constants of the tower machinery and the hypothesis checks.

Computes every quantity the quantitative theory runs on (expansion floor
gamma, nonlinearity C, level-weight xi, contraction pair (a, b), density
cap M, measured hole weight q, ...) and evaluates the hypotheses:

* level decay (H1): level masses below A * theta^l;
* bounded nonlinearity (H2): (1 + C) / gamma^alpha < 1;
* hole-mass budgets (H3, H3'): q below (1-a)^2/(4b) resp. (1-a)^2/b;
* admissible hole size (A1): total hole measure below the closed-form
  threshold of the map.

Hypothesis failure is advisory: the sufficient conditions guarantee the
quantitative conclusions, but the solver may well succeed outside them
(large Markov-aligned holes do), so failures are reported, never raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .interval_maps import (
    EMPTY_HOLE,
    OpenSystem,
    build_open_system,
    distortion_constant,
)
from .intervals import EPS_GEO, clip_union, merge_union, union_covers
from .tower_builder import FATE_RETURN, Tower, choose_delta


@dataclass
class HypothesisFlag:
    name: str
    passed: bool | None
    value: float
    bound: float
    note: str = ""

    @property
    def margin(self) -> float:
        return self.bound - self.value

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "bound": self.bound,
            "margin": self.margin,
            "note": self.note,
        }


@dataclass
class ConstantsReport:
    alpha: float
    mu: float
    delta: float
    n_bases: int
    theta: float
    A_const: float
    beta: float
    xi: float
    ctilde: float
    C: float
    b: float
    gamma_floor: float
    gamma_measured: float
    a: float
    a_generic: float
    M: float
    q: float
    q_chain_bound: float
    q_paper_bound: float
    d_h3: float
    lambda_lower: float
    lambda_floor: float
    lipschitz_c0: float
    a1_threshold: float
    a1_threshold_tower_delta: float
    a1_reference_delta: float
    hole_measure: float
    h1_worst_ratio: float
    h1_worst_level: int
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "flags"}
        out["flags"] = {k: f.to_dict() for k, f in self.flags.items()}
        return out


def reference_delta(system: OpenSystem) -> float:
    """Length scale of the hole-free map, used for the hole-size budget.

    The admissibility threshold for a *proposed* hole is evaluated at the
    closed map's own scale; evaluating it at the hole-dependent scale
    would shrink the budget discontinuously with hole placement.
    """
    closed = build_open_system(system.map, EMPTY_HOLE)
    return choose_delta(closed)


def _a1_threshold(system: OpenSystem, delta: float) -> float:
    mu, al = system.map.mu, system.map.alpha
    ctilde = distortion_constant(system.map)
    c_at = ctilde * (2.0 * delta) ** al
    a0 = max(math.sqrt(2.0 / mu), 2.0**al * (1.0 + c_at) / mu**al)
    return (1.0 - a0) ** 2 * mu * delta**2 * (1.0 - math.sqrt(2.0 / mu)) / (1.0 + c_at)


def default_xi(mu: float, alpha: float) -> float:
    return min(0.5 * math.log(mu / 2.0), alpha * math.log(mu))


def compute_constants(
    tower: Tower,
    system: OpenSystem,
    xi_override: float | None = None,
) -> ConstantsReport:
    """All constants of the quantitative machinery, from measured tower data.

    q is the exponentially weighted measured hole mass, not its upper
    bound.  gamma is reported both as the generic floor mu/2 and as the
    measured minimum of F' e^(-beta l) over returning cells; the tighter
    measured value feeds the contraction coefficient a.
    """
    emap = system.map
    mu, al = emap.mu, emap.alpha
    theta = 2.0 / mu
    beta = math.log(mu)
    if xi_override is not None:
        xi = float(xi_override)
        if xi <= 0 or math.exp(-xi) <= max(theta, math.exp(-al * beta)) - 1e-12:
            raise DomainError(
                "xi override must satisfy exp(-xi) > max(theta, mu^-alpha)"
            )
    else:
        xi = default_xi(mu, al)
    ctilde = distortion_constant(emap)
    delta = tower.delta
    c_const = ctilde * (2.0 * delta) ** al
    b = 1.0 + c_const
    gamma_floor = mu / 2.0
    gamma_measured = tower.returning_fprime_floor()
    gamma = gamma_measured if math.isfinite(gamma_measured) else gamma_floor
    if al == 1.0:
        a = max(math.exp(-xi), 1.0 / gamma)
        a_generic = max(math.exp(-xi), 1.0 / gamma_floor)
    else:
        a = max(math.exp(-xi), (1.0 + c_const) / gamma**al)
        a_generic = max(math.exp(-xi), (1.0 + c_const) / gamma_floor**al)
    M = b / (1.0 - a) if a < 1.0 else math.inf

    levels = np.arange(1, len(tower.hole_mass_by_level))
    weights = np.exp(xi * (levels - 1.0))
    q = float(np.sum(weights * tower.hole_mass_by_level[1:]))
    mh = system.hole.total_measure
    n = len(tower.bases)
    root = math.sqrt(2.0 / mu)
    q_chain = n * mh / (delta * mu * (1.0 - root))
    q_paper = mh / (delta**2 * (mu - math.sqrt(2.0 * mu)))

    ret = tower.seg_fate == FATE_RETURN
    d_h3 = b * float(
        np.sum(np.exp(xi * tower.seg_level[ret].astype(float)) * tower.seg_zw[ret])
    )

    a_const = n / delta
    worst_ratio, worst_level = 0.0, 0
    for level in range(tower.L_max + 1):
        total = tower.level_mass[level] + tower.hole_mass_by_level[level]
        ratio = total / (a_const * theta**level)
        if ratio > worst_ratio:
            worst_ratio, worst_level = ratio, level

    ref_delta = reference_delta(system)
    c0 = M / (delta**2 * (mu - math.sqrt(2.0 * mu))) if math.isfinite(M) else math.inf

    report = ConstantsReport(
        alpha=al,
        mu=mu,
        delta=delta,
        n_bases=n,
        theta=theta,
        A_const=a_const,
        beta=beta,
        xi=xi,
        ctilde=ctilde,
        C=c_const,
        b=b,
        gamma_floor=gamma_floor,
        gamma_measured=gamma_measured,
        a=a,
        a_generic=a_generic,
        M=M,
        q=q,
        q_chain_bound=q_chain,
        q_paper_bound=q_paper,
        d_h3=d_h3,
        lambda_lower=1.0 - q * M if math.isfinite(M) else -math.inf,
        lambda_floor=math.exp(-xi),
        lipschitz_c0=c0,
        a1_threshold=_a1_threshold(system, ref_delta),
        a1_threshold_tower_delta=_a1_threshold(system, delta),
        a1_reference_delta=ref_delta,
        hole_measure=mh,
        h1_worst_ratio=worst_ratio,
        h1_worst_level=worst_level,
    )
    check_hypotheses(report, tower, system)
    return report


def check_hypotheses(report: ConstantsReport, tower: Tower,
                     system: OpenSystem) -> dict:
    """Tag each hypothesis pass/fail with its margin; never aborts."""
    flags = {}
    flags["H1"] = HypothesisFlag(
        name="H1 level decay",
        passed=report.h1_worst_ratio <= 1.0 + 1e-12,
        value=report.h1_worst_ratio,
        bound=1.0,
        note=f"worst level {report.h1_worst_level}",
    )
    h2_value = (1.0 + report.C) / report.gamma_measured**report.alpha
    flags["H2"] = HypothesisFlag(
        name="H2 bounded nonlinearity",
        passed=h2_value < 1.0,
        value=h2_value,
        bound=1.0,
        note="not required when alpha = 1" if report.alpha == 1.0 else "",
    )
    if math.isfinite(report.M) and report.a < 1.0:
        h3p_bound = (1.0 - report.a) ** 2 / report.b
        h3_bound = (1.0 - report.a) ** 2 / (4.0 * report.b)
    else:
        h3p_bound = h3_bound = 0.0
    flags["H3'"] = HypothesisFlag(
        name="H3' hole mass (no holes in base)",
        passed=report.q <= h3p_bound,
        value=report.q,
        bound=h3p_bound,
    )
    flags["H3"] = HypothesisFlag(
        name="H3 hole mass (general form)",
        passed=report.q <= h3_bound,
        value=report.q,
        bound=h3_bound,
        note="constructed towers have no base holes; reported, not exercised",
    )
    flags["A1"] = HypothesisFlag(
        name="A1 hole size",
        passed=report.hole_measure <= report.a1_threshold,
        value=report.hole_measure,
        bound=report.a1_threshold,
        note=f"threshold at reference delta {report.a1_reference_delta:.6g}",
    )
    hole_bound = tower.delta * (system.map.mu - 2.0) / 2.0
    flags["hole_width"] = HypothesisFlag(
        name="max hole component below delta (mu-2)/2",
        passed=system.hole.max_length <= hole_bound + EPS_GEO,
        value=system.hole.max_length,
        bound=hole_bound,
    )
    report.flags = flags
    return flags


# -- transitivity ----------------------------------------------------------------


@dataclass
class TransitivityResult:
    satisfied: bool
    n_by_interval: list
    horizon: int

    def to_dict(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "n_by_interval": self.n_by_interval,
            "horizon": self.horizon,
        }


def _forward_image(system: OpenSystem, lo: np.ndarray, hi: np.ndarray):
    """One-step image of a sorted union, branch by branch."""
    parts_lo, parts_hi = [], []
    for b in system.map.branches:
        clo, chi = clip_union(lo, hi, b.lo, b.hi)
        if len(clo) == 0:
            continue
        va = np.asarray(b.value(clo), dtype=float)
        vb = np.asarray(b.value(chi), dtype=float)
        parts_lo.append(np.minimum(va, vb))
        parts_hi.append(np.maximum(va, vb))
    if not parts_lo:
        return np.empty(0), np.empty(0)
    return merge_union(np.concatenate(parts_lo), np.concatenate(parts_hi))


def _clip_to_I(system: OpenSystem, lo, hi):
    parts_lo, parts_hi = [], []
    for a, b in system.I_components:
        clo, chi = clip_union(lo, hi, a, b)
        parts_lo.append(clo)
        parts_hi.append(chi)
    lo = np.concatenate(parts_lo) if parts_lo else np.empty(0)
    hi = np.concatenate(parts_hi) if parts_hi else np.empty(0)
    keep = hi - lo > 1e-15
    return merge_union(lo[keep], hi[keep])


def covering_time(
    system: OpenSystem,
    seed: tuple[float, float],
    horizon: int,
    cover_full_interval: bool = False,
) -> int | None:
    """Steps until accumulated surviving images of ``seed`` cover I.

    The n-th term is the n-step image of the part of the seed that
    survived n steps.  With ``cover_full_interval`` the tally instead
    accumulates raw one-step images (hole parts included) and must cover
    all of [0,1]; that is the stronger covering property used for
    shrinking-hole studies.
    """
    targets = [(0.0, 1.0)] if cover_full_interval else list(system.I_components)
    acc_lo = np.array([seed[0]])
    acc_hi = np.array([seed[1]])
    w_lo, w_hi = acc_lo.copy(), acc_hi.copy()
    if union_covers(acc_lo, acc_hi, targets):
        return 0
    for n in range(1, horizon + 1):
        img_lo, img_hi = _forward_image(system, w_lo, w_hi)
        if cover_full_interval:
            acc_lo = np.concatenate([acc_lo, img_lo])
            acc_hi = np.concatenate([acc_hi, img_hi])
        w_lo, w_hi = _clip_to_I(system, img_lo, img_hi)
        if not cover_full_interval:
            acc_lo = np.concatenate([acc_lo, w_lo])
            acc_hi = np.concatenate([acc_hi, w_hi])
        acc_lo, acc_hi = merge_union(acc_lo, acc_hi)
        if union_covers(acc_lo, acc_hi, targets):
            return n
        if len(w_lo) == 0:
            return None
    return None


def check_transitivity(system: OpenSystem, horizon: int = 30) -> TransitivityResult:
    """Least n per monotonicity interval with accumulated images covering I."""
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    ns = [covering_time(system, q, horizon) for q in system.Q]
    return TransitivityResult(
        satisfied=all(n is not None for n in ns),
        n_by_interval=ns,
        horizon=horizon,
    )
