"""Interval-level results: projected densities, bounds, and hole studies.

The tower fixed point is pushed down to a density on the surviving set by
summing every cell's contribution weighted by the inverse projection
derivative.  Everything downstream (conditional-invariance residual,
eigenvalue and density bounds, Lipschitz and shrinking-hole studies)
works with that interval density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .condition_checker import (
    ConstantsReport,
    TransitivityResult,
    check_transitivity,
    compute_constants,
    covering_time,
)
from .errors import DomainError, FamilyValidationError
from .interval_maps import (
    EMPTY_HOLE,
    Hole,
    OpenSystem,
    PiecewiseExpandingMap,
    build_open_system,
)
from .intervals import EPS_GEO
from .tower_builder import Tower, build_tower, choose_delta
from .transfer_operator import (
    FixedPointResult,
    TowerDensity,
    fixed_point,
    operator_for,
)

#: fixed, versioned battery of weak-convergence test functions
WEAK_BATTERY_V1 = (
    ("one", ("poly", (1.0,))),
    ("x", ("poly", (0.0, 1.0))),
    ("x^2", ("poly", (0.0, 0.0, 1.0))),
    ("1[0,1/2)", ("indicator", (0.0, 0.5))),
    ("1[1/2,1)", ("indicator", (0.5, 1.0))),
    ("1[1/4,1/2)", ("indicator", (0.25, 0.5))),
    ("1[3/4,1)", ("indicator", (0.75, 1.0))),
)


# -- interval densities ----------------------------------------------------------


@dataclass
class IntervalDensity:
    """Piecewise-linear density sampled on a grid over the surviving set.

    ``xs``/``vals`` are flat and ascending; ``cell_ok[k]`` marks whether
    the cell (xs[k], xs[k+1]) lies inside one surviving component (cells
    bridging holes carry no mass and are never interpolated across).
    """

    xs: np.ndarray
    vals: np.ndarray
    cell_ok: np.ndarray

    def __post_init__(self):
        dx = np.diff(self.xs)
        mids = 0.5 * (self.vals[:-1] + self.vals[1:])
        cell = np.where(self.cell_ok, dx * mids, 0.0)
        self._cum = np.concatenate(([0.0], np.cumsum(cell)))

    def integral(self) -> float:
        return float(self._cum[-1])

    def _antiderivative(self, x: np.ndarray) -> np.ndarray:
        """Exact integral of the piecewise-linear density from xs[0] to x."""
        x = np.clip(x, self.xs[0], self.xs[-1])
        idx = np.clip(np.searchsorted(self.xs, x, "right") - 1, 0,
                      len(self.xs) - 2)
        x0 = self.xs[idx]
        x1 = self.xs[idx + 1]
        span = np.where(x1 > x0, x1 - x0, 1.0)
        w = (x - x0) / span
        vx = (1.0 - w) * self.vals[idx] + w * self.vals[idx + 1]
        partial = np.where(self.cell_ok[idx],
                           0.5 * (self.vals[idx] + vx) * (x - x0), 0.0)
        return self._cum[idx] + partial

    def integrate_between(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorized exact integrals over [a_k, b_k]."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        out = self._antiderivative(b) - self._antiderivative(a)
        return np.where(b > a, out, 0.0)

    def scaled(self, factor: float) -> "IntervalDensity":
        return IntervalDensity(self.xs, self.vals * factor, self.cell_ok)

    def eval(self, x) -> np.ndarray:
        """Pointwise values; zero in holes and outside the grid."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.clip(np.searchsorted(self.xs, x, "right") - 1, 0,
                      len(self.xs) - 2)
        ok = (x >= self.xs[0]) & (x <= self.xs[-1]) & self.cell_ok[idx]
        x0 = self.xs[idx]
        x1 = self.xs[idx + 1]
        w = np.where(x1 > x0, (x - x0) / np.where(x1 > x0, x1 - x0, 1.0), 0.0)
        out = (1.0 - w) * self.vals[idx] + w * self.vals[idx + 1]
        exact = x == self.xs[-1]
        out[exact] = self.vals[-1]
        return np.where(ok | exact, out, 0.0)

    def integrate_over(self, a: float, b: float) -> float:
        """Exact integral of the piecewise-linear density over [a, b]."""
        return float(self.integrate_between(np.asarray(a), np.asarray(b)))

    def moment(self, coeffs) -> float:
        """Integral of a polynomial against the density (Simpson, exact)."""
        dx = np.diff(self.xs)
        va, vb = self.vals[:-1], self.vals[1:]
        xm = 0.5 * (self.xs[:-1] + self.xs[1:])
        vm = 0.5 * (va + vb)
        ga = np.polyval(coeffs[::-1], self.xs[:-1])
        gb = np.polyval(coeffs[::-1], self.xs[1:])
        gm = np.polyval(coeffs[::-1], xm)
        cell = dx / 6.0 * (ga * va + 4.0 * gm * vm + gb * vb)
        return float(np.sum(cell[self.cell_ok]))

    def weak_integral(self, spec) -> float:
        kind, data = spec
        if kind == "poly":
            return self.moment(np.asarray(data, dtype=float))
        if kind == "indicator":
            return self.integrate_over(*data)
        raise DomainError(f"unknown test-function kind {kind!r}")

    def sup(self) -> float:
        mask = np.zeros(len(self.vals), dtype=bool)
        mask[:-1] |= self.cell_ok
        mask[1:] |= self.cell_ok
        return float(np.max(self.vals[mask]))

    def inf(self) -> float:
        mask = np.zeros(len(self.vals), dtype=bool)
        mask[:-1] |= self.cell_ok
        mask[1:] |= self.cell_ok
        return float(np.min(self.vals[mask]))

    def variation(self) -> float:
        """Total variation summed over surviving components."""
        jumps = np.abs(np.diff(self.vals))
        return float(np.sum(jumps[self.cell_ok]))


def l1_distance(a: IntervalDensity, b: IntervalDensity, refine: int = 4) -> float:
    """L1 distance on [0,1], extending both densities by zero off-support.

    Midpoint quadrature on a refinement of the joint knot set: exact for
    the piecewise-linear difference except in the few subcells where it
    changes sign.
    """
    knots = np.unique(np.concatenate([a.xs, b.xs]))
    steps = np.linspace(0.0, 1.0, refine + 1)
    edges = np.unique(
        np.concatenate([knots[:-1] + np.diff(knots) * s for s in steps]
                       + [knots[-1:]])
    )
    widths = np.diff(edges)
    mids = edges[:-1] + widths / 2.0
    diff = np.abs(a.eval(mids) - b.eval(mids))
    return float(np.sum(diff * widths))


# -- projection ------------------------------------------------------------------


def output_grid(
    system: OpenSystem,
    out_bins: int,
    extra_points=None,
) -> tuple[np.ndarray, np.ndarray]:
    """(xs, cell_ok): grid points over I proportional to component length.

    ``extra_points`` are inserted as *doubled* breakpoints: the projected
    density jumps at projected cell endpoints, and a pair of nodes at the
    same abscissa carries the two one-sided limits so piecewise-linear
    integration stays sharp instead of smearing the jumps.
    """
    total = system.measure_I
    xs_parts = []
    for lo, hi in system.I_components:
        n = max(int(round(out_bins * (hi - lo) / total)), 2)
        part = np.linspace(lo, hi, n)
        if extra_points is not None:
            inside = np.unique(
                extra_points[(extra_points > lo) & (extra_points < hi)]
            )
            part = np.sort(np.concatenate([np.unique(np.concatenate(
                [part, inside])), inside]))
        xs_parts.append(part)
    xs = np.concatenate(xs_parts)
    cell_ok = np.ones(len(xs) - 1, dtype=bool)
    pos = 0
    for part in xs_parts[:-1]:
        pos += len(part)
        cell_ok[pos - 1] = False  # the cell bridging into the next component
    return xs, cell_ok


def project_density(
    tower: Tower,
    phi: TowerDensity,
    out_bins: int = 4096,
) -> IntervalDensity:
    """Push a tower density down to the interval.

    Every cell whose projected interval covers a grid point contributes
    its sampled value divided by the projection derivative there; the
    result is renormalized to unit mass to absorb quadrature error.
    """
    t = tower
    g = t.g
    # the density jumps at projected cell endpoints by (value / projection
    # derivative) there; resolve every jump that is visible at output scale
    vals2 = np.abs(phi.values.reshape(t.n_segments, g))
    dz2 = t.node_dimgdz.reshape(t.n_segments, g)
    jump_lo = vals2[:, 0] / dz2[:, 0]
    jump_hi = vals2[:, -1] / dz2[:, -1]
    visible = np.concatenate(
        [t.seg_img[jump_lo >= 1e-8, 0], t.seg_img[jump_hi >= 1e-8, 1]]
    )
    extra = np.unique(visible)
    xs, cell_ok = output_grid(t.system, out_bins, extra_points=extra)
    psi = np.zeros_like(xs)

    def contribution(s, pts, lo, hi):
        pos = np.clip((pts - lo) / (hi - lo), 0.0, 1.0) * (g - 1)
        j = np.minimum(pos.astype(int), g - 2)
        frac = pos - j
        sl = t.node_slice(s)
        v = phi.values[sl]
        d = t.node_dimgdz[sl]
        f_here = v[j] * (1.0 - frac) + v[j + 1] * frac
        d_here = d[j] * (1.0 - frac) + d[j + 1] * frac
        return f_here / d_here

    # cells of one chain (same level and parent; all bases jointly at level
    # 0) tile their footprint and share endpoint floats: each claims
    # [lo, hi) starting at the *last* grid copy of lo, and a second pass
    # credits its right limit to the *first* copy of hi unless a same-chain
    # sibling starts there.  Doubled jump nodes thus carry the one-sided
    # limits, and every tower point is represented exactly once.
    def start_index(value: float) -> int:
        j = int(np.searchsorted(xs, value, "right"))
        if j > 0 and xs[j - 1] == value:
            return j - 1
        return j

    left_claimed: dict[tuple[int, int], set] = {}
    for s in range(t.n_segments):
        lo, _ = t.seg_img[s]
        p = start_index(lo)
        if p < len(xs) and xs[p] == lo:
            key = (int(t.seg_level[s]), int(t.seg_parent[s]))
            left_claimed.setdefault(key, set()).add(p)
    for s in range(t.n_segments):
        lo, hi = t.seg_img[s]
        i0 = start_index(lo)
        i1 = int(np.searchsorted(xs, hi, "left"))
        if i1 > i0:
            psi[i0:i1] += contribution(s, xs[i0:i1], lo, hi)
        if i1 < len(xs) and xs[i1] == hi:
            key = (int(t.seg_level[s]), int(t.seg_parent[s]))
            if i1 not in left_claimed.get(key, ()):
                psi[i1] += float(contribution(s, xs[i1 : i1 + 1], lo, hi)[0])
    out = IntervalDensity(xs, psi, cell_ok)
    total = out.integral()
    if total <= 0.0:
        raise DomainError("projected density has no mass")
    return out.scaled(1.0 / total)


def projection_cover_counts(tower: Tower, x: float) -> dict:
    """Number of cells covering x, keyed by (level, base): diagnostic."""
    counts: dict[tuple[int, int], int] = {}
    for s in range(tower.n_segments):
        lo, hi = tower.seg_img[s]
        if lo - EPS_GEO <= x <= hi + EPS_GEO:
            key = (int(tower.seg_level[s]), int(tower.seg_base[s]))
            counts[key] = counts.get(key, 0) + 1
    return counts


# -- conditional invariance -------------------------------------------------------


def conditional_invariance_residual(
    system: OpenSystem,
    psi: IntervalDensity,
    lam: float,
    grid: int | None = None,
) -> float:
    """max over grid cells A of |nu(T^-1 A) - lam * nu(A)|.

    The pullback integrates the piecewise-linear density exactly over the
    branch preimages of each cell, so the residual measures the density
    and eigenvalue themselves, not the quadrature.  By default the cells
    are the density's own grid; pass ``grid`` to test on a fresh uniform
    decomposition of that resolution instead.
    """
    if grid is not None:
        gxs, gok = output_grid(system, grid)
        a_lo = gxs[:-1][gok]
        a_hi = gxs[1:][gok]
    else:
        a_lo = psi.xs[:-1][psi.cell_ok]
        a_hi = psi.xs[1:][psi.cell_ok]
    nu_a = psi.integrate_between(a_lo, a_hi)
    pre = np.zeros_like(nu_a)
    for br in system.map.branches:
        ilo, ihi = br.image()
        ca = np.maximum(a_lo, ilo)
        cb = np.minimum(a_hi, ihi)
        m = cb > ca
        if not np.any(m):
            continue
        pa = np.asarray(br.invert(ca[m]), dtype=float)
        pb = np.asarray(br.invert(cb[m]), dtype=float)
        lo = np.clip(np.minimum(pa, pb), br.lo, br.hi)
        hi = np.clip(np.maximum(pa, pb), br.lo, br.hi)
        pre[m] += psi.integrate_between(lo, hi)
    return float(np.max(np.abs(pre - lam * nu_a)))


def surviving_mass_after_step(system: OpenSystem, psi: IntervalDensity) -> float:
    """Mass of the density surviving one step: the interval-level eigenvalue."""
    comp_lo = np.array([a for a, _ in system.I_components])
    comp_hi = np.array([b for _, b in system.I_components])
    total = 0.0
    for br in system.map.branches:
        ilo, ihi = br.image()
        ca = np.maximum(comp_lo, ilo)
        cb = np.minimum(comp_hi, ihi)
        m = cb > ca
        if not np.any(m):
            continue
        pa = np.asarray(br.invert(ca[m]), dtype=float)
        pb = np.asarray(br.invert(cb[m]), dtype=float)
        lo = np.clip(np.minimum(pa, pb), br.lo, br.hi)
        hi = np.clip(np.maximum(pa, pb), br.lo, br.hi)
        total += float(np.sum(psi.integrate_between(lo, hi)))
    return total


# -- solve pipeline ---------------------------------------------------------------


@dataclass
class SolveSettings:
    delta_override: float | None = None
    xi_override: float | None = None
    L_max: int | None = None
    tail_target: float = 1e-9
    g: int = 16
    out_bins: int = 4096
    tol: float = 1e-10
    max_iter: int = 100_000
    horizon: int = 30
    max_segments: int = 500_000


@dataclass
class DensityBounds:
    sup_value: float
    sup_bound: float
    inf_value: float
    inf_bound: float | None
    variation_value: float | None
    variation_bound: float | None
    witness_n0: int | None
    notes: list = field(default_factory=list)

    @property
    def sup_ok(self) -> bool:
        return self.sup_value <= self.sup_bound * (1.0 + 1e-9)

    @property
    def inf_ok(self) -> bool | None:
        if self.inf_bound is None:
            return None
        return self.inf_value >= self.inf_bound * (1.0 - 1e-9)

    @property
    def variation_ok(self) -> bool | None:
        if self.variation_bound is None or self.variation_value is None:
            return None
        return self.variation_value <= self.variation_bound * (1.0 + 1e-9)

    def to_dict(self) -> dict:
        return {
            "sup": {"value": self.sup_value, "bound": self.sup_bound,
                    "ok": self.sup_ok},
            "inf": {"value": self.inf_value, "bound": self.inf_bound,
                    "ok": self.inf_ok},
            "variation": {"value": self.variation_value,
                          "bound": self.variation_bound,
                          "ok": self.variation_ok},
            "witness_n0": self.witness_n0,
            "notes": self.notes,
        }


@dataclass
class AccimResult:
    system: OpenSystem
    tower: Tower
    constants: ConstantsReport
    transitivity: TransitivityResult
    fp: FixedPointResult
    psi: IntervalDensity
    lam: float
    residual_ci: float
    bounds: DensityBounds

    @property
    def escape_rate(self) -> float:
        return -math.log(self.lam)

    @property
    def hypotheses_pass(self) -> bool:
        keys = ("H1", "H2", "H3'", "A1")
        return all(self.constants.flags[k].passed for k in keys)

    def summary_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "escape_rate": self.escape_rate,
            "fixed_point_residual": self.fp.residual,
            "iterations": self.fp.iterations,
            "conditional_invariance_residual": self.residual_ci,
            "lambda_lower_1_minus_qM": self.constants.lambda_lower,
            "lambda_floor_exp_minus_xi": self.constants.lambda_floor,
            "hypotheses_pass": self.hypotheses_pass,
            "sup_psi": self.bounds.sup_value,
            "inf_psi": self.bounds.inf_value,
            "variation_psi": self.bounds.variation_value,
            "tail_mass": self.tower.tail_mass,
            "transitivity": self.transitivity.to_dict(),
            "flags": {k: f.to_dict() for k, f in self.constants.flags.items()},
        }


def density_bounds(
    tower: Tower,
    phi: TowerDensity,
    psi: IntervalDensity,
    report: ConstantsReport,
    horizon: int = 30,
) -> DensityBounds:
    """Measured sup/inf/variation of the interval density vs their bounds."""
    system = tower.system
    n, delta, mu = report.n_bases, report.delta, report.mu
    tail_series = 1.0 / (1.0 - math.sqrt(2.0 / mu))

    sup0 = 0.0
    best_base, best_inf = None, 0.0
    for s in range(tower.n_segments):
        if tower.seg_level[s] != 0:
            continue
        v = phi.values[tower.node_slice(s)]
        sup0 = max(sup0, float(np.max(v)))
    for base in tower.bases:
        segs = [
            s
            for s in range(tower.n_segments)
            if tower.seg_level[s] == 0 and tower.seg_base[s] == base.index
        ]
        inf_b = min(float(np.min(phi.values[tower.node_slice(s)])) for s in segs)
        if best_base is None or inf_b > best_inf:
            best_base, best_inf = base, inf_b

    sup_bound = n * sup0 / (2.0 * delta) * tail_series
    notes = []
    witness = None
    inf_bound = None
    if best_inf > 0.0:
        witness = covering_time(system, (best_base.lo, best_base.hi), horizon)
        if witness is None:
            notes.append(
                "covering time undetermined within horizon; "
                "density floor not verified"
            )
        else:
            eta = system.map.eta
            inf_bound = best_inf / (2.0 * delta * eta**witness)
    else:
        notes.append("fixed density vanishes on every reference interval")

    var_value = var_bound = None
    if system.map.alpha == 1.0 and math.isfinite(report.M):
        var_value = psi.variation()
        var_bound = report.ctilde + 3.0 * n * report.M / (2.0 * delta) * tail_series
    return DensityBounds(
        sup_value=psi.sup(),
        sup_bound=sup_bound,
        inf_value=psi.inf(),
        inf_bound=inf_bound,
        variation_value=var_value,
        variation_bound=var_bound,
        witness_n0=witness,
        notes=notes,
    )


def solve_system(system: OpenSystem, settings: SolveSettings | None = None,
                 f0: TowerDensity | None = None) -> AccimResult:
    """Full pipeline: tower, constants, fixed point, projection, residuals."""
    st = settings or SolveSettings()
    delta = st.delta_override if st.delta_override is not None else choose_delta(system)
    tower = build_tower(
        system,
        delta,
        L_max=st.L_max,
        g=st.g,
        tail_target=st.tail_target,
        max_segments=st.max_segments,
    )
    constants = compute_constants(tower, system, xi_override=st.xi_override)
    trans = check_transitivity(system, st.horizon)
    fp = fixed_point(tower, f0=f0, tol=st.tol, max_iter=st.max_iter)
    psi = project_density(tower, fp.phi, out_bins=st.out_bins)
    residual = conditional_invariance_residual(system, psi, fp.lam)
    bounds = density_bounds(tower, fp.phi, psi, constants, horizon=st.horizon)
    return AccimResult(
        system=system,
        tower=tower,
        constants=constants,
        transitivity=trans,
        fp=fp,
        psi=psi,
        lam=fp.lam,
        residual_ci=residual,
        bounds=bounds,
    )


def solve(emap: PiecewiseExpandingMap, hole: Hole,
          settings: SolveSettings | None = None) -> AccimResult:
    return solve_system(build_open_system(emap, hole), settings)


def srb_closed(emap: PiecewiseExpandingMap,
               settings: SolveSettings | None = None) -> AccimResult:
    """Invariant density of the hole-free map via the same pipeline."""
    return solve(emap, EMPTY_HOLE, settings)


# -- studies ----------------------------------------------------------------------


@dataclass
class LipschitzRow:
    hole_measure: float
    lam: float
    one_minus_lambda: float
    c0: float
    bound: float
    slack: float
    a1_passed: bool

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def _lipschitz_member(args):
    emap, hole, settings = args
    res = solve(emap, hole, settings)
    return (res.lam, res.constants.lipschitz_c0,
            bool(res.constants.flags["A1"].passed))


def _shrink_member(args):
    emap, hole, settings = args
    res = solve(emap, hole, settings)
    return (res.lam, res.psi.xs, res.psi.vals, res.psi.cell_ok)


def _map_members(fn, jobs, workers: int):
    """Order-preserving map, optionally across processes.

    Family members are independent solves; results are merged in input
    order, so outputs are identical for every worker count.
    """
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def lipschitz_study(
    emap: PiecewiseExpandingMap,
    holes: list[Hole],
    settings: SolveSettings | None = None,
    workers: int = 1,
) -> list[LipschitzRow]:
    """1 - lambda against the linear hole-measure bound, one row per hole."""
    results = _map_members(
        _lipschitz_member, [(emap, h, settings) for h in holes], workers
    )
    rows = []
    for hole, (lam, c0, a1) in zip(holes, results):
        mh = hole.total_measure
        bound = c0 * mh
        rows.append(
            LipschitzRow(
                hole_measure=mh,
                lam=lam,
                one_minus_lambda=1.0 - lam,
                c0=c0,
                bound=bound,
                slack=bound - (1.0 - lam),
                a1_passed=a1,
            )
        )
    return rows


@dataclass
class ShrinkStudyRow:
    s: float
    hole_measure: float
    lam: float
    one_minus_lambda_over_mh: float | None
    l1_dist: float
    weak_dists: dict

    def to_dict(self) -> dict:
        out = self.__dict__.copy()
        out["weak_dists"] = dict(self.weak_dists)
        return out


def validate_shrink_family(
    emap: PiecewiseExpandingMap,
    s_values: list[float],
    holes: list[Hole],
    horizon: int = 30,
):
    """Nesting, size, endpoint, and covering conditions for a hole family."""
    if len(s_values) != len(holes):
        raise FamilyValidationError("one hole per scale value is required")
    if any(b <= a for a, b in zip(s_values[1:], s_values)):
        raise FamilyValidationError("scale values must be strictly decreasing")
    largest = holes[0]
    for s, hole in zip(s_values, holes):
        if hole.total_measure > s + EPS_GEO:
            raise FamilyValidationError(
                f"hole of measure {hole.total_measure} exceeds its scale {s}"
            )
        for a, b in hole.intervals:
            inside = [
                (ta, tb) for ta, tb in largest.intervals
                if a >= ta - EPS_GEO and b <= tb + EPS_GEO
            ]
            if not inside:
                raise FamilyValidationError(
                    f"component ({a}, {b}) is not nested in the largest hole"
                )
        for ta, tb in largest.intervals:
            contained = [
                (a, b) for a, b in hole.intervals
                if a >= ta - EPS_GEO and b <= tb + EPS_GEO
            ]
            if len(contained) > 1:
                raise FamilyValidationError(
                    "a component of the largest hole contains several "
                    "components of a smaller one"
                )
    cuts = emap.cut_points
    for ta, tb in largest.intervals:
        for cut in cuts:
            if ta - EPS_GEO <= cut <= tb + EPS_GEO:
                for s, hole in zip(s_values, holes):
                    if hole.count == 0:
                        continue
                    touches = any(
                        a - EPS_GEO <= cut <= b + EPS_GEO
                        for a, b in hole.intervals
                    )
                    if not touches:
                        raise FamilyValidationError(
                            f"branch endpoint {cut} lies in the closure of the "
                            "largest hole but not of every smaller one"
                        )
    system_t = build_open_system(emap, largest)
    for q in system_t.Q:
        if covering_time(system_t, q, horizon, cover_full_interval=True) is None:
            raise FamilyValidationError(
                "largest-hole system fails the full covering property "
                f"within horizon {horizon}"
            )


def shrink_study(
    emap: PiecewiseExpandingMap,
    s_values: list[float],
    holes: list[Hole] | None = None,
    battery=WEAK_BATTERY_V1,
    settings: SolveSettings | None = None,
    center: float = 0.5,
    workers: int = 1,
) -> list[ShrinkStudyRow]:
    """Shrinking-hole convergence study against the hole-free density.

    Rows are ordered by decreasing scale; distances are L1 between the
    densities (zero-extended over the holes) and the weak-battery gaps
    |int g dnu_s - int g dnu|.
    """
    if holes is None:
        holes = [
            Hole(((center - s / 2.0, center + s / 2.0),)) if s > 0 else EMPTY_HOLE
            for s in s_values
        ]
    validate_shrink_family(emap, s_values, holes,
                           horizon=(settings or SolveSettings()).horizon)
    reference = srb_closed(emap, settings)
    ref_weak = {name: reference.psi.weak_integral(spec) for name, spec in battery}
    jobs = [(emap, h, settings) for h in holes if h.count > 0]
    solved = iter(_map_members(_shrink_member, jobs, workers))
    rows = []
    for s, hole in zip(s_values, holes):
        if hole.count == 0:
            lam, psi = reference.lam, reference.psi
        else:
            lam, xs, vals, ok = next(solved)
            psi = IntervalDensity(xs, vals, ok)
        mh = hole.total_measure
        weak = {
            name: abs(psi.weak_integral(spec) - ref_weak[name])
            for name, spec in battery
        }
        rows.append(
            ShrinkStudyRow(
                s=s,
                hole_measure=mh,
                lam=lam,
                one_minus_lambda_over_mh=(1.0 - lam) / mh if mh > 0 else None,
                l1_dist=l1_distance(psi, reference.psi),
                weak_dists=weak,
            )
        )
    return rows
