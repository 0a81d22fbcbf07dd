"""Transfer operator on the tower, weighted norms, and fixed-point iteration.

Densities are sampled at each cell's nodes (uniform in the projected
coordinate) and extended piecewise-linearly.  One operator application is
then a fixed sparse matrix acting on the node vector: cells above the
base pull their parent's values straight up (unit derivative), base cells
sum over the returning cells covering them weighted by 1/F'.  Mass lost
into hole cells, or upward through the truncation level, simply never
reaches an output node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from .errors import DomainError, TotalEscapeError
from .interval_maps import OpenSystem
from .intervals import clip_union, intersect_unions, measure
from .tower_builder import FATE_HOLE, FATE_RETURN, FATE_UP, Tower

#: node pairs closer than this (tower metric) are excluded from sampled
#: Holder ratios: below it differences are dominated by rounding noise
PAIR_FLOOR = 1e-9


@dataclass
class TowerDensity:
    """Per-cell sampled density: one value per node of the tower."""

    tower: Tower
    values: np.ndarray

    def copy(self) -> "TowerDensity":
        return TowerDensity(self.tower, self.values.copy())

    def integral(self) -> float:
        return float(np.dot(operator_for(self.tower).mass_weights, self.values))

    def segment_values(self, seg: int) -> np.ndarray:
        return self.values[self.tower.node_slice(seg)]


def uniform_density(tower: Tower) -> TowerDensity:
    """The constant probability density on the truncated tower."""
    f = TowerDensity(tower, np.ones(tower.n_segments * tower.g))
    return normalize(f)


class TowerOperator:
    """Assembled transfer operator and quadrature data for one tower."""

    def __init__(self, tower: Tower):
        self.tower = tower
        self.g = tower.g
        self._assemble()

    # -- quadrature -------------------------------------------------------

    def _segment_dz(self, seg: int) -> np.ndarray:
        sl = self.tower.node_slice(seg)
        xs = self.tower.node_x[sl]
        dv = self.tower.node_dimgdz[sl]
        return np.diff(xs) * 0.5 * (1.0 / dv[:-1] + 1.0 / dv[1:])

    def _assemble(self):
        t = self.tower
        g = self.g
        n_nodes = t.n_segments * g

        w = np.zeros(n_nodes)
        seg_width = np.zeros(t.n_segments)
        for s in range(t.n_segments):
            dz = self._segment_dz(s)
            sl = t.node_slice(s)
            w[sl.start] += dz[0] / 2.0
            w[sl.start + 1 : sl.stop - 1] += (dz[:-1] + dz[1:]) / 2.0
            w[sl.stop - 1] += dz[-1] / 2.0
            seg_width[s] = float(np.sum(dz))
        self.mass_weights = w
        self.segment_mass = seg_width

        rows, cols, vals = [], [], []
        branches = t.system.map.branches

        # climbing: nodes of level>=1 cells read the parent cell one level
        # down through the connecting branch
        for s in range(t.n_segments):
            if t.seg_level[s] == 0:
                continue
            p = int(t.seg_parent[s])
            bidx = int(t.seg_branch[p])
            xs = t.node_x[t.node_slice(s)]
            ys = branches[bidx].invert(xs)
            self._append_interp(rows, cols, vals, s, p, ys, None)

        # returns: base nodes (all level-0 cells) gather every returning
        # cell that maps onto their base, weighted by 1/F'
        by_target: dict[int, list[int]] = {}
        for r in np.nonzero(t.seg_fate == FATE_RETURN)[0]:
            by_target.setdefault(int(t.seg_target[r]), []).append(int(r))
        for s in range(t.n_segments):
            if t.seg_level[s] != 0:
                continue
            base = int(t.seg_base[s])
            xs = t.node_x[t.node_slice(s)]
            for r in by_target.get(base, ()):
                bidx = int(t.seg_branch[r])
                ys = branches[bidx].invert(xs)
                fp = self._interp_fprime(r, ys)
                self._append_interp(rows, cols, vals, s, r, ys, 1.0 / fp)

        self.matrix = csr_matrix(
            (np.array(vals), (np.array(rows), np.array(cols))),
            shape=(n_nodes, n_nodes),
        )
        self.hole_segments = np.nonzero(t.seg_fate == FATE_HOLE)[0]
        self.tail_segments = np.nonzero(
            (t.seg_fate == FATE_UP) & (t.seg_level == t.L_max)
        )[0]

    def _append_interp(self, rows, cols, vals, s, src, ys, factor):
        t = self.tower
        g = self.g
        lo, hi = t.seg_img[src]
        pos = np.clip((ys - lo) / (hi - lo), 0.0, 1.0) * (g - 1)
        j = np.minimum(pos.astype(int), g - 2)
        frac = pos - j
        base_row = s * g
        base_col = src * g
        for k in range(g):
            f0 = (1.0 - frac[k]) if factor is None else (1.0 - frac[k]) * factor[k]
            f1 = frac[k] if factor is None else frac[k] * factor[k]
            rows.append(base_row + k)
            cols.append(base_col + j[k])
            vals.append(f0)
            rows.append(base_row + k)
            cols.append(base_col + j[k] + 1)
            vals.append(f1)

    def _interp_fprime(self, r, ys):
        t = self.tower
        sl = t.node_slice(r)
        lo, hi = t.seg_img[r]
        pos = np.clip((ys - lo) / (hi - lo), 0.0, 1.0) * (self.g - 1)
        j = np.minimum(pos.astype(int), self.g - 2)
        frac = pos - j
        fp = t.node_fprime[sl]
        return fp[j] * (1.0 - frac) + fp[j + 1] * frac

    # -- operator actions --------------------------------------------------

    def apply(self, f: TowerDensity) -> TowerDensity:
        if f.tower is not self.tower:
            raise DomainError("density belongs to a different tower")
        return TowerDensity(self.tower, self.matrix @ f.values)

    def mass(self, values: np.ndarray) -> float:
        return float(np.dot(self.mass_weights, values))

    def escape_flux(self, f: TowerDensity) -> tuple[float, float]:
        """Mass of f over hole-fated cells and over the truncation tail."""
        hole = 0.0
        for s in self.hole_segments:
            hole += self.mass_of_segment(f, int(s))
        tail = 0.0
        for s in self.tail_segments:
            tail += self.mass_of_segment(f, int(s))
        return hole, tail

    def mass_of_segment(self, f: TowerDensity, seg: int) -> float:
        sl = self.tower.node_slice(seg)
        dz = self._segment_dz(seg)
        v = f.values[sl]
        return float(np.sum(dz * 0.5 * (v[:-1] + v[1:])))


def operator_for(tower: Tower) -> TowerOperator:
    op = getattr(tower, "_operator", None)
    if op is None:
        op = TowerOperator(tower)
        tower._operator = op
    return op


def apply_P(tower: Tower, f: TowerDensity) -> TowerDensity:
    """One application of the transfer operator to a sampled density."""
    return operator_for(tower).apply(f)


def normalize(f: TowerDensity) -> TowerDensity:
    total = f.integral()
    if total <= 0.0:
        raise TotalEscapeError("density has no surviving mass to normalize")
    return TowerDensity(f.tower, f.values / total)


@dataclass
class FixedPointResult:
    phi: TowerDensity
    lam: float
    iterations: int
    residual: float
    converged: bool

    @property
    def escape_rate(self) -> float:
        return -math.log(self.lam)


def fixed_point(
    tower: Tower,
    f0: TowerDensity | None = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    min_iter: int | None = None,
) -> FixedPointResult:
    """Iterate the normalized operator to its fixed density.

    Returns the density, the eigenvalue (per-step surviving mass of the
    fixed density), and the final L1 residual.  Values climb one level per
    iteration, so cells at level l are only refreshed after l steps; the
    default minimum iteration count covers the full tower height even when
    the (mass-weighted) residual converges earlier.  Non-convergence
    within max_iter is reported in the result, not raised.
    """
    op = operator_for(tower)
    f = normalize(f0 if f0 is not None else
                  TowerDensity(tower, np.ones(tower.n_segments * tower.g)))
    if min_iter is None:
        min_iter = tower.L_max + 40
    lam = 1.0
    residual = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new_vals = op.matrix @ f.values
        lam = op.mass(new_vals)
        if lam <= 1e-300:
            raise TotalEscapeError("all mass escapes in one step")
        new_vals /= lam
        residual = float(np.dot(op.mass_weights, np.abs(new_vals - f.values)))
        f = TowerDensity(tower, new_vals)
        if residual <= tol and iterations >= min_iter:
            break
    return FixedPointResult(
        phi=f,
        lam=lam,
        iterations=iterations,
        residual=residual,
        converged=residual <= tol,
    )


# -- weighted norms ------------------------------------------------------------


def norms(
    f: TowerDensity,
    xi: float,
    alpha: float | None = None,
    pair_floor: float = PAIR_FLOOR,
) -> tuple[float, float, float]:
    """(weighted sup, Holder-ratio seminorm, their max) of a sampled density.

    The sup part weights level l by exp(-xi*l).  The ratio part is
    estimated from sample pairs (alpha < 1) or adjacent-node difference
    quotients (alpha = 1); pairs closer than ``pair_floor`` in the tower
    metric are skipped, since below that spacing the quotient measures
    rounding noise rather than regularity.
    """
    t = f.tower
    if alpha is None:
        alpha = t.system.map.alpha
    op = operator_for(t)
    sup_norm = 0.0
    r_norm = 0.0
    for s in range(t.n_segments):
        sl = t.node_slice(s)
        v = f.values[sl]
        wt = math.exp(-xi * int(t.seg_level[s]))
        sup_norm = max(sup_norm, wt * float(np.max(np.abs(v))))
        dz = op._segment_dz(s)
        if alpha == 1.0:
            lows = np.minimum(np.abs(v[:-1]), np.abs(v[1:]))
            ok = (dz >= pair_floor) & (lows > 0.0)
            if np.any(ok):
                ratios = np.abs(np.diff(v))[ok] / (dz[ok] * lows[ok])
                r_norm = max(r_norm, wt * float(np.max(ratios)))
        else:
            zpos = np.concatenate(([0.0], np.cumsum(dz)))
            for i in range(len(v)):
                gaps = np.abs(zpos - zpos[i])
                denom = np.abs(v[i])
                if denom == 0.0:
                    continue
                ok = gaps >= pair_floor
                if np.any(ok):
                    ratios = np.abs(v - v[i])[ok] / (gaps[ok] ** alpha * denom)
                    r_norm = max(r_norm, wt * float(np.max(ratios)))
    return sup_norm, r_norm, max(sup_norm, r_norm)


def sup_inf_slack(f: TowerDensity, xi: float) -> float:
    """Worst violation of sup|f| <= (1 + |f|_r e^(xi l)) inf|f| over cells."""
    t = f.tower
    _, r_norm, _ = norms(f, xi)
    worst = 0.0
    for s in range(t.n_segments):
        v = np.abs(f.segment_values(s))
        level = int(t.seg_level[s])
        bound = (1.0 + r_norm * math.exp(xi * level)) * float(np.min(v))
        worst = max(worst, float(np.max(v)) - bound)
    return worst


def mass_balance(tower: Tower, f: TowerDensity) -> tuple[float, float]:
    """(|Pf|, |f| - hole flux - truncation flux): equal up to quadrature."""
    op = operator_for(tower)
    pf = op.apply(f)
    hole, tail = op.escape_flux(f)
    return pf.integral(), f.integral() - hole - tail


def upper_level_sup(f: TowerDensity, xi: float) -> float:
    """Weighted sup of f restricted to levels >= 1."""
    t = f.tower
    out = 0.0
    for s in range(t.n_segments):
        level = int(t.seg_level[s])
        if level == 0:
            continue
        v = f.segment_values(s)
        out = max(out, math.exp(-xi * level) * float(np.max(np.abs(v))))
    return out


@dataclass
class LasotaYorkeReport:
    f_sup: float
    f_r: float
    pf_r: float
    pf_upper_sup: float
    r_bound: float          # a * |f|_r + b
    sup_bound: float        # a * |f|_sup

    @property
    def r_ok(self) -> bool:
        return self.pf_r <= self.r_bound * (1.0 + 1e-9) + 1e-12

    @property
    def sup_ok(self) -> bool:
        return self.pf_upper_sup <= self.sup_bound * (1.0 + 1e-9) + 1e-12


def lasota_yorke_check(tower: Tower, f: TowerDensity, xi: float, a: float,
                       b: float) -> LasotaYorkeReport:
    """Evaluate |Pf|_r <= a |f|_r + b and the upper-level sup contraction."""
    pf = apply_P(tower, f)
    f_sup, f_r, _ = norms(f, xi)
    _, pf_r, _ = norms(pf, xi)
    return LasotaYorkeReport(
        f_sup=f_sup,
        f_r=f_r,
        pf_r=pf_r,
        pf_upper_sup=upper_level_sup(pf, xi),
        r_bound=a * f_r + b,
        sup_bound=a * f_sup,
    )


def random_density(tower: Tower, seed: int) -> TowerDensity:
    """A randomized admissible density: smooth on bases, lifted upstairs.

    Base profiles are smooth positive waves; each higher cell copies its
    parent (as the operator itself does) times a mild random level factor,
    which keeps the Holder ratios bounded at every depth.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    t = tower
    op = operator_for(t)
    values = np.zeros(t.n_segments * t.g)
    for s in range(t.n_segments):
        if t.seg_level[s] != 0:
            continue
        sl = t.node_slice(s)
        xs = t.node_x[sl]
        amp = rng.uniform(0.0, 0.7)
        freq = rng.integers(1, 4)
        phase = rng.uniform(0.0, 2 * math.pi)
        values[sl] = np.exp(amp * np.sin(2 * math.pi * freq * xs + phase))
    order = np.argsort(tower.seg_level, kind="stable")
    branches = t.system.map.branches
    for s in order:
        if t.seg_level[s] == 0:
            continue
        p = int(t.seg_parent[s])
        bidx = int(t.seg_branch[p])
        xs = t.node_x[t.node_slice(s)]
        ys = branches[bidx].invert(xs)
        lo, hi = t.seg_img[p]
        pos = np.clip((ys - lo) / (hi - lo), 0.0, 1.0) * (t.g - 1)
        j = np.minimum(pos.astype(int), t.g - 2)
        frac = pos - j
        pv = values[t.node_slice(p)]
        lifted = pv[j] * (1.0 - frac) + pv[j + 1] * frac
        values[t.node_slice(s)] = lifted * rng.uniform(0.9, 1.1)
    f = TowerDensity(t, values)
    return normalize(f)


# -- independent grid oracle ----------------------------------------------------


@dataclass
class UlamResult:
    n_bins: int
    edges: np.ndarray
    bin_mass: np.ndarray       # invariant mass per bin (sums to 1)
    density: np.ndarray        # mass / surviving bin length (0 on hole bins)
    surviving_length: np.ndarray
    lam: float
    iterations: int
    residual: float
    matrix: csr_matrix         # bin-to-bin mass transfer, rows = source


def ulam_oracle(
    system: OpenSystem,
    n_bins: int,
    tol: float = 1e-13,
    max_iter: int = 100_000,
) -> UlamResult:
    """Grid discretization of the open transfer operator with power iteration.

    Exact for piecewise-affine maps with grid-aligned Markov holes; used
    as an independent cross-check of the tower route.
    """
    if n_bins < system.K:
        raise DomainError("need at least as many bins as monotonicity intervals")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    ilo = np.array([a for a, _ in system.I_components])
    ihi = np.array([b for _, b in system.I_components])

    surv = np.zeros(n_bins)
    for j in range(n_bins):
        clo, chi = clip_union(ilo, ihi, edges[j], edges[j + 1])
        surv[j] = measure(clo, chi)

    rows, cols, vals = [], [], []
    for b in system.map.branches:
        blo, bhi = b.image()
        inc = b.increasing
        for i in range(n_bins):
            plo, phi_ = max(edges[i], b.lo), min(edges[i + 1], b.hi)
            if phi_ - plo <= 1e-15:
                continue
            va, vb = float(b.value(plo)), float(b.value(phi_))
            u, v = (va, vb) if va <= vb else (vb, va)
            j0 = max(int(np.searchsorted(edges, u, "right") - 1), 0)
            j1 = min(int(np.searchsorted(edges, v, "left")), n_bins)
            for j in range(j0, j1):
                clo, chi = clip_union(ilo, ihi, max(edges[j], u),
                                      min(edges[j + 1], v))
                if len(clo) == 0:
                    continue
                # preimage of the surviving overlap, intersected with I
                pa = np.asarray(b.invert(clo), dtype=float)
                pb = np.asarray(b.invert(chi), dtype=float)
                qlo = np.minimum(pa, pb)
                qhi = np.maximum(pa, pb)
                if not inc:
                    qlo, qhi = qlo[::-1], qhi[::-1]
                slo, shi = intersect_unions(qlo, qhi, ilo, ihi)
                length = measure(slo, shi)
                if length > 0.0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(length)
    transfer = csr_matrix((vals, (rows, cols)), shape=(n_bins, n_bins))

    alive = surv > 1e-14
    mass = surv / surv.sum()
    norm_rows = np.zeros(n_bins)
    norm_rows[alive] = 1.0 / surv[alive]
    lam = 1.0
    residual = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        flow = transfer.T @ (mass * norm_rows)
        lam = float(flow.sum())
        if lam <= 1e-300:
            raise TotalEscapeError("grid operator kills all mass in one step")
        flow /= lam
        residual = float(np.abs(flow - mass).sum())
        mass = flow
        if residual <= tol:
            break
    density = np.zeros(n_bins)
    density[alive] = mass[alive] / surv[alive]
    return UlamResult(
        n_bins=n_bins,
        edges=edges,
        bin_mass=mass,
        density=density,
        surviving_length=surv,
        lam=lam,
        iterations=iterations,
        residual=residual,
        matrix=transfer,
    )
