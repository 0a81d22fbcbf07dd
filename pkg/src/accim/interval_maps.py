"""Piecewise expanding maps of [0,1], holes, and the induced open system.

A map is a finite list of branches tiling [0,1]; each branch is strictly
monotone with an analytic derivative and maps into [0,1] (branches given
"mod 1" are stored with an integer offset so the stored form is already
into the unit interval).  The open system removes a finite union of open
intervals (the hole) and records the partition of the surviving set into
maximal intervals of monotonicity.

Everything here is immutable after construction and safe to share.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSystemError, DomainError
from .intervals import EPS_GEO, clip_union, intersect_unions, measure, subtract_open

_VALIDATION_SAMPLES = 2048


@dataclass(frozen=True)
class Branch:
    """One monotone branch: domain [lo, hi] -> [0,1].

    kind is "affine" (c0 + c1*x), "poly" (c0 + c1*x + ...), or
    "affine_sin" (c0 + c1*x + amp*sin(2*pi*freq*x + phase)).  ``wrap`` is
    the integer already subtracted from the raw formula so values land in
    [0,1]; ``mod1`` marks branches declared modulo 1, whose right-endpoint
    value 1.0 is reported as 0.0 by pointwise evaluation.
    """

    lo: float
    hi: float
    kind: str
    coeffs: tuple[float, ...]
    wrap: int = 0
    mod1: bool = False

    def __post_init__(self):
        if self.hi <= self.lo:
            raise DomainError(f"branch domain [{self.lo}, {self.hi}] is empty")
        if self.kind not in ("affine", "poly", "affine_sin"):
            raise DomainError(f"unknown branch kind {self.kind!r}")

    # -- raw (unwrapped-minus-offset) values ---------------------------------

    def value(self, x):
        """Branch value(s) in [0,1], without the mod-1 endpoint convention."""
        x = np.asarray(x, dtype=float)
        c = self.coeffs
        if self.kind == "affine":
            v = c[0] + c[1] * x
        elif self.kind == "poly":
            v = np.polyval(c[::-1], x)
        else:
            c0, c1, amp, freq, phase = c
            v = c0 + c1 * x + amp * np.sin(2.0 * math.pi * freq * x + phase)
        return v - self.wrap

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coeffs
        if self.kind == "affine":
            return np.full_like(x, c[1])
        if self.kind == "poly":
            dc = [k * c[k] for k in range(1, len(c))]
            return np.polyval(dc[::-1], x)
        c0, c1, amp, freq, phase = c
        return c1 + amp * 2.0 * math.pi * freq * np.cos(2.0 * math.pi * freq * x + phase)

    @property
    def is_affine(self) -> bool:
        return self.kind == "affine"

    @property
    def slope(self) -> float:
        if not self.is_affine:
            raise DomainError("slope is defined for affine branches only")
        return self.coeffs[1]

    @property
    def increasing(self) -> bool:
        mid = 0.5 * (self.lo + self.hi)
        return float(self.deriv(mid)) > 0.0

    def image(self) -> tuple[float, float]:
        """Closed image interval (endpoint limits; no mod-1 folding)."""
        va = float(self.value(self.lo))
        vb = float(self.value(self.hi))
        return (va, vb) if va <= vb else (vb, va)

    def invert(self, y):
        """Preimage(s) of y under this branch (y within the image)."""
        y = np.asarray(y, dtype=float)
        if self.is_affine:
            return (y + self.wrap - self.coeffs[0]) / self.coeffs[1]
        lo = np.full(y.shape, self.lo)
        hi = np.full(y.shape, self.hi)
        inc = self.increasing
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            v = self.value(mid)
            go_right = (v < y) if inc else (v > y)
            lo = np.where(go_right, mid, lo)
            hi = np.where(go_right, hi, mid)
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class PiecewiseExpandingMap:
    """Expanding map of [0,1] with Holder-continuous branch derivatives.

    ``mu`` is the configured lower bound inf|T'| (must exceed 2),
    ``holder_const`` the configured Holder constant of T' per branch and
    ``alpha`` its exponent in (0, 1].  Both are validated by dense
    sampling at construction.
    """

    branches: tuple[Branch, ...]
    alpha: float
    holder_const: float
    mu: float
    name: str = ""
    _los: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError("alpha must lie in (0, 1]")
        if self.mu <= 2.0:
            raise DomainError("minimum expansion mu must exceed 2")
        if self.holder_const < 0.0:
            raise DomainError("holder_const must be nonnegative")
        self._validate_tiling()
        self._validate_sampled()
        object.__setattr__(self, "_los", np.array([b.lo for b in self.branches]))

    def _validate_tiling(self):
        bs = self.branches
        if not bs:
            raise DomainError("map needs at least one branch")
        if abs(bs[0].lo) > EPS_GEO or abs(bs[-1].hi - 1.0) > EPS_GEO:
            raise DomainError("branch domains must tile [0,1]")
        for a, b in zip(bs, bs[1:]):
            if abs(a.hi - b.lo) > EPS_GEO:
                raise DomainError("branch domains must tile [0,1] without gaps")

    def _validate_sampled(self):
        for j, b in enumerate(self.branches):
            xs = np.linspace(b.lo, b.hi, _VALIDATION_SAMPLES)
            vals = b.value(xs)
            if vals.min() < -1e-9 or vals.max() > 1.0 + 1e-9:
                raise DomainError(f"branch {j} does not map into [0,1]")
            der = b.deriv(xs)
            if np.min(np.abs(der)) < self.mu * (1.0 - 1e-9):
                raise DomainError(
                    f"branch {j}: sampled |T'| ({np.min(np.abs(der)):.6g}) "
                    f"falls below mu={self.mu}"
                )
            if np.any(der > 0) and np.any(der < 0):
                raise DomainError(f"branch {j} is not monotone")
            dd = np.abs(np.diff(der))
            gap = np.diff(xs)
            bound = self.holder_const * gap**self.alpha + 1e-9
            if np.any(dd > bound):
                raise DomainError(
                    f"branch {j}: sampled derivative increments exceed the "
                    f"declared Holder bound"
                )
            if self.alpha < 1.0:
                # adjacent increments do not control distant pairs here
                rng = np.random.Generator(
                    np.random.Philox(np.random.SeedSequence(j))
                )
                xa = rng.uniform(b.lo, b.hi, 512)
                xb = rng.uniform(b.lo, b.hi, 512)
                dpair = np.abs(b.deriv(xa) - b.deriv(xb))
                pbound = self.holder_const * np.abs(xa - xb) ** self.alpha
                if np.any(dpair > pbound + 1e-9):
                    raise DomainError(
                        f"branch {j}: sampled derivative pairs exceed the "
                        f"declared Holder bound"
                    )

    # -- lookup and evaluation ------------------------------------------------

    def branch_index(self, x: float) -> int:
        """Branch containing x; shared endpoints go to the lower index."""
        if x < -EPS_GEO or x > 1.0 + EPS_GEO:
            raise DomainError(f"point {x} outside [0,1]")
        x = min(max(x, 0.0), 1.0)
        idx = bisect_right(self._los, x) - 1
        idx = max(idx, 0)
        if idx > 0 and x <= self.branches[idx - 1].hi:
            idx -= 1
        return idx

    def evaluate(self, x: float) -> tuple[float, float, int]:
        """(image, derivative, branch index) at x, with mod-1 wrapping."""
        idx = self.branch_index(x)
        b = self.branches[idx]
        img = float(b.value(x))
        if b.mod1 and img >= 1.0:
            img -= 1.0
        return img, float(b.deriv(x)), idx

    def branch_index_array(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._los, x, side="right") - 1
        np.clip(idx, 0, len(self.branches) - 1, out=idx)
        his = np.array([b.hi for b in self.branches])
        shift = (idx > 0) & (x <= his[np.maximum(idx - 1, 0)])
        return idx - shift.astype(idx.dtype)

    def map_array(self, x: np.ndarray) -> np.ndarray:
        """Vectorized image with mod-1 wrapping; x must lie in [0,1]."""
        idx = self.branch_index_array(x)
        out = np.empty_like(x)
        for j, b in enumerate(self.branches):
            m = idx == j
            if np.any(m):
                v = b.value(x[m])
                if b.mod1:
                    v = np.where(v >= 1.0, v - 1.0, v)
                out[m] = v
        return out

    def deriv_array(self, x: np.ndarray) -> np.ndarray:
        idx = self.branch_index_array(x)
        out = np.empty_like(x)
        for j, b in enumerate(self.branches):
            m = idx == j
            if np.any(m):
                out[m] = b.deriv(x[m])
        return out

    @property
    def eta(self) -> float:
        """Sampled max |T'| over [0,1]."""
        vals = []
        for b in self.branches:
            xs = np.linspace(b.lo, b.hi, _VALIDATION_SAMPLES)
            vals.append(np.max(np.abs(b.deriv(xs))))
        return float(max(vals))

    @property
    def cut_points(self) -> list[float]:
        return [b.lo for b in self.branches] + [1.0]


def distortion_constant(emap: PiecewiseExpandingMap) -> float:
    """Distortion constant exp(C_hat / (mu * (mu^alpha - 1))) - 1.

    Controls |(T^n)'(x)/(T^n)'(y) - 1| <= C_tilde * |T^n x - T^n y|^alpha
    for points sharing an n-step itinerary.
    """
    mu, al = emap.mu, emap.alpha
    return math.exp(emap.holder_const / (mu * (mu**al - 1.0))) - 1.0


@dataclass(frozen=True)
class Hole:
    """Finite union of disjoint open subintervals of [0,1]."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ivs = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        object.__setattr__(self, "intervals", ivs)
        prev = -1.0
        for a, b in ivs:
            if b <= a:
                raise DomainError(f"hole component ({a}, {b}) is empty")
            if a < -EPS_GEO or b > 1.0 + EPS_GEO:
                raise DomainError(f"hole component ({a}, {b}) leaves [0,1]")
            if a < prev - EPS_GEO:
                raise DomainError("hole components overlap")
            prev = b

    @property
    def count(self) -> int:
        return len(self.intervals)

    @property
    def total_measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    @property
    def max_length(self) -> float:
        return max((b - a for a, b in self.intervals), default=0.0)

    def contains(self, x, eps=EPS_GEO):
        """Vectorized strict (open, with tolerance eps) membership."""
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (x > a + eps) & (x < b - eps)
        return inside


EMPTY_HOLE = Hole(())


@dataclass(frozen=True)
class OpenSystem:
    """Map plus hole: surviving set I and its monotonicity partition Q."""

    map: PiecewiseExpandingMap
    hole: Hole
    I_components: tuple[tuple[float, float], ...]
    Q: tuple[tuple[float, float], ...]
    q_branch: tuple[int, ...]
    d: float
    D_len: float

    @property
    def K(self) -> int:
        return len(self.Q)

    @property
    def measure_I(self) -> float:
        return float(sum(b - a for a, b in self.I_components))

    def q_index_of(self, x: float, eps=EPS_GEO):
        for j, (a, b) in enumerate(self.Q):
            if a - eps <= x <= b + eps:
                return j
        return None

    def in_I(self, x, eps=EPS_GEO):
        return ~self.hole.contains(x, eps=eps)


def build_open_system(emap: PiecewiseExpandingMap, hole: Hole) -> OpenSystem:
    """Assemble the surviving set and its monotonicity partition.

    Q lists the maximal closed intervals of I = [0,1] minus the hole on
    which the map is a single branch, ordered left to right.  A hole whose
    closure swallows an entire branch domain leaves nothing of that branch
    to work with and is rejected.
    """
    for j, b in enumerate(emap.branches):
        for a, c in hole.intervals:
            # open hole strictly containing the closed branch domain;
            # touching endpoints (Markov holes) keep the branch alive
            if a < b.lo - EPS_GEO and c > b.hi + EPS_GEO:
                raise DegenerateSystemError(
                    f"hole ({a}, {c}) covers the whole domain of branch {j}"
                )
    I_parts = subtract_open(0.0, 1.0, hole.intervals)
    if not I_parts:
        raise DegenerateSystemError("hole leaves no surviving interval")
    q_parts: list[tuple[float, float]] = []
    q_branch: list[int] = []
    for lo, hi in I_parts:
        for j, b in enumerate(emap.branches):
            a = max(lo, b.lo)
            c = min(hi, b.hi)
            if c - a >= EPS_GEO:
                q_parts.append((a, c))
                q_branch.append(j)
    if not q_parts:
        raise DegenerateSystemError("no monotonicity interval survives the hole")
    lengths = [b - a for a, b in q_parts]
    return OpenSystem(
        map=emap,
        hole=hole,
        I_components=tuple(I_parts),
        Q=tuple(q_parts),
        q_branch=tuple(q_branch),
        d=float(min(lengths)),
        D_len=float(max(lengths)),
    )


# -- survivor-set oracles -----------------------------------------------------


def _checks_for(n: int) -> int:
    # survival through n steps means the first max(n,1) positions stay out
    # of the hole; n=0 only conditions the start to lie in I
    return max(int(n), 1)


def survivor_measure(system: OpenSystem, n: int, grid: int = 1_000_000) -> float:
    """Grid estimate of the measure of points surviving n steps.

    Midpoint sampling; converges to the exact survivor measure as the grid
    is refined (the survivor set is a finite union of intervals).
    """
    if n < 0:
        raise DomainError("n must be nonnegative")
    x = (np.arange(grid) + 0.5) / grid
    alive = np.ones(grid, dtype=bool)
    for k in range(_checks_for(n)):
        alive[alive] = ~system.hole.contains(x[alive])
        if k < _checks_for(n) - 1:
            x = x.copy()
            x[alive] = system.map.map_array(x[alive])
    return float(np.mean(alive))


def survivor_intervals(system: OpenSystem, n: int):
    """Exact survivor set after n steps as sorted-disjoint (lo, hi) arrays.

    Brute-force interval-image oracle: pulls the surviving union back
    through each branch, exactly for affine branches and to bisection
    tolerance otherwise.  Component counts grow with n; intended for
    moderate n in tests and escape-rate cross-checks.
    """
    if n < 0:
        raise DomainError("n must be nonnegative")
    lo = np.array([a for a, _ in system.I_components])
    hi = np.array([b for _, b in system.I_components])
    for _ in range(_checks_for(n) - 1):
        parts_lo, parts_hi = [], []
        for b in system.map.branches:
            ilo, ihi = b.image()
            clo, chi = clip_union(lo, hi, ilo, ihi)
            if len(clo) == 0:
                continue
            plo = np.asarray(b.invert(clo), dtype=float)
            phi = np.asarray(b.invert(chi), dtype=float)
            if not b.increasing:
                plo, phi = phi[::-1], plo[::-1]
            np.clip(plo, b.lo, b.hi, out=plo)
            np.clip(phi, b.lo, b.hi, out=phi)
            parts_lo.append(plo)
            parts_hi.append(phi)
        if not parts_lo:
            return np.empty(0), np.empty(0)
        plo = np.concatenate(parts_lo)
        phi = np.concatenate(parts_hi)
        order = np.argsort(plo)
        plo, phi = plo[order], phi[order]
        ilo = np.array([a for a, _ in system.I_components])
        ihi = np.array([b for _, b in system.I_components])
        lo, hi = intersect_unions(plo, phi, ilo, ihi)
        keep = hi - lo > 1e-15
        lo, hi = lo[keep], hi[keep]
    return lo, hi


def survivor_measure_exact(system: OpenSystem, n: int) -> float:
    lo, hi = survivor_intervals(system, n)
    return measure(lo, hi)


# -- distortion sampling ------------------------------------------------------


def sample_distortion_ratios(
    emap: PiecewiseExpandingMap, n_pairs: int, n_max: int = 10, seed: int = 0
):
    """Sample |(T^n)'(x)/(T^n)'(y) - 1| against the distortion bound.

    Pairs are drawn inside a common monotonicity interval of T^n (verified
    by matching branch itineraries).  Returns (lhs, rhs) arrays with
    rhs = C_tilde * |T^n x - T^n y|^alpha, one entry per accepted pair.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    ctilde = distortion_constant(emap)
    min_branch = min(b.hi - b.lo for b in emap.branches)
    lhs, rhs = [], []
    attempts = 0
    while len(lhs) < n_pairs and attempts < 20 * n_pairs:
        attempts += 1
        n = int(rng.integers(1, n_max + 1))
        x = float(rng.uniform(0.0, 1.0))
        radius = 0.25 * min_branch * emap.mu ** (-n)
        y = x + float(rng.uniform(-radius, radius))
        if not 0.0 <= y <= 1.0:
            continue
        dx = dy = 1.0
        xi, yi = x, y
        ok = True
        for _ in range(n):
            fx, dfx, bx = emap.evaluate(xi)
            fy, dfy, by = emap.evaluate(yi)
            if bx != by:
                ok = False
                break
            dx *= dfx
            dy *= dfy
            xi, yi = fx, fy
        if not ok:
            continue
        lhs.append(abs(dx / dy - 1.0))
        rhs.append(ctilde * abs(xi - yi) ** emap.alpha)
    return np.array(lhs), np.array(rhs)
