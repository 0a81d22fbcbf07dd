"""Markov tower construction over reference intervals of an open system.

The construction partitions the surviving set into reference intervals of
length between delta and 2*delta, then repeatedly pushes each one forward
until pieces either cover a full monotonicity interval (a Markov return,
subdivided along reference-interval boundaries) or land in the hole.  The
pieces still in flight at level l form the l-th tower level.

Numerical representation: a tower cell at level l occupies a base
subinterval of width comparable to mu^-l, which collapses below float
resolution around level 35.  Cells are therefore parametrized by their
*projected* interval (which stays order-one at every level); base-measure
widths are carried as explicit numbers obtained by dividing projected
lengths by the projection derivative, never by subtracting nearly-equal
endpoints.  Sample nodes are uniform in the projected coordinate, so the
projection of a node is the node itself.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    HypothesisFailureError,
    ResourceBudgetError,
)
from .interval_maps import OpenSystem, distortion_constant
from .intervals import EPS_GEO

FATE_UP = 0
FATE_RETURN = 1
FATE_HOLE = 2

_FATE_NAMES = {FATE_UP: "up", FATE_RETURN: "return", FATE_HOLE: "hole"}

#: image-interval slivers below this length are dropped into dust
_EPS_LEN = 1e-13

DEFAULT_L_MAX = 60
DEFAULT_TAIL_TARGET = 1e-9
DEFAULT_MAX_SEGMENTS = 500_000


def choose_delta(system: OpenSystem, margin: float = 0.01) -> float:
    """Reference length scale delta.

    For C^2 maps (alpha = 1) the minimum monotonicity length d works
    directly.  For alpha < 1 the scale must also keep the tower
    nonlinearity small: 2^a * (1 + C_tilde (2 delta)^a) / mu^a < 1, with a
    safety margin; the largest admissible delta <= d is found by bisection.
    """
    emap = system.map
    d = system.d
    if emap.alpha == 1.0:
        return d
    ctilde = distortion_constant(emap)
    al, mu = emap.alpha, emap.mu

    def crit(delta):
        return 2.0**al * (1.0 + ctilde * (2.0 * delta) ** al) / mu**al

    if crit(d) < 1.0 - margin:
        return d
    lo, hi = 0.0, d
    if crit(1e-14) >= 1.0 - margin:
        raise HypothesisFailureError(
            "no reference scale admissible: branch nonlinearity too strong "
            f"for expansion mu={mu}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if crit(mid) < 1.0 - margin:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class Base:
    """One reference interval, identified with the unit interval upstairs."""

    index: int
    lo: float
    hi: float
    q_index: int

    @property
    def width(self) -> float:
        return self.hi - self.lo


def build_bases(system: OpenSystem, delta: float) -> list[Base]:
    """Split every monotonicity interval into pieces of length in [delta, 2*delta].

    Intervals longer than 2*delta are split into ceil(len / 2 delta) equal
    pieces, which keeps every piece inside [delta, 2*delta].
    """
    bases: list[Base] = []
    for qi, (lo, hi) in enumerate(system.Q):
        length = hi - lo
        if length < delta - EPS_GEO:
            raise HypothesisFailureError(
                f"monotonicity interval [{lo}, {hi}] shorter than delta={delta}"
            )
        n = 1 if length <= 2.0 * delta + EPS_GEO else math.ceil(length / (2.0 * delta))
        edges = np.linspace(lo, hi, n + 1)
        for k in range(n):
            bases.append(Base(index=len(bases), lo=float(edges[k]),
                              hi=float(edges[k + 1]), q_index=qi))
    if len(bases) > 1.0 / delta + 1e-9:
        raise HypothesisFailureError("more reference intervals than 1/delta")
    return bases


# -- growth engine -------------------------------------------------------------


class _Piece:
    """An interval still in flight: image interval plus pullback data."""

    __slots__ = ("img_lo", "img_hi", "aff_m", "aff_c", "itinerary", "width_x",
                 "up_seg", "at_lo", "at_hi")

    def __init__(self, img_lo, img_hi, aff_m, aff_c, itinerary, width_x,
                 up_seg=-1):
        self.img_lo = img_lo
        self.img_hi = img_hi
        self.aff_m = aff_m          # None for nonlinear pullbacks
        self.aff_c = aff_c
        self.itinerary = itinerary  # branch index per completed step
        self.width_x = width_x      # seed-coordinate width
        self.up_seg = up_seg        # tower segment the piece sits above
        self.at_lo = False          # cell touches the left end of the step image
        self.at_hi = False


class _Cells:
    """The global decomposition of [0,1] into Q pieces and hole components."""

    def __init__(self, system: OpenSystem):
        cells = [(a, b, "q", j) for j, (a, b) in enumerate(system.Q)]
        cells += [(a, b, "hole", h) for h, (a, b) in enumerate(system.hole.intervals)]
        cells.sort()
        self.cells = cells
        self.lows = [c[0] for c in cells]

    def overlaps(self, lo: float, hi: float):
        """Cells intersecting (lo, hi) plus the total sliver length dropped."""
        i = bisect_left(self.lows, lo)
        if i > 0 and self.cells[i - 1][1] > lo:
            i -= 1
        out = []
        dropped = 0.0
        while i < len(self.cells) and self.cells[i][0] < hi - _EPS_LEN:
            a, b, kind, idx = self.cells[i]
            ov_lo, ov_hi = max(a, lo), min(b, hi)
            if ov_hi - ov_lo > _EPS_LEN:
                out.append(((a, b, kind, idx), ov_lo, ov_hi))
            elif ov_hi > ov_lo:
                dropped += ov_hi - ov_lo
            i += 1
        return out, dropped


def _pullback_points(system, itinerary, values):
    """Invert branch compositions: image points -> seed points + derivative.

    Walks the itinerary backwards with per-branch inverses and accumulates
    the forward derivative product along the recovered orbit.
    """
    ys = np.asarray(values, dtype=float)
    deriv = np.ones_like(ys)
    for bidx in reversed(itinerary):
        b = system.map.branches[bidx]
        ys = np.clip(b.invert(ys), b.lo, b.hi)
        deriv *= b.deriv(ys)
    return ys, deriv


def _piece_x_interval(system, piece, img_lo, img_hi):
    """Seed-coordinate interval and width of an image subinterval of a piece."""
    if piece.aff_m is not None:
        x0 = (img_lo - piece.aff_c) / piece.aff_m
        x1 = (img_hi - piece.aff_c) / piece.aff_m
        lo, hi = (x0, x1) if x0 <= x1 else (x1, x0)
        return lo, hi, (img_hi - img_lo) / abs(piece.aff_m)
    pts = np.array([img_lo, 0.5 * (img_lo + img_hi), img_hi])
    xs, der = _pullback_points(system, piece.itinerary, pts)
    lo, hi = (xs[0], xs[2]) if xs[0] <= xs[2] else (xs[2], xs[0])
    # Simpson weights on 1/|T^n'| over the image interval
    width = (img_hi - img_lo) * (
        1.0 / abs(der[0]) + 4.0 / abs(der[1]) + 1.0 / abs(der[2])
    ) / 6.0
    return float(lo), float(hi), float(width)


@dataclass
class PartitionElement:
    """Growth-lemma output: a subinterval with its stopping data.

    ``target`` indexes the covered monotonicity interval for returns (or
    the reference interval in tower mode) and the hole component for
    hole-fated elements.
    """

    omega: tuple[float, float]
    stop_time: int
    fate: str                       # "return" | "hole"
    target: int
    image: tuple[float, float]


@dataclass
class GrowthResult:
    elements: list[PartitionElement]
    remainder: list[tuple[float, float]]
    tail_by_step: np.ndarray        # m{S > n} for n = 0..n_max, seed coordinates
    hole_mass: float
    dust: float


def growth_partition(
    system: OpenSystem,
    omega: tuple[float, float],
    delta: float,
    n_max: int,
    strict_hole_bound: bool = False,
) -> GrowthResult:
    """Partition omega into pieces that return Markov-fashion or enter the hole.

    Pieces are pushed forward; once an image covers monotonicity intervals
    those become return elements, image parts inside the hole die, and at
    most two end stubs stay in flight.  The stopping-time tail m{S > n}
    and the hole-fated mass come out with the partition.

    The sufficient growth condition h <= delta (mu - 2) / 2 is checked only
    with ``strict_hole_bound=True``: large Markov-aligned holes violate it
    yet still terminate, so by default the bound is reported downstream
    rather than enforced here.
    """
    lo, hi = omega
    if hi - lo < delta - EPS_GEO:
        raise DomainError(f"omega shorter than delta={delta}")
    qi = next(
        (j for j, (a, b) in enumerate(system.Q)
         if lo >= a - EPS_GEO and hi <= b + EPS_GEO),
        None,
    )
    if qi is None:
        raise DomainError("omega must lie inside one monotonicity interval")
    hole_bound = delta * (system.map.mu - 2.0) / 2.0
    if strict_hole_bound and system.hole.max_length > hole_bound + EPS_GEO:
        raise HypothesisFailureError(
            f"hole component length {system.hole.max_length:.3g} exceeds "
            f"delta*(mu-2)/2 = {hole_bound:.3g}"
        )
    cells = _Cells(system)
    pieces = [_Piece(lo, hi, 1.0, 0.0, (), hi - lo)]
    elements: list[PartitionElement] = []
    tail = [hi - lo]
    hole_mass = 0.0
    dust = 0.0
    for n in range(1, n_max + 1):
        nxt: list[_Piece] = []
        for piece in pieces:
            returns, holes, stubs, pdust = _advance(system, cells, piece, None)
            dust += pdust
            for q_idx, seg_img, child in holes:
                xl, xh, w = _piece_x_interval(system, child, *child_img(child))
                hole_mass += w
                elements.append(PartitionElement((xl, xh), n, "hole", q_idx,
                                                 child_img(child)))
            for t_idx, child in returns:
                xl, xh, w = _piece_x_interval(system, child, *child_img(child))
                elements.append(PartitionElement((xl, xh), n, "return", t_idx,
                                                 child_img(child)))
            nxt.extend(s for _, s in stubs)
        pieces = nxt
        tail.append(sum(p.width_x for p in pieces))
        if not pieces:
            break
    tail += [tail[-1]] * (n_max + 1 - len(tail))
    remainder = []
    for p in pieces:
        xl, xh, _ = _piece_x_interval(system, p, p.img_lo, p.img_hi)
        remainder.append((xl, xh))
    return GrowthResult(
        elements=elements,
        remainder=remainder,
        tail_by_step=np.array(tail),
        hole_mass=hole_mass,
        dust=dust,
    )


def child_img(piece: _Piece) -> tuple[float, float]:
    return (piece.img_lo, piece.img_hi)


def _advance(system, cells, piece, bases_by_q):
    """Apply one step to a piece and classify the image decomposition.

    Returns (returns, holes, stubs, dust) where each entry carries a child
    _Piece restricted to the matching image cell at the *new* level.  In
    tower mode (bases_by_q given) returns are subdivided along reference
    intervals and target base indices; otherwise they target Q indices.
    """
    emap = system.map
    bidx = emap.branch_index(0.5 * (piece.img_lo + piece.img_hi))
    branch = emap.branches[bidx]
    va = float(branch.value(piece.img_lo))
    vb = float(branch.value(piece.img_hi))
    img_lo, img_hi = (va, vb) if va <= vb else (vb, va)
    img_lo = max(img_lo, 0.0)
    img_hi = min(img_hi, 1.0)
    if piece.aff_m is not None and branch.is_affine:
        aff_m = piece.aff_m * branch.slope
        aff_c = float(branch.value(np.array(0.0))) + branch.slope * piece.aff_c
        # value() already subtracts the wrap, so aff_c is consistent
    else:
        aff_m = aff_c = None
    itin = piece.itinerary + (bidx,)

    def make_child(a, b):
        w = (b - a) / abs(aff_m) if aff_m is not None else None
        child = _Piece(a, b, aff_m, aff_c, itin, 0.0)
        if w is None:
            _, _, w = _piece_x_interval(system, child, a, b)
        child.width_x = w
        child.at_lo = a <= img_lo + _EPS_LEN
        child.at_hi = b >= img_hi - _EPS_LEN
        return child

    overlaps, dropped = cells.overlaps(img_lo, img_hi)
    returns, holes, stubs = [], [], []
    scale = abs(aff_m) if aff_m is not None else system.map.mu ** len(itin)
    dust = dropped / max(scale, 1.0)
    for (a, b, kind, idx), ov_lo, ov_hi in overlaps:
        if kind == "hole":
            holes.append((idx, (ov_lo, ov_hi), make_child(ov_lo, ov_hi)))
        elif ov_lo <= a + EPS_GEO and ov_hi >= b - EPS_GEO:
            # full cover of a monotonicity interval: Markov return
            if bases_by_q is None:
                returns.append((idx, make_child(a, b)))
            else:
                for base in bases_by_q[idx]:
                    returns.append((base.index, make_child(base.lo, base.hi)))
        else:
            stubs.append(((ov_lo, ov_hi), make_child(ov_lo, ov_hi)))
    if len(stubs) > 2:
        raise AssertionError("more than two stubs from a single piece")
    return returns, holes, stubs, dust


# -- the tower ------------------------------------------------------------------


@dataclass
class Tower:
    """Truncated Markov tower with per-cell projected intervals and samples.

    Segment arrays are parallel; ``node_slice(i)`` slices the flat node
    arrays (g nodes per cell, uniform in the projected coordinate).
    ``hole_mass_by_level[l]`` is the tower measure of the hole cells at
    level l (points dying while climbing from l-1).
    """

    system: OpenSystem
    delta: float
    bases: list[Base]
    L_max: int
    g: int
    seg_base: np.ndarray
    seg_level: np.ndarray
    seg_fate: np.ndarray
    seg_target: np.ndarray
    seg_parent: np.ndarray
    seg_branch: np.ndarray
    seg_img: np.ndarray
    seg_zw: np.ndarray
    node_x: np.ndarray
    node_dimgdz: np.ndarray
    node_fprime: np.ndarray
    level_mass: np.ndarray
    hole_mass_by_level: np.ndarray
    tail_mass: float
    dust: float
    seed_tails: dict = field(default_factory=dict)
    seed_hole_mass: dict = field(default_factory=dict)

    @property
    def hole_bound_ok(self) -> bool:
        """Whether h <= delta (mu - 2) / 2 held (growth guarantee, not required)."""
        bound = self.delta * (self.system.map.mu - 2.0) / 2.0
        return self.system.hole.max_length <= bound + EPS_GEO

    @property
    def n_segments(self) -> int:
        return len(self.seg_base)

    @property
    def n_bases(self) -> int:
        return len(self.bases)

    def node_slice(self, seg: int) -> slice:
        return slice(seg * self.g, (seg + 1) * self.g)

    def nodes_of(self, seg: int) -> np.ndarray:
        return self.node_x[self.node_slice(seg)]

    def segments_at(self, level: int) -> np.ndarray:
        return np.nonzero(self.seg_level == level)[0]

    @property
    def total_mass(self) -> float:
        """Tower measure of the truncated domain (hole-fated cells occupy
        their level's footprint until they die climbing)."""
        return float(np.sum(self.seg_zw))

    def base_width(self, idx: int) -> float:
        return self.bases[idx].width

    def returning_fprime_floor(self) -> float:
        """Measured min of F' * mu^-level over returning cells (gamma)."""
        mask = self.seg_fate == FATE_RETURN
        if not np.any(mask):
            return math.inf
        fp = self.node_fprime.reshape(self.n_segments, self.g)
        mins = np.min(fp[mask], axis=1)
        scale = self.system.map.mu ** self.seg_level[mask].astype(float)
        return float(np.min(mins / scale))

    def to_dict(self, include_cells: bool = True) -> dict:
        out = {
            "delta": self.delta,
            "L_max": self.L_max,
            "g": self.g,
            "n_segments": self.n_segments,
            "tail_mass": self.tail_mass,
            "dust": self.dust,
            "bases": [
                {"index": b.index, "lo": b.lo, "hi": b.hi, "q_index": b.q_index}
                for b in self.bases
            ],
            "level_mass": self.level_mass.tolist(),
            "hole_mass_by_level": self.hole_mass_by_level.tolist(),
        }
        if include_cells:
            out["cells"] = [
                {
                    "base": int(self.seg_base[i]),
                    "level": int(self.seg_level[i]),
                    "fate": _FATE_NAMES[int(self.seg_fate[i])],
                    "target": int(self.seg_target[i]),
                    "projected": [float(self.seg_img[i, 0]), float(self.seg_img[i, 1])],
                    "measure": float(self.seg_zw[i]),
                    "fprime_min": (
                        float(np.min(self.node_fprime[self.node_slice(i)]))
                        if self.seg_fate[i] == FATE_RETURN
                        else None
                    ),
                }
                for i in range(self.n_segments)
            ]
        return out

    def dump_json(self, path, include_cells: bool = True):
        with open(path, "w") as fh:
            json.dump(self.to_dict(include_cells=include_cells), fh,
                      sort_keys=True, indent=1)


def auto_l_max(system: OpenSystem, delta: float, n_bases: int,
               tail_target: float) -> int:
    """Smallest truncation level whose tail bound meets the target."""
    theta = 2.0 / system.map.mu
    lead = n_bases * system.D_len / delta
    budget = tail_target * system.measure_I
    l_needed = math.ceil(math.log(budget / lead) / math.log(theta)) - 1
    return max(DEFAULT_L_MAX, l_needed)


def build_tower(
    system: OpenSystem,
    delta: float,
    L_max: int | None = None,
    g: int = 16,
    tail_target: float = DEFAULT_TAIL_TARGET,
    max_segments: int = DEFAULT_MAX_SEGMENTS,
) -> Tower:
    """Construct the truncated tower over reference intervals of scale delta.

    With ``L_max=None`` the truncation level is chosen so the structural
    tail bound (N D / delta) (2/mu)^(L+1) meets ``tail_target`` relative to
    the surviving measure (never below the default level 60).  An explicit
    L_max is used as given and the tail is only recorded.
    """
    bases = build_bases(system, delta)
    auto = L_max is None
    if auto:
        L_max = auto_l_max(system, delta, len(bases), tail_target)
    bases_by_q: dict[int, list[Base]] = {}
    for b in bases:
        bases_by_q.setdefault(b.q_index, []).append(b)
    cells = _Cells(system)

    seg_base, seg_level, seg_fate, seg_target = [], [], [], []
    seg_parent, seg_branch, seg_img, seg_zw = [], [], [], []
    node_x_parts, node_d_parts, node_f_parts = [], [], []
    level_mass = np.zeros(L_max + 1)
    hole_mass = np.zeros(L_max + 2)
    tail_mass = 0.0
    dust_total = 0.0
    seed_tails: dict[int, np.ndarray] = {}
    seed_holes: dict[int, float] = {}

    grid = np.linspace(0.0, 1.0, g)

    def emit(base, level, fate, target, parent, bidx, img_lo, img_hi, piece):
        idx = len(seg_base)
        if idx >= max_segments:
            raise ResourceBudgetError(
                f"tower exceeded {max_segments} segments before level {level}; "
                "lower L_max or loosen tail_target"
            )
        seg_base.append(base)
        seg_level.append(level)
        seg_fate.append(fate)
        seg_target.append(target)
        seg_parent.append(parent)
        seg_branch.append(bidx)
        seg_img.append((img_lo, img_hi))
        xs = img_lo + (img_hi - img_lo) * grid
        lam_w = bases[base].width
        if piece.aff_m is not None:
            dvals = np.full(g, abs(piece.aff_m) * lam_w)
        else:
            _, der = _pullback_points(system, piece.itinerary, xs)
            dvals = np.abs(der) * lam_w
        dz = np.diff(xs) * 0.5 * (1.0 / dvals[:-1] + 1.0 / dvals[1:])
        zw = float(np.sum(dz))
        seg_zw.append(zw)
        node_x_parts.append(xs)
        node_d_parts.append(dvals)
        if fate == FATE_RETURN:
            br = system.map.branches[bidx]
            fp = np.abs(br.deriv(xs)) * dvals / bases[target].width
        else:
            fp = np.full(g, np.nan)
        node_f_parts.append(fp)
        return idx, zw

    for seed in bases:
        lam_w = seed.width
        root = _Piece(seed.lo, seed.hi, 1.0, 0.0, (), lam_w)
        root.up_seg = -1
        pieces = [root]
        tails = [1.0 * lam_w]
        holes_x = 0.0
        for n in range(1, L_max + 2):
            level = n - 1
            nxt: list[_Piece] = []
            level_tail = 0.0
            for piece in pieces:
                returns, holes, stubs, pdust = _advance(system, cells, piece,
                                                        bases_by_q)
                dust_total += pdust / lam_w
                parent = piece.up_seg
                step_branch = returns[0][1].itinerary[-1] if returns else (
                    holes[0][2].itinerary[-1] if holes else (
                        stubs[0][1].itinerary[-1] if stubs else -1))
                for t_idx, child in returns:
                    # cell at the current level: preimage of the target base
                    a, b = _cell_at_level(system, piece, child)
                    _, zw = emit(seed.index, level, FATE_RETURN, t_idx, parent,
                                 step_branch, a, b, piece)
                    level_mass[level] += zw
                for h_idx, _, child in holes:
                    a, b = _cell_at_level(system, piece, child)
                    _, zw = emit(seed.index, level, FATE_HOLE, h_idx, parent,
                                 step_branch, a, b, piece)
                    level_mass[level] += zw
                    hole_mass[n] += zw
                    holes_x += child.width_x
                for _, child in stubs:
                    a, b = _cell_at_level(system, piece, child)
                    idx, zw = emit(seed.index, level, FATE_UP, -1, parent,
                                   step_branch, a, b, piece)
                    level_mass[level] += zw
                    level_tail += child.width_x
                    if n <= L_max:
                        child.up_seg = idx
                        nxt.append(child)
                    else:
                        # truncation: mass headed above L_max escapes
                        tail_mass += zw
            pieces = nxt
            tails.append(level_tail)
            if not pieces:
                break
        tails += [0.0] * (L_max + 3 - len(tails))
        seed_tails[seed.index] = np.array(tails)
        seed_holes[seed.index] = holes_x

    tower = Tower(
        system=system,
        delta=delta,
        bases=bases,
        L_max=L_max,
        g=g,
        seg_base=np.array(seg_base, dtype=np.int32),
        seg_level=np.array(seg_level, dtype=np.int32),
        seg_fate=np.array(seg_fate, dtype=np.int8),
        seg_target=np.array(seg_target, dtype=np.int32),
        seg_parent=np.array(seg_parent, dtype=np.int32),
        seg_branch=np.array(seg_branch, dtype=np.int32),
        seg_img=np.array(seg_img, dtype=float).reshape(-1, 2),
        seg_zw=np.array(seg_zw, dtype=float),
        node_x=np.concatenate(node_x_parts) if node_x_parts else np.empty(0),
        node_dimgdz=np.concatenate(node_d_parts) if node_d_parts else np.empty(0),
        node_fprime=np.concatenate(node_f_parts) if node_f_parts else np.empty(0),
        level_mass=level_mass,
        hole_mass_by_level=hole_mass,
        tail_mass=tail_mass,
        dust=dust_total,
        seed_tails=seed_tails,
        seed_hole_mass=seed_holes,
    )
    if auto and tower.tail_mass >= tail_target * system.measure_I:
        raise HypothesisFailureError(
            "measured tail exceeds target despite the structural bound; "
            "the construction is not decaying as required"
        )
    return tower


def _cell_at_level(system, piece, child):
    """Project a next-step cell back one step: its interval at the parent level.

    Cells touching the ends of the step image are snapped to the parent's
    own endpoints, so sibling cells tile the parent exactly even when the
    branch inverse is only root-finder accurate.
    """
    bidx = child.itinerary[-1]
    branch = system.map.branches[bidx]
    a = float(branch.invert(np.asarray(child.img_lo)))
    b = float(branch.invert(np.asarray(child.img_hi)))
    lo, hi = (a, b) if a <= b else (b, a)
    inc = branch.increasing
    if child.at_lo:
        if inc:
            lo = piece.img_lo
        else:
            hi = piece.img_hi
    if child.at_hi:
        if inc:
            hi = piece.img_hi
        else:
            lo = piece.img_lo
    lo = max(lo, piece.img_lo)
    hi = min(hi, piece.img_hi)
    return lo, hi


# -- projection ----------------------------------------------------------------


def project_base(tower: Tower, base_index: int, z: float) -> float:
    """Piecewise-linear base projection: z in [0,1] -> the reference interval."""
    if not 0.0 <= z <= 1.0:
        raise DomainError("tower coordinate outside [0,1]")
    b = tower.bases[base_index]
    return b.lo + z * b.width


def project_cell(tower: Tower, seg: int, t: float) -> float:
    """Projection of the cell point at affine position t in the cell."""
    if not 0.0 <= t <= 1.0:
        raise DomainError("cell coordinate outside [0,1]")
    lo, hi = tower.seg_img[seg]
    return float(lo + t * (hi - lo))


def semi_conjugacy_residual(tower: Tower, samples_per_cell: int = 1000,
                            chunk: int = 256) -> float:
    """Max sampled defect of (projection after climb) vs (map after projection).

    Every segment records the branch carrying its points one step up (or
    back to a base); the residual compares that stored route against a
    direct position-based evaluation of the map at the projected sample
    points.  Interior sampling avoids measure-zero branch-endpoint ties.
    """
    emap = tower.system.map
    ts = (np.arange(samples_per_cell) + 0.5) / samples_per_cell
    worst = 0.0
    base_lo = np.array([b.lo for b in tower.bases])
    base_hi = np.array([b.hi for b in tower.bases])
    for start in range(0, tower.n_segments, chunk):
        idx = np.arange(start, min(start + chunk, tower.n_segments))
        idx = idx[tower.seg_branch[idx] >= 0]
        if len(idx) == 0:
            continue
        lo = tower.seg_img[idx, 0][:, None]
        hi = tower.seg_img[idx, 1][:, None]
        us = lo + (hi - lo) * ts[None, :]
        lhs = np.empty_like(us)
        for bidx in np.unique(tower.seg_branch[idx]):
            m = tower.seg_branch[idx] == bidx
            lhs[m] = emap.branches[int(bidx)].value(us[m])
        lhs = np.where(lhs >= 1.0, lhs - 1.0, lhs)
        rhs = emap.map_array(us.ravel()).reshape(us.shape)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        # returning cells must land exactly inside their target interval
        rmask = tower.seg_fate[idx] == FATE_RETURN
        if np.any(rmask):
            tgt = tower.seg_target[idx][rmask]
            inside_lo = lhs[rmask] >= (base_lo[tgt] - 1e-9)[:, None]
            inside_hi = lhs[rmask] <= (base_hi[tgt] + 1e-9)[:, None]
            if not np.all(inside_lo & inside_hi):
                worst = max(worst, 1.0)
    return worst
