"""Built-in maps, holes, and the tower corpus used by tests and docs."""

from __future__ import annotations

import math

from scipy.optimize import brentq

from .interval_maps import Branch, Hole, PiecewiseExpandingMap, build_open_system

EMPTY = Hole(())
MARKOV_HOLE = Hole(((1.0 / 3.0, 2.0 / 3.0),))
SMALL_HOLE = Hole(((0.5, 0.502),))
OFFCENTER_HOLE = Hole(((0.4, 0.41),))


def tripling_map() -> PiecewiseExpandingMap:
    """T(x) = 3x mod 1 as three affine full branches."""
    thirds = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]
    branches = tuple(
        Branch(lo=thirds[k], hi=thirds[k + 1], kind="affine",
               coeffs=(0.0, 3.0), wrap=k, mod1=True)
        for k in range(3)
    )
    return PiecewiseExpandingMap(
        branches=branches, alpha=1.0, holder_const=0.0, mu=3.0, name="tripling"
    )


def perturbed_tripling_map(amplitude: float = 0.1) -> PiecewiseExpandingMap:
    """T(x) = 3x + amplitude*sin(2*pi*x) mod 1; nonlinear full branches.

    Branch cuts are the points where the lift crosses the integers 1 and 2,
    solved to root-finder accuracy.  With amplitude 0.1: mu = 3 - 0.2*pi
    and the Lipschitz constant of T' is 0.4*pi^2.
    """

    def lift(x):
        return 3.0 * x + amplitude * math.sin(2.0 * math.pi * x)

    x1 = brentq(lambda x: lift(x) - 1.0, 0.2, 0.45, xtol=1e-15)
    x2 = brentq(lambda x: lift(x) - 2.0, 0.55, 0.8, xtol=1e-15)
    cuts = [0.0, x1, x2, 1.0]
    branches = tuple(
        Branch(lo=cuts[k], hi=cuts[k + 1], kind="affine_sin",
               coeffs=(0.0, 3.0, amplitude, 1.0, 0.0), wrap=k, mod1=True)
        for k in range(3)
    )
    mu = 3.0 - amplitude * 2.0 * math.pi
    holder = amplitude * (2.0 * math.pi) ** 2
    return PiecewiseExpandingMap(
        branches=branches, alpha=1.0, holder_const=holder, mu=mu,
        name="perturbed_tripling",
    )


def zigzag_map() -> PiecewiseExpandingMap:
    """Three full affine branches with a decreasing middle one.

    Slopes 2.5, -2.5, 5 satisfy sum 1/|slope| = 1, so the hole-free system
    leaves Lebesgue measure invariant: an exact oracle with mixed
    orientations.
    """
    branches = (
        Branch(lo=0.0, hi=0.4, kind="affine", coeffs=(0.0, 2.5)),
        Branch(lo=0.4, hi=0.8, kind="affine", coeffs=(2.0, -2.5)),
        Branch(lo=0.8, hi=1.0, kind="affine", coeffs=(-4.0, 5.0)),
    )
    return PiecewiseExpandingMap(
        branches=branches, alpha=1.0, holder_const=0.0, mu=2.5, name="zigzag"
    )


def zigzag_hole_system():
    # left endpoint 4/7 is the decreasing branch's fixed point, so only one
    # hole endpoint has a wandering orbit and the tower stays slim
    lo = 4.0 / 7.0
    return build_open_system(zigzag_map(), Hole(((lo, lo + 0.01),)))


def lipschitz_holes(s_values=(1e-3, 2e-3, 4e-3), left: float = 0.5):
    """Nested one-sided holes (left, left+s) used for the Lipschitz table."""
    return [Hole(((left, left + s),)) if s > 0 else EMPTY for s in s_values]


def shrink_holes(s_values=(0.02, 0.01, 0.005, 0.0025), center: float = 0.5):
    """Centered nested family (center-s/2, center+s/2), one per s."""
    return [
        Hole(((center - s / 2.0, center + s / 2.0),)) if s > 0 else EMPTY
        for s in s_values
    ]


def markov_system():
    return build_open_system(tripling_map(), MARKOV_HOLE)


def closed_tripling_system():
    return build_open_system(tripling_map(), EMPTY)


def small_hole_system():
    return build_open_system(tripling_map(), SMALL_HOLE)


def offcenter_system():
    return build_open_system(tripling_map(), OFFCENTER_HOLE)


def closed_perturbed_system():
    return build_open_system(perturbed_tripling_map(), EMPTY)


def perturbed_small_hole_system():
    return build_open_system(perturbed_tripling_map(), Hole(((0.45, 0.455),)))
