"""Experiment configuration: JSON files wired to module inputs.

The schema is documented in the README.  Parse errors carry the line
number from the JSON decoder; validation errors carry the key path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .accim_analysis import SolveSettings
from .errors import ConfigError
from .interval_maps import Branch, Hole, PiecewiseExpandingMap
from . import presets


@dataclass
class McSettings:
    particles: int = 100_000
    steps: int = 20
    seed: int = 0
    bins: int = 12
    initial: str = "uniform"
    density_step: int = 10
    ratio_window: tuple[int, int] = (5, 15)


@dataclass
class ExperimentConfig:
    emap: PiecewiseExpandingMap
    hole: Hole | None
    family_s: list[float] = field(default_factory=list)
    family_holes: list[Hole] = field(default_factory=list)
    solve: SolveSettings = field(default_factory=SolveSettings)
    mc: McSettings = field(default_factory=McSettings)
    out_dir: str = "out"


def _expect(data, key, kind, path, default=None, required=False):
    if key not in data:
        if required:
            raise ConfigError(f"{path}.{key}: required key is missing")
        return default
    value = data[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(
            f"{path}.{key}: expected {getattr(kind, '__name__', kind)}, "
            f"got {type(value).__name__}"
        )
    return value


def _parse_map(data, path="map") -> PiecewiseExpandingMap:
    preset = _expect(data, "preset", str, path)
    if preset is not None:
        if preset == "tripling":
            return presets.tripling_map()
        if preset == "perturbed_tripling":
            return presets.perturbed_tripling_map(
                _expect(data, "amplitude", float, path, default=0.1)
            )
        raise ConfigError(f"{path}.preset: unknown preset {preset!r}")
    branches = _expect(data, "branches", list, path, required=True)
    parsed = []
    for i, raw in enumerate(branches):
        bp = f"{path}.branches[{i}]"
        if not isinstance(raw, dict):
            raise ConfigError(f"{bp}: expected an object")
        domain = _expect(raw, "domain", list, bp, required=True)
        if len(domain) != 2:
            raise ConfigError(f"{bp}.domain: expected [lo, hi]")
        kind = _expect(raw, "kind", str, bp, required=True)
        coeffs = _expect(raw, "coeffs", list, bp, required=True)
        mod1 = _expect(raw, "mod1", bool, bp, default=False)
        value_at_mid = None
        if mod1:
            # store the integer offset so the branch maps into [0,1]
            probe = Branch(lo=float(domain[0]), hi=float(domain[1]), kind=kind,
                           coeffs=tuple(float(c) for c in coeffs), wrap=0,
                           mod1=True)
            value_at_mid = float(probe.value(0.5 * (probe.lo + probe.hi)))
            wrap = math.floor(value_at_mid)
        else:
            wrap = int(_expect(raw, "wrap", int, bp, default=0))
        try:
            parsed.append(
                Branch(lo=float(domain[0]), hi=float(domain[1]), kind=kind,
                       coeffs=tuple(float(c) for c in coeffs), wrap=wrap,
                       mod1=mod1)
            )
        except Exception as exc:
            raise ConfigError(f"{bp}: {exc}") from exc
    try:
        return PiecewiseExpandingMap(
            branches=tuple(parsed),
            alpha=_expect(data, "alpha", float, path, required=True),
            holder_const=_expect(data, "holder_const", float, path,
                                 required=True),
            mu=_expect(data, "min_expansion", float, path, required=True),
            name=_expect(data, "name", str, path, default=""),
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_hole(data, path) -> Hole:
    intervals = _expect(data, "intervals", list, path, required=True)
    pairs = []
    for i, raw in enumerate(intervals):
        if not isinstance(raw, list) or len(raw) != 2:
            raise ConfigError(f"{path}.intervals[{i}]: expected [lo, hi]")
        pairs.append((float(raw[0]), float(raw[1])))
    try:
        return Hole(tuple(pairs))
    except Exception as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_family(data, path) -> tuple[list[float], list[Hole]]:
    kind = _expect(data, "kind", str, path, required=True)
    s_values = [float(s) for s in _expect(data, "s_values", list, path,
                                          required=True)]
    if kind == "centered":
        center = _expect(data, "center", float, path, default=0.5)
        return s_values, presets.shrink_holes(s_values, center)
    if kind == "left_anchored":
        left = _expect(data, "left", float, path, default=0.5)
        return s_values, presets.lipschitz_holes(s_values, left)
    if kind == "explicit":
        holes_raw = _expect(data, "holes", list, path, required=True)
        holes = []
        for i, raw in enumerate(holes_raw):
            if not isinstance(raw, dict):
                raise ConfigError(f"{path}.holes[{i}]: expected an object")
            holes.append(_parse_hole(raw, f"{path}.holes[{i}]"))
        if len(holes) != len(s_values):
            raise ConfigError(f"{path}: holes and s_values lengths differ")
        return s_values, holes
    raise ConfigError(f"{path}.kind: unknown family kind {kind!r}")


def _parse_solve(data, path="solve") -> SolveSettings:
    return SolveSettings(
        delta_override=_expect(data, "delta", float, path),
        xi_override=_expect(data, "xi", float, path),
        L_max=_expect(data, "L_max", int, path),
        tail_target=_expect(data, "tail_target", float, path, default=1e-9),
        g=_expect(data, "g", int, path, default=16),
        out_bins=_expect(data, "out_bins", int, path, default=4096),
        tol=_expect(data, "tol", float, path, default=1e-10),
        max_iter=_expect(data, "max_iter", int, path, default=100_000),
        horizon=_expect(data, "horizon", int, path, default=30),
        max_segments=_expect(data, "max_segments", int, path,
                             default=500_000),
    )


def _parse_mc(data, path="mc") -> McSettings:
    window = _expect(data, "ratio_window", list, path, default=[5, 15])
    if len(window) != 2:
        raise ConfigError(f"{path}.ratio_window: expected [lo, hi]")
    return McSettings(
        particles=_expect(data, "particles", int, path, default=100_000),
        steps=_expect(data, "steps", int, path, default=20),
        seed=_expect(data, "seed", int, path, default=0),
        bins=_expect(data, "bins", int, path, default=12),
        initial=_expect(data, "initial", str, path, default="uniform"),
        density_step=_expect(data, "density_step", int, path, default=10),
        ratio_window=(int(window[0]), int(window[1])),
    )


def load_config(path: str) -> ExperimentConfig:
    """Read and validate an experiment file; all errors become ConfigError."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(exc.msg), line=exc.lineno) from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("top level: expected an object")
    if "map" not in data:
        raise ConfigError("top level: required key 'map' is missing")
    emap = _parse_map(data["map"])
    hole = None
    if "hole" in data:
        hole = _parse_hole(data["hole"], "hole")
    family_s: list[float] = []
    family_holes: list[Hole] = []
    if "hole_family" in data:
        family_s, family_holes = _parse_family(data["hole_family"],
                                               "hole_family")
    solve = _parse_solve(data.get("solve", {}))
    mc = _parse_mc(data.get("mc", {}))
    out_dir = _expect(data.get("output", {}), "dir", str, "output",
                      default="out")
    return ExperimentConfig(
        emap=emap,
        hole=hole,
        family_s=family_s,
        family_holes=family_holes,
        solve=solve,
        mc=mc,
        out_dir=out_dir,
    )
