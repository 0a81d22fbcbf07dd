"""Particle-ensemble validation: survival probabilities and conditional laws.

Trajectories are deterministic once the initial point is drawn, so all
randomness sits in one counter-based stream (Philox keyed by the seed)
that produces the initial ensemble up front.  Work may then be split
across workers in fixed slices: per-step survivor counts are integers,
summed in slice order, and results are bit-identical for any worker
count.

Survival convention: p_n is the fraction of the ensemble whose first
max(n, 1) positions avoid the hole, so p_0 is the surviving initial mass
and, for the middle-thirds example, p_5 = (2/3)^5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ResolutionError
from .interval_maps import OpenSystem

#: particles per deterministic chunk; fixed so that worker splits cannot
#: change which particles are processed together
CHUNK = 1 << 16


def initial_ensemble(n_particles: int, seed: int, initial: str = "uniform"
                     ) -> np.ndarray:
    """Draw the starting points from one Philox stream.

    "uniform" is Lebesgue on [0,1]; "linear" is the density 2x (inverse
    CDF of the same uniforms), kept as a second initial law to probe
    independence of the conditional limit.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    u = rng.random(n_particles)
    if initial == "uniform":
        return u
    if initial == "linear":
        return np.sqrt(u)
    raise DomainError(f"unknown initial law {initial!r}")


@dataclass
class SurvivalRecord:
    n: int
    survivors: int
    p_n: float
    ratio: float | None     # p_{n+1} / p_n, None on the last record
    stderr: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def _survivor_counts(system: OpenSystem, x0: np.ndarray, n_steps: int
                     ) -> np.ndarray:
    """Survivor count after each record 0..n_steps for one slice."""
    counts = np.zeros(n_steps + 1, dtype=np.int64)
    x = x0[~system.hole.contains(x0)]
    counts[0] = len(x)
    if n_steps >= 1:
        counts[1] = len(x)  # records 0 and 1 both condition one position
    for n in range(2, n_steps + 1):
        if len(x) == 0:
            break
        x = system.map.map_array(x)
        x = x[~system.hole.contains(x)]
        counts[n] = len(x)
    return counts


def simulate_survival(
    system: OpenSystem,
    n_particles: int,
    n_steps: int,
    seed: int,
    initial: str = "uniform",
    workers: int = 1,
) -> list[SurvivalRecord]:
    """Survival records for a seeded ensemble; reproducible bit-for-bit."""
    if n_particles < 1:
        raise DomainError("need at least one particle")
    x0 = initial_ensemble(n_particles, seed, initial)
    slices = [x0[i : i + CHUNK] for i in range(0, n_particles, CHUNK)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_survivor_counts,
                                  [system] * len(slices), slices,
                                  [n_steps] * len(slices)))
    else:
        parts = [_survivor_counts(system, s, n_steps) for s in slices]
    counts = np.sum(parts, axis=0)
    records = []
    for n in range(n_steps + 1):
        p = counts[n] / n_particles
        nxt = counts[n + 1] / n_particles if n < n_steps else None
        ratio = (nxt / p) if (nxt is not None and p > 0) else None
        stderr = math.sqrt(max(p * (1.0 - p), 0.0) / n_particles)
        records.append(SurvivalRecord(n=n, survivors=int(counts[n]), p_n=p,
                                      ratio=ratio, stderr=stderr))
        if counts[n] == 0:
            break
    return records


def ratio_estimate(records: list[SurvivalRecord], n_lo: int = 5,
                   n_hi: int = 15) -> tuple[float, float]:
    """Mean survival ratio over a step window and a conservative stderr.

    Per-step ratio variances are approximated binomially from the later
    survivor count; the window mean's error adds them in quadrature.
    """
    rows = [r for r in records if n_lo <= r.n < n_hi and r.ratio is not None]
    if not rows:
        raise ResolutionError("no surviving ratio rows in the window")
    ratios = np.array([r.ratio for r in rows])
    var = []
    for r in rows:
        nxt = r.survivors * r.ratio
        var.append(r.ratio * (1.0 - r.ratio) / max(nxt, 1.0))
    mean = float(np.mean(ratios))
    err = float(np.sqrt(np.sum(var)) / len(rows))
    return mean, err


def log_survival_slope(records: list[SurvivalRecord], n_lo: int, n_hi: int
                       ) -> tuple[float, float]:
    """Least-squares slope of log p_n over a window, with its stderr."""
    rows = [r for r in records if n_lo <= r.n <= n_hi and r.survivors > 0]
    if len(rows) < 3:
        raise ResolutionError("too few points for a slope fit")
    ns = np.array([r.n for r in rows], dtype=float)
    ys = np.array([math.log(r.p_n) for r in rows])
    w = np.array([r.survivors for r in rows], dtype=float)
    coeffs, cov = np.polyfit(ns, ys, 1, w=np.sqrt(w), cov=True)
    return float(coeffs[0]), float(math.sqrt(cov[0, 0]))


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    survivors: int
    step: int

    def to_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "counts": self.counts.tolist(),
            "density": self.density.tolist(),
            "stderr": self.stderr.tolist(),
            "survivors": self.survivors,
            "step": self.step,
        }


def _positions_at(system: OpenSystem, x0: np.ndarray, n: int) -> np.ndarray:
    """Positions (last checked ones) of the step-n survivors of a slice."""
    x = x0[~system.hole.contains(x0)]
    for _ in range(max(n, 1) - 1):
        if len(x) == 0:
            break
        x = system.map.map_array(x)
        x = x[~system.hole.contains(x)]
    return x


def empirical_conditional_density(
    system: OpenSystem,
    n: int,
    bins: int,
    n_particles: int,
    seed: int,
    initial: str = "uniform",
    workers: int = 1,
    min_per_bin: int = 10,
) -> Histogram:
    """Normalized histogram of the survivors' positions at step n."""
    x0 = initial_ensemble(n_particles, seed, initial)
    slices = [x0[i : i + CHUNK] for i in range(0, n_particles, CHUNK)]
    edges = np.linspace(0.0, 1.0, bins + 1)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            pos_parts = list(pool.map(_positions_at, [system] * len(slices),
                                      slices, [n] * len(slices)))
    else:
        pos_parts = [_positions_at(system, s, n) for s in slices]
    counts = np.zeros(bins, dtype=np.int64)
    survivors = 0
    for pos in pos_parts:
        survivors += len(pos)
        counts += np.histogram(pos, bins=edges)[0]
    if survivors < min_per_bin * bins:
        raise ResolutionError(
            f"only {survivors} survivors for {bins} bins; "
            "increase the ensemble size"
        )
    width = 1.0 / bins
    frac = counts / survivors
    density = frac / width
    stderr = np.sqrt(np.maximum(frac * (1.0 - frac), 0.0) / survivors) / width
    return Histogram(edges=edges, counts=counts, density=density,
                     stderr=stderr, survivors=survivors, step=n)
