"""Command-line entry point: configs in, CSV/JSON tables out.

Exit codes: 0 success (hypothesis FAIL rows are scientific output, not
errors), 2 configuration problems, 3 degenerate dynamics (total escape,
impossible constructions), 4 invalid study families.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .accim_analysis import (
    AccimResult,
    lipschitz_study,
    shrink_study,
    solve_system,
    validate_shrink_family,
)
from .condition_checker import compute_constants
from .config import ExperimentConfig, load_config
from .errors import (
    AccimError,
    ConfigError,
    DegenerateSystemError,
    FamilyValidationError,
    HypothesisFailureError,
    ResourceBudgetError,
    TotalEscapeError,
)
from .interval_maps import EMPTY_HOLE, build_open_system
from .montecarlo import (
    empirical_conditional_density,
    ratio_estimate,
    simulate_survival,
)
from .tower_builder import build_tower, choose_delta

EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_FAMILY = 4


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _json_default(value):
    import numpy as np

    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON-serializable: {type(value).__name__}")


def write_json(path: Path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True, indent=1, default=_json_default)
        fh.write("\n")


def _system_of(cfg: ExperimentConfig):
    return build_open_system(cfg.emap, cfg.hole if cfg.hole is not None
                             else EMPTY_HOLE)


def _render_flags(flags) -> str:
    lines = [f"{'hypothesis':<42}{'status':<8}{'value':>14}{'bound':>14}"
             f"{'margin':>14}"]
    for key, flag in flags.items():
        status = "PASS" if flag.passed else "FAIL"
        lines.append(
            f"{flag.name:<42}{status:<8}{flag.value:>14.6g}"
            f"{flag.bound:>14.6g}{flag.margin:>14.6g}"
        )
    return "\n".join(lines)


def cmd_check(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    system = _system_of(cfg)
    st = cfg.solve
    delta = st.delta_override if st.delta_override is not None else choose_delta(system)
    tower = build_tower(system, delta, L_max=st.L_max, g=st.g,
                        tail_target=st.tail_target,
                        max_segments=st.max_segments)
    report = compute_constants(tower, system, xi_override=st.xi_override)
    write_json(out / "constants_report.json", report.to_dict())
    print(f"delta = {delta!r}, bases = {report.n_bases}, "
          f"L_max = {tower.L_max}, tail = {tower.tail_mass!r}")
    print(f"xi = {report.xi!r}, a = {report.a!r}, b = {report.b!r}, "
          f"M = {report.M!r}, q = {report.q!r}")
    print(_render_flags(report.flags))
    return 0


def _density_rows(psi) -> list[list]:
    return [[float(x), float(v)] for x, v in zip(psi.xs, psi.vals)]


def _write_solution(res: AccimResult, out: Path) -> None:
    write_csv(out / "density.csv", ["x", "psi"], _density_rows(res.psi))
    write_json(out / "eigenpair.json", res.summary_dict())
    write_csv(
        out / "tower_density.csv",
        ["base", "level", "cell", "x", "phi"],
        [
            [int(res.tower.seg_base[s]), int(res.tower.seg_level[s]), int(s),
             float(x), float(v)]
            for s in range(res.tower.n_segments)
            for x, v in zip(res.tower.nodes_of(s),
                            res.fp.phi.segment_values(s))
        ],
    )


def cmd_solve(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    res = solve_system(_system_of(cfg), cfg.solve)
    _write_solution(res, out)
    print(f"lambda = {res.lam!r}")
    print(f"escape_rate = {res.escape_rate!r}")
    print(f"fixed-point residual = {res.fp.residual!r} "
          f"({res.fp.iterations} iterations)")
    print(f"conditional-invariance residual = {res.residual_ci!r}")
    print(f"hypotheses pass: {res.hypotheses_pass}")
    return 0


def cmd_tower_dump(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    system = _system_of(cfg)
    st = cfg.solve
    delta = st.delta_override if st.delta_override is not None else choose_delta(system)
    tower = build_tower(system, delta, L_max=st.L_max, g=st.g,
                        tail_target=st.tail_target,
                        max_segments=st.max_segments)
    tower.dump_json(out / "tower.json")
    print(f"{tower.n_segments} cells over {len(tower.bases)} reference "
          f"intervals, tail {tower.tail_mass!r}")
    return 0


def _family_or_error(cfg: ExperimentConfig):
    if not cfg.family_holes:
        raise FamilyValidationError("config declares no hole_family")
    return cfg.family_s, cfg.family_holes


def _solve_family_member(args):
    emap, hole, settings = args
    from .accim_analysis import solve

    res = solve(emap, hole, settings)
    return res


def cmd_lipschitz(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    _, holes = _family_or_error(cfg)
    rows = lipschitz_study(cfg.emap, holes, cfg.solve, workers=workers)
    write_csv(
        out / "lipschitz.csv",
        ["hole_measure", "lambda", "one_minus_lambda", "c0", "bound",
         "slack", "a1_passed"],
        [[r.hole_measure, r.lam, r.one_minus_lambda, r.c0, r.bound, r.slack,
          r.a1_passed] for r in rows],
    )
    for r in rows:
        print(f"mH = {r.hole_measure!r}: 1 - lambda = {r.one_minus_lambda!r} "
              f"<= {r.bound!r}")
    return 0


def cmd_shrink(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    s_values, holes = _family_or_error(cfg)
    validate_shrink_family(cfg.emap, s_values, holes,
                           horizon=cfg.solve.horizon)
    rows = shrink_study(cfg.emap, s_values, holes, settings=cfg.solve,
                        workers=workers)
    weak_names = list(rows[0].weak_dists.keys()) if rows else []
    write_csv(
        out / "shrink.csv",
        ["s", "hole_measure", "lambda", "one_minus_lambda_over_mh",
         "l1_dist"] + [f"weak:{n}" for n in weak_names],
        [
            [r.s, r.hole_measure, r.lam, r.one_minus_lambda_over_mh,
             r.l1_dist] + [r.weak_dists[n] for n in weak_names]
            for r in rows
        ],
    )
    for r in rows:
        print(f"s = {r.s!r}: lambda = {r.lam!r}, L1 = {r.l1_dist!r}")
    return 0


def cmd_mc(cfg: ExperimentConfig, out: Path, workers: int) -> int:
    system = _system_of(cfg)
    mc = cfg.mc
    records = simulate_survival(system, mc.particles, mc.steps, mc.seed,
                                initial=mc.initial, workers=workers)
    write_csv(
        out / "survival.csv",
        ["n", "survivors", "p_n", "ratio", "stderr"],
        [[r.n, r.survivors, r.p_n, r.ratio, r.stderr] for r in records],
    )
    hist = empirical_conditional_density(
        system, mc.density_step, mc.bins, mc.particles, mc.seed,
        initial=mc.initial, workers=workers,
    )
    write_csv(
        out / "histogram.csv",
        ["bin_left", "bin_right", "density", "stderr"],
        [
            [float(hist.edges[k]), float(hist.edges[k + 1]),
             float(hist.density[k]), float(hist.stderr[k])]
            for k in range(len(hist.counts))
        ],
    )
    try:
        mean, err = ratio_estimate(records, *mc.ratio_window)
        print(f"mean survival ratio over {mc.ratio_window}: {mean!r} "
              f"(stderr {err!r})")
    except AccimError:
        print("survival ratio window empty")
    return 0


COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "shrink": cmd_shrink,
    "lipschitz": cmd_lipschitz,
    "mc": cmd_mc,
    "tower-dump": cmd_tower_dump,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="accim",
        description="Conditionally invariant measures and escape rates for "
                    "piecewise expanding interval maps with holes",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment file")
    parser.add_argument("--out-dir", default=None,
                        help="output directory (default: from the config)")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None,
                        help="override the Monte Carlo seed")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.mc.seed = args.seed
        out = Path(args.out_dir if args.out_dir is not None else cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, max(args.workers, 1))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FamilyValidationError as exc:
        print(f"invalid hole family: {exc}", file=sys.stderr)
        return EXIT_FAMILY
    except (DegenerateSystemError, TotalEscapeError, HypothesisFailureError,
            ResourceBudgetError) as exc:
        print(f"degenerate dynamics: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
