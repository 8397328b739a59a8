"""Command line interface: ``fidbound <subcommand>`` or ``python -m fidbound``.

Options may also come from a JSON file given with ``--config``.  Keys are
option names (``lattice``, ``level``, ``resolution``, ...); a nested object
named after a subcommand overrides the top-level keys for that command.
Explicit flags win over the file, and the file wins over built-in defaults.

Exit codes: 0 success, 1 invalid input, 2 no threshold in range,
3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    DEFAULT_ORDERS,
    NoThresholdError,
    OverlapMeasure,
    fidelity_curve,
    necessary_condition,
    oneway_entropy_bound,
    save_json,
    sufficient_condition,
    threshold_search,
    write_curve_csv,
)
from .correlations import Behavior, BehaviorError, qber, symmetrize
from .envelope import build_envelope
from .npa import build_structure
from .sdpbuild import AssemblyError, assemble, assemble_oneway, export_sdpa, feasible_value
from .solver import SolverError, SolverSettings, solve

EXIT_OK, EXIT_INPUT, EXIT_NO_THRESHOLD, EXIT_SOLVER = 0, 1, 2, 3

DEFAULTS = {
    "resolution": 1e-3,
    "q_from": 0.0,
    "q_to": 0.12,
    "q_step": 0.02,
    "kind": "fidelity",
    "n": 1,
    "backend": "clarabel",
    "strategy": "auto",
    "abs_tol": 1e-8,
    "rel_tol": 1e-8,
    "max_iterations": 200,
}


def _parser() -> argparse.ArgumentParser:
    # every option defaults to None so that config values can fill the gaps
    p = argparse.ArgumentParser(prog="fidbound", description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, help="JSON file with option values")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def solver_opts(sp):
        sp.add_argument("--lattice", type=int, help="envelope order m (grid intervals per axis)")
        sp.add_argument("--level", type=int, help="NPA hierarchy level")
        sp.add_argument("--backend", choices=("clarabel", "scs"))
        sp.add_argument("--strategy", choices=("auto", "full", "column_generation"))
        sp.add_argument("--abs-tol", type=float)
        sp.add_argument("--rel-tol", type=float)
        sp.add_argument("--max-iterations", type=int)

    sp = sub.add_parser("threshold", help="bisect for the noise threshold")
    sp.add_argument("--scenario", help="a | b | c | c-opt | custom:<strategy.json>")
    solver_opts(sp)
    sp.add_argument("--resolution", type=float)
    sp.add_argument("--bracket", type=float, nargs=2, metavar=("Q_LO", "Q_HI"),
                    help="starting bracket (verified; falls back to [0, 0.25])")
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("curve", help="fidelity bound over a grid of noise values")
    sp.add_argument("--scenario")
    solver_opts(sp)
    sp.add_argument("--q-from", type=float)
    sp.add_argument("--q-to", type=float)
    sp.add_argument("--q-step", type=float)
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("min-fidelity", help="bound for a behavior read from JSON")
    sp.add_argument("--behavior", type=Path)
    solver_opts(sp)
    sp.add_argument("--oneway", action="store_true", default=None,
                    help="condition on Alice's bit only")
    sp.add_argument("--symmetrize", action="store_true", default=None,
                    help="symmetrize the behavior before solving")
    sp.add_argument("--export-sdpa", type=Path, help="also write the SDP in SDPA format")

    sp = sub.add_parser("check-necessary", help="evaluate the conjectured necessary condition")
    sp.add_argument("--overlap", type=float)
    sp.add_argument("--kind", choices=("fidelity", "pg"))
    sp.add_argument("--eps", type=float)
    sp.add_argument("--n", type=int)

    sp = sub.add_parser("envelope", help="list the pieces of the order-m envelope")
    sp.add_argument("--lattice", type=int)
    sp.add_argument("--dump", type=Path)
    return p


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge flags over config-file values over defaults."""
    opts = dict(DEFAULTS)
    if args.config is not None:
        data = json.loads(Path(args.config).read_text())
        section = data.get(args.command, {})
        opts.update({k.replace("-", "_"): v for k, v in data.items() if not isinstance(v, dict)})
        opts.update({k.replace("-", "_"): v for k, v in section.items()})
    opts.update({k: v for k, v in vars(args).items() if v is not None})
    m, lvl = DEFAULT_ORDERS.get(opts.get("scenario"), (8, 3))
    if opts.get("lattice") is None:
        opts["lattice"] = m
    if opts.get("level") is None:
        opts["level"] = lvl
    return opts


def _settings(opts: dict) -> SolverSettings:
    return SolverSettings(max_iterations=int(opts["max_iterations"]), abs_tol=float(opts["abs_tol"]),
                          rel_tol=float(opts["rel_tol"]), verbosity=max(opts["verbose"] - 1, 0),
                          backend=opts["backend"], strategy=opts["strategy"])


def _need(opts: dict, *keys):
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise ValueError("missing option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _log_point(p) -> None:
    print(f"q={p.q:.5f} eps={p.eps:.5f} F_lb={p.fid_lb:.6f} sqrt(eps/(1-eps))={p.sqrt_eps_ratio:.6f} "
          f"{'pass' if p.condition else 'fail'} [{p.solve_status}, {p.wall_ms / 1e3:.1f} s]",
          flush=True)


def cmd_threshold(opts: dict) -> int:
    _need(opts, "scenario")
    res = threshold_search(opts["scenario"], opts["lattice"], opts["level"], opts["resolution"],
                           settings=_settings(opts), bracket=opts.get("bracket"), log=_log_point)
    print(f"q* = {res.q_star:.5f}  bracket [{res.bracket[0]:.5f}, {res.bracket[1]:.5f}]")
    if opts.get("out"):
        data = res.to_json()
        data["scenario"] = opts["scenario"]
        save_json(data, opts["out"])
    return EXIT_OK


def cmd_curve(opts: dict) -> int:
    _need(opts, "scenario")
    q_grid = np.arange(opts["q_from"], opts["q_to"] + 0.5 * opts["q_step"], opts["q_step"])
    points = fidelity_curve(opts["scenario"], q_grid, opts["lattice"], opts["level"],
                            settings=_settings(opts))
    for p in points:
        _log_point(p)
    if opts.get("out"):
        write_curve_csv(points, opts["out"])
    failed = [p for p in points if p.solve_status not in ("optimal", "near_optimal")]
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_min_fidelity(opts: dict) -> int:
    _need(opts, "behavior")
    behavior = Behavior.load(opts["behavior"])
    if opts.get("symmetrize"):
        behavior = symmetrize(behavior)
    structure = build_structure(behavior.scenario, opts["level"])
    envelope = build_envelope(opts["lattice"])
    oneway = bool(opts.get("oneway"))
    problem = (assemble_oneway if oneway else assemble)(behavior, envelope, structure)
    if opts.get("export_sdpa"):
        export_sdpa(problem, opts["export_sdpa"])
    result = solve(problem, _settings(opts))
    if not result.ok:
        print(json.dumps({"status": result.status}))
        return EXIT_SOLVER
    eps = qber(behavior)
    out = {
        "status": result.status,
        "fidelity_lower_bound": result.dual_value,
        "feasible_value": feasible_value(result, problem),
        "primal_value": result.primal_value,
        "eps": eps,
        "solve_time": result.solve_time,
    }
    f_lb = min(max(result.dual_value, 0.0), 1.0)
    if oneway:
        out["entropy_lower_bound"] = oneway_entropy_bound(f_lb)
    elif eps < 0.5:
        cond = sufficient_condition(f_lb, eps)
        out.update(condition=bool(cond.holds), margin=cond.margin)
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_check_necessary(opts: dict) -> int:
    _need(opts, "overlap", "eps")
    res = necessary_condition(OverlapMeasure(opts["kind"], opts["overlap"]), opts["eps"], int(opts["n"]))
    print(json.dumps({
        "eve_error_bound": res.eve_error_bound,
        "bob_error": res.bob_error,
        "condition_holds": bool(res.condition_holds),
        "h2_eve_error_bound": res.eve_entropy_bound,
        "h2_bob_error": res.bob_entropy,
    }, indent=2))
    return EXIT_OK


def cmd_envelope(opts: dict) -> int:
    model = build_envelope(opts["lattice"])
    if opts.get("dump"):
        model.save(opts["dump"])
    else:
        print(json.dumps(model.to_json(), indent=2))
    print(f"order {model.order}: {len(model)} pieces", file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "threshold": cmd_threshold,
    "curve": cmd_curve,
    "min-fidelity": cmd_min_fidelity,
    "check-necessary": cmd_check_necessary,
    "envelope": cmd_envelope,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        return COMMANDS[args.command](opts)
    except NoThresholdError as exc:
        print(f"no threshold: {exc}", file=sys.stderr)
        return EXIT_NO_THRESHOLD
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, BehaviorError, AssemblyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
