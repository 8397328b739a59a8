"""Conic backends for block moment SDPs and certified dual bounds.

Two backends are supported, both called through their native APIs so the
dual variables can be read back unambiguously:

* ``clarabel`` (interior point, default)
* ``scs`` (first order; faster per iteration, less accurate)

Whatever the backend returns, the reported ``dual_value`` is recomputed
from the equality multipliers and PSD-projected dual matrices (see
:func:`fidbound.sdpbuild.certified_value`), so it is a valid lower bound
up to floating point rounding in that recomputation.

Large instances can be solved by column generation: a restricted problem
over a few blocks produces multipliers, every block is then priced by a
single-block SDP, and blocks with negative reduced cost join the active
set.  The final bound is certified over *all* blocks.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sdpbuild import (
    SdpProblem,
    SolveResult,
    block_lower_bound,
    certified_value,
    key_coordinates,
    read_sdpa,
    reduced_costs,
)

log = logging.getLogger(__name__)

GAP_TOL = 1e-7
# full solves whose dense KKT blocks would exceed this many doubles go to column generation
AUTO_FULL_LIMIT = 5e7


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 200
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    verbosity: int = 0
    backend: str = "clarabel"
    strategy: str = "auto"
    direct_solve_method: str = "faer"
    # proportional static regularizations tried in turn until one reports Solved;
    # the many-block problems stall at clarabel's default (eps^2), others need it
    static_reg_ladder: tuple = (1e-12, float(np.finfo(float).eps) ** 2)
    cg_batch: int = 8
    cg_max_rounds: int = 40
    cg_tol: float = 1e-7

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.backend not in ("clarabel", "scs"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.strategy not in ("auto", "full", "column_generation"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


# --- backend plumbing ---------------------------------------------------------

def _svec_operator(entry_ids: np.ndarray, n_vars: int, layout: str) -> sp.csc_matrix:
    """Map moment vector -> scaled triangle vector of Gamma(y)."""
    n = entry_ids.shape[0]
    if layout == "upper_colmajor":       # clarabel
        pairs = [(r, c) for c in range(n) for r in range(c + 1)]
    else:                                # scs: lower triangle, column-major
        pairs = [(r, c) for c in range(n) for r in range(c, n)]
    rows = np.arange(len(pairs))
    rr = np.array([p[0] for p in pairs])
    cc = np.array([p[1] for p in pairs])
    vals = np.where(rr == cc, 1.0, np.sqrt(2.0))
    return sp.csc_matrix((vals, (rows, entry_ids[rr, cc])), shape=(len(pairs), n_vars)), rr, cc


def _smat(vec: np.ndarray, rr, cc, n: int) -> np.ndarray:
    z = np.zeros((n, n))
    off = rr != cc
    z[rr, cc] = np.where(off, vec / np.sqrt(2.0), vec)
    z[cc, rr] = z[rr, cc]
    return z


def _reduce_equalities(eq: np.ndarray, rhs: np.ndarray):
    """Orthonormal row basis ``U`` of the equality system plus consistency residual."""
    u, s, _ = np.linalg.svd(eq, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * max(s[0], 1.0)))
    u = u[:, :rank]
    resid = float(np.linalg.norm(rhs - u @ (u.T @ rhs)))
    return u, resid


@dataclass
class _RawSolution:
    status: str
    accepted: bool
    moments: np.ndarray | None
    multipliers: np.ndarray | None
    dual_mats: list | None
    primal: float
    dual: float
    iterations: int


_STATUS_RANK = {"Solved": 0, "solved": 0, "AlmostSolved": 1}


def _run_backend(problem: SdpProblem, settings: SolverSettings) -> _RawSolution:
    """Solve with each regularization of the ladder until one converges."""
    best = None
    ladder = settings.static_reg_ladder if settings.backend == "clarabel" else (None,)
    for static_reg in ladder:
        raw = _run_once(problem, settings, static_reg)
        if raw.status == "infeasible" or _STATUS_RANK.get(raw.status) == 0:
            return raw
        if best is None or _STATUS_RANK.get(raw.status, 9) < _STATUS_RANK.get(best.status, 9):
            best = raw
    return best


def _run_once(problem: SdpProblem, settings: SolverSettings, static_reg) -> _RawSolution:
    nb, nv, n = problem.n_blocks, problem.n_vars, problem.block_size
    u, resid = _reduce_equalities(problem.eq_matrix, problem.rhs)
    if resid > 1e-8:
        return _RawSolution("infeasible", False, None, None, None, np.inf, np.inf, 0)
    eq_red = sp.csc_matrix(u.T @ problem.eq_matrix)
    rhs_red = u.T @ problem.rhs
    r = eq_red.shape[0]
    layout = "upper_colmajor" if settings.backend == "clarabel" else "lower_colmajor"
    svec, rr, cc = _svec_operator(problem.entry_ids, nv, layout)
    nt = svec.shape[0]
    a = sp.vstack([sp.kron(np.ones((1, nb)), eq_red), sp.kron(sp.eye(nb), -svec)]).tocsc()
    b = np.concatenate([rhs_red, np.zeros(nb * nt)])
    q = problem.objective.ravel().copy()

    if settings.backend == "clarabel":
        import clarabel

        st = clarabel.DefaultSettings()
        st.verbose = settings.verbosity > 0
        st.max_iter = settings.max_iterations
        st.tol_gap_abs = settings.abs_tol
        st.tol_gap_rel = settings.rel_tol
        st.tol_feas = settings.abs_tol
        st.direct_solve_method = settings.direct_solve_method
        st.static_regularization_proportional = static_reg
        st.chordal_decomposition_enable = False
        st.presolve_enable = False
        cones = [clarabel.ZeroConeT(r)] + [clarabel.PSDTriangleConeT(n)] * nb
        solver = clarabel.DefaultSolver(sp.csc_matrix((nb * nv, nb * nv)), q, a, b, cones, st)
        sol = solver.solve()
        status = str(sol.status)
        x, z = np.asarray(sol.x), np.asarray(sol.z)
        primal, dual, iters = sol.obj_val, sol.obj_val_dual, sol.iterations
        accepted = status in ("Solved", "AlmostSolved", "MaxIterations", "InsufficientProgress")
        infeasible = "PrimalInfeasible" in status
    else:
        import scs

        solver = scs.SCS({"A": a, "b": b, "c": q}, {"z": r, "s": [n] * nb},
                         eps_abs=settings.abs_tol, eps_rel=settings.rel_tol,
                         max_iters=max(settings.max_iterations, 10000),
                         verbose=settings.verbosity > 0)
        sol = solver.solve()
        info = sol["info"]
        status = info["status"]
        x, z = np.asarray(sol["x"]), np.asarray(sol["y"])
        primal, dual, iters = info["pobj"], info["dobj"], info["iter"]
        accepted = status in ("solved", "solved_inaccurate")
        infeasible = status.startswith("infeasible")

    if infeasible:
        return _RawSolution("infeasible", False, None, None, None, np.inf, np.inf, iters)
    if not accepted or not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
        return _RawSolution(status, False, None, None, None, np.nan, np.nan, iters)
    multipliers = u @ (-z[:r])
    dual_mats = [_smat(z[r + j * nt: r + (j + 1) * nt], rr, cc, n) for j in range(nb)]
    return _RawSolution(status, True, x.reshape(nb, nv), multipliers, dual_mats,
                        float(primal), float(dual), int(iters))


def _status_from(raw: _RawSolution, primal: float, dual: float) -> str:
    if not raw.accepted:
        return "infeasible" if raw.status == "infeasible" else "numerical_failure"
    solved = raw.status in ("Solved", "solved")
    if solved and abs(primal - dual) <= GAP_TOL * (1.0 + abs(primal)):
        return "optimal"
    return "near_optimal"


# --- public entry points --------------------------------------------------------

def _full_solve(problem: SdpProblem, settings: SolverSettings) -> SolveResult:
    t0 = time.perf_counter()
    raw = _run_backend(problem, settings)
    scale = problem.constant_scale
    if not raw.accepted:
        return SolveResult(_status_from(raw, np.nan, np.nan), np.nan, np.nan, np.nan, np.nan,
                           constant_scale=scale, iterations=raw.iterations,
                           solve_time=time.perf_counter() - t0,
                           info={"backend_status": raw.status})
    costs = reduced_costs(problem, raw.multipliers)
    bounds = [block_lower_bound(problem, costs[j], raw.dual_mats[j])
              for j in range(problem.n_blocks)]
    cert = certified_value(problem, raw.multipliers, bounds)
    primal = problem.objective_value(raw.moments)
    raw_dual = float(raw.multipliers @ problem.rhs)
    return SolveResult(
        status=_status_from(raw, primal, raw_dual),
        primal_value=primal * scale,
        dual_value=cert * scale,
        raw_dual_value=raw_dual * scale,
        dual_margin=(raw_dual - cert) * scale,
        block_moments=raw.moments,
        multipliers=raw.multipliers,
        constant_scale=scale,
        iterations=raw.iterations,
        solve_time=time.perf_counter() - t0,
        active_blocks=np.arange(problem.n_blocks),
        info={"backend_status": raw.status, "block_bounds": np.array(bounds)},
    )


def price_block(problem: SdpProblem, cost: np.ndarray, settings: SolverSettings) -> float:
    """Certified lower bound on ``min cost . y`` over normalized blocks (``y_0 = 1``)."""
    e0 = np.zeros((1, problem.n_vars))
    e0[0, 0] = 1.0
    sub = SdpProblem(problem.entry_ids, cost[None, :], e0, [1.0])
    res = _full_solve(sub, settings)
    if not res.ok:
        raise SolverError(f"pricing problem failed ({res.info.get('backend_status')})")
    return res.dual_value


def _initial_blocks(problem: SdpProblem, count: int) -> list[int]:
    """The ``count`` pieces lowest at the observed behavior itself.

    A single block would fix the objective through the equalities, and the
    backend handles such pure feasibility problems poorly.
    """
    count = min(max(count, 2), problem.n_blocks)
    if problem.envelope is not None:
        y = np.linalg.lstsq(problem.eq_matrix, problem.rhs, rcond=None)[0]
        x1, x2 = key_coordinates(problem, y[None, :])
        coef = problem.envelope.coefficients()
        vals = coef[:, 0] + coef[:, 1] * x1[0] + coef[:, 2] * x2[0]
        return sorted(int(j) for j in np.argsort(vals, kind="stable")[:count])
    return list(range(count))


def _column_generation(problem: SdpProblem, settings: SolverSettings, warm=None) -> SolveResult:
    t0 = time.perf_counter()
    scale = problem.constant_scale
    if warm is not None and len(warm) >= 2:
        active = sorted({int(j) for j in warm})
    else:
        active = _initial_blocks(problem, settings.cg_batch)
    total_iters = 0
    bounds = np.full(problem.n_blocks, -np.inf)
    for rnd in range(settings.cg_max_rounds):
        sub = problem.subproblem(active)
        raw = _run_backend(sub, settings)
        total_iters += raw.iterations
        if not raw.accepted:
            return SolveResult(_status_from(raw, np.nan, np.nan), np.nan, np.nan, np.nan, np.nan,
                               constant_scale=scale, iterations=total_iters,
                               solve_time=time.perf_counter() - t0,
                               info={"backend_status": raw.status, "rounds": rnd + 1})
        costs = reduced_costs(problem, raw.multipliers)
        for i, j in enumerate(active):
            bounds[j] = block_lower_bound(problem, costs[j], raw.dual_mats[i])
        inactive = [j for j in range(problem.n_blocks) if j not in active]
        for j in inactive:
            bounds[j] = price_block(problem, costs[j], settings)
        cert = certified_value(problem, raw.multipliers, bounds)
        raw_dual = float(raw.multipliers @ problem.rhs)
        log.info("column generation round %d: %d active, raw dual %.8f, certified %.8f",
                 rnd, len(active), raw_dual * scale, cert * scale)
        candidates = sorted((bounds[j], j) for j in inactive if bounds[j] < -settings.cg_tol)
        if not candidates:
            break
        active = active + [j for _, j in candidates[: settings.cg_batch]]
    moments = np.zeros((problem.n_blocks, problem.n_vars))
    moments[active] = raw.moments
    primal = problem.objective_value(moments)
    status = _status_from(raw, primal, raw_dual)
    if candidates:
        status = "near_optimal"
    return SolveResult(
        status=status,
        primal_value=primal * scale,
        dual_value=cert * scale,
        raw_dual_value=raw_dual * scale,
        dual_margin=(raw_dual - cert) * scale,
        block_moments=moments,
        multipliers=raw.multipliers,
        constant_scale=scale,
        iterations=total_iters,
        solve_time=time.perf_counter() - t0,
        active_blocks=np.array(sorted(active)),
        info={"backend_status": raw.status, "rounds": rnd + 1, "block_bounds": bounds.copy()},
    )


def _choose_strategy(problem: SdpProblem, settings: SolverSettings) -> str:
    if settings.strategy != "auto":
        return settings.strategy
    nt = problem.block_size * (problem.block_size + 1) // 2
    return "full" if problem.n_blocks * nt * nt <= AUTO_FULL_LIMIT else "column_generation"


def solve(problem: SdpProblem, settings: SolverSettings | None = None, warm_blocks=None) -> SolveResult:
    """Solve a block moment SDP and certify its dual bound.

    The returned values are multiplied by ``problem.constant_scale``.
    ``warm_blocks`` seeds the active set of column generation (typically
    ``active_blocks`` of a solve at a nearby noise level).
    """
    settings = settings or SolverSettings()
    if _choose_strategy(problem, settings) == "full":
        return _full_solve(problem, settings)
    return _column_generation(problem, settings, warm_blocks)


def minimize_moment_functional(structure, weights, settings: SolverSettings | None = None) -> SolveResult:
    """``min weights . y`` over normalized moment vectors of ``structure``."""
    e0 = np.zeros((1, structure.n_moments))
    e0[0, 0] = 1.0
    problem = SdpProblem(structure.entry_ids, np.asarray(weights, float)[None, :], e0, [1.0],
                         structure=structure)
    return solve(problem, settings)


def solve_sdpa(path, settings: SolverSettings | None = None) -> dict:
    """Solve an arbitrary SDPA sparse file; returns primal/dual objective and status.

    Free variables ``x``; each block ``sum_i F_i x_i - F_0`` is constrained
    PSD (or nonnegative for diagonal blocks).  Only the clarabel backend is
    used here.
    """
    import clarabel

    settings = settings or SolverSettings()
    data = read_sdpa(path)
    m = data.c.size
    a_rows, b_parts, cones = [], [], []
    for size, ent in zip(data.block_struct, data.entries):
        if size < 0:
            dim = -size
            rows, cols, vals, b = [], [], [], np.zeros(dim)
            for mat, i, j, v in ent:
                if i != j:
                    raise SolverError("off-diagonal entry in a diagonal block")
                if mat == 0:
                    b[int(i)] -= v
                else:
                    rows.append(int(i)); cols.append(int(mat) - 1); vals.append(-v)
            a_rows.append(sp.csc_matrix((vals, (rows, cols)), shape=(dim, m)))
            b_parts.append(b)
            cones.append(clarabel.NonnegativeConeT(dim))
        else:
            n = size
            tri = {(r, c): t for t, (r, c) in enumerate((r, c) for c in range(n) for r in range(c + 1))}
            rows, cols, vals, b = [], [], [], np.zeros(len(tri))
            for mat, i, j, v in ent:
                i, j = int(i), int(j)
                t = tri[(i, j)]
                w = v if i == j else v * np.sqrt(2.0)
                if mat == 0:
                    b[t] -= w
                else:
                    rows.append(t); cols.append(int(mat) - 1); vals.append(-w)
            a_rows.append(sp.csc_matrix((vals, (rows, cols)), shape=(len(tri), m)))
            b_parts.append(b)
            cones.append(clarabel.PSDTriangleConeT(n))
    a = sp.vstack(a_rows).tocsc()
    b = np.concatenate(b_parts)
    st = clarabel.DefaultSettings()
    st.verbose = settings.verbosity > 0
    st.max_iter = settings.max_iterations
    st.tol_gap_abs = settings.abs_tol
    st.tol_gap_rel = settings.rel_tol
    st.direct_solve_method = settings.direct_solve_method
    st.presolve_enable = False
    sol = clarabel.DefaultSolver(sp.csc_matrix((m, m)), data.c, a, b, cones, st).solve()
    return {"status": str(sol.status), "primal_value": sol.obj_val,
            "dual_value": sol.obj_val_dual, "x": np.asarray(sol.x)}
