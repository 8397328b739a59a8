"""Assembly of the block SDP whose dual value lower-bounds Eve's fidelity.

Block ``j`` holds the moment matrix of a subnormalized behavior attached
to envelope piece ``h_j``.  The blocks add up to the observed behavior and
the objective charges each block ``h_j`` evaluated on its own (00|00) and
(11|00) entries, homogenized by the block's normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correlations import Behavior, Scenario
from .envelope import EnvelopeModel
from .npa import MomentStructure

SYMMETRY_TOL = 1e-9
NEGATIVE_TOL = 1e-6


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SdpProblem:
    """``min sum_j objective[j] . y_j`` s.t. ``sum_j eq_matrix @ y_j = rhs``, ``Gamma(y_j) >= 0``.

    Every block shares the layout ``entry_ids`` (moment index of each matrix
    entry).  Variable 0 of each block is its normalization ``Gamma[0, 0]``,
    which bounds every other variable in absolute value, and the
    normalizations of all blocks sum to ``total_mass``.
    """

    entry_ids: np.ndarray
    objective: np.ndarray
    eq_matrix: np.ndarray
    rhs: np.ndarray
    constant_scale: float = 1.0
    total_mass: float = 1.0
    kind: str = "generic"
    structure: MomentStructure | None = None
    behavior: Behavior | None = None
    envelope: EnvelopeModel | None = None

    def __post_init__(self):
        obj = np.atleast_2d(np.asarray(self.objective, dtype=float))
        eq = np.atleast_2d(np.asarray(self.eq_matrix, dtype=float))
        ids = np.asarray(self.entry_ids)
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "eq_matrix", eq)
        object.__setattr__(self, "rhs", np.asarray(self.rhs, dtype=float).ravel())
        object.__setattr__(self, "entry_ids", ids)
        if ids.ndim != 2 or ids.shape[0] != ids.shape[1] or np.any(ids != ids.T):
            raise AssemblyError("entry_ids must be a symmetric square index matrix")
        if ids[0, 0] != 0:
            raise AssemblyError("entry (0, 0) must hold the normalization variable 0")
        if obj.shape[1] != self.n_vars or eq.shape[1] != self.n_vars:
            raise AssemblyError("objective / constraint widths do not match the layout")
        if eq.shape[0] != self.rhs.size:
            raise AssemblyError("constraint rows and right-hand side differ in length")

    @property
    def n_vars(self) -> int:
        return int(self.entry_ids.max()) + 1

    @property
    def n_blocks(self) -> int:
        return self.objective.shape[0]

    @property
    def block_size(self) -> int:
        return self.entry_ids.shape[0]

    def subproblem(self, blocks) -> "SdpProblem":
        """Same instance restricted to a subset of blocks (an upper bound on the optimum)."""
        blocks = np.asarray(blocks, dtype=int)
        envelope = None
        if self.envelope is not None:
            envelope = EnvelopeModel(self.envelope.order,
                                     tuple(self.envelope.pieces[j] for j in blocks))
        return SdpProblem(self.entry_ids, self.objective[blocks], self.eq_matrix, self.rhs,
                          self.constant_scale, self.total_mass, self.kind, self.structure,
                          self.behavior, envelope)

    def objective_value(self, moments: np.ndarray) -> float:
        """Unscaled objective at block moment vectors of shape (n_blocks, n_vars)."""
        return float(np.sum(self.objective * moments))

    def equality_triplets(self):
        """``(row, block, var, coefficient)`` for every nonzero in the equalities."""
        rows, cols = np.nonzero(self.eq_matrix)
        return [(int(r), j, int(c), float(self.eq_matrix[r, c]))
                for j in range(self.n_blocks) for r, c in zip(rows, cols)]


@dataclass(eq=False)
class SolveResult:
    """Solution of an :class:`SdpProblem`, scaled by ``constant_scale``.

    ``dual_value`` is the certified lower bound: the solver's dual objective
    minus ``dual_margin``, a safety term covering residual dual
    infeasibility.  ``block_moments`` are the primal moment vectors.
    """

    status: str
    primal_value: float
    dual_value: float
    raw_dual_value: float
    dual_margin: float
    block_moments: np.ndarray | None = None
    multipliers: np.ndarray | None = None
    constant_scale: float = 1.0
    iterations: int = 0
    solve_time: float = 0.0
    active_blocks: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.primal_value - self.dual_value

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near_optimal")

    @property
    def normalizations(self) -> np.ndarray:
        """Weights ``P~_j`` of the blocks."""
        return self.block_moments[:, 0]

    def block_behaviors(self, structure: MomentStructure) -> np.ndarray:
        """Subnormalized behaviors, shape (n_blocks, M_A, M_B, 2, 2)."""
        flat = self.block_moments @ structure.prob_map.T
        return flat.reshape((-1,) + structure.scenario.shape)


def _check_behavior(behavior: Behavior, structure: MomentStructure) -> None:
    if behavior.scenario != structure.scenario:
        raise AssemblyError(
            f"behavior scenario {behavior.scenario} does not match structure {structure.scenario}"
        )


def piece_objectives(envelope: EnvelopeModel, structure: MomentStructure,
                     x1_rows, x2_rows) -> np.ndarray:
    """Objective rows ``const * (z . p) + slope1 * x1 + slope2 * x2`` per piece.

    ``x1_rows``/``x2_rows`` list flat behavior indices summed into each coordinate.
    """
    pm = structure.prob_map
    z = pm[0:4].sum(axis=0)  # all outcomes of inputs (0, 0): the normalization
    x1 = pm[list(x1_rows)].sum(axis=0)
    x2 = pm[list(x2_rows)].sum(axis=0)
    coef = envelope.coefficients()
    return coef[:, :1] * z + coef[:, 1:2] * x1 + coef[:, 2:3] * x2


def assemble(behavior: Behavior, envelope: EnvelopeModel, structure: MomentStructure) -> SdpProblem:
    """Lower-bound SDP for ``F(rho_E|00, rho_E|11)`` given a symmetrized behavior."""
    _check_behavior(behavior, structure)
    p00, p11 = behavior.pr(0, 0), behavior.pr(1, 1)
    if abs(p00 - p11) > SYMMETRY_TOL:
        raise AssemblyError(f"behavior not symmetrized: Pr(00|00)={p00}, Pr(11|00)={p11}")
    if p00 <= 0:
        raise AssemblyError("Pr(00|00) must be positive")
    # flat indices of (x=0, y=0, a, b): 0 -> 00, 3 -> 11
    objective = piece_objectives(envelope, structure, [0], [3])
    return SdpProblem(structure.entry_ids, objective, structure.prob_map, behavior.flat(),
                      constant_scale=1.0 / p00, total_mass=1.0, kind="twoway",
                      structure=structure, behavior=behavior, envelope=envelope)


def assemble_oneway(behavior: Behavior, envelope: EnvelopeModel,
                    structure: MomentStructure) -> SdpProblem:
    """Lower-bound SDP for ``F(rho_E|0, rho_E|1)`` conditioned on Alice's key bit."""
    _check_behavior(behavior, structure)
    pa0 = behavior.pr(0, 0) + behavior.pr(0, 1)
    if abs(pa0 - 0.5) > SYMMETRY_TOL:
        raise AssemblyError(f"Alice's key bit not symmetrized: Pr(a=0|0)={pa0}")
    objective = piece_objectives(envelope, structure, [0, 1], [2, 3])
    return SdpProblem(structure.entry_ids, objective, structure.prob_map, behavior.flat(),
                      constant_scale=1.0 / pa0, total_mass=1.0, kind="oneway",
                      structure=structure, behavior=behavior, envelope=envelope)


def classical_fidelity(weights, pr_first, pr_second, pr00: float) -> float:
    """Fidelity of commuting conditional states: ``sum_j P_j sqrt(p_j q_j) / pr00``.

    ``weights`` are Eve's outcome probabilities ``P~_j`` and ``pr_first``,
    ``pr_second`` the conditional probabilities ``Pr(00|j)``, ``Pr(11|j)``.
    """
    if pr00 <= 0:
        raise ValueError("pr00 must be positive")
    w = np.asarray(weights, float)
    return float(np.sum(w * np.sqrt(np.asarray(pr_first, float) * np.asarray(pr_second, float))) / pr00)


def key_coordinates(problem: SdpProblem, moments: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subnormalized ``(x1, x2)`` of each block (the envelope's arguments times P~_j)."""
    flat = moments @ problem.eq_matrix.T
    if problem.kind == "oneway":
        return flat[:, 0] + flat[:, 1], flat[:, 2] + flat[:, 3]
    return flat[:, 0], flat[:, 3]


def feasible_value(result: SolveResult, problem: SdpProblem) -> float:
    """Exact fidelity objective at the relaxation's primal point.

    ``sum_j sqrt(p~_j(00) p~_j(11)) * constant_scale``: since
    ``P~_j sqrt(Pr(00|j) Pr(11|j)) = sqrt(p~_j(00) p~_j(11))`` for subnormalized blocks.
    """
    if not result.ok:
        raise ValueError(f"no primal point for status {result.status!r}")
    x1, x2 = key_coordinates(problem, result.block_moments)
    if min(x1.min(), x2.min()) < -NEGATIVE_TOL:
        raise ValueError(f"recovered probability {min(x1.min(), x2.min()):.3e} is negative")
    x1, x2 = np.clip(x1, 0, None), np.clip(x2, 0, None)
    return float(np.sum(np.sqrt(x1 * x2)) * problem.constant_scale)


def psd_part(matrix: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (matrix + matrix.T))
    return (v * np.clip(w, 0, None)) @ v.T


def block_lower_bound(problem: SdpProblem, reduced_cost: np.ndarray, dual_matrix: np.ndarray) -> float:
    """Certified lower bound of ``reduced_cost . y`` over normalized feasible blocks.

    With ``Z`` the PSD part of ``dual_matrix`` and residual
    ``r = reduced_cost - F^T(Z)``, any feasible block with ``y_0 = 1`` gives
    ``reduced_cost . y = <Z, Gamma> + r . y >= r_0 - |r_1:|_1``.
    """
    z = psd_part(np.asarray(dual_matrix, float))
    adj = np.bincount(problem.entry_ids.ravel(), weights=z.ravel(), minlength=problem.n_vars)
    r = reduced_cost - adj
    return float(r[0] - np.sum(np.abs(r[1:])))


def certified_value(problem: SdpProblem, multipliers: np.ndarray, block_bounds) -> float:
    """Unscaled lower bound ``lambda . rhs + total_mass * min_j v_j``.

    For any feasible point the objective equals ``lambda . rhs + sum_j (c_j -
    A^T lambda) . y_j``; each term is at least ``v_j`` times the block's
    normalization, and the normalizations sum to ``total_mass``.
    """
    return float(multipliers @ problem.rhs + problem.total_mass * np.min(block_bounds))


def reduced_costs(problem: SdpProblem, multipliers: np.ndarray) -> np.ndarray:
    return problem.objective - multipliers @ problem.eq_matrix


# --- SDPA sparse interchange -------------------------------------------------

def export_sdpa(problem: SdpProblem, path) -> None:
    """Write the problem in SDPA sparse format (``.dat-s``).

    Variables are the block moment vectors stacked block after block
    (``x[j * n_vars + k]``).  Blocks 1..n_blocks are the moment matrices;
    the final diagonal block of size ``2 m`` holds the equalities as the
    pair ``A y - rhs >= 0``, ``rhs - A y >= 0``.  SDPA minimizes
    ``c . x`` subject to ``sum_i F_i x_i - F_0 >= 0``.
    """
    nb, nv, n = problem.n_blocks, problem.n_vars, problem.block_size
    eq = problem.eq_matrix
    m = eq.shape[0]
    lines = [
        f'"fidbound {problem.kind} problem, constant_scale={problem.constant_scale!r}"',
        str(nb * nv),
        str(nb + 1),
        " ".join([str(n)] * nb + [str(-2 * m)]),
        " ".join(repr(float(v)) for v in problem.objective.ravel()),
    ]
    lp_block = nb + 1
    for i, val in enumerate(problem.rhs):
        if val != 0:
            lines.append(f"0 {lp_block} {i + 1} {i + 1} {float(val)!r}")
            lines.append(f"0 {lp_block} {m + i + 1} {m + i + 1} {-float(val)!r}")
    rr, cc = np.triu_indices(n)
    var_of = problem.entry_ids[rr, cc]
    order = np.argsort(var_of, kind="stable")
    eq_nz = [np.nonzero(eq[:, k])[0] for k in range(nv)]
    for j in range(nb):
        for t in order:
            k = var_of[t]
            lines.append(f"{j * nv + k + 1} {j + 1} {rr[t] + 1} {cc[t] + 1} 1.0")
        for k in range(nv):
            for i in eq_nz[k]:
                v = eq[i, k]
                lines.append(f"{j * nv + k + 1} {lp_block} {i + 1} {i + 1} {float(v)!r}")
                lines.append(f"{j * nv + k + 1} {lp_block} {m + i + 1} {m + i + 1} {-float(v)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class SdpaData:
    """Parsed SDPA problem: ``min c . x`` s.t. ``sum_i F_i x_i - F_0 >= 0``.

    ``entries[b]`` is an array of rows ``(matno, i, j, value)`` (0-based
    ``i <= j``) for block ``b``; negative ``block_struct`` entries are
    diagonal (LP) blocks.
    """

    c: np.ndarray
    block_struct: list
    entries: list


def read_sdpa(path) -> SdpaData:
    tokens = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line[0] in '"*':
                continue
            tokens.append(line.replace(",", " ").replace("{", " ").replace("}", " ")
                          .replace("(", " ").replace(")", " ").split())
    m = int(tokens[0][0])
    nblock = int(tokens[1][0])
    rest = [t for row in tokens[2:] for t in row]
    block_struct = [int(v) for v in rest[:nblock]]
    c = np.array([float(v) for v in rest[nblock:nblock + m]])
    vals = np.array(rest[nblock + m:], dtype=float).reshape(-1, 5)
    entries = []
    for b in range(nblock):
        sel = vals[vals[:, 1] == b + 1]
        i = sel[:, 2].astype(int) - 1
        jj = sel[:, 3].astype(int) - 1
        lo, hi = np.minimum(i, jj), np.maximum(i, jj)
        entries.append(np.column_stack([sel[:, 0], lo, hi, sel[:, 4]]))
    return SdpaData(c, block_struct, entries)


def behavior_dimension(scenario: Scenario) -> int:
    """Affine dimension of the no-signalling behavior space (for Caratheodory counts)."""
    ma, mb = scenario.inputs_alice, scenario.inputs_bob
    return ma + mb + ma * mb
