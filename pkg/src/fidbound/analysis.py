"""Security conditions, fidelity curves and noise thresholds.

The sufficient condition compares a certified fidelity lower bound with the
QBER: a key can be distilled from the repetition code when
``F^2 > eps / (1 - eps)``.  Thresholds are found by bisection in the
depolarizing noise ``q``, with ``eps`` always read off the constructed noisy
behavior rather than a closed form.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .correlations import Behavior, QuantumStrategy, behavior_from_strategy, noisy_behavior, qber, \
    scenario_target
from .envelope import build_envelope
from .npa import build_structure
from .sdpbuild import assemble, assemble_oneway, feasible_value
from .solver import SolverError, SolverSettings, solve

# noise thresholds of the trace-distance condition for the 2-input scenario
# (prior work, stored as fixtures; the trace-distance SDP is not implemented)
REFERENCE_TRACE_THRESHOLDS = {"canonical": 0.077, "optimized": 0.091}

DEFAULT_ORDERS = {"a": (4, 2), "b": (8, 3), "c": (8, 3), "c-opt": (8, 3)}


class ConditionError(ValueError):
    pass


class NoThresholdError(RuntimeError):
    """The security predicate does not change sign on the searched range."""


def _check_eps(eps: float, closed_low: bool = True) -> float:
    eps = float(eps)
    low_ok = eps >= 0 if closed_low else eps > 0
    if not (low_ok and eps < 0.5):
        interval = "[0, 1/2)" if closed_low else "(0, 1/2)"
        raise ConditionError(f"eps must lie in {interval}, got {eps}")
    return eps


def _check_unit(value: float, name: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ConditionError(f"{name} must lie in [0, 1], got {value}")
    return value


def h2(p) -> float | np.ndarray:
    """Binary entropy in bits, with ``h2(0) = h2(1) = 0``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    out = np.where((p <= 0) | (p >= 1), 0.0, out)
    return float(out) if out.ndim == 0 else out


def epsilon_ratio(eps: float) -> float:
    return eps / (1.0 - eps)


# --- overlap measures -----------------------------------------------------------

@dataclass(frozen=True)
class OverlapMeasure:
    """A value of a symmetric, multiplicative overlap between Eve's states."""

    kind: str
    value: float

    KINDS = ("fidelity", "pretty_good_fidelity", "custom_scalar")

    def __post_init__(self):
        kind = {"pg": "pretty_good_fidelity"}.get(self.kind, self.kind)
        if kind not in self.KINDS:
            raise ConditionError(f"unknown overlap kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "value", _check_unit(self.value, "overlap"))


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Root fidelity ``|| sqrt(rho) sqrt(sigma) ||_1``."""
    s = _psd_sqrt(rho) @ _psd_sqrt(sigma)
    return float(np.sum(np.linalg.svd(s, compute_uv=False)))


def pretty_good_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    return float(np.real(np.trace(_psd_sqrt(rho) @ _psd_sqrt(sigma))))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho - sigma))))


def overlap_axioms(measure, rho, sigma, rho2, sigma2, tol: float = 1e-10) -> dict:
    """Check symmetry, multiplicativity and both Fuchs-van de Graaf-type bounds.

    ``measure(rho, sigma)`` is any callable returning a scalar overlap.
    """
    o = measure(rho, sigma)
    d = trace_distance(rho, sigma)
    tensor = measure(np.kron(rho, rho2), np.kron(sigma, sigma2))
    return {
        "symmetric": abs(o - measure(sigma, rho)) <= tol,
        "multiplicative": abs(tensor - o * measure(rho2, sigma2)) <= tol,
        "lower": o + d >= 1 - tol,
        "upper": o * o + d * d <= 1 + tol,
    }


# --- conditions -----------------------------------------------------------------

class ConditionResult(NamedTuple):
    holds: bool
    margin: float            # F^2 - eps / (1 - eps)
    fidelity_margin: float   # F - sqrt(eps / (1 - eps))


def sufficient_condition(f_lb: float, eps: float) -> ConditionResult:
    """Repetition-code distillation condition ``F^2 > eps / (1 - eps)``.

    With ``f_lb`` a certified lower bound on the minimal fidelity a true
    result certifies security; a false one is inconclusive.
    """
    f_lb = _check_unit(f_lb, "fidelity bound")
    eps = _check_eps(eps)
    ratio = epsilon_ratio(eps)
    margin = f_lb * f_lb - ratio
    return ConditionResult(margin > 0, margin, f_lb - math.sqrt(ratio))


def trace_condition(d_val: float, eps: float) -> bool:
    """``1 - d > eps / (1 - eps)`` for a user-supplied trace distance ``d``."""
    d_val = _check_unit(d_val, "trace distance")
    return 1.0 - d_val > epsilon_ratio(_check_eps(eps))


def delta_n(eps: float, n: int) -> float:
    """Bob's error ``eps^n / (eps^n + (1 - eps)^n)`` on accepted blocks."""
    eps = float(eps)
    if not 0.0 <= eps <= 1.0 or n < 1:
        raise ConditionError("need eps in [0, 1] and n >= 1")
    if eps in (0.0, 1.0):
        return eps
    return float(expit(n * (math.log(eps) - math.log1p(-eps))))


@dataclass(frozen=True)
class NecessaryResult:
    eve_error_bound: float
    bob_error: float
    condition_holds: bool
    eve_entropy_bound: float
    bob_entropy: float

    @property
    def entropy_gap(self) -> float:
        """Upper bound on the key rate per accepted block."""
        return self.eve_entropy_bound - self.bob_entropy


def necessary_condition(overlap: OverlapMeasure, eps: float, n: int) -> NecessaryResult:
    """Eve's decoding error against Bob's when ``Q <= eps / (1 - eps)``.

    ``condition_holds`` is the closed form ``Q <= eps / (1 - eps)``; it is
    checked against the block-level comparison ``eve_error_bound <=
    bob_error`` and the two must agree (up to rounding at equality).
    """
    eps = _check_eps(eps, closed_low=False)
    if n < 1:
        raise ConditionError("n must be >= 1")
    q = overlap.value
    dn = delta_n(eps, n)
    q_n = q ** n
    # expanded form of (1 - (1 - dn)(1 - q_n)) / 2; no cancellation at large n
    eve = 0.5 * (dn + q_n * (1.0 - dn))
    holds = q <= epsilon_ratio(eps)
    slack = 1e-12 * max(eve, dn)
    if holds != (eve <= dn) and abs(eve - dn) > slack:
        raise AssertionError(f"block and closed-form conditions disagree at Q={q}, eps={eps}, n={n}")
    return NecessaryResult(eve, dn, holds, h2(eve), h2(dn))


def compare_overlaps(fid: float, pretty_good: float, eps: float, n: int = 1) -> dict:
    """Necessary-condition results for a fidelity and its pretty-good counterpart.

    Requires ``F >= F_pg >= F^2``.  Since ``F_pg`` is the smaller value, it
    satisfies ``Q <= eps / (1 - eps)`` whenever ``F`` does and so gives the
    sharper upper bound on noise tolerance.
    """
    if not fid + 1e-12 >= pretty_good >= fid * fid - 1e-12:
        raise ConditionError("pretty-good fidelity must lie between F^2 and F")
    return {
        "fidelity": necessary_condition(OverlapMeasure("fidelity", fid), eps, n),
        "pretty_good_fidelity": necessary_condition(
            OverlapMeasure("pretty_good_fidelity", pretty_good), eps, n),
    }


def oneway_entropy_bound(fid: float) -> float:
    """``1 - h2((1 - F) / 2)``, a lower bound on Eve's uncertainty of Alice's bit."""
    fid = _check_unit(fid, "fidelity")
    return 1.0 - h2((1.0 - fid) / 2.0)


def keyrate_gap(eps: float, h_eve_lb: float, n: int = 1) -> float:
    """``H_eve_lb - h2(delta_n)`` for the repetition code of length ``n``."""
    _check_eps(eps)
    _check_unit(h_eve_lb, "entropy bound")
    return h_eve_lb - h2(delta_n(eps, n))


# --- curves and thresholds --------------------------------------------------------

def resolve_target(spec) -> Behavior:
    """Noise-free behavior from a scenario name, ``custom:<file>``, strategy or behavior."""
    if isinstance(spec, Behavior):
        return spec
    if isinstance(spec, QuantumStrategy):
        return behavior_from_strategy(spec)
    spec = str(spec)
    if spec.startswith("custom:"):
        return behavior_from_strategy(QuantumStrategy.load(spec[len("custom:"):]))
    return scenario_target(spec)


@dataclass
class CurvePoint:
    q: float
    eps: float
    fid_lb: float
    fid_feasible: float
    sqrt_eps_ratio: float
    condition: bool
    solve_status: str
    wall_ms: float
    margin: float = float("nan")

    CSV_FIELDS = ("q", "eps", "fid_lb", "fid_feasible", "sqrt_eps_ratio",
                  "condition", "solve_status", "wall_ms")


class _Evaluator:
    """Caches the envelope and moment structure across noise levels."""

    def __init__(self, spec, order: int, level: int, settings=None, oneway: bool = False):
        self.target = resolve_target(spec)
        self.envelope = build_envelope(order)
        self.structure = build_structure(self.target.scenario, level)
        self.settings = settings or SolverSettings()
        self.oneway = oneway
        self.warm = None

    def __call__(self, q: float) -> CurvePoint:
        t0 = time.perf_counter()
        behavior = noisy_behavior(self.target, q)
        eps = qber(behavior)
        ratio = math.sqrt(epsilon_ratio(eps)) if eps < 0.5 else 1.0
        build = assemble_oneway if self.oneway else assemble
        try:
            problem = build(behavior, self.envelope, self.structure)
            result = solve(problem, self.settings, self.warm)
        except SolverError as exc:
            return CurvePoint(q, eps, float("nan"), float("nan"), ratio, False,
                              f"error: {exc}", 1e3 * (time.perf_counter() - t0))
        if not result.ok:
            return CurvePoint(q, eps, float("nan"), float("nan"), ratio, False,
                              result.status, 1e3 * (time.perf_counter() - t0))
        self.warm = result.active_blocks
        # a slightly negative bound is still a bound; clip to the fidelity's range
        f_lb = min(max(result.dual_value, 0.0), 1.0)
        try:
            f_feas = feasible_value(result, problem)
        except ValueError:
            f_feas = float("nan")
        if eps < 0.5:
            cond = sufficient_condition(f_lb, eps)
            holds, margin = cond.holds, cond.fidelity_margin
        else:
            holds, margin = False, f_lb - 1.0
        return CurvePoint(q, eps, f_lb, f_feas, ratio, holds, result.status,
                          1e3 * (time.perf_counter() - t0), margin)


def fidelity_curve(spec, q_grid, order: int, level: int, settings=None,
                   oneway: bool = False) -> list[CurvePoint]:
    """Certified fidelity bound against depolarizing noise, one record per ``q``.

    Solver failures are recorded in ``solve_status`` and do not stop the sweep.
    """
    qs = [float(q) for q in q_grid]
    if any(not 0.0 <= q <= 0.5 for q in qs):
        raise ConditionError("noise values must lie in [0, 1/2]")
    evaluate = _Evaluator(spec, order, level, settings, oneway)
    return [evaluate(q) for q in qs]


def write_curve_csv(points, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CurvePoint.CSV_FIELDS)
        for p in points:
            writer.writerow([f"{p.q:.6g}", f"{p.eps:.10g}", f"{p.fid_lb:.10g}",
                             f"{p.fid_feasible:.10g}", f"{p.sqrt_eps_ratio:.10g}",
                             int(p.condition), p.solve_status, f"{p.wall_ms:.1f}"])


@dataclass
class ThresholdResult:
    q_star: float
    bracket: tuple
    points: list = field(default_factory=list)
    order: int = 0
    level: int = 0

    def __post_init__(self):
        lo, hi = self.bracket
        if not lo < self.q_star <= hi:
            raise ValueError("q_star must lie in (q_lo, q_hi]")

    def to_json(self) -> dict:
        return {
            "q_star": self.q_star,
            "bracket": list(self.bracket),
            "lattice": self.order,
            "level": self.level,
            "points": [asdict(p) for p in self.points],
        }


def threshold_search(spec, order: int | None = None, level: int | None = None,
                     resolution: float = 1e-3, q_range=(0.0, 0.25), settings=None,
                     bracket=None, log=None) -> ThresholdResult:
    """Largest noise for which the certified bound still passes, by bisection.

    ``bracket`` optionally narrows the starting interval; its endpoints are
    verified (condition true at the low end, false at the high end) before
    bisecting, and the search falls back to ``q_range`` if they are not.
    ``q_star`` interpolates the fidelity margin inside the final bracket.
    """
    if resolution < 1e-4:
        raise ConditionError("resolution must be at least 1e-4")
    if order is None or level is None:
        default = DEFAULT_ORDERS.get(str(spec), (8, 3))
        order = default[0] if order is None else order
        level = default[1] if level is None else level
    evaluate = _Evaluator(spec, order, level, settings)
    points = []

    def run(q):
        p = evaluate(q)
        points.append(p)
        if log is not None:
            log(p)
        if p.solve_status not in ("optimal", "near_optimal"):
            raise SolverError(f"solve failed at q={q}: {p.solve_status}")
        return p

    lo_pt = hi_pt = None
    if bracket is not None:
        a, b = run(bracket[0]), run(bracket[1])
        if a.condition and not b.condition:
            lo_pt, hi_pt = a, b
    if lo_pt is None:
        a, b = run(q_range[0]), run(q_range[1])
        if not (a.condition and not b.condition):
            raise NoThresholdError(f"no threshold found in range [{q_range[0]}, {q_range[1]}]")
        lo_pt, hi_pt = a, b

    while hi_pt.q - lo_pt.q > resolution:
        mid = run(0.5 * (lo_pt.q + hi_pt.q))
        if mid.condition:
            lo_pt = mid
        else:
            hi_pt = mid

    m_lo, m_hi = lo_pt.margin, hi_pt.margin
    if m_lo > 0 >= m_hi and m_lo - m_hi > 0:
        q_star = lo_pt.q + (hi_pt.q - lo_pt.q) * m_lo / (m_lo - m_hi)
    else:
        q_star = 0.5 * (lo_pt.q + hi_pt.q)
    q_star = min(max(q_star, np.nextafter(lo_pt.q, 1.0)), hi_pt.q)
    points.sort(key=lambda p: p.q)
    return ThresholdResult(float(q_star), (lo_pt.q, hi_pt.q), points, order, level)


def save_json(obj, path) -> None:
    import json

    Path(path).write_text(json.dumps(obj, indent=2, default=float))
