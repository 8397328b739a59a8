"""Piecewise-affine lower bounds on ``sqrt(x1 * x2)`` over the unit square.

The lattice of order ``m`` samples the function on the grid
``{0, 1/m, ..., 1}^2``; together with the same grid at height zero it spans a
polytope lying under the graph.  The facets of that polytope whose outward
normal points upward define affine pieces ``h_j``, and their pointwise
minimum is the upper surface of the polytope.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

COPLANAR_TOL = 1e-9
TOL_C = 1e-9


class HullError(RuntimeError):
    pass


@dataclass(frozen=True)
class FacetInequality:
    """Half-space ``a x1 + b x2 + c x3 <= d``, scaled so max(|a|,|b|,|c|) = 1."""

    a: float
    b: float
    c: float
    d: float

    def __call__(self, x1, x2):
        """Value of the affine piece ``(d - a x1 - b x2) / c``."""
        return (self.d - self.a * np.asarray(x1) - self.b * np.asarray(x2)) / self.c

    @property
    def constant(self) -> float:
        return self.d / self.c

    @property
    def slopes(self) -> tuple[float, float]:
        return (-self.a / self.c, -self.b / self.c)


@dataclass(frozen=True, eq=False)
class EnvelopeModel:
    order: int
    pieces: tuple

    def __len__(self):
        return len(self.pieces)

    def coefficients(self) -> np.ndarray:
        """Rows ``(constant, slope_1, slope_2)`` so that h_j(x) = row . (1, x1, x2)."""
        return np.array([(p.constant, *p.slopes) for p in self.pieces])

    def __call__(self, x1, x2):
        return eval_envelope(self, np.stack([np.asarray(x1, float), np.asarray(x2, float)], -1))

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "pieces": [{"a": p.a, "b": p.b, "c": p.c, "d": p.d} for p in self.pieces],
        }

    @classmethod
    def from_json(cls, data: dict) -> "EnvelopeModel":
        pieces = tuple(FacetInequality(**{k: float(p[k]) for k in "abcd"}) for p in data["pieces"])
        if any(p.c <= 0 for p in pieces):
            raise ValueError("every envelope piece needs c > 0")
        return cls(int(data["order"]), pieces)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "EnvelopeModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def _check_order(order: int) -> int:
    m = int(order)
    if m < 1 or m != order:
        raise ValueError(f"lattice order must be an integer >= 1, got {order!r}")
    return m


def lattice_points(order: int) -> np.ndarray:
    """The ``2 (m+1)^2`` points: the graph of sqrt(x1 x2) on the grid, then z = 0."""
    m = _check_order(order)
    grid = np.arange(m + 1) / m
    x1, x2 = np.meshgrid(grid, grid, indexing="ij")
    x1, x2 = x1.ravel(), x2.ravel()
    top = np.column_stack([x1, x2, np.sqrt(x1 * x2)])
    bottom = np.column_stack([x1, x2, np.zeros_like(x1)])
    return np.vstack([top, bottom])


def _merge_coplanar(eqs: np.ndarray) -> np.ndarray:
    """Collapse facet equations that agree within COPLANAR_TOL."""
    order = np.lexsort(eqs.T[::-1])
    eqs = eqs[order]
    keep = [eqs[0]]
    for row in eqs[1:]:
        if np.max(np.abs(row - keep[-1])) > COPLANAR_TOL:
            keep.append(row)
    # lexsort neighbours can miss near-duplicates split by rounding in an early column
    out = []
    for row in keep:
        if not any(np.max(np.abs(row - o)) <= COPLANAR_TOL for o in out):
            out.append(row)
    return np.array(out)


def build_envelope(order: int) -> EnvelopeModel:
    """Upper envelope pieces of the order-``m`` polytope."""
    pts = lattice_points(order)
    hull = ConvexHull(pts)
    # qhull: normal . p + offset <= 0
    eqs = np.column_stack([hull.equations[:, :3], -hull.equations[:, 3]])
    eqs = eqs / np.max(np.abs(eqs[:, :3]), axis=1, keepdims=True)
    eqs = _merge_coplanar(eqs)

    expected_dropped = [np.array(v, float) for v in
                        ((0, 0, -1, 0), (1, 0, 0, 1), (0, 1, 0, 1))]
    pieces = []
    dropped = []
    for a, b, c, d in eqs:
        if c > TOL_C:
            pieces.append(FacetInequality(float(a), float(b), float(c), float(d)))
        else:
            dropped.append(np.array([a, b, c, d]))
    for row in dropped:
        if not any(np.max(np.abs(row - e)) <= 1e-7 for e in expected_dropped):
            raise HullError(f"unexpected non-upward facet {row}")
    if len(dropped) != len(expected_dropped) or not pieces:
        raise HullError(f"degenerate hull: {len(dropped)} dropped facets, {len(pieces)} pieces")
    return EnvelopeModel(_check_order(order), tuple(pieces))


def eval_envelope(model: EnvelopeModel, x) -> np.ndarray | float:
    """``min_j h_j(x)`` for one point or an array of points (last axis = 2)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have two coordinates")
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise ValueError("points must lie in the unit square")
    coef = model.coefficients()
    vals = coef[:, 0] + x[..., :1] * coef[:, 1] + x[..., 1:] * coef[:, 2]
    out = vals.min(axis=-1)
    return float(out) if out.ndim == 0 else out


def envelope_lp_oracle(order: int, x) -> float:
    """``max{x3 : (x, x3) in P_m}`` by a linear program over the lattice points."""
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise ValueError("point must lie in the unit square")
    pts = lattice_points(order)
    n = len(pts)
    a_eq = np.vstack([pts[:, 0], pts[:, 1], np.ones(n)])
    b_eq = np.array([x[0], x[1], 1.0])
    res = linprog(-pts[:, 2], A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"envelope oracle LP failed: {res.message}")
    return float(-res.fun)
