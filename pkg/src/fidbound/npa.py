"""Symbolic moment matrices for the NPA hierarchy with binary outcomes.

Each input contributes one generator, the outcome-0 projector of that
measurement.  Alice's generators are letters ``0 .. M_A-1`` and Bob's are
``M_A .. M_A+M_B-1``.  A monomial is a tuple of letters in canonical form:
Alice's letters first (in their original order), then Bob's, with
repeated adjacent letters collapsed (projectors are idempotent).

Moment matrices are real symmetric, so a word and its adjoint share one
moment variable.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .correlations import Scenario

Word = tuple


def _collapse(letters) -> tuple:
    return tuple(k for k, _ in itertools.groupby(letters))


def canonical(word, n_alice: int) -> Word:
    """Sort parties apart (they commute) and apply idempotence."""
    alice = _collapse(l for l in word if l < n_alice)
    bob = _collapse(l for l in word if l >= n_alice)
    return alice + bob


def adjoint(word: Word, n_alice: int) -> Word:
    alice = tuple(l for l in word if l < n_alice)
    bob = tuple(l for l in word if l >= n_alice)
    return alice[::-1] + bob[::-1]


def moment_key(word, n_alice: int) -> Word:
    """Representative of ``{w, w^dagger}`` used to label a real moment."""
    w = canonical(word, n_alice)
    w_dag = adjoint(w, n_alice)
    return min(w, w_dag, key=lambda v: (len(v), v))


def _party_words(letters: range, max_len: int) -> list[list[tuple]]:
    """Words over ``letters`` without equal neighbours, grouped by length."""
    by_len = [[()]]
    for length in range(1, max_len + 1):
        prev = by_len[-1]
        by_len.append([w + (l,) for w in prev for l in letters if not w or w[-1] != l])
    return by_len


def generate_monomials(scenario: Scenario, level: int) -> list[Word]:
    """All canonical words of length at most ``level``, identity first."""
    if level < 1:
        raise ValueError("hierarchy level must be >= 1")
    ma, mb = scenario.inputs_alice, scenario.inputs_bob
    alice = _party_words(range(ma), level)
    bob = _party_words(range(ma, ma + mb), level)
    words = []
    for total in range(level + 1):
        for la in range(total, -1, -1):
            lb = total - la
            for wa in alice[la]:
                for wb in bob[lb]:
                    words.append(wa + wb)
    return words


def word_label(word: Word, n_alice: int) -> str:
    if not word:
        return "1"
    return "".join(f"A{l}" if l < n_alice else f"B{l - n_alice}" for l in word)


@dataclass(frozen=True, eq=False)
class MomentStructure:
    """Layout of one moment matrix.

    ``entry_ids[r, c]`` is the moment index of ``monomials[r]^dagger
    monomials[c]``; index 0 is the identity moment (the normalization).
    ``prob_map`` maps a moment vector to the flat behavior in ``(x, y, a, b)``
    order.
    """

    scenario: Scenario
    level: int | None
    monomials: tuple
    moments: tuple
    entry_ids: np.ndarray
    prob_map: np.ndarray
    _index: dict = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return len(self.monomials)

    @property
    def n_moments(self) -> int:
        return len(self.moments)

    def moment_index(self, word) -> int:
        return self._index[moment_key(tuple(word), self.scenario.inputs_alice)]

    def alice(self, x: int) -> int:
        return self.moment_index((x,))

    def bob(self, y: int) -> int:
        return self.moment_index((self.scenario.inputs_alice + y,))

    def joint(self, x: int, y: int) -> int:
        return self.moment_index((x, self.scenario.inputs_alice + y))

    def moment_matrix(self, moments: np.ndarray) -> np.ndarray:
        return np.asarray(moments)[self.entry_ids]

    def svec_basis(self):
        """Sparse columns mapping moments to upper-triangle entries.

        Returns ``(rows, cols, vals, n_entries)`` where row ``t`` enumerates
        the upper triangle column by column and off-diagonal entries carry
        a factor ``sqrt(2)``, so inner products match the trace inner product.
        """
        n = self.size
        rows, cols, vals = [], [], []
        t = 0
        for c in range(n):
            for r in range(c + 1):
                rows.append(t)
                cols.append(self.entry_ids[r, c])
                vals.append(1.0 if r == c else np.sqrt(2.0))
                t += 1
        return np.array(rows), np.array(cols), np.array(vals), t

    def adjoint_map(self, matrix: np.ndarray) -> np.ndarray:
        """``<F_k, Z>`` for every moment ``k``: sum of Z over entries with id k."""
        return np.bincount(self.entry_ids.ravel(), weights=np.asarray(matrix).ravel(),
                           minlength=self.n_moments)

    def moments_from_gram(self, alice_ops, bob_ops, state) -> np.ndarray:
        """Moment vector of an explicit strategy (real part of expectations).

        ``alice_ops``/``bob_ops`` act on the full joint space.
        """
        ma = self.scenario.inputs_alice
        ops = list(alice_ops) + list(bob_ops)
        dim = state.shape[0]
        out = np.empty(self.n_moments)
        for k, word in enumerate(self.moments):
            op = np.eye(dim, dtype=complex)
            for l in word:
                op = op @ ops[l]
            out[k] = np.real(np.trace(op @ state))
        return out

    def to_json(self) -> dict:
        ma = self.scenario.inputs_alice
        n = self.size
        triplets = [[r, c, int(self.entry_ids[r, c])] for r in range(n) for c in range(r, n)]
        return {
            "scenario": {"ma": ma, "mb": self.scenario.inputs_bob},
            "level": self.level,
            "monomials": [word_label(w, ma) for w in self.monomials],
            "moments": [word_label(w, ma) for w in self.moments],
            "entry_map": triplets,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def build_structure(scenario: Scenario, level: int = 1, monomials=None) -> MomentStructure:
    """Moment-matrix layout for a level (or an explicit monomial list).

    A custom list must contain the identity, every single generator and be
    closed under taking suffixes; the latter keeps every diagonal entry
    bounded by the normalization, which the certified bounds rely on.
    """
    ma, mb = scenario.inputs_alice, scenario.inputs_bob
    if monomials is None:
        monomials = generate_monomials(scenario, level)
    else:
        level = None
        monomials = [canonical(tuple(w), ma) for w in monomials]
        monomials = list(dict.fromkeys(monomials))
        present = set(monomials)
        if () not in present or monomials[0] != ():
            raise ValueError("monomial list must start with the identity")
        for l in range(ma + mb):
            if (l,) not in present:
                raise ValueError("monomial list must contain every generator")
        for w in monomials:
            if w[1:] not in present:
                raise ValueError(f"monomial list not suffix-closed at {word_label(w, ma)}")

    n = len(monomials)
    index: dict = {(): 0}
    moments = [()]
    entry_ids = np.empty((n, n), dtype=np.int64)
    for r, u in enumerate(monomials):
        u_dag = adjoint(u, ma)
        for c in range(r, n):
            key = moment_key(u_dag + monomials[c], ma)
            k = index.get(key)
            if k is None:
                k = index[key] = len(moments)
                moments.append(key)
            entry_ids[r, c] = entry_ids[c, r] = k

    for x in range(ma):
        for y in range(mb):
            if moment_key((x, ma + y), ma) not in index:
                raise ValueError("monomials do not generate all joint moments")

    prob_map = np.zeros((ma * mb * 4, len(moments)))
    for x in range(ma):
        ia = index[(x,)]
        for y in range(mb):
            ib = index[(ma + y,)]
            iab = index[(x, ma + y)]
            base = (x * mb + y) * 4
            prob_map[base + 0, iab] = 1.0                   # Pr(00|xy)
            prob_map[base + 1, [ia, iab]] = (1.0, -1.0)     # Pr(01|xy)
            prob_map[base + 2, [ib, iab]] = (1.0, -1.0)     # Pr(10|xy)
            prob_map[base + 3, [0, ia, ib, iab]] = (1.0, -1.0, -1.0, 1.0)
    prob_map.setflags(write=False)
    entry_ids.setflags(write=False)
    return MomentStructure(scenario, level, tuple(monomials), tuple(moments),
                           entry_ids, prob_map, index)


def chsh_moment_vector(structure: MomentStructure, terms=None) -> np.ndarray:
    """Coefficients ``w`` with ``w . moments = sum sign * E(x, y)``.

    Uses ``E(x, y) = 1 - 2<A_x> - 2<B_y> + 4<A_x B_y>``.
    """
    if terms is None:
        terms = ((0, 0, 1), (0, 1, 1), (1, 0, 1), (1, 1, -1))
    w = np.zeros(structure.n_moments)
    for x, y, sign in terms:
        w[0] += sign
        w[structure.alice(x)] -= 2 * sign
        w[structure.bob(y)] -= 2 * sign
        w[structure.joint(x, y)] += 4 * sign
    return w


def tsirelson_check(level: int = 1, settings=None) -> float:
    """Certified upper bound on CHSH over the level-``level`` relaxation (2x2 scenario)."""
    from .solver import SolverError, SolverSettings, minimize_moment_functional

    settings = settings or SolverSettings(abs_tol=1e-10, rel_tol=1e-10)
    structure = build_structure(Scenario(2, 2), level)
    result = minimize_moment_functional(structure, -chsh_moment_vector(structure), settings)
    if result.status not in ("optimal", "near_optimal"):
        raise SolverError(f"CHSH relaxation failed with status {result.status}")
    return -result.dual_value
