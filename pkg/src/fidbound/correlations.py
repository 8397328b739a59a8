"""Bell scenarios, behaviors and the quantum strategies that generate them.

A behavior is stored as an array of shape ``(M_A, M_B, 2, 2)`` indexed
``[x, y, a, b]``; flattening it in C order gives the lexicographic
``(x, y, a, b)`` order used by every file format in this package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

NORM_TOL = 1e-12
HERM_TOL = 1e-10

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


class BehaviorError(ValueError):
    """Raised for malformed behaviors, strategies or noise parameters."""


@dataclass(frozen=True)
class Scenario:
    inputs_alice: int
    inputs_bob: int

    def __post_init__(self):
        if int(self.inputs_alice) < 1 or int(self.inputs_bob) < 1:
            raise BehaviorError("a scenario needs at least one input per party")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.inputs_alice, self.inputs_bob, 2, 2)


@dataclass(frozen=True, eq=False)
class Behavior:
    """Conditional distribution ``Pr(ab|xy)`` of a two-outcome Bell experiment."""

    scenario: Scenario
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float).reshape(self.scenario.shape)
        if np.any(table < -NORM_TOL) or np.any(table > 1 + NORM_TOL):
            raise BehaviorError("probabilities must lie in [0, 1]")
        sums = table.sum(axis=(2, 3))
        if np.max(np.abs(sums - 1.0)) > NORM_TOL:
            raise BehaviorError(
                f"rows not normalized (max deviation {np.max(np.abs(sums - 1.0)):.3e})"
            )
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def __getitem__(self, key):
        return self.table[key]

    def flat(self) -> np.ndarray:
        """Table in lexicographic ``(x, y, a, b)`` order."""
        return self.table.ravel().copy()

    def pr(self, a: int, b: int, x: int = 0, y: int = 0) -> float:
        return float(self.table[x, y, a, b])

    def to_json(self) -> dict:
        return {
            "scenario": {"ma": self.scenario.inputs_alice, "mb": self.scenario.inputs_bob},
            "table": self.flat().tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Behavior":
        scen = Scenario(int(data["scenario"]["ma"]), int(data["scenario"]["mb"]))
        flat = np.asarray(data["table"], dtype=float)
        if flat.size != 4 * scen.inputs_alice * scen.inputs_bob:
            raise BehaviorError("table length does not match the scenario")
        return cls(scen, flat.reshape(scen.shape))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path) -> "Behavior":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class NoiseModel:
    q: float
    kind: str = "depolarizing"

    def __post_init__(self):
        if self.kind != "depolarizing":
            raise BehaviorError(f"unsupported noise model {self.kind!r}")
        if not 0.0 <= self.q <= 0.5:
            raise BehaviorError(f"noise parameter q={self.q} outside [0, 1/2]")


def angle_projector(theta: float) -> np.ndarray:
    """Outcome-0 projector of the observable ``cos(theta) Z + sin(theta) X``."""
    obs = np.cos(theta) * PAULI_Z + np.sin(theta) * PAULI_X
    return 0.5 * (np.eye(2) + obs)


def _check_projector(p: np.ndarray, what: str) -> None:
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise BehaviorError(f"{what} is not a square matrix")
    if np.max(np.abs(p - p.conj().T)) > HERM_TOL:
        raise BehaviorError(f"{what} is not Hermitian")
    if np.max(np.abs(p @ p - p)) > HERM_TOL:
        raise BehaviorError(f"{what} is not idempotent (only projective measurements allowed)")


@dataclass(frozen=True, eq=False)
class QuantumStrategy:
    """Bipartite state plus binary projective measurements.

    ``alice[x]`` and ``bob[y]`` are the outcome-0 projectors; the outcome-1
    projector is always the complement.
    """

    state: np.ndarray
    alice: tuple
    bob: tuple
    dims: tuple[int, int] = field(default=None)

    def __post_init__(self):
        alice = tuple(np.asarray(p, dtype=complex) for p in self.alice)
        bob = tuple(np.asarray(p, dtype=complex) for p in self.bob)
        if not alice or not bob:
            raise BehaviorError("each party needs at least one measurement")
        for i, p in enumerate(alice):
            _check_projector(p, f"Alice projector {i}")
        for i, p in enumerate(bob):
            _check_projector(p, f"Bob projector {i}")
        da, db = alice[0].shape[0], bob[0].shape[0]
        if any(p.shape != (da, da) for p in alice) or any(p.shape != (db, db) for p in bob):
            raise BehaviorError("measurement dimensions differ within a party")
        rho = np.asarray(self.state, dtype=complex)
        if rho.ndim == 1:
            rho = np.outer(rho, rho.conj())
        if rho.shape != (da * db, da * db):
            raise BehaviorError(
                f"state has shape {rho.shape}, measurements need {(da * db, da * db)}"
            )
        if np.max(np.abs(rho - rho.conj().T)) > HERM_TOL:
            raise BehaviorError("state is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > NORM_TOL:
            raise BehaviorError("state does not have unit trace")
        if np.linalg.eigvalsh(rho).min() < -1e-10:
            raise BehaviorError("state is not positive semidefinite")
        object.__setattr__(self, "state", rho)
        object.__setattr__(self, "alice", alice)
        object.__setattr__(self, "bob", bob)
        object.__setattr__(self, "dims", (da, db))

    @property
    def scenario(self) -> Scenario:
        return Scenario(len(self.alice), len(self.bob))

    @classmethod
    def from_angles(cls, alice_angles, bob_angles, state=None) -> "QuantumStrategy":
        """Qubit strategy with measurements in the x-z plane (default state phi+)."""
        if state is None:
            state = PHI_PLUS
        return cls(
            state,
            tuple(angle_projector(t) for t in alice_angles),
            tuple(angle_projector(t) for t in bob_angles),
        )

    @classmethod
    def from_json(cls, data: dict) -> "QuantumStrategy":
        state = data.get("state", "phi_plus")
        if isinstance(state, str):
            state = NAMED_STATES[state]
        else:
            state = _complex_array(state)

        def party(spec):
            if "angles" in spec:
                return tuple(angle_projector(float(t)) for t in spec["angles"])
            return tuple(_complex_array(p) for p in spec["projectors"])

        return cls(state, party(data["alice"]), party(data["bob"]))

    @classmethod
    def load(cls, path) -> "QuantumStrategy":
        return cls.from_json(json.loads(Path(path).read_text()))


def _complex_array(obj) -> np.ndarray:
    if isinstance(obj, dict):
        re = np.asarray(obj["real"], dtype=float)
        im = np.asarray(obj.get("imag", np.zeros_like(re)), dtype=float)
        return re + 1j * im
    return np.asarray(obj, dtype=complex)


PHI_PLUS = np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2.0)
PSI_MINUS = np.array([0.0, 1.0, -1.0, 0.0]) / np.sqrt(2.0)
NAMED_STATES = {"phi_plus": PHI_PLUS, "psi_minus": PSI_MINUS}

# (alice angles, bob angles, state) for the built-in target distributions.
SCENARIO_ANGLES = {
    "a": ((0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4),
          (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4), PHI_PLUS),
    "b": ((0.0, np.pi / 2), (0.0, np.pi / 4, 3 * np.pi / 4), PHI_PLUS),
    "c": ((0.0, np.pi / 2), (np.pi / 4, 3 * np.pi / 4), PHI_PLUS),
    # Angles quoted to three digits; the singlet makes A0/B0 correlated.
    "c-opt": ((0.0, 4.50), (3.61, 5.39), PSI_MINUS),
}

# CHSH terms (x, y, sign) reaching 2*sqrt(2) on each noiseless target.
CHSH_TERMS = {
    "a": ((0, 1, 1), (0, 3, -1), (2, 1, 1), (2, 3, 1)),
    "b": ((0, 1, 1), (0, 2, -1), (1, 1, 1), (1, 2, 1)),
    "c": ((0, 0, 1), (0, 1, -1), (1, 0, 1), (1, 1, 1)),
    "c-opt": ((0, 0, 1), (0, 1, -1), (1, 0, -1), (1, 1, -1)),
}


def scenario_strategy(name: str, alice_angles=None, bob_angles=None) -> QuantumStrategy:
    """Target strategy of a built-in scenario, angles optionally overridden."""
    try:
        a_ang, b_ang, state = SCENARIO_ANGLES[name]
    except KeyError:
        raise BehaviorError(f"unknown scenario {name!r}; choose from {sorted(SCENARIO_ANGLES)}")
    return QuantumStrategy.from_angles(
        a_ang if alice_angles is None else alice_angles,
        b_ang if bob_angles is None else bob_angles,
        state,
    )


def scenario_target(name: str, **overrides) -> Behavior:
    strategy = scenario_strategy(name, **overrides)
    return behavior_from_strategy(strategy, strategy.scenario)


def behavior_from_strategy(strategy: QuantumStrategy, scenario: Scenario | None = None) -> Behavior:
    """``Pr(ab|xy) = Tr[(Pi_a^x (x) Pi_b^y) rho]``."""
    if scenario is None:
        scenario = strategy.scenario
    if scenario != strategy.scenario:
        raise BehaviorError(
            f"strategy has {strategy.scenario} inputs but {scenario} was requested"
        )
    da, db = strategy.dims
    eye_a, eye_b = np.eye(da), np.eye(db)
    table = np.empty(scenario.shape)
    for x, pa in enumerate(strategy.alice):
        alice_ops = (pa, eye_a - pa)
        for y, pb in enumerate(strategy.bob):
            bob_ops = (pb, eye_b - pb)
            for a in range(2):
                for b in range(2):
                    op = np.kron(alice_ops[a], bob_ops[b])
                    table[x, y, a, b] = np.real(np.trace(op @ strategy.state))
    # clip float dust below zero before validation
    table = np.clip(table, 0.0, 1.0)
    table /= table.sum(axis=(2, 3), keepdims=True)
    return Behavior(scenario, table)


def apply_noise(behavior: Behavior, noise: NoiseModel | float) -> Behavior:
    """Depolarize: ``(1 - 2q) Pr + q/2`` entrywise."""
    if not isinstance(noise, NoiseModel):
        noise = NoiseModel(float(noise))
    q = noise.q
    return Behavior(behavior.scenario, (1.0 - 2.0 * q) * behavior.table + q / 2.0)


def symmetrize(behavior: Behavior) -> Behavior:
    """Average each entry with its jointly flipped outcome ``(1-a, 1-b)``."""
    flipped = behavior.table[:, :, ::-1, ::-1]
    return Behavior(behavior.scenario, 0.5 * (behavior.table + flipped))


def is_symmetrized(behavior: Behavior, tol: float = 1e-9) -> bool:
    t = behavior.table
    return bool(np.max(np.abs(t - t[:, :, ::-1, ::-1])) <= tol)


def qber(behavior: Behavior) -> float:
    """Probability that the key-generating outcomes (inputs 0, 0) differ."""
    t = behavior.table
    return float(t[0, 0, 0, 1] + t[0, 0, 1, 0])


def correlator(behavior: Behavior, x: int, y: int) -> float:
    t = behavior.table[x, y]
    return float(t[0, 0] + t[1, 1] - t[0, 1] - t[1, 0])


def chsh(behavior: Behavior, input_pairs: Sequence[tuple[int, int, int]] | None = None) -> float:
    """Signed sum of correlators ``sum(sign * E(x, y))``.

    The default pairing is ``E00 + E01 + E10 - E11``.
    """
    if input_pairs is None:
        input_pairs = ((0, 0, 1), (0, 1, 1), (1, 0, 1), (1, 1, -1))
    ma, mb = behavior.scenario.inputs_alice, behavior.scenario.inputs_bob
    total = 0.0
    for x, y, sign in input_pairs:
        if not (0 <= x < ma and 0 <= y < mb):
            raise BehaviorError(f"input pair ({x}, {y}) not in a {ma}x{mb} scenario")
        total += sign * correlator(behavior, x, y)
    return total


def uniform_behavior(scenario: Scenario) -> Behavior:
    return Behavior(scenario, np.full(scenario.shape, 0.25))


def noisy_behavior(target: Behavior, q: float) -> Behavior:
    """Target, depolarized by ``q``, then symmetrized: the optimization input."""
    return symmetrize(apply_noise(target, q))
