"""Certified lower bounds on an eavesdropper's fidelity in device-independent
advantage distillation, via polytope envelopes and NPA moment relaxations."""

from .analysis import (
    NoThresholdError,
    OverlapMeasure,
    ThresholdResult,
    delta_n,
    fidelity_curve,
    h2,
    keyrate_gap,
    necessary_condition,
    oneway_entropy_bound,
    sufficient_condition,
    threshold_search,
    trace_condition,
)
from .correlations import (
    Behavior,
    NoiseModel,
    QuantumStrategy,
    Scenario,
    apply_noise,
    chsh,
    noisy_behavior,
    qber,
    scenario_target,
    symmetrize,
)
from .envelope import EnvelopeModel, build_envelope, eval_envelope
from .npa import MomentStructure, build_structure, tsirelson_check
from .sdpbuild import SdpProblem, SolveResult, assemble, assemble_oneway, export_sdpa, feasible_value
from .solver import SolverError, SolverSettings, solve

__version__ = "0.1.0"
