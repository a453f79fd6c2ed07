"""Certification of high-Schmidt-number entanglement and of the measurement
and teleportation resources it generates.

The package computes bracketed (certified lower/upper) robustness values for

* bipartite states against the cone of Schmidt-number-<=k states,
* distributed measurements generated from a shared bipartite state,
* teleportation instruments (outcome-indexed subchannel collections),

and evaluates the entanglement-assisted state-discrimination game whose
advantage ratio reproduces the state robustness.  All optimization runs
through a small conic-program layer solved by Clarabel; outer cone
relaxations give certified lower bounds, explicit Schmidt-rank-<=k
ensembles give certified upper bounds.
"""

__version__ = "0.1.0"

from .cone import (
    ConeApprox,
    SnDecomposition,
    inner_decomposition,
    outer_constraints,
    witness_value_k,
)
from .game import (
    GameInstance,
    GameResult,
    assemblage_from_instrument,
    ensemble_from_witness,
    evaluate_game,
    optimize_play,
    p_g_k_bounds,
    play,
    verify_theorem5,
)
from .objects import (
    BipartiteState,
    ChoiMatrix,
    DistributedMeasurement,
    Ensemble,
    Povm,
    ProductChannel,
    TeleportationInstrument,
    apply_choi,
    choi_of,
    distributed_measurement_from,
    npeb_order_bound,
    simulate_npeb,
    teleportation_instrument_from,
)
from .robustness import (
    RobustnessReport,
    WitnessOperator,
    check_monotonicity,
    r_kdm,
    r_ke,
    r_sc,
    theorem2_measurements_from_witness,
    verify_theorem2,
)
from .sdp import ConicProblem, SolveOptions, SolveReport, embed_hermitian, solve

__all__ = [
    "__version__",
    "BipartiteState",
    "ChoiMatrix",
    "ConeApprox",
    "ConicProblem",
    "DistributedMeasurement",
    "Ensemble",
    "GameInstance",
    "GameResult",
    "Povm",
    "ProductChannel",
    "RobustnessReport",
    "SnDecomposition",
    "SolveOptions",
    "SolveReport",
    "TeleportationInstrument",
    "WitnessOperator",
    "apply_choi",
    "assemblage_from_instrument",
    "check_monotonicity",
    "choi_of",
    "distributed_measurement_from",
    "embed_hermitian",
    "ensemble_from_witness",
    "evaluate_game",
    "inner_decomposition",
    "npeb_order_bound",
    "optimize_play",
    "outer_constraints",
    "p_g_k_bounds",
    "play",
    "r_kdm",
    "r_ke",
    "r_sc",
    "simulate_npeb",
    "solve",
    "teleportation_instrument_from",
    "theorem2_measurements_from_witness",
    "verify_theorem2",
    "verify_theorem5",
    "witness_value_k",
]
