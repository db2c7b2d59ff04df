"""Robust sum-rate optimization for a scattering-surface assisted downlink
with rate splitting and simultaneous wireless power transfer.

The optimizer alternates three stages: precoder covariances by successive
convex approximation over PSD cones, receive power splits in closed form,
and the surface scattering matrix by conjugate gradients on a unitary (or
diagonal unit-modulus) manifold. All rates are worst case over bounded
channel estimation errors.
"""

from .channel import (
    ChannelSet,
    EquivalentChannel,
    FadingParams,
    Geometry,
    equivalent_channel,
    gen_channels,
)
from .harness import (
    VERSION as __version__,
    InfeasibleScenario,
    IterationTrace,
    RunResult,
    SystemConfig,
    dbm_to_watt,
    parse_config_file,
    run_arm,
    run_bench,
    run_once,
    sweep,
    trend_means,
    write_metadata,
    write_rows,
)
from .manifold_opt import (
    DiagonalPhaseManifold,
    UnitaryManifold,
    refine_scattering,
)
from .metrics import (
    DesignState,
    EhParams,
    ResidualReport,
    RobustRateInputs,
    error_ball_oracle,
    feasibility_residuals,
    harvested_power,
    psi_threshold,
    sum_rate,
    worst_case_common_rate,
    worst_case_private_rate,
    worst_case_received,
)
from .power_split import (
    allocate_common_rate,
    beta_upper_bound,
    grid_search_beta,
    optimize_beta,
)
from .precoder_sdp import (
    ConicProblem,
    LinConstraint,
    LinExpr,
    PsdBlock,
    ScalarVar,
    SolverSolution,
    design_precoders,
    extract_rank_one,
    solve_conic,
)

__all__ = [
    "ChannelSet",
    "ConicProblem",
    "DesignState",
    "DiagonalPhaseManifold",
    "EhParams",
    "EquivalentChannel",
    "FadingParams",
    "Geometry",
    "InfeasibleScenario",
    "IterationTrace",
    "LinConstraint",
    "LinExpr",
    "PsdBlock",
    "ResidualReport",
    "RobustRateInputs",
    "RunResult",
    "ScalarVar",
    "SolverSolution",
    "SystemConfig",
    "UnitaryManifold",
    "allocate_common_rate",
    "beta_upper_bound",
    "dbm_to_watt",
    "design_precoders",
    "equivalent_channel",
    "error_ball_oracle",
    "extract_rank_one",
    "feasibility_residuals",
    "gen_channels",
    "grid_search_beta",
    "harvested_power",
    "optimize_beta",
    "parse_config_file",
    "psi_threshold",
    "refine_scattering",
    "run_arm",
    "run_bench",
    "run_once",
    "solve_conic",
    "sum_rate",
    "sweep",
    "trend_means",
    "worst_case_common_rate",
    "worst_case_private_rate",
    "worst_case_received",
    "write_metadata",
    "write_rows",
]
