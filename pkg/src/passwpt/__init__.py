"""Joint beamforming, antenna placement, and power-radiation optimization for
waveguide-fed pinching-antenna networks serving information and energy users.
"""

from .scenario import (
    ScenarioConfig,
    UserLayout,
    PositionGrid,
    Placement,
    build_position_grid,
    candidate_positions,
    sample_user_drop,
    validate_placement,
    load_config,
)
from .channel import (
    ChannelSet,
    EffectiveChannels,
    build_channel_set,
    idr_channel,
    ehr_channel,
    waveguide_phase,
    effective_channels,
)
from .radiation import (
    RadiationState,
    AlphaFeasibleRegion,
    coupled_mode_alpha,
    assemble_lambda,
    equal_power_alpha,
    feasible_region_two_user,
    feasible_region_multi,
)
from .metrics import MetricsReport, evaluate_metrics, pce, sum_rate
from .convex_core import QcqpProblem, KktCertificate, solve_qcqp, fix_phase, kkt_residual

__all__ = [
    "ScenarioConfig", "UserLayout", "PositionGrid", "Placement",
    "build_position_grid", "candidate_positions", "sample_user_drop",
    "validate_placement", "load_config",
    "ChannelSet", "EffectiveChannels", "build_channel_set", "idr_channel",
    "ehr_channel", "waveguide_phase", "effective_channels",
    "RadiationState", "AlphaFeasibleRegion", "coupled_mode_alpha",
    "assemble_lambda", "equal_power_alpha", "feasible_region_two_user",
    "feasible_region_multi",
    "MetricsReport", "evaluate_metrics", "pce", "sum_rate",
    "QcqpProblem", "KktCertificate", "solve_qcqp", "fix_phase", "kkt_residual",
]

__version__ = "0.1.0"
