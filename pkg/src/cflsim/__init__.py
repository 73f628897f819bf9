"""Simulator and scheduling library for cooperative federated learning over a
shared wireless spectrum with D2D sub-channel reuse."""

from .d2d import D2DGrant, NoReusableChannel, allocate_d2d
from .dispatch import (
    DispatchParams,
    InstanceTooLarge,
    ScheduleDecision,
    SlotState,
    baseline_max_snr,
    baseline_random,
    dispatch,
    offline_optimum,
    throughput_objective,
    validate,
)
from .learning import (
    LocalDataset,
    ModelWeights,
    aggregate_edge,
    aggregate_sr,
    central_step_deviation,
    global_objective,
    gradient,
    local_step,
    loss_value,
    pool,
)
from .netmodel import (
    EDGE_ID,
    ChannelState,
    Device,
    DeviceState,
    FadingModel,
    OrphanLR,
    Role,
    SpectrumConfig,
    Topology,
    associate,
    rate,
    sample_fading,
    sinr_cellular,
    sinr_d2d,
    total_rate,
)
from .primal_dual import (
    DualState,
    PrimalDualScheduler,
    PrimalState,
    channel_score,
    optimal_admission,
    select_channels,
    update_multiplier,
)
from .rates import CapacityDrawOracle, PhysicalRateOracle
from .sim import (
    MetricsRow,
    PresetBatch,
    RunResult,
    SimConfig,
    build_topology,
    load_config,
    preset,
    run,
    run_batch,
    stabilization_slot,
    summarize,
)
from .sufficient import CellularAllocation, InsufficientChannels, allocate_sufficient

__version__ = "0.1.0"
