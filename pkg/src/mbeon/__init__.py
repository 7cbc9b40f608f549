"""Multi-band elastic optical network planning toolkit."""

from .hpo import (
    HPOConfig,
    HPOError,
    HPOResult,
    gon_sweep,
    logo_reference_power,
    optimize_network_powers,
    optimize_span_power,
    span_total_capacity,
)
from .network import (
    CandidatePath,
    CcrTable,
    Demand,
    Topology,
    generate_demand_sequence,
    k_shortest_paths,
    load_fixture,
    load_topology,
    precompute_ccr,
)
from .pep import FittedLossModel, PowerEvolutionProfile, fit_loss_model, received_profile, solve_pep
from .physics import (
    AmplifierSpec,
    Band,
    BandPlan,
    ChannelGrid,
    FiberSpec,
    RamanProfile,
    SpanSpec,
    build_channel_grid,
    c_band_plan,
    default_fiber,
    effective_beta2,
    lcs_band_plan,
    pair_gamma,
    profile_at,
    raman_gain,
    span_of,
)
from .provisioning import run_iterations, run_simulation
from .qot import (
    AsymptoticXPMEstimator,
    NLIEstimator,
    PenaltyConfig,
    TransceiverSpec,
    ase_power,
    lightpath_gsnr,
    modulation_from_gsnr,
    span_gsnr,
)

__version__ = "0.1.0"
