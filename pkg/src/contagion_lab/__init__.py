"""Interbank network reconstruction and contagion analytics."""

from .contagion import (
    CascadeConfig,
    DiffusionParams,
    DistressState,
    cascade,
    critical_distance,
    dominance_share,
    effective_decay,
    fit_temporal_decay,
    kappa_ratio,
    prediction_proportional,
    solve_diffusion,
    temporal_decay_rate,
)
from .graph import (
    SpectrumResult,
    TopologyReport,
    WeightedNetwork,
    algebraic_connectivity,
    build_network,
    degree_sequence,
    fiedler_partition,
    laplacian_spectrum,
    topology_report,
)
from .ingest import (
    BankPanel,
    BankRecord,
    TreatmentAssignment,
    assign_treatment,
    balanced_panel,
    load_panel,
)
from .reconstruct import (
    ExposureMatrix,
    FixedRatio,
    LinearLogRatio,
    RatioRule,
    ReconstructionConfig,
    SizeThresholdRatio,
    TieredRatio,
    apply_threshold,
    fitness_model,
    interbank_aggregates,
    kde_weights,
    max_entropy,
    min_density,
    reconstruct_exposures,
)
from .stats import (
    BootstrapResult,
    ChowResult,
    DidResult,
    FitComparison,
    bootstrap_lambda2,
    chow_test,
    did_regress,
    fit_distributions,
    leave_one_out_lambda2,
    permutation_test,
    placebo_null,
    power_law_mle,
    series_correlation,
)

__version__ = "0.1.0"
