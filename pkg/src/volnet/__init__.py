"""Factor plus sparse VAR volatility networks for high-dimensional panels."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, NumericalError, VolnetError
from .panel import (
    PeriodFilter,
    SectorMap,
    TimePanel,
    center,
    load_panel,
    load_sector_map,
    log_returns,
    slice_period,
)
from .spectral import (
    AutocovarianceSequence,
    DynamicEigenStructure,
    PscField,
    SpectralDensity,
    autocovariances,
    common_spectrum_projection,
    dynamic_eigen,
    estimate_spectral_density,
    partial_spectral_coherence,
)
from .factors import (
    BlockVarModel,
    CommonIdioSplit,
    FactorCount,
    FactorLoadings,
    block_var_residuals,
    common_lvdn_filter,
    estimate_block_var,
    estimate_factor_count,
    estimate_loadings_and_factors,
    split_common_idio,
)
from .sparsevar import (
    BicSelection,
    PenaltySpec,
    SparseVarModel,
    fit_penalized_row,
    fit_sparse_var,
    select_bic,
)
from .identify import (
    CentralityRanking,
    CholeskiFactor,
    Pcn,
    eigenvector_centrality,
    estimate_pcn,
    order_and_choleski,
)
from .networks import (
    DegreeReport,
    FevdMatrix,
    Network,
    ThresholdResult,
    VmaFilter,
    degrees,
    export_network,
    fevd,
    invert_var,
    lgcn,
    network_from_fevd,
    read_adjacency,
    threshold_lvdn,
)
from .pipeline import (
    JointFactorCounts,
    PipelineConfig,
    SectoralShareTable,
    TwoStepResult,
    VolatilityProxies,
    joint_block_q,
    portmanteau_whiteness,
    run_pipeline,
    sectoral_common_shares,
    volatility_proxies,
    write_bundle,
)
from .datagen import DgpSpec, GroundTruth, simulate
