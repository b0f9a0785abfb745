"""Doctoral hiring networks and eigenvector-centrality reputation scores."""

from phdnet.centrality import (
    CentralityOptions,
    CentralityResult,
    CentralityTable,
    centrality_series,
    eigenvector_centrality,
)
from phdnet.errors import (
    ArtifactError,
    CollinearityError,
    ConfigurationError,
    DataError,
    DimensionError,
    DomainError,
    IngestError,
    NumericError,
    UnknownGradeError,
)
from phdnet.graph import (
    ExchangeNetwork,
    MarketSpec,
    NetworkStats,
    Window,
    build_network,
    export,
    import_edge_list,
    network_stats,
    slice_network,
    synthesize_market,
)
from phdnet.ingest import (
    OVERSEAS,
    HireRecord,
    IngestDiagnostics,
    InstitutionEntry,
    InstitutionRegistry,
    canonicalize,
    clean_records,
    deduplicate,
    parse_records,
    validate_record,
)
from phdnet.stats import (
    CorrelationReport,
    FDist,
    GradeScale,
    PredictorPanel,
    RegressionReport,
    StudentT,
    compute_predictors,
    durbin_watson,
    grade_to_rank,
    moving_average,
    ols_fit,
    pearson,
    tail_probability,
    trend_statistic,
)

__version__ = "0.1.0"
