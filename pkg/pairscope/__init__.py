from .exceptions import (
    ConfigError,
    EmptyRegionError,
    MapParseError,
    PairScopeError,
    ResourceMatchError,
    UndefinedPrecisionError,
    UndefinedSnrError,
)
from .fock import (
    PhotonNumberDistribution,
    apply_loss,
    correlation_mean,
    correlation_moment,
    correlation_second_moment,
    expand_source,
    mean_photon_number,
    normal_order_coefficients,
)
from .montecarlo import (
    CountingSimulator,
    CountRecord,
    MatchedPair,
    SnrEstimate,
    compare_schemes,
    mc_vs_analytic_report,
    predicted_snr,
    resource_matched_pair,
    run_counting,
    snr_estimate,
)
from .precision import (
    ClosedForm,
    PrecisionSweep,
    classical_bound,
    critical_transmittance,
    enhancement_curve,
    find_crossover,
    multipass_closed_form,
    multipass_enhancement,
    multipass_precision,
    precision_closed_form,
    snr_enhancement_prediction,
)
from .scan import (
    RegionSpec,
    SampleMap,
    ScanningMicroscope,
    ScanResult,
    calibrate_budget,
    enhancement_report,
    estimate_transmittance,
    matched_scans,
)
from .types import (
    Coherent,
    CorrelationObservable,
    ExperimentConfig,
    IdealPair,
    LossNetwork,
    MultiModeCorrelated,
    PrecisionReport,
    Scheme,
    SchemeConfig,
    SourceModel,
    TwoModeSqueezed,
    WeakSpdc,
)
