"""Point-cloud sequence forecasting toolkit."""

from .clouds import (
    PointCloud,
    PointCloudSequence,
    RigidTransform,
    ScanError,
    load_scan,
    save_scan,
)
from .trajectories import (
    Trajectory,
    TrajectoryError,
    TrajectorySet,
    load_trajectories,
    save_trajectories,
)
from .manifest import DatasetManifest, FrameRecord, ManifestError, load_manifest
from .rangemap import (
    RangeMap,
    RangeMapFormatError,
    SphericalCoord,
    SphericalGrid,
    decode,
    encode,
    project_point,
    read_rangemap,
    write_rangemap,
)
from .metrics import MetricConfig, chamfer, emd, metric_report, ppfe
from .assignment import solve_assignment
from .forecasters import (
    FORECASTERS,
    ForecastError,
    ForecastRequest,
    ForecastResult,
    IcpError,
    IcpParams,
    IcpResult,
    average_motion,
    forecast_ego_warp,
    forecast_icp_warp,
    forecast_identity,
    icp_align,
    relative_motions,
)
from .evaluation import (
    ComparisonResult,
    EvaluationError,
    MatchResult,
    MatchedPair,
    MethodScore,
    PairwiseCosts,
    RecallCurve,
    RecallGrid,
    RecallSample,
    aade_afde,
    ade_fde,
    assign,
    evaluate_methods,
    match_at_threshold,
    pairwise_costs,
    recall_curve,
)

__version__ = "0.1.0"
