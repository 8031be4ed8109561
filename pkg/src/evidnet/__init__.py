"""Belief-function classification toolkit.

A Dempster-Shafer core (frames, mass functions, combination rules), a
prototype-based evidential classifier with a trainable linear reduction
layer, supervised and semi-supervised losses with analytic gradients,
binary evaluation metrics, and CSV/JSON persistence behind a small CLI.
"""

from .belief import (
    MAX_FRAME_SIZE,
    Frame,
    MassFunction,
    bel,
    combine_all,
    conflict,
    dempster_combine,
    mass_new,
    pl,
    vacuous,
)
from .dataio import (
    FeatureDataset,
    export_predictions,
    load_csv,
    load_model,
    save_model,
    write_csv,
)
from .errors import (
    CorruptFieldError,
    DimensionMismatchError,
    EmptyBatchError,
    EmptyFileError,
    EmptyListError,
    EmptySetMassError,
    EmptyValidationError,
    EvidnetError,
    FrameMismatchError,
    InvalidMaskError,
    LengthMismatchError,
    MissingHeaderError,
    NegativeMassError,
    NoLabeledDataError,
    NonFiniteGradientError,
    NonFiniteInputError,
    NonNumericFeatureError,
    NotNormalizedError,
    RaggedRowError,
    ShapeMismatchError,
    SingleClassError,
    TooFewPointsError,
    TotalConflictError,
    UnknownLabelError,
    UnsupportedVersionError,
    WriteFailureError,
    ZeroBetaError,
)
from .metrics import (
    MetricsReport,
    RocCurve,
    accuracy,
    auc,
    f1,
    metrics_report,
    roc_points,
)
from .model import (
    EvidentialModel,
    ModelConfig,
    OutputMass,
    Prototype,
    decide,
    forward,
    forward_batch,
    fuse_prototype_masses,
    init_model,
    kmeans_init,
    linear_forward,
    prototype_activation,
)
from .training import (
    Batch,
    EpochRecord,
    GradientVector,
    OptimizerState,
    TrainConfig,
    TrainHistory,
    cost_mse_pl,
    grad_check,
    gradients,
    init_optimizer,
    loss_consistency,
    loss_supervised_ce,
    optimizer_step,
    perturb,
    total_loss,
    train,
)

__version__ = "0.1.0"
