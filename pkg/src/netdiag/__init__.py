"""TCP-trace diagnostics: signatures, kernel SVM cascade, simulator."""

from .classifiers import (
    CfdNetwork,
    CfModule,
    LinkState,
    LpdClassifier,
    PipelineConfig,
    Verdict,
    cfd_collective,
    diagnose,
    load_bundle,
    save_bundle,
    train_cf_module,
    train_cfd,
    train_lpd,
)
from .features import FeatureCatalog, Signature, default_catalog, extract_signature
from .preprocess import (
    LabelKind,
    ScalerParams,
    SignatureDatabase,
    Stage,
    apply_scaler,
    encode_labels,
    fit_scaler,
    scale_database,
)
from .selection import SelectionReport, TTestRanking, project, rank_features, t_statistic, wrapper_select
from .simulate import ClientParams, CwndProfile, LinkParams, simulate_flow
from .svm import KernelSpec, SvmConfig, SvmModel, classify, decision_value, kernel_eval, train
from .synthetic import ClassArtifactSpec, generate_synthetic_signature
from .trace import PacketEvent, TracePair, TraceRecord, read_trace, write_trace

__version__ = "0.1.0"
