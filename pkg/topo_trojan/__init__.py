__version__ = "0.1.0"

from .schema import (
    Activation,
    DetectorConfig,
    GaussianPairConfig,
    LayerSpec,
    ModelEntry,
    NetworkSpec,
    OutputRule,
    PerturbConfig,
    TrainConfig,
    TriggerSpec,
    ZooConfig,
)
from .netlab import (
    Dataset,
    RandomSource,
    build_model_zoo,
    build_theorem_networks,
    eval_network,
    perturb_pixelwise,
    sample_gaussian_pair,
)
from .trace import ActivationTrace, CorrelationMatrix, DissimilarityMatrix, Kernel, correlation_matrix, dissimilarity, record_activations
from .complex import Filtration, build_filtration
from .persistence import (
    CycleRepresentative,
    PersistenceDiagram,
    bottleneck_distance,
    compute_diagrams,
    extract_cycles,
    naive_reduce,
    one_dim_diagram,
    zero_dim_diagram,
)
from .features import FeatureVector, corr_baseline_features, topo_features
from .analysis import TTestResult, welch_t_test
from .detector import DetectorModel, EvalReport, auc, predict, run_pipeline, train_detector
from .pipeline import ModelScanner

__all__ = [
    "Activation",
    "ActivationTrace",
    "CorrelationMatrix",
    "CycleRepresentative",
    "Dataset",
    "DetectorConfig",
    "DetectorModel",
    "DissimilarityMatrix",
    "EvalReport",
    "FeatureVector",
    "Filtration",
    "GaussianPairConfig",
    "Kernel",
    "LayerSpec",
    "ModelEntry",
    "ModelScanner",
    "NetworkSpec",
    "OutputRule",
    "PerturbConfig",
    "PersistenceDiagram",
    "RandomSource",
    "TTestResult",
    "TrainConfig",
    "TriggerSpec",
    "ZooConfig",
    "auc",
    "bottleneck_distance",
    "build_filtration",
    "build_model_zoo",
    "build_theorem_networks",
    "compute_diagrams",
    "corr_baseline_features",
    "correlation_matrix",
    "dissimilarity",
    "eval_network",
    "extract_cycles",
    "naive_reduce",
    "one_dim_diagram",
    "perturb_pixelwise",
    "predict",
    "record_activations",
    "run_pipeline",
    "sample_gaussian_pair",
    "topo_features",
    "train_detector",
    "welch_t_test",
    "zero_dim_diagram",
]
