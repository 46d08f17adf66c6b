"""Structure-aware contrastive embeddings for few-shot classification.

A dual-path scheme: a frozen linear teacher scores every augmented view
with temperature-smoothed class posteriors, and an MLP encoder learns
unit-norm embeddings under a contrastive loss whose pair weights follow
those posteriors. Frozen embeddings feed a prototype classifier for
N-way K-shot evaluation, inductive or transductive. Companion modules
verify the analytic gradients against finite differences and the
asymptotic alignment/uniformity decomposition by Monte Carlo.
"""

from .datasets import (
    AugmentedBatch,
    ClusterSpec,
    LabeledFeatureSet,
    augment_batch,
    augment_pair,
    generate_clusters,
    load_feature_csv,
    save_feature_csv,
    split_base_novel,
    split_by_class_ids,
)
from .embedding import ContrastiveEncoder, TrainConfig, TrainingLog, train_encoder
from .encoder import MlpEncoder
from .exceptions import (
    ConfigurationError,
    DegenerateInputError,
    NumericError,
    ParseError,
    ProtocolError,
    SaclError,
    ShapeError,
    TrainingError,
)
from .fewshot import (
    Episode,
    EvaluationResult,
    GfslReport,
    PrototypeClassifier,
    PrototypeSet,
    compute_prototypes,
    evaluate,
    gfsl_evaluate,
    joint_prototypes,
    predict_inductive,
    rectify_prototypes,
    sample_episode,
)
from .losses import (
    EmbeddingBatch,
    HardPositiveDiagnostic,
    LossReport,
    PairWeights,
    cl_loss,
    hard_positive_diagnostic,
    hard_positive_magnitude,
    pair_weights,
    sacl_grad_embeddings,
    sacl_grad_features,
    sacl_loss,
    scl_loss,
)
from .numerics import (
    RngStream,
    cosine_similarity,
    l2_normalize,
    l2_normalize_rows,
    logsumexp,
    mean_and_ci95,
    normalize_jacobian,
    softmax_rows,
    softmax_with_temperature,
)
from .optim import Adam
from .presets import Preset, get_preset
from .teacher import (
    LinearSoftmaxClassifier,
    SimilarityMatrix,
    batch_accuracy_lambda,
    structural_similarity,
    train_teacher,
)
from .theory import (
    SphereMixture,
    TheoremEstimate,
    alignment_uniformity,
    consistency_weights,
    convergence_study,
    sample_sphere_mixture,
)
from .verification import gradient_check

__version__ = "0.1.0"
