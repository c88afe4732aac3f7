"""Zero-shot hashing: class-anchored binary codes that extend to unseen classes via attribute signatures."""

from .anchors import AnchorSet, assign_anchors_to_classes, class_means, penalized_kmeans
from .dataset import (
    DatasetBundle,
    FeatureMatrix,
    LabelVector,
    SeenUnseenSplit,
    SignatureMatrix,
    generate_synthetic,
    load_dataset,
    split_query_database,
    split_seen_unseen,
    write_dataset,
)
from .embedding import AnchorEmbedding, EmbedderSpec, embed_anchors, isomap, kernel_pca, lle
from .errors import ConfigError, DataError, NumericError, ZshError
from .evaluation import (
    AccuracyReport,
    RetrievalMetrics,
    anchor_assignment_accuracy,
    hamming_distance,
    lookup_metrics,
    mean_average_precision,
    radius_lookup,
)
from .hashing import (
    HashCode,
    HashCodeSet,
    HashParams,
    anchor_hash_codes,
    binarize,
    hash_seen,
    hash_seen_instance,
    inductive_embed,
    rbf_weights,
    top_s_boost_renormalize,
)
from .pipeline import ExperimentConfig, TrainedModel, load_config, run_experiment, train
from .zsl import (
    ExtendedAnchorSet,
    ZslHyperparams,
    ZslModel,
    cosine_class_similarity,
    eszsl_objective,
    extend_anchor_set,
    fit_eszsl,
    hash_unseen_instance,
    score_unseen,
    synthesize_unseen_anchor,
)

__version__ = "0.1.0"
