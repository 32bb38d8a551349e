"""teacheval: evidence-grounded multi-dimensional teaching-evaluation classifier.

Maps free-form student comments to ternary ratings on five pedagogical
dimensions via a dual-graph comment encoder, dimension-anchored evidence
attention, and a parameter-efficient shared prediction head.
"""

from .config import Config, build_config, derive_seed
from .data import (
    DIMENSIONS,
    NUM_CLASSES,
    NUM_DIMENSIONS,
    CommentRecord,
    DatasetSplit,
    TokenSequence,
    generate_synthetic,
    label_correlation,
    load_dataset,
    rationale_token_set,
    save_dataset,
    split_dataset,
    tokenize,
)
from .errors import TeachEvalError
from .estimator import TeachingFacetClassifier
from .evidence import (
    EvidenceEncoder,
    dyt,
    encode_dimension_words,
    extract_evidence,
    refine_query,
    segment_prototypes,
)
from .graph import (
    DualGraphEncoder,
    biaffine_fuse,
    gcn_layer,
    normalize_sym,
    prune_syntactic,
    semantic_adjacency,
)
from .heads import (
    IndependentHeads,
    PredictionResult,
    SharedPerturbationHead,
    build_independent_baseline,
    classification_loss,
    classify,
    count_parameters,
    project_dimension,
)
from .metrics import (
    AlignmentReport,
    MetricsReport,
    SimilarityTrace,
    accuracy_f1,
    ece,
    evaluate_split,
    evidence_alignment,
    qwk,
    similarity_trace,
)
from .network import CommentPrecomp, FacetNetwork, ForwardResult, precompute_comment
from .providers import (
    ArcMatrix,
    ChainArcProvider,
    EmbeddingMatrix,
    FileArcProvider,
    PretrainedEmbeddingProvider,
    StubEmbeddingProvider,
)
from .training import (
    RunRecord,
    load_checkpoint,
    load_model_from_checkpoint,
    lr_schedule,
    prepare_split,
    save_checkpoint,
    train_protocol,
    train_run,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
