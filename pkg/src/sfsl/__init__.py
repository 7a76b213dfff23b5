"""Semantic few-shot learning via hierarchical 3AFC psychometric supervision.

Pipeline: concept tree -> 3AFC tests answered by a virtual annotator (or
humans over HTTP) -> dual-triplet fine-tuning of a two-layer embedding
head -> semantic N-way 1-shot evaluation with an LCS-based metric.
"""

from .hierarchy import ConceptTree, TreeError, load_cifar100_tree, load_tree
from .annotation import (
    AnswerLog,
    TestAnswer,
    TripletTest,
    append_answer,
    oracle_answer,
    oracle_choice,
    sample_tests,
    simulate_annotations,
)
from .data import (
    FeatureStore,
    SynthConfig,
    generate_synthetic,
    load_features,
    save_features,
)
from .embedding import (
    EmbeddingHead,
    TrainConfig,
    dual_triplet_loss,
    embed,
    init_head,
    load_head,
    ntxent_loss,
    pair_distance,
    save_head,
    train_srn,
)
from .episodes import (
    Episode,
    EvalReport,
    infer_nn,
    infer_nn_raw,
    infer_prototype,
    sample_semantic_task,
    sample_typical_task,
    score,
)

__version__ = "0.1.0"
