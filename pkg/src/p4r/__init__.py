"""Graph-convolutional recommender with profile-embedding injection."""

from .corpus import (
    Dataset,
    InteractionRecord,
    ItemMetadata,
    ParseError,
    ValidationError,
    build_dataset,
    load_dataset,
    load_item_metadata,
    parse_interactions,
    save_dataset,
    sparsity,
    sparsity_percent,
    split_dataset,
)
from .graph import BipartiteGraph, build_graph, norm_coeff
from .kernels import NUMBA_ENABLED
from .metrics import (
    MetricReport,
    RougeScore,
    evaluate,
    hit_at_k,
    mrr_at_k,
    ndcg_at_k,
    p4r_wt_score,
    recall_at_k,
    rouge1,
)
from .model import (
    ForwardState,
    ModelConfig,
    ModelParams,
    forward,
    init_from_config,
    init_params,
    load_checkpoint,
    propagate_layer,
    recommend_topk,
    save_checkpoint,
    score,
)
from .semantic import (
    ProjectionHead,
    SemanticEmbeddingStore,
    init_projection,
    load_embeddings,
    project,
    semantic_vector,
)
from .train import TrainConfig, bpr_loss, fit, grad_step, sample_negative

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph",
    "Dataset",
    "ForwardState",
    "InteractionRecord",
    "ItemMetadata",
    "MetricReport",
    "ModelConfig",
    "ModelParams",
    "NUMBA_ENABLED",
    "ParseError",
    "ProjectionHead",
    "RougeScore",
    "SemanticEmbeddingStore",
    "TrainConfig",
    "ValidationError",
    "__version__",
    "bpr_loss",
    "build_dataset",
    "build_graph",
    "evaluate",
    "fit",
    "forward",
    "grad_step",
    "hit_at_k",
    "init_from_config",
    "init_params",
    "init_projection",
    "load_checkpoint",
    "load_dataset",
    "load_embeddings",
    "load_item_metadata",
    "mrr_at_k",
    "ndcg_at_k",
    "norm_coeff",
    "p4r_wt_score",
    "parse_interactions",
    "project",
    "propagate_layer",
    "recall_at_k",
    "recommend_topk",
    "rouge1",
    "sample_negative",
    "save_checkpoint",
    "save_dataset",
    "score",
    "semantic_vector",
    "sparsity",
    "sparsity_percent",
    "split_dataset",
]
