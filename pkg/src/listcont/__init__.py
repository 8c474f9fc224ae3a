"""Fast item-list continuation.

A masked bidirectional transformer decodes K future items of a list in a
single encoder pass; a two-stage hierarchical classifier (category hop, then
a per-category local head) cuts the output-layer cost from d*M to roughly
d*(N + M/N) per position. The package covers the full loop: corpus
preparation, co-occurrence categorization, curriculum-masked training with
manual numpy gradients, three decode modes, and a latency/MACs benchmark
harness. The ``listcont`` command drives the same pipeline from config files.
"""

from .bench import (
    LatencyReport,
    count_classifier_macs,
    estimate_classifier_macs,
    speedup,
    stage_fractions,
    sweep_categories,
    time_inference,
)
from .categorizer import ClusterModel, EmbeddingTable, categorize_items, cluster_items, train_item_embeddings
from .config import ConfigError, ExperimentConfig
from .corpus import (
    CorpusError,
    DatasetSplits,
    ListPair,
    Vocabulary,
    build_vocabulary,
    encode_lists,
    filter_and_truncate,
    make_splits,
    parse_corpus_file,
    split_list,
    synthesize_corpus,
)
from .inference import (
    GenerationEngine,
    GenerationError,
    GenerationRequest,
    RankedCandidates,
    dedup,
    generate,
)
from .masker import MaskPolicy, TokenBundle, build_bundle, build_inference_bundle, mask_input, mask_target
from .metrics import hr_at_k, ndcg_at_k
from .model import (
    Batch,
    CheckpointError,
    ModelConfig,
    collate_bundles,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .scheduler import DifficultySchedule, make_schedule
from .trainer import TrainConfig, TrainResult, evaluate, loss_and_grads, loss_only, train

__version__ = "0.1.0"
