"""Masked autoencoder pre-training on boundary-representation solids.

The package covers the full desk-scale pipeline: synthetic labeled BRep
generation, graph feature extraction, a hierarchical graph-transformer
autoencoder with input-level masking, five-term pre-training, few-shot
fine-tuning, and Acc/mIoU evaluation.
"""

from .corpus import (
    BRepModel,
    CorpusConfig,
    FACE_LABEL_NAMES,
    SHAPE_CLASS_NAMES,
    TEMPLATE_NAMES,
    generate_corpus,
    generate_model,
    normalize_model,
)
from .embed import (
    BRepEncoder,
    FeatureBundle,
    MaskSpec,
    apply_mask,
    gaag_to_tensors,
    make_mask,
)
from .encoder import GraphEncoder, LatentBundle
from .decoder import BRepDecoder, GraphDecoder, ReconBundle
from .finetune import FinetuneConfig, TaskHead, TaskModel, few_shot_sample, finetune
from .gaag import GAAG, build_gaag, read_gaag, write_gaag
from .metrics import EvalReport, accuracy, evaluate, mean_iou
from .pretrain import (
    LossReport,
    LossWeights,
    MaskedBRepAutoencoder,
    TrainConfig,
    pretrain,
)

__version__ = "0.1.0"

__all__ = [
    "BRepDecoder", "BRepEncoder", "BRepModel", "CorpusConfig", "EvalReport",
    "FACE_LABEL_NAMES", "FeatureBundle", "FinetuneConfig", "GAAG",
    "GraphDecoder", "GraphEncoder", "LatentBundle", "LossReport",
    "LossWeights", "MaskSpec", "MaskedBRepAutoencoder", "ReconBundle",
    "SHAPE_CLASS_NAMES", "TEMPLATE_NAMES", "TaskHead", "TaskModel",
    "TrainConfig", "accuracy", "apply_mask", "build_gaag", "evaluate",
    "few_shot_sample", "finetune", "gaag_to_tensors", "generate_corpus",
    "generate_model", "make_mask", "mean_iou", "normalize_model",
    "pretrain", "read_gaag", "write_gaag",
]
