from .params import (
    CHECKPOINT_VERSION,
    EDGE_TYPES,
    Hyper,
    ModelParams,
    ShapeError,
    init_params,
    load_checkpoint,
    save_checkpoint,
    zeros_like_params,
)
from .network import (
    ForwardCache,
    GraphTensors,
    backward,
    cross_entropy,
    forward,
    graph_tensors,
    loss_grad_logits,
    softmax,
)
from .training import (
    EmptyDataset,
    Sample,
    TrainConfig,
    TrainLogEntry,
    accuracy,
    batch_gradients,
    predict_index,
    train,
)

__all__ = [
    "CHECKPOINT_VERSION", "EDGE_TYPES", "Hyper", "ModelParams", "ShapeError",
    "init_params", "load_checkpoint", "save_checkpoint", "zeros_like_params",
    "ForwardCache", "GraphTensors", "backward", "cross_entropy", "forward",
    "graph_tensors", "loss_grad_logits", "softmax",
    "EmptyDataset", "Sample", "TrainConfig", "TrainLogEntry", "accuracy",
    "batch_gradients", "predict_index", "train",
]
