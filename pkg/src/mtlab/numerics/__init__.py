from .params import Parameter, ParamSet
from .layers import (Linear, Embedding, GRUCell, log_softmax,
                     log_softmax_backward, sigmoid, det_matmul)
from .optim import AdamW, warmup_invsqrt_lr
from .gradcheck import grad_check
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "Parameter", "ParamSet", "Linear", "Embedding", "GRUCell",
    "log_softmax", "log_softmax_backward", "sigmoid", "det_matmul",
    "AdamW", "warmup_invsqrt_lr", "grad_check",
    "save_checkpoint", "load_checkpoint",
]
