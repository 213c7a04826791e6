"""Minimal float64 neural-network core: FC stacks, an LSTM cell, a categorical
head, Adam, finite-difference gradient checking, and binary checkpoints."""

from .adam import Adam
from .checkpoint import read_checkpoint, write_checkpoint
from .gradcheck import grad_check
from .heads import categorical_head, entropy_grad, log_prob_grad
from .layers import Linear, MLPNetwork, relu, relu_backward
from .lstm import LSTMCell, LSTMNetwork, LstmState
from .params import Parameter, he_uniform, xavier_uniform

__all__ = [
    "Adam", "read_checkpoint", "write_checkpoint", "grad_check",
    "categorical_head", "entropy_grad", "log_prob_grad",
    "Linear", "MLPNetwork", "relu", "relu_backward",
    "LSTMCell", "LSTMNetwork", "LstmState",
    "Parameter", "he_uniform", "xavier_uniform",
]
