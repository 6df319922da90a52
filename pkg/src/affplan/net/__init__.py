"""Hand-written numpy forward model: encoder, per-action predictors, decoder."""

from .model import (decode, encode, extend, init_params, load_checkpoint,
                    loss_and_grads, param_count, predict_sequence,
                    save_checkpoint)
from .train import TrainResult, sign_sgd_step, train
from .gradcheck import gradient_check
from .metrics import eval_prediction

__all__ = [
    "decode", "encode", "extend", "init_params", "load_checkpoint",
    "loss_and_grads", "param_count", "predict_sequence", "save_checkpoint",
    "TrainResult", "sign_sgd_step", "train", "gradient_check",
    "eval_prediction",
]
