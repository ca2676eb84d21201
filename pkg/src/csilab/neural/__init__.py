"""Small numpy neural networks: the MLP classifier/regressor and the GRU seq2seq model."""
from .gru import GruSeq2Seq, gru_forward, gru_gradients, init_gru
from .mlp import MlpModel, init_mlp, mlp_forward, mlp_gradients, predict_topk, softmax, topk_from_probs
from .train import TrainConfig, TrainResult, TrainingDivergedError, train

__all__ = [
    "GruSeq2Seq", "gru_forward", "gru_gradients", "init_gru",
    "MlpModel", "init_mlp", "mlp_forward", "mlp_gradients", "predict_topk", "softmax", "topk_from_probs",
    "TrainConfig", "TrainResult", "TrainingDivergedError", "train",
]
