from .config import FRAME_MODES, STRATEGIES, TrainingConfig, load_yaml
from .losses import (
    RDLossBreakdown, distortion_feature, distortion_gt, distortion_mse, distortion_pseudo_gt, pseudo_annotations,
    rd_loss,
)
from .loop import TrainResult, epoch_batches, finetune, pretrain, sample_frame_index, sample_training_frame

__all__ = [
    "FRAME_MODES", "STRATEGIES", "TrainingConfig", "load_yaml", "RDLossBreakdown", "distortion_feature",
    "distortion_gt", "distortion_mse", "distortion_pseudo_gt", "pseudo_annotations", "rd_loss", "TrainResult",
    "epoch_batches", "finetune", "pretrain", "sample_frame_index", "sample_training_frame",
]
