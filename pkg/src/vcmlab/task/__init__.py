from .network import (
    FrozenNetworkHandle, ToySegNet, assert_frozen, build_task_net, extract_features, load_task_net, predict,
    save_task_net,
)
from .predictions import (
    IGNORE_INDEX, InstanceAnnotations, InstancePredictions, LabelMap, SemanticPredictions, as_raw,
    harden_predictions, task_loss,
)

__all__ = [
    "FrozenNetworkHandle", "ToySegNet", "assert_frozen", "build_task_net", "extract_features", "load_task_net",
    "predict", "save_task_net", "IGNORE_INDEX", "InstanceAnnotations", "InstancePredictions", "LabelMap",
    "SemanticPredictions", "as_raw", "harden_predictions", "task_loss",
]
