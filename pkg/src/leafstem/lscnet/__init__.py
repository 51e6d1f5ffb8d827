from .classifier import LSCNetClassifier, classify, normalize_points, train
from .model import CenterShift, LSCNet, NetworkSpec, RadiusUpdate, SALayerSpec, SetAbstraction
from .ops import ball_group, fps
from .segment import label_superpoints, segment_plant, superpoint_targets, training_samples

__all__ = [
    "CenterShift", "LSCNet", "LSCNetClassifier", "NetworkSpec", "RadiusUpdate", "SALayerSpec",
    "SetAbstraction", "ball_group", "classify", "fps", "label_superpoints", "normalize_points",
    "segment_plant", "superpoint_targets", "train", "training_samples",
]
