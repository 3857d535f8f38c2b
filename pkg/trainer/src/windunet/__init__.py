"""UNet wind-speed regressor trained on sarwind pipeline workspaces.

Reads the pipeline's on-disk formats directly (scenes, patches, stats,
splits) and writes predictions back as scene channels, so the two packages
compose through files rather than imports.
"""

from .model import UNet
from .predict import predict_array, predict_scene, predict_workspace
from .train import PRESETS, TrainConfig, train
from .variants import LABEL_CHANNEL, VARIANTS, VariantSpec, get_variant

__version__ = "0.1.0"

__all__ = [
    "UNet", "predict_array", "predict_scene", "predict_workspace",
    "PRESETS", "TrainConfig", "train",
    "LABEL_CHANNEL", "VARIANTS", "VariantSpec", "get_variant",
    "__version__",
]
