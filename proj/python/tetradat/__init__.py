"""Tensor-train optimizer and attribution-guided black-box attack."""

from ._core import (
    BridgeClassifier,
    CampaignError,
    Classifier,
    ConfigError,
    DenseClassifier,
    ModelError,
    ShapeError,
    TransportError,
    TTTensor,
    attack,
    desk_image,
    emit_report,
    hsv_to_rgb,
    integrated_gradients,
    load_weights,
    protes_minimize,
    rgb_to_hsv,
    run_campaign,
    saliency,
    train_desk_model,
)

__all__ = [name for name in dir() if not name.startswith("_")]
