"""Self-contained differentiable-network core (numpy only)."""

from .gradcheck import gradient_check_layer, gradient_check_model  # noqa: F401
from .layers import (  # noqa: F401
    Conv2D,
    Dense,
    Dropout,
    LSTM,
    MaxPool,
    Reshape,
    ShapeMismatch,
    layer_from_spec,
)
from .model import CheckpointError, ModelGraph  # noqa: F401
from .optim import AdamState, adam_init, adam_step  # noqa: F401
from .train import (  # noqa: F401
    Diverged,
    EarlyStopper,
    TrainConfig,
    data_loss,
    predict_proba_batched,
    split_dataset,
    train,
)
