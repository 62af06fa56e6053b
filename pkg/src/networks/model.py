"""
Full predictor model: encoders, producer, length predictors and mapping network
"""

import numpy as np

from src.autograd.layers import Module
from src.config import Config
from src.networks.encoders import EncoderStack
from src.networks.producer import LengthPredictor, MappingNetwork, SignProducer


def model_dtype(config: Config) -> type:
    return np.float64 if config.dtype == "float64" else np.float32


class PredictorModel(Module):
    """All trainable components of the generator"""

    def __init__(self, config: Config, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        dtype = model_dtype(config)
        self.encoders = EncoderStack(config, rng, dtype)
        self.producer = SignProducer(
            config.frame_width,
            config.d_model,
            config.num_heads,
            config.mlp_hidden,
            config.producer_blocks,
            rng,
            dtype,
        )
        self.text_length = LengthPredictor(config.d_model, config.mlp_hidden, rng, dtype)
        self.audio_length = LengthPredictor(config.d_model, config.mlp_hidden, rng, dtype)
        self.mapping = MappingNetwork(config.d_model, config.mlp_hidden, rng, dtype)
        self.num_joints = config.num_joints
        self.num_coords = config.num_coords
        self.d_model = config.d_model
        self.max_len = config.max_len
        self.dtype = dtype
