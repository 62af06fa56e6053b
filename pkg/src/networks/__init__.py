"""
Neural networks of the pipeline
"""

from src.networks.backtranslator import BackTranslator
from src.networks.encoders import EncoderStack, SequenceEncoder, StepEncoder, positional_encoding
from src.networks.model import PredictorModel, model_dtype
from src.networks.producer import IdentityMapping, LengthPredictor, MappingNetwork, SignProducer

__all__ = [
    "BackTranslator",
    "EncoderStack",
    "IdentityMapping",
    "LengthPredictor",
    "MappingNetwork",
    "PredictorModel",
    "SequenceEncoder",
    "SignProducer",
    "StepEncoder",
    "model_dtype",
    "positional_encoding",
]
