"""
networks/__init__.py

Public API for the generator, detector, locator and discriminator networks.
"""

from .detector import DetectorConfig, DetectorModel, aggregate_bits, detect, moe_combine
from .discriminator import DiscriminatorConfig, DiscriminatorStack
from .film import FiLMParams, MessageFiLM, film_modulate
from .generator import GeneratorConfig, GeneratorModel, embed, message_to_film
from .layers import ConvBlockSpec, conv_out_len, conv_transpose_out_len, count_parameters
from .locator import LocatorConfig, LocatorModel, locate

__all__ = [
    "ConvBlockSpec",
    "conv_out_len",
    "conv_transpose_out_len",
    "count_parameters",
    "FiLMParams",
    "MessageFiLM",
    "film_modulate",
    "GeneratorConfig",
    "GeneratorModel",
    "embed",
    "message_to_film",
    "DetectorConfig",
    "DetectorModel",
    "aggregate_bits",
    "detect",
    "moe_combine",
    "LocatorConfig",
    "LocatorModel",
    "locate",
    "DiscriminatorConfig",
    "DiscriminatorStack",
]
