"""Hybrid self-supervised speech representations for cognitive-load detection.

A log-mel frontend, a compact handcrafted feature set (CPS-115), a numpy
convolutional encoder trained with a BYOL objective plus a supervised loss
toward the handcrafted features, and a speaker-independent linear-SVM
evaluation protocol.
"""
__version__ = "0.1.0"

from .errors import StressRepError  # noqa: F401
