"""waveverify: neural speech watermark embedding, detection and localization."""

__version__ = "0.1.0"
