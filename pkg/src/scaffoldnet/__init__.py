"""From-scratch convolutional classifier for two-category grayscale cell images."""

__version__ = "0.1.0"
