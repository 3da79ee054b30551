"""Continuous camera-motion blur kernels for gaussian-splatting scenes."""
__version__ = "0.1.0"
