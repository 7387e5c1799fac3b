"""Spectral NeRF - spectral radiance field training and RGB fusion"""
__version__ = "1.0.0"
