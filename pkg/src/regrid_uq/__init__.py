"""Regridding uncertainty for downscaling regressions."""

__version__ = "0.1.0"
