"""Lunar crater identification from projective invariants of imaged rims."""

from .crater3d import LUNAR_RADIUS_KM

__all__ = ["LUNAR_RADIUS_KM"]
__version__ = "0.1.0"
