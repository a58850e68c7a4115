"""Panorama stitching, dataset statistics and the desk-scale BEV model."""

from ._onebev import *  # noqa: F401,F403
from ._onebev import ValidationError, IoError  # noqa: F401

__all__ = [name for name in dir() if not name.startswith("_")]
