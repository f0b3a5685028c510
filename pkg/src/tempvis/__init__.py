"""Visibility of temporal luminance changes across the visual field."""

from .geometry import DisplayGeometry, GazePoint, reference_display
from .model import DEFAULT_PARAMS, SensitivityParams
from .visibility import VisibilityMap, analyze_video, patch_probability

__version__ = "0.1.0"

__all__ = ["DisplayGeometry", "GazePoint", "reference_display", "DEFAULT_PARAMS",
           "SensitivityParams", "VisibilityMap", "analyze_video", "patch_probability"]
