"""Physical viewing model: display size, viewer distance and luminance range.

Pixel coordinates are index-based: pixel ``i`` along an axis has its center
at coordinate ``i`` and the screen center sits at ``(n - 1) / 2``.  The eye
is placed on the screen normal through the screen center.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

# JSON config key -> DisplayGeometry field
_CONFIG_KEYS = {
    "width_px": "width_px",
    "height_px": "height_px",
    "width_mm": "width_mm",
    "height_mm": "height_mm",
    "distance_mm": "viewing_distance_mm",
    "peak_cdm2": "peak_luminance",
    "black_cdm2": "black_luminance",
    "fps": "frame_rate",
}


@dataclass(frozen=True)
class DisplayGeometry:
    width_px: int
    height_px: int
    width_mm: float
    height_mm: float
    viewing_distance_mm: float
    peak_luminance: float
    black_luminance: float = 0.0
    frame_rate: float = 120.0

    def __post_init__(self):
        for name in ("width_px", "height_px", "width_mm", "height_mm",
                     "viewing_distance_mm", "peak_luminance", "frame_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.black_luminance < 0 or self.black_luminance >= self.peak_luminance:
            raise ValueError("black_luminance must lie in [0, peak_luminance)")

    @classmethod
    def from_contrast_ratio(cls, ratio: float, **kwargs) -> "DisplayGeometry":
        """Build a geometry whose black level is ``peak / ratio``."""
        kwargs["black_luminance"] = kwargs["peak_luminance"] / ratio
        return cls(**kwargs)

    @classmethod
    def from_dict(cls, cfg: dict) -> "DisplayGeometry":
        unknown = set(cfg) - set(_CONFIG_KEYS)
        if unknown:
            raise ValueError(f"unknown geometry keys: {sorted(unknown)}")
        kwargs = {_CONFIG_KEYS[k]: v for k, v in cfg.items()}
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "DisplayGeometry":
        with open(Path(path)) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        inv = {v: k for k, v in _CONFIG_KEYS.items()}
        return {inv[k]: v for k, v in asdict(self).items()}

    @property
    def pixel_pitch_mm(self) -> tuple[float, float]:
        return self.width_mm / self.width_px, self.height_mm / self.height_px

    def cropped(self, width_px: int, height_px: int) -> "DisplayGeometry":
        """A centered region of this display with the same pixel pitch."""
        pw, ph = self.pixel_pitch_mm
        return DisplayGeometry(width_px, height_px, pw * width_px, ph * height_px,
                               self.viewing_distance_mm, self.peak_luminance,
                               self.black_luminance, self.frame_rate)


@dataclass(frozen=True)
class GazePoint:
    x: float
    y: float


def reference_display() -> DisplayGeometry:
    """55-inch 4K OLED viewed from 62 cm at 120 Hz."""
    return DisplayGeometry(
        width_px=3840, height_px=2160, width_mm=1218.0, height_mm=685.0,
        viewing_distance_mm=620.0, peak_luminance=167.33, black_luminance=0.0,
        frame_rate=120.0,
    )


def degrees_per_pixel(geom: DisplayGeometry) -> float:
    """Angular size of one pixel at the screen center (horizontal pitch)."""
    pitch = geom.pixel_pitch_mm[0]
    return math.degrees(math.atan(pitch / geom.viewing_distance_mm))


def pixels_per_degree(geom: DisplayGeometry) -> float:
    return 1.0 / degrees_per_pixel(geom)


def _screen_mm(geom: DisplayGeometry, x, y):
    px, py = geom.pixel_pitch_mm
    return ((np.asarray(x, dtype=float) - (geom.width_px - 1) / 2.0) * px,
            (np.asarray(y, dtype=float) - (geom.height_px - 1) / 2.0) * py)


def eccentricity_deg(geom: DisplayGeometry, gaze: GazePoint, point) -> np.ndarray | float:
    """Angle in degrees between the eye->gaze and eye->point rays.

    ``point`` may be a GazePoint or an ``(x, y)`` pair of scalars/arrays.
    """
    if isinstance(point, GazePoint):
        px, py = point.x, point.y
    else:
        px, py = point
    gx, gy = _screen_mm(geom, gaze.x, gaze.y)
    qx, qy = _screen_mm(geom, px, py)
    d = geom.viewing_distance_mm
    # atan2(|a x b|, a.b) stays accurate for tiny angles, unlike acos
    cx = gy * d - d * qy
    cy = d * qx - gx * d
    cz = gx * qy - gy * qx
    cross = np.sqrt(cx * cx + cy * cy + cz * cz)
    dot = gx * qx + gy * qy + d * d
    ecc = np.degrees(np.arctan2(cross, dot))
    return float(ecc) if np.ndim(ecc) == 0 else ecc


def local_degrees_per_pixel(geom: DisplayGeometry, x: float, y: float) -> float:
    """Horizontal angular extent of the pixel centered at ``(x, y)``."""
    return float(eccentricity_deg(geom, GazePoint(x - 0.5, y), (x + 0.5, y)))


def code_to_luminance(geom: DisplayGeometry, v):
    """Map display-linear values in [0, 1] to luminance in cd/m^2."""
    v = np.asarray(v, dtype=float)
    if v.size and (v.min() < 0.0 or v.max() > 1.0):
        warnings.warn("display values outside [0, 1] were clamped", RuntimeWarning, stacklevel=2)
        v = np.clip(v, 0.0, 1.0)
    lum = geom.black_luminance + (geom.peak_luminance - geom.black_luminance) * v
    return float(lum) if lum.ndim == 0 else lum


def code_to_luminance_into(geom: DisplayGeometry, v, out: np.ndarray) -> np.ndarray:
    """``code_to_luminance`` writing into a preallocated array (any float dtype)."""
    out[...] = v
    lo, hi = out.min(), out.max()
    if lo < 0.0 or hi > 1.0:
        warnings.warn("display values outside [0, 1] were clamped", RuntimeWarning, stacklevel=2)
        np.clip(out, 0.0, 1.0, out=out)
    out *= out.dtype.type(geom.peak_luminance - geom.black_luminance)
    if geom.black_luminance:
        out += out.dtype.type(geom.black_luminance)
    return out


def luminance_to_code(geom: DisplayGeometry, lum):
    lum = np.asarray(lum, dtype=float)
    v = (lum - geom.black_luminance) / (geom.peak_luminance - geom.black_luminance)
    return float(v) if v.ndim == 0 else v


def srgb_to_linear(v):
    """Standard sRGB electro-optical transfer function on values in [0, 1]."""
    v = np.asarray(v, dtype=float)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(v):
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    return np.where(v <= 0.0031308, v * 12.92, 1.055 * np.power(v, 1 / 2.4) - 0.055)


def component_frequencies(patch_dims: tuple[int, int, int], geom: DisplayGeometry,
                          deg_per_px: float | None = None):
    """Physical frequency of every DCT-I index along each patch axis.

    ``patch_dims`` is ``(n_t, n_h, n_v)``.  Returns ``(f_t, f_h, f_v)`` as 1-D
    arrays in Hz, cpd and cpd.
    """
    if any(n < 2 for n in patch_dims):
        raise ValueError(f"every patch dimension must be >= 2, got {patch_dims}")
    n_t, n_h, n_v = patch_dims
    if deg_per_px is None:
        deg_per_px = degrees_per_pixel(geom)
    f_t = np.arange(n_t) / (2.0 * (n_t - 1)) * geom.frame_rate
    f_h = np.arange(n_h) / (2.0 * (n_h - 1)) / deg_per_px
    f_v = np.arange(n_v) / (2.0 * (n_v - 1)) / deg_per_px
    return f_t, f_h, f_v
