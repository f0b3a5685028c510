"""Synthetic stimuli: windowed cross-modulated gratings under counterphase
flicker, static projections of natural windows and JND-level scaling."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .decomposition import SpectrumPatch, dct3_inverse, spectrum
from .geometry import (DisplayGeometry, code_to_luminance, degrees_per_pixel, linear_to_srgb,
                       luminance_to_code)
from .model import DEFAULT_PARAMS, SensitivityParams
from .visibility import patch_probability


@dataclass(frozen=True)
class GratingSpec:
    f_h: float
    f_v: float
    f_t: float
    contrast: float
    background: float = 0.5
    window_diameter: float = 2.0
    falloff_sigma: float = 0.1
    n_frames: int = 25
    size_px: int = 71
    temporal_phase: float = 0.0

    def __post_init__(self):
        if min(self.f_h, self.f_v, self.f_t) < 0:
            raise ValueError("frequencies must be nonnegative")
        if self.contrast < 0:
            raise ValueError("contrast must be nonnegative")
        if not 0 < self.background <= 1:
            raise ValueError("background must lie in (0, 1]")
        if self.n_frames < 2 or self.size_px < 2:
            raise ValueError("grating needs at least 2 frames and 2 pixels")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def window_profile(size_px: int, deg_per_px: float, diameter: float, sigma: float) -> np.ndarray:
    """Circular window of ``diameter`` degrees with a Gaussian edge falloff."""
    c = (size_px - 1) / 2.0
    d = (np.arange(size_px) - c) * deg_per_px
    radius = np.hypot(d[:, None], d[None, :])
    edge = radius - diameter / 2.0
    if sigma <= 0:
        return (edge <= 0).astype(float)
    return np.where(edge <= 0, 1.0, np.exp(-0.5 * (np.maximum(edge, 0.0) / sigma) ** 2))


def max_displayable_contrast(geom: DisplayGeometry, background: float) -> float:
    L0 = code_to_luminance(geom, background)
    return min(geom.peak_luminance - L0, L0 - geom.black_luminance) / L0


def generate_grating(spec: GratingSpec, geom: DisplayGeometry, *,
                     allow_out_of_gamut: bool = False) -> np.ndarray:
    """Luminance volume ``(t, y, x)`` in cd/m^2 of a windowed flickering grating.

    Spatial phase is measured from the patch center so the window and the
    cosines peak together.  Contrasts the display cannot show (negative or
    super-peak luminance) are rejected unless ``allow_out_of_gamut``.
    """
    dpp = degrees_per_pixel(geom)
    nyq_s = 0.5 / dpp
    if spec.f_h > nyq_s or spec.f_v > nyq_s:
        raise ValueError(f"spatial frequency above Nyquist limit {nyq_s:.3f} cpd")
    if spec.f_t > 0.5 * geom.frame_rate:
        raise ValueError(f"temporal frequency above Nyquist limit {0.5 * geom.frame_rate} Hz")
    if not allow_out_of_gamut and spec.contrast > max_displayable_contrast(geom, spec.background) + 1e-12:
        raise ValueError("contrast exceeds what the display can reproduce around the background")
    L0 = code_to_luminance(geom, spec.background)
    n = spec.size_px
    pos = (np.arange(n) - (n - 1) / 2.0) * dpp
    w = window_profile(n, dpp, spec.window_diameter, spec.falloff_sigma)
    spatial = w * np.cos(2 * np.pi * spec.f_v * pos)[:, None] * np.cos(2 * np.pi * spec.f_h * pos)[None, :]
    t = np.arange(spec.n_frames) / geom.frame_rate
    temporal = np.cos(2 * np.pi * spec.f_t * t + spec.temporal_phase)
    return L0 * (1.0 + spec.contrast * temporal[:, None, None] * spatial[None])


def static_version(patch) -> np.ndarray:
    """Remove every temporal component except the static one."""
    spec = spectrum(patch)
    amps = spec.delta_L.copy()
    amps[1:] = 0.0
    return dct3_inverse(SpectrumPatch(amps))


def scale_to_jnd(patch, target: float, e: float, geom: DisplayGeometry,
                 params: SensitivityParams = DEFAULT_PARAMS, *, any_dims: bool = False) -> np.ndarray:
    """Rescale the temporal (non-static) content so the pooled contrast equals ``target``."""
    patch = np.asarray(patch, dtype=float)
    if target < 0:
        raise ValueError("target JND level must be nonnegative")
    c_m = patch_probability(patch, e, params, geom, any_dims=any_dims)[0]
    if c_m == 0:
        raise ValueError("patch has no visible temporal energy to scale")
    still = static_version(patch)
    return still + (target / c_m) * (patch - still)


def encode_frames(volume, geom: DisplayGeometry, bit_depth: int = 8) -> list[np.ndarray]:
    """sRGB-encoded integer frames for a luminance volume."""
    code = linear_to_srgb(luminance_to_code(geom, np.asarray(volume)))
    top = 2 ** bit_depth - 1
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    return [np.round(f * top).astype(dtype) for f in code]

