"""Spatio-temporal DCT-I decomposition of luminance windows.

Volumes are stored ``(t, y, x)``: axis 0 is time, axis 1 vertical (rows),
axis 2 horizontal (columns).  Spectrum indices follow the same order,
``(k_t, k_v, k_h)``.

Amplitudes are normalized so that a volume equal to
``A * cos(pi k_t n_t / (N_t-1)) * cos(pi k_v n_v / (N_v-1)) * cos(pi k_h n_h / (N_h-1))``
has amplitude exactly ``A`` at ``(k_t, k_v, k_h)``.  The inverse is then a
plain cosine synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

PATCH_DIMS = (25, 71, 71)

_AXES = (-3, -2, -1)


def dct1_forward(x, axis: int = -1) -> np.ndarray:
    """Unnormalized DCT-I along ``axis``.

    ``y_k = x_0 + (-1)^k x_{N-1} + 2 sum_{n=1}^{N-2} x_n cos(pi k n / (N-1))``
    """
    x = np.asarray(x, dtype=float)
    if x.shape[axis] < 2:
        raise ValueError("DCT-I needs at least two samples along the transform axis")
    return scipy.fft.dct(x, type=1, axis=axis)


def dct3_separable(patch) -> np.ndarray:
    """Raw DCT-I coefficients over the last three axes."""
    patch = np.asarray(patch, dtype=float)
    if patch.ndim < 3 or min(patch.shape[-3:]) < 2:
        raise ValueError(f"expected a volume with every dimension >= 2, got {patch.shape}")
    return scipy.fft.dctn(patch, type=1, axes=_AXES)


@lru_cache(maxsize=None)
def amplitude_factors(n: int) -> np.ndarray:
    """Per-index scale turning raw DCT-I coefficients into cosine amplitudes."""
    f = np.full(n, 2.0)
    f[0] = f[-1] = 1.0
    f /= 2.0 * (n - 1)
    f.flags.writeable = False
    return f


def _factor_volume(dims) -> np.ndarray:
    ft, fv, fh = (amplitude_factors(n) for n in dims)
    return ft[:, None, None] * fv[None, :, None] * fh[None, None, :]


def normalize_amplitudes(raw) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    return raw * _factor_volume(raw.shape[-3:])


@dataclass
class SpectrumPatch:
    """Cosine amplitudes (cd/m^2) of one luminance window."""

    delta_L: np.ndarray

    @property
    def dc_luminance(self) -> float:
        return float(self.delta_L[0, 0, 0])

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.delta_L.shape)


def spectrum(patch) -> SpectrumPatch:
    return SpectrumPatch(normalize_amplitudes(dct3_separable(patch)))


def weber_contrast(spec: SpectrumPatch, L_min: float) -> np.ndarray:
    """Band-limited Weber contrast; the background is clipped below at ``L_min``."""
    if L_min <= 0:
        raise ValueError("L_min must be positive")
    return spec.delta_L / max(spec.dc_luminance, L_min)


def dct3_inverse(spec: SpectrumPatch) -> np.ndarray:
    """Cosine synthesis from amplitudes; exact inverse of ``spectrum``."""
    amps = np.asarray(spec.delta_L, dtype=float)
    raw = amps / _factor_volume(amps.shape)
    return scipy.fft.idctn(raw, type=1, axes=_AXES)


def cosine_basis(dims, index, amplitude: float = 1.0) -> np.ndarray:
    """The volume whose only nonzero amplitude is ``amplitude`` at ``index``."""
    out = np.full(dims, float(amplitude))
    for ax, (n, k) in enumerate(zip(dims, index)):
        shape = [1, 1, 1]
        shape[ax] = n
        out = out * np.cos(np.pi * k * np.arange(n) / (n - 1)).reshape(shape)
    return out


@lru_cache(maxsize=None)
def amplitude_matrix(n: int) -> np.ndarray:
    """Dense DCT-I matrix with amplitude normalization folded in."""
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = 2.0 * np.cos(np.pi * k * m / (n - 1))
    mat[:, 0] = 1.0
    mat[:, -1] = (-1.0) ** np.arange(n)
    mat *= amplitude_factors(n)[:, None]
    mat.flags.writeable = False
    return mat


def batch_amplitudes(patches: np.ndarray) -> np.ndarray:
    """Normalized spectra of a ``(B, n_t, n_y, n_x)`` stack via dense products.

    Results for one patch do not depend on the other patches in the stack
    only when the stack shape is held fixed; callers needing bit-identical
    output across runs must batch identically.
    """
    b, nt, ny, nx = patches.shape
    mt, my, mx = amplitude_matrix(nt), amplitude_matrix(ny), amplitude_matrix(nx)
    out = patches @ mx.T
    out = np.matmul(my, out)
    out = np.matmul(mt, out.reshape(b, nt, ny * nx)).reshape(b, nt, ny, nx)
    return out


def strip_amplitudes(strip: np.ndarray, n_x: int) -> np.ndarray:
    """Normalized spectra of side-by-side windows in a ``(n_t, n_y, cols * n_x)`` strip.

    Returns ``(n_t, n_y, cols, n_x)``; window ``i`` is ``out[:, :, i, :]``.
    The temporal transform runs on differences from the first frame, so a
    static strip has exactly zero amplitude for every ``k_t > 0``.
    """
    nt, ny, width = strip.shape
    if width % n_x:
        raise ValueError(f"strip width {width} is not a multiple of {n_x}")
    cols = width // n_x
    mt, my, mx = amplitude_matrix(nt), amplitude_matrix(ny), amplitude_matrix(n_x)
    first = strip[0]
    diff = strip - first
    out = (diff.reshape(-1, n_x) @ mx.T).reshape(nt, ny, width)
    out = np.matmul(my, out)
    out = (mt @ out.reshape(nt, -1)).reshape(nt, ny, width)
    base = my @ (first.reshape(-1, n_x) @ mx.T).reshape(ny, width)
    out[0] += base
    return out.reshape(nt, ny, cols, n_x)
