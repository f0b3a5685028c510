"""Detection probability of temporal change for luminance windows and videos.

A window's normalized DCT amplitudes are turned into Weber contrast, scaled
by the model sensitivity to JND units, pooled with a Minkowski norm over
all non-static components and mapped through the psychometric function.
"""

from __future__ import annotations

import csv
import io
import logging
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model
from .decomposition import PATCH_DIMS, amplitude_matrix, spectrum, weber_contrast
from .geometry import (DisplayGeometry, GazePoint, code_to_luminance_into, component_frequencies,
                       degrees_per_pixel, eccentricity_deg, local_degrees_per_pixel)
from .model import DEFAULT_PARAMS, SensitivityParams

log = logging.getLogger(__name__)

STRIP_CHUNK = 2


def jnd_scale(contrast, sensitivity) -> np.ndarray:
    """Contrast in JND units: linear sensitivity times contrast, per index."""
    return np.asarray(sensitivity) * np.asarray(contrast)


def minkowski_pool(c_jnd, r: float) -> float:
    """L^r norm over every component with ``k_t > 0`` (axis 0 is time)."""
    if r < 1:
        raise ValueError("Minkowski exponent must be >= 1")
    moving = np.abs(np.asarray(c_jnd, dtype=float)[1:])
    if not moving.size:
        return 0.0
    return float(np.sum(moving ** r) ** (1.0 / r))


def sensitivity_volume(dims, e: float, geom: DisplayGeometry,
                       params: SensitivityParams = DEFAULT_PARAMS,
                       deg_per_px: float | None = None) -> np.ndarray:
    """Linear sensitivity at every ``(k_t, k_v, k_h)`` index of a window."""
    n_t, n_v, n_h = dims
    f_t, f_h, f_v = component_frequencies((n_t, n_h, n_v), geom, deg_per_px)
    return model.linear_sensitivity(f_t[:, None, None], f_h[None, None, :],
                                    f_v[None, :, None], e, params)


def patch_probability(patch, e: float, params: SensitivityParams = DEFAULT_PARAMS,
                      geom: DisplayGeometry | None = None, *, any_dims: bool = False,
                      deg_per_px: float | None = None) -> tuple[float, float, float]:
    """``(C_M, psi, p_norm)`` for one luminance window (cd/m^2, ``(t, y, x)``)."""
    patch = np.asarray(patch, dtype=float)
    if geom is None:
        raise ValueError("a display geometry is required")
    if patch.shape != PATCH_DIMS and not any_dims:
        raise ValueError(f"patch shape {patch.shape} differs from calibrated {PATCH_DIMS}; "
                         "pass any_dims=True to override")
    spec = spectrum(patch)
    contrast = weber_contrast(spec, params.L_min)
    sens = sensitivity_volume(patch.shape, e, geom, params, deg_per_px)
    c_m = minkowski_pool(jnd_scale(contrast, sens), params.r)
    psi = model.psychometric(c_m, params)
    return c_m, psi, model.normalized_probability(psi, params)


class PatchAnalyzer:
    """Batched pooled-contrast evaluation for many windows of equal shape.

    Sensitivity terms that do not depend on eccentricity are tabulated once;
    per window only the eccentricity term of the vertical scale is
    recomputed.  Arithmetic runs in ``dtype`` (single precision by default,
    which halves memory traffic); sums accumulate in double precision.
    """

    def __init__(self, geom: DisplayGeometry, params: SensitivityParams = DEFAULT_PARAMS,
                 dims=PATCH_DIMS, dtype=np.float32):
        self.geom = geom
        self.params = params
        self.dims = tuple(dims)
        self.dtype = np.dtype(dtype)
        n_t, n_v, n_h = self.dims
        f_t, f_h, f_v = component_frequencies((n_t, n_h, n_v), geom)
        self._ft_log = np.log1p(f_t)[1:]
        self._s = np.log1p(f_v)[:, None] + np.log1p(f_h)[None, :]
        self._spatial = params.b1 - params.b2 * np.power(self._s, params.b3)
        self._q = model.q_exponent(self._s, params)
        # U depends on eccentricity only through b8
        self._sp = None
        if params.b8 == 0:
            u = model.shift_u(self._ft_log[:, None, None], 0.5 * self._s, 0.5 * self._s, 0.0, params)
            self._sp = model.s_softplus(u, params).astype(self.dtype)
        mt, my, mx = (amplitude_matrix(n) for n in self.dims)
        self._mt_moving = mt[1:].astype(self.dtype)
        self._my = my.astype(self.dtype)
        self._mx_t = np.ascontiguousarray(mx.T).astype(self.dtype)
        self._dc_t, self._dc_y, self._dc_x = (m[0].astype(self.dtype) for m in (mt, my, mx))

    def sensitivity(self, e: float, deg_per_px: float | None = None, out=None) -> np.ndarray:
        """Linear sensitivity for ``k_t >= 1`` at eccentricity ``e``."""
        if deg_per_px is not None:
            vol = sensitivity_volume(self.dims, e, self.geom, self.params, deg_per_px)[1:]
            return vol.astype(self.dtype)
        e_log = np.log1p(e)
        if e_log > 0:
            scale = self._spatial - self.params.b4 * np.power(e_log, self._q)
        else:
            scale = self._spatial - self.params.b4 * model._ecc_power(e_log, self._q)
        if self._sp is None:
            u = model.shift_u(self._ft_log[:, None, None], 0.5 * self._s, 0.5 * self._s,
                              e_log, self.params)
            sp = model.s_softplus(u, self.params).astype(self.dtype)
        else:
            sp = self._sp
        out = np.multiply(sp, scale.astype(self.dtype)[None], out=out)
        np.expm1(out, out=out)
        return np.maximum(out, 0.0, out=out)

    def strip_spectra(self, strip: np.ndarray):
        """Moving amplitudes ``(n_t - 1, n_y, cols, n_x)`` and DC luminance per window.

        ``strip`` holds side-by-side windows, ``(n_t, n_y, cols * n_x)``.
        Temporal amplitudes come from differences to the first frame, so
        static content yields exact zeros.
        """
        n_t, n_y, n_x = self.dims
        nt, ny, width = strip.shape
        if (nt, ny) != (n_t, n_y) or width % n_x:
            raise ValueError(f"strip {strip.shape} does not tile into {self.dims} windows")
        cols = width // n_x
        strip = np.asarray(strip, dtype=self.dtype)
        first = strip[0]
        diff = strip - first
        # a constant has unit temporal DC amplitude, so add the first frame back
        dc_rows = (self._dc_t @ diff.reshape(nt, -1)).reshape(ny, width) + first
        dc = self._dc_y @ (dc_rows.reshape(ny, cols, n_x) @ self._dc_x)
        out = (self._mt_moving @ diff.reshape(nt, -1)).reshape(-1, n_x)
        out = (out @ self._mx_t).reshape(nt - 1, ny, width)
        out = np.matmul(self._my, out)
        return out.reshape(nt - 1, ny, cols, n_x), dc

    def pooled_strip(self, strip: np.ndarray, eccs: Sequence[float],
                     deg_per_px: Sequence[float] | None = None) -> np.ndarray:
        """Pooled JND contrast of every window in a strip."""
        n_x = self.dims[2]
        cols = strip.shape[2] // n_x
        r = self.params.r
        out = np.empty(cols)
        work = np.empty((self.dims[0] - 1,) + self.dims[1:], dtype=self.dtype)
        sens = np.empty_like(work)
        # fixed chunking keeps intermediates cache-sized and results reproducible
        for c0 in range(0, cols, STRIP_CHUNK):
            c1 = min(c0 + STRIP_CHUNK, cols)
            amps, dc = self.strip_spectra(strip[:, :, c0 * n_x:c1 * n_x])
            for k, i in enumerate(range(c0, c1)):
                s = self.sensitivity(eccs[i], None if deg_per_px is None else deg_per_px[i], out=sens)
                np.multiply(amps[:, :, k, :], s, out=work)
                np.abs(work, out=work)
                np.power(work, self.dtype.type(r), out=work)
                denom = max(float(dc[k]), self.params.L_min)
                out[i] = float(np.sum(work)) ** (1.0 / r) / denom
        return out

    def pooled(self, patches: np.ndarray, eccs: Sequence[float],
               deg_per_px: Sequence[float] | None = None) -> np.ndarray:
        """Pooled JND contrast of each window in a ``(B, t, y, x)`` stack."""
        patches = np.asarray(patches)
        b, nt, ny, nx = patches.shape
        strip = patches.transpose(1, 2, 0, 3).reshape(nt, ny, b * nx)
        return self.pooled_strip(strip, eccs, deg_per_px)


@dataclass
class VisibilityMap:
    """Per-window grid of pooled contrast and detection probabilities.

    Arrays are indexed ``(t_idx, y_idx, x_idx)``.
    """

    ecc_deg: np.ndarray
    c_m: np.ndarray
    psi: np.ndarray
    p_norm: np.ndarray
    patch_dims: tuple[int, int, int] = PATCH_DIMS
    origin: tuple[int, int, int] = (0, 0, 0)
    frame_shape: tuple[int, int] = (0, 0)
    n_frames: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.p_norm.shape

    @property
    def coverage(self) -> float:
        """Fraction of input pixel-frames covered by complete windows."""
        total = self.n_frames * self.frame_shape[0] * self.frame_shape[1]
        if not total:
            return 0.0
        nt, ny, nx = self.shape
        pt, py, px = self.patch_dims
        return nt * pt * ny * py * nx * px / total

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t_idx", "x_idx", "y_idx", "ecc_deg", "C_M", "psi", "p_norm"])
        nt, ny, nx = self.shape
        for t in range(nt):
            for y in range(ny):
                for x in range(nx):
                    writer.writerow([t, x, y, repr(float(self.ecc_deg[t, y, x])),
                                     repr(float(self.c_m[t, y, x])),
                                     repr(float(self.psi[t, y, x])),
                                     repr(float(self.p_norm[t, y, x]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, **kw) -> "VisibilityMap":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty visibility CSV")
        nt = 1 + max(int(r["t_idx"]) for r in rows)
        ny = 1 + max(int(r["y_idx"]) for r in rows)
        nx = 1 + max(int(r["x_idx"]) for r in rows)
        arrs = {k: np.zeros((nt, ny, nx)) for k in ("ecc_deg", "C_M", "psi", "p_norm")}
        for r in rows:
            idx = int(r["t_idx"]), int(r["y_idx"]), int(r["x_idx"])
            for k in arrs:
                arrs[k][idx] = float(r[k])
        return cls(ecc_deg=arrs["ecc_deg"], c_m=arrs["C_M"], psi=arrs["psi"],
                   p_norm=arrs["p_norm"], **kw)


GazeSource = GazePoint | Sequence[GazePoint] | Callable[[int], GazePoint]


def _gaze_for(gaze: GazeSource, window: int, first_frame: int, n_t: int) -> GazePoint:
    if isinstance(gaze, GazePoint):
        return gaze
    if callable(gaze):
        # sample at the middle frame of the window
        return gaze(first_frame + n_t // 2)
    return gaze[window]


def analyze_video(frames: Iterable[np.ndarray], gaze: GazeSource, geom: DisplayGeometry,
                  params: SensitivityParams = DEFAULT_PARAMS, *, workers: int = 1,
                  dims=PATCH_DIMS, local_scaling: bool = False,
                  luminance: bool = False, dtype=np.float32) -> VisibilityMap:
    """Detection probabilities over nonoverlapping windows of a video.

    ``frames`` yields 2-D arrays of display-linear values in [0, 1] (or
    cd/m^2 when ``luminance`` is set) sized ``(height_px, width_px)``.  A
    trailing partial window and partial border patches are skipped.
    ``gaze`` is a fixed point, a per-window sequence or a callable taking a
    frame index.  Results do not depend on ``workers``: each task is one
    full row of windows computed the same way in every configuration.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    n_t, n_y, n_x = dims
    shape = (geom.height_px, geom.width_px)
    rows, cols = shape[0] // n_y, shape[1] // n_x
    analyzer = PatchAnalyzer(geom, params, dims, dtype)
    centers_y = np.arange(rows) * n_y + (n_y - 1) / 2.0
    centers_x = np.arange(cols) * n_x + (n_x - 1) / 2.0
    cy, cx = np.meshgrid(centers_y, centers_x, indexing="ij")
    local_dpp = None
    if local_scaling:
        local_dpp = np.array([[local_degrees_per_pixel(geom, x, y) for x in centers_x]
                              for y in centers_y])

    results = []
    n_frames = 0
    window = np.empty((n_t,) + shape, dtype=analyzer.dtype)
    filled = 0

    def analyze_window(w):
        g = _gaze_for(gaze, w, w * n_t, n_t)
        ecc = np.asarray(eccentricity_deg(geom, g, (cx, cy)), dtype=float).reshape(rows, cols)
        c_m = np.zeros((rows, cols))

        def do_row(j):
            strip = window[:, j * n_y:(j + 1) * n_y, :cols * n_x]
            dpp = None if local_dpp is None else local_dpp[j]
            c_m[j] = analyzer.pooled_strip(strip, ecc[j], dpp)

        if pool is None:
            for j in range(rows):
                do_row(j)
        else:
            list(pool.map(do_row, range(rows)))
        results.append((ecc, c_m))

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for frame in frames:
            frame = np.asarray(frame)
            if frame.shape != shape:
                raise ValueError(f"frame shape {frame.shape} does not match display {shape}")
            n_frames += 1
            if luminance:
                window[filled] = frame
            else:
                code_to_luminance_into(geom, frame, window[filled])
            filled += 1
            if filled == n_t:
                analyze_window(len(results))
                filled = 0
    finally:
        if pool is not None:
            pool.shutdown()
    if not results:
        raise ValueError(f"need at least {n_t} frames, got {n_frames}")
    ecc_all = np.stack([r[0] for r in results])
    c_all = np.stack([r[1] for r in results])
    psi = model.psychometric(c_all, params)
    p_norm = model.normalized_probability(psi, params)
    log.info("analyzed %d windows of %dx%d patches", len(results), rows, cols)
    return VisibilityMap(ecc_deg=ecc_all, c_m=c_all, psi=np.asarray(psi), p_norm=np.asarray(p_norm),
                         patch_dims=tuple(dims), frame_shape=shape, n_frames=n_frames,
                         meta={"deg_per_px": degrees_per_pixel(geom), "local_scaling": local_scaling})
