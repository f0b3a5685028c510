"""Transitions between two images that hold a constant detection probability.

The blend ``(1 - alpha) * I_s + alpha * I_t`` is advanced one 25-frame
window at a time.  For each window the largest step ``delta`` whose
predicted (normalized) detection probability matches the target is found
with Brent's method; larger images are split into 71x71 sub-windows and
the most visible one decides.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.optimize

from . import model
from .decomposition import PATCH_DIMS, amplitude_factors, dct1_forward
from .geometry import DisplayGeometry, GazePoint, code_to_luminance, eccentricity_deg
from .model import DEFAULT_PARAMS, SensitivityParams
from .visibility import PatchAnalyzer, patch_probability

log = logging.getLogger(__name__)

MIN_STEP = 1e-5
PROB_TOL = 0.005

FLAG_OK = "ok"
FLAG_FINISHED = "finished"        # the whole remaining step stays below target
FLAG_TOO_VISIBLE = "too_visible"  # even the minimal step exceeds target
FLAG_UNRESOLVED = "unresolved"    # root found but probability outside tolerance


def blend(I_s, I_t, alpha: float) -> np.ndarray:
    I_s = np.asarray(I_s, dtype=float)
    I_t = np.asarray(I_t, dtype=float)
    if I_s.shape != I_t.shape:
        raise ValueError(f"image shapes differ: {I_s.shape} vs {I_t.shape}")
    return (1.0 - alpha) * I_s + alpha * I_t


def window_alphas(alpha_start: float, delta: float, n_t: int = PATCH_DIMS[0]) -> np.ndarray:
    return alpha_start + delta * np.arange(n_t) / (n_t - 1)


def window_frames(I_s, I_t, alpha_start: float, delta: float, n_t: int = PATCH_DIMS[0]) -> np.ndarray:
    """``(n_t, H, W)`` display values with alpha rising linearly across the window."""
    return np.stack([blend(I_s, I_t, a) for a in window_alphas(alpha_start, delta, n_t)])


def _subwindow_slices(shape, size):
    rows, cols = shape[0] // size[0], shape[1] // size[1]
    if rows == 0 or cols == 0:
        raise ValueError(f"image {shape} smaller than one {size} window")
    return [(slice(j * size[0], (j + 1) * size[0]), slice(i * size[1], (i + 1) * size[1]))
            for j in range(rows) for i in range(cols)]


def window_probability(I_s, I_t, alpha_start: float, delta: float, e: float,
                       params: SensitivityParams = DEFAULT_PARAMS,
                       geom: DisplayGeometry | None = None, dims=PATCH_DIMS) -> float:
    """Max normalized detection probability over the 71x71 sub-windows.

    Builds the frames explicitly; ``BlendWindow`` gives the same value
    without doing so.
    """
    if delta < 0 or alpha_start + delta > 1 + 1e-12:
        raise ValueError("need delta >= 0 and alpha_start + delta <= 1")
    lum = code_to_luminance(geom, window_frames(I_s, I_t, alpha_start, delta, dims[0]))
    best = 0.0
    for sy, sx in _subwindow_slices(lum.shape[1:], dims[1:]):
        best = max(best, patch_probability(lum[:, sy, sx], e, params, geom,
                                           any_dims=tuple(dims) != PATCH_DIMS)[2])
    return best


class BlendWindow:
    """Closed-form window probability for a linear blend of two images.

    With ``alpha_n = a + delta * n / (N_t - 1)`` the only temporal content
    is a ramp, so every non-static amplitude equals ``delta`` times a
    fixed spectrum.  Pooled contrast is then
    ``delta * K(e) / max(dc(a, delta), L_min)`` per sub-window.
    """

    def __init__(self, I_s, I_t, geom: DisplayGeometry,
                 params: SensitivityParams = DEFAULT_PARAMS, dims=PATCH_DIMS):
        I_s = np.asarray(I_s, dtype=float)
        I_t = np.asarray(I_t, dtype=float)
        if I_s.shape != I_t.shape:
            raise ValueError(f"image shapes differ: {I_s.shape} vs {I_t.shape}")
        self.params = params
        self.dims = tuple(dims)
        n_t = dims[0]
        L_s = code_to_luminance(geom, I_s)
        diff = code_to_luminance(geom, I_t) - L_s
        ramp = dct1_forward(np.arange(n_t) / (n_t - 1)) * amplitude_factors(n_t)
        self._ramp = np.abs(ramp[1:])
        self._ramp_dc = float(ramp[0])
        fy, fx = amplitude_factors(dims[1]), amplitude_factors(dims[2])
        self._diff_amps = []
        self._dc_s = []
        self._dc_d = []
        for sy, sx in _subwindow_slices(I_s.shape, dims[1:]):
            amp_d = dct1_forward(dct1_forward(diff[sy, sx], axis=0), axis=1) * fy[:, None] * fx[None, :]
            amp_s = dct1_forward(dct1_forward(L_s[sy, sx], axis=0), axis=1) * fy[:, None] * fx[None, :]
            self._diff_amps.append(np.abs(amp_d))
            self._dc_s.append(float(amp_s[0, 0]))
            self._dc_d.append(float(amp_d[0, 0]))
        self._dc_s = np.array(self._dc_s)
        self._dc_d = np.array(self._dc_d)
        self._analyzer = PatchAnalyzer(geom, params, dims, dtype=np.float64)
        self._gain = {}

    @property
    def n_subwindows(self) -> int:
        return len(self._diff_amps)

    def gain(self, e: float) -> np.ndarray:
        """Pooled JND-weighted amplitude per unit step (before dividing by background)."""
        if e not in self._gain:
            sens = self._analyzer.sensitivity(e)
            r = self.params.r
            out = []
            for amp in self._diff_amps:
                w = sens * self._ramp[:, None, None] * amp[None]
                out.append(np.sum(w ** r) ** (1.0 / r))
            self._gain[e] = np.array(out)
        return self._gain[e]

    def pooled(self, alpha_start: float, delta: float, e: float) -> np.ndarray:
        dc = self._dc_s + (alpha_start + delta * self._ramp_dc) * self._dc_d
        return delta * self.gain(e) / np.maximum(dc, self.params.L_min)

    def probability(self, alpha_start: float, delta: float, e: float) -> float:
        return float(np.max(model.detection_probability(self.pooled(alpha_start, delta, e), self.params)))


@dataclass
class StepResult:
    delta: float
    probability: float
    flag: str = FLAG_OK


def solve_step(window: BlendWindow, alpha_start: float, p_d: float, e: float,
               *, min_step: float = MIN_STEP, prob_tol: float = PROB_TOL) -> StepResult:
    """Largest blend step whose predicted detection probability is ``p_d``."""
    if not 0 < p_d < 1:
        raise ValueError("target probability must lie in (0, 1)")
    if alpha_start >= 1:
        raise ValueError("transition already complete")
    hi = 1.0 - alpha_start

    def excess(delta):
        return window.probability(alpha_start, delta, e) - p_d

    p_hi = window.probability(alpha_start, hi, e)
    if p_hi < p_d:
        return StepResult(hi, p_hi, FLAG_FINISHED)
    lo = min(min_step, hi)
    p_lo = window.probability(alpha_start, lo, e)
    if p_lo > p_d:
        warnings.warn(f"minimal step already exceeds target p_d={p_d} (p={p_lo:.4f}) "
                      f"at e={e}", RuntimeWarning, stacklevel=2)
        return StepResult(lo, p_lo, FLAG_TOO_VISIBLE)
    root = scipy.optimize.brentq(excess, lo, hi, xtol=1e-12, rtol=1e-12, maxiter=200)
    p = window.probability(alpha_start, root, e)
    if abs(p - p_d) > prob_tol:
        warnings.warn(f"step solve left |P - p_d| = {abs(p - p_d):.4f}", RuntimeWarning, stacklevel=2)
        return StepResult(root, p, FLAG_UNRESOLVED)
    return StepResult(root, p, FLAG_OK)


@dataclass
class TransitionSchedule:
    """Per-eccentricity alpha sequences at window boundaries.

    ``alphas[i]`` starts at 0 and ends at exactly 1; window ``n`` at
    eccentricity ``eccentricities[i]`` ramps from ``alphas[i][n]`` to
    ``alphas[i][n + 1]`` over ``window_frames`` frames.
    """

    p_d: float
    eccentricities: list[float]
    alphas: list[list[float]]
    probabilities: list[list[float]] = field(default_factory=list)
    flags: list[list[str]] = field(default_factory=list)
    fps: float = 120.0
    window_frames: int = PATCH_DIMS[0]

    def n_windows(self, i: int) -> int:
        return len(self.alphas[i]) - 1

    def steps(self, i: int) -> np.ndarray:
        return np.diff(self.alphas[i])

    def to_dict(self) -> dict:
        return {"p_d": self.p_d, "eccentricities": list(self.eccentricities),
                "alphas": self.alphas, "probabilities": self.probabilities,
                "flags": self.flags, "fps": self.fps, "window_frames": self.window_frames,
                "window_seconds": self.window_frames / self.fps}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "TransitionSchedule":
        return cls(p_d=d["p_d"], eccentricities=list(d["eccentricities"]),
                   alphas=[list(a) for a in d["alphas"]],
                   probabilities=[list(p) for p in d.get("probabilities", [])],
                   flags=[list(f) for f in d.get("flags", [])],
                   fps=d.get("fps", 120.0), window_frames=d.get("window_frames", PATCH_DIMS[0]))

    @classmethod
    def from_json(cls, path) -> "TransitionSchedule":
        with open(Path(path)) as fh:
            return cls.from_dict(json.load(fh))


def schedule_for(window: BlendWindow, p_d: float, e: float, *, max_windows: int = 100_000):
    """Greedy sequence of steps from alpha 0 to 1 at one eccentricity."""
    alphas, probs, flags = [0.0], [], []
    alpha = 0.0
    while alpha < 1.0:
        if len(probs) >= max_windows:
            raise RuntimeError(f"schedule exceeded {max_windows} windows at e={e}")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            step = solve_step(window, alpha, p_d, e)
        if step.flag == FLAG_TOO_VISIBLE:
            log.warning("minimal step visible above p_d=%s at e=%s", p_d, e)
        alpha = 1.0 if step.flag == FLAG_FINISHED or alpha + step.delta >= 1.0 - 1e-12 else alpha + step.delta
        alphas.append(alpha)
        probs.append(step.probability)
        flags.append(step.flag)
    return alphas, probs, flags


def build_schedule(I_s, I_t, p_d: float, geom: DisplayGeometry,
                   params: SensitivityParams = DEFAULT_PARAMS,
                   eccentricities=(0.0, 10.0, 20.0, 30.0), *, window: BlendWindow | None = None,
                   max_windows: int = 100_000) -> TransitionSchedule:
    window = window or BlendWindow(I_s, I_t, geom, params)
    sched = TransitionSchedule(p_d=p_d, eccentricities=[float(e) for e in eccentricities],
                               alphas=[], fps=geom.frame_rate, window_frames=window.dims[0])
    for e in sched.eccentricities:
        a, p, f = schedule_for(window, p_d, e, max_windows=max_windows)
        sched.alphas.append(a)
        sched.probabilities.append(p)
        sched.flags.append(f)
    return sched


# ---------------------------------------------------------------- gaze-adaptive playback

def _alpha_curve(alphas, window_frames):
    """Frame positions and alpha values of the piecewise-linear playback curve."""
    alphas = np.asarray(alphas, dtype=float)
    n = len(alphas) - 1
    frames = np.arange(n * window_frames, dtype=float)
    win = (frames // window_frames).astype(int)
    pos = frames % window_frames
    vals = alphas[win] + (alphas[win + 1] - alphas[win]) * pos / (window_frames - 1)
    return frames, vals


def _alpha_at(schedule: TransitionSchedule, i: int, progress: float) -> float:
    frames, vals = _alpha_curve(schedule.alphas[i], schedule.window_frames)
    if len(frames) == 1:
        return float(vals[-1]) if progress >= 1 else float(vals[0])
    return float(np.interp(progress * (len(frames) - 1), frames, vals))


def _bracket(schedule: TransitionSchedule, e: float):
    eccs = schedule.eccentricities
    e = min(max(e, eccs[0]), eccs[-1])
    j = bisect_right(eccs, e) - 1
    if j >= len(eccs) - 1:
        return len(eccs) - 1, len(eccs) - 1, 0.0
    w = (e - eccs[j]) / (eccs[j + 1] - eccs[j])
    return j, j + 1, w


def adaptive_alpha(schedule: TransitionSchedule, e: float, progress: float) -> float:
    """Alpha at normalized progress ``[0, 1]`` for the current eccentricity.

    Linear interpolation between the two bracketing stored sequences;
    eccentricities outside the stored range are clamped.
    """
    progress = min(max(progress, 0.0), 1.0)
    j, k, w = _bracket(schedule, e)
    a = _alpha_at(schedule, j, progress)
    if w == 0.0:
        return a
    return (1.0 - w) * a + w * _alpha_at(schedule, k, progress)


def duration_frames(schedule: TransitionSchedule, e: float) -> float:
    j, k, w = _bracket(schedule, e)
    nj = schedule.n_windows(j) * schedule.window_frames
    nk = schedule.n_windows(k) * schedule.window_frames
    return (1.0 - w) * nj + w * nk


def progress_for_alpha(schedule: TransitionSchedule, e: float, alpha: float, tol: float = 1e-10) -> float:
    """Smallest progress at which ``adaptive_alpha`` reaches ``alpha``."""
    if adaptive_alpha(schedule, e, 0.0) >= alpha:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if adaptive_alpha(schedule, e, mid) >= alpha:
            hi = mid
        else:
            lo = mid
    return hi


def play(schedule: TransitionSchedule, eccentricity_at, max_frames: int = 1_000_000) -> list[float]:
    """Per-frame alpha for a possibly moving gaze.

    ``eccentricity_at(frame)`` gives the current eccentricity of the
    transition region.  When it changes, progress is re-anchored so alpha
    continues from its current value; alpha therefore never decreases.
    """
    out = []
    alpha = 0.0
    e_prev = None
    progress = 0.0
    for frame in range(max_frames):
        e = float(eccentricity_at(frame))
        if e_prev is not None and e != e_prev:
            progress = progress_for_alpha(schedule, e, alpha)
        e_prev = e
        alpha = max(alpha, adaptive_alpha(schedule, e, progress))
        out.append(alpha)
        if alpha >= 1.0:
            break
        n = duration_frames(schedule, e)
        progress = min(1.0, progress + 1.0 / max(n - 1, 1.0))
    return out


def read_gaze_trace(path) -> list[tuple[int, GazePoint]]:
    with open(Path(path), newline="") as fh:
        rows = [(int(r["frame"]), GazePoint(float(r["x_px"]), float(r["y_px"])))
                for r in csv.DictReader(fh)]
    if not rows:
        raise ValueError("empty gaze trace")
    return sorted(rows, key=lambda t: t[0])


def gaze_lookup(trace):
    """Gaze at a frame: the latest trace sample at or before it."""
    frames = [f for f, _ in trace]

    def at(frame):
        i = bisect_right(frames, frame) - 1
        return trace[max(i, 0)][1]
    return at


def region_eccentricity(geom: DisplayGeometry, gaze_at, center: GazePoint):
    def ecc(frame):
        return eccentricity_deg(geom, gaze_at(frame), center)
    return ecc


def render(I_s, I_t, schedule: TransitionSchedule, eccentricity_at) -> list[np.ndarray]:
    """Blended display-linear frames following gaze-adaptive playback."""
    return [blend(I_s, I_t, a) for a in play(schedule, eccentricity_at)]
