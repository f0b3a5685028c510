"""Eccentricity-dependent spatio-temporal contrast sensitivity.

Frequencies and eccentricity enter the model through the power transform
``ln(x + 1)``.  The foveal temporal curve is a cubic in that domain
(truncated at zero with a softplus); spatial frequency and eccentricity
scale it vertically (``scale_t``) and shift it along the temporal axis
(``shift_u``).

All functions accept scalars or broadcastable numpy arrays.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class SensitivityParams:
    """Calibrated model constants.  Defaults are the published calibration."""

    a: tuple[float, ...] = (3.2714, 0.3830, 0.7669, -0.2555)
    b1: float = 1.0051
    b2: float = 0.1830
    b3: float = 0.9517
    b4: float = 0.0173
    b5: tuple[float, float, float] = (-0.1375, 0.3753, 2.3855)
    b6: float = 0.0
    b7: float = 0.0
    b8: float = 0.0
    r: float = 1.9932
    L_min: float = 50.0
    p_g: float = 0.5
    p_l: float = 0.0
    beta0: float = 1.7934
    beta1: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b5", tuple(float(x) for x in self.b5))
        if len(self.b5) != 3:
            raise ValueError("b5 must have three components")
        if len(self.a) < 1:
            raise ValueError("a needs at least one coefficient")
        for name in ("b1", "b2", "b3", "b4", "b6", "b7", "b8"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.r < 1:
            raise ValueError("Minkowski exponent r must be >= 1")
        if self.L_min <= 0:
            raise ValueError("L_min must be positive")
        if not 0 < self.p_g < 1:
            raise ValueError("guess rate must lie in (0, 1)")
        if not 0 <= self.p_l < 1:
            raise ValueError("lapse rate must lie in [0, 1)")
        if self.beta0 <= 0 or self.beta1 <= 0:
            raise ValueError("psychometric scale and slope must be positive")

    @property
    def b(self) -> np.ndarray:
        """Shape parameters as a flat vector ``b1..b4, b51, b52, b53, b6..b8``."""
        return np.array([self.b1, self.b2, self.b3, self.b4, *self.b5,
                         self.b6, self.b7, self.b8])

    def with_b(self, vec) -> "SensitivityParams":
        v = [float(x) for x in vec]
        return replace(self, b1=v[0], b2=v[1], b3=v[2], b4=v[3], b5=tuple(v[4:7]),
                       b6=v[7], b7=v[8], b8=v[9])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["a"] = list(self.a)
        d["b5"] = list(self.b5)
        return d

    @classmethod
    def from_dict(cls, overrides: dict, base: "SensitivityParams | None" = None):
        base = base or cls()
        unknown = set(overrides) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown parameter names: {sorted(unknown)}")
        return replace(base, **overrides)

    @classmethod
    def from_json(cls, path) -> "SensitivityParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_PARAMS = SensitivityParams()

B_NAMES = ("b1", "b2", "b3", "b4", "b51", "b52", "b53", "b6", "b7", "b8")


class StimulusCoords(NamedTuple):
    f_t: float
    f_h: float
    f_v: float
    e: float


def power_transform(x, lam1: float = 0.0, lam2: float = 1.0):
    """Two-parameter Box-Cox transform; ``(0, 1)`` gives ``ln(x + 1)``."""
    x = np.asarray(x, dtype=float)
    shifted = x + lam2
    if np.any(shifted <= 0):
        raise ValueError("power transform requires x + lam2 > 0")
    if lam1 == 0:
        out = np.log1p(x) if lam2 == 1 else np.log(shifted)
    else:
        out = (shifted ** lam1 - 1.0) / lam1
    return float(out) if out.ndim == 0 else out


def inverse_power_transform(y, lam1: float = 0.0, lam2: float = 1.0):
    y = np.asarray(y, dtype=float)
    if lam1 == 0:
        out = np.expm1(y) if lam2 == 1 else np.exp(y) - lam2
    else:
        out = (lam1 * y + 1.0) ** (1.0 / lam1) - lam2
    return float(out) if out.ndim == 0 else out


def s_delange(ft_log, params: SensitivityParams = DEFAULT_PARAMS):
    """Foveal log-sensitivity polynomial (Horner evaluation)."""
    x = np.asarray(ft_log, dtype=float)
    out = np.zeros_like(x)
    for coef in reversed(params.a):
        out = out * x + coef
    return out if out.ndim else float(out)


def softplus(x):
    x = np.asarray(x, dtype=float)
    out = np.logaddexp(0.0, x)
    return out if out.ndim else float(out)


def s_softplus(ft_log, params: SensitivityParams = DEFAULT_PARAMS):
    return softplus(s_delange(ft_log, params))


def q_exponent(s, params: SensitivityParams = DEFAULT_PARAMS):
    b51, b52, b53 = params.b5
    s = np.asarray(s, dtype=float)
    return (b51 * s + b52) * s + b53


def _ecc_power(e_log, q):
    # 0**q: 0 for q != 0 (no eccentricity term at the fovea), 1 for q == 0
    e_log, q = np.broadcast_arrays(np.asarray(e_log, dtype=float), np.asarray(q, dtype=float))
    safe = np.where(e_log > 0, e_log, 1.0)
    with np.errstate(over="ignore"):
        powered = np.power(safe, q)
    return np.where(e_log > 0, powered, np.where(q == 0, 1.0, 0.0))


def scale_t(fh_log, fv_log, e_log, params: SensitivityParams = DEFAULT_PARAMS):
    """Vertical scale of the temporal curve.

    The eccentricity term is subtracted so sensitivity falls with
    eccentricity; ``b2`` and ``b4`` both compress the curve.
    """
    s = np.asarray(fh_log, dtype=float) + np.asarray(fv_log, dtype=float)
    spatial = params.b2 * np.power(s, params.b3)
    ecc = params.b4 * _ecc_power(e_log, q_exponent(s, params))
    out = params.b1 - spatial - ecc
    return out if np.ndim(out) else float(out)


def shift_u(ft_log, fh_log, fv_log, e_log, params: SensitivityParams = DEFAULT_PARAMS):
    s = np.asarray(fh_log, dtype=float) + np.asarray(fv_log, dtype=float)
    out = np.asarray(ft_log, dtype=float) - params.b6 + params.b7 * s + params.b8 * np.asarray(e_log, dtype=float)
    return out if out.ndim else float(out)


def log_sensitivity(f_t, f_h, f_v, e, params: SensitivityParams = DEFAULT_PARAMS):
    """Transformed-domain sensitivity ``T * S_SP(U)`` at physical coordinates.

    ``f_t`` in Hz, ``f_h``/``f_v`` in cpd, ``e`` in degrees.
    """
    ft, fh, fv, el = (np.log1p(np.asarray(v, dtype=float)) for v in (f_t, f_h, f_v, e))
    out = scale_t(fh, fv, el, params) * s_softplus(shift_u(ft, fh, fv, el, params), params)
    return out if np.ndim(out) else float(out)


def linear_sensitivity(f_t, f_h, f_v, e, params: SensitivityParams = DEFAULT_PARAMS):
    """Reciprocal threshold contrast; zero where the transformed value is negative."""
    out = np.maximum(0.0, np.expm1(log_sensitivity(f_t, f_h, f_v, e, params)))
    return out if np.ndim(out) else float(out)


def threshold_contrast(f_t, f_h, f_v, e, params: SensitivityParams = DEFAULT_PARAMS):
    sens = np.asarray(linear_sensitivity(f_t, f_h, f_v, e, params))
    with np.errstate(divide="ignore"):
        out = np.where(sens > 0, 1.0 / np.where(sens > 0, sens, 1.0), np.inf)
    return out if out.ndim else float(out)


def psychometric(c_m, params: SensitivityParams = DEFAULT_PARAMS):
    """Weibull probability of a correct 2AFC response for pooled JND contrast."""
    c = np.asarray(c_m, dtype=float)
    if np.any(c < 0):
        raise ValueError("pooled contrast must be nonnegative")
    gain = (1.0 - params.p_g) * (1.0 - params.p_l)
    out = params.p_g + gain * -np.expm1(-np.power(c / params.beta0, params.beta1))
    return out if out.ndim else float(out)


def normalized_probability(psi, params: SensitivityParams = DEFAULT_PARAMS):
    """Rescale a 2AFC probability so that chance maps to 0 and certainty to 1."""
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < params.p_g - 1e-12):
        warnings.warn("probability below guess rate clamped to 0", RuntimeWarning, stacklevel=2)
    out = np.clip((psi - params.p_g) / (1.0 - params.p_g), 0.0, 1.0)
    return out if out.ndim else float(out)


def detection_probability(c_m, params: SensitivityParams = DEFAULT_PARAMS):
    """Normalized detection probability straight from pooled contrast."""
    c = np.asarray(c_m, dtype=float)
    out = (1.0 - params.p_l) * -np.expm1(-np.power(c / params.beta0, params.beta1))
    return out if out.ndim else float(out)


def contrast_for_probability(p_norm: float, params: SensitivityParams = DEFAULT_PARAMS) -> float:
    """Pooled JND contrast reaching a normalized detection probability."""
    top = 1.0 - params.p_l
    if not 0 <= p_norm < top:
        raise ValueError(f"p_norm must lie in [0, {top})")
    return params.beta0 * (-math.log1p(-p_norm / top)) ** (1.0 / params.beta1)


def critical_flicker_frequency(f_h: float, f_v: float, e: float, c_max: float = 0.5,
                               params: SensitivityParams = DEFAULT_PARAMS,
                               f_max: float = 120.0, tol: float = 0.01) -> float | None:
    """Highest temporal frequency in ``[0, f_max]`` visible at contrast ``c_max``.

    A 0.1 Hz scan locates the last visible sample; bisection then refines
    the crossing to ``tol``.  Returns None when nothing is visible.
    """
    if not 0 < c_max <= 1:
        raise ValueError("c_max must lie in (0, 1]")
    need = 1.0 / c_max

    def visible(ft):
        return linear_sensitivity(ft, f_h, f_v, e, params) >= need

    grid = np.linspace(0.0, f_max, int(round(f_max / 0.1)) + 1)
    ok = np.asarray(linear_sensitivity(grid, f_h, f_v, e, params)) >= need
    if not ok.any():
        return None
    last = int(np.flatnonzero(ok)[-1])
    if last == len(grid) - 1:
        return float(f_max)
    lo, hi = float(grid[last]), float(grid[last + 1])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if visible(mid):
            lo = mid
        else:
            hi = mid
    return lo
