"""Model refitting: foveal temporal polynomial, shape parameters from
threshold data, psychometric parameters from detection counts, and k-fold
cross-validation of the shape fit."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.optimize

from . import model
from .model import B_NAMES, DEFAULT_PARAMS, SensitivityParams

log = logging.getLogger(__name__)

SATURATION = 0.49
N_MODEL_PARAMS = 19


class FitError(RuntimeError):
    """Raised when a fit cannot produce a usable estimate.

    ``best`` carries the best parameters seen, when any.
    """

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True)
class ThresholdRecord:
    f_h: float
    f_v: float
    f_t: float
    e: float
    threshold: float

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")

    @property
    def saturated(self) -> bool:
        return self.threshold >= SATURATION

    def key(self):
        return (self.f_h, self.f_v, self.f_t, self.e, self.threshold)


@dataclass(frozen=True)
class DetectionRecord:
    id: str
    c_jnd: float
    trials: int
    correct: int

    def __post_init__(self):
        if self.trials < 0 or not 0 <= self.correct <= self.trials:
            raise ValueError("need 0 <= correct <= trials")


# ---------------------------------------------------------------- De Lange

@dataclass
class DeLangeFit:
    a: np.ndarray
    r2: float
    residuals: np.ndarray


def fit_delange(f_t, sensitivity, degree: int = 3) -> DeLangeFit:
    """Least-squares polynomial in the ``ln(1 + x)`` domain of both axes."""
    f_t = np.asarray(f_t, dtype=float)
    sens = np.asarray(sensitivity, dtype=float)
    if f_t.shape != sens.shape or f_t.ndim != 1:
        raise ValueError("expected matching 1-D sample arrays")
    if len(f_t) < degree + 2:
        raise ValueError(f"need at least {degree + 2} samples for degree {degree}")
    x = model.power_transform(f_t)
    y = model.power_transform(sens)
    design = np.vander(x, degree + 1, increasing=True)
    if np.linalg.matrix_rank(design) < degree + 1:
        raise ValueError("rank-deficient design: too few distinct frequencies")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot == 0:
        r2 = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return DeLangeFit(a=coef, r2=r2, residuals=resid)


# ---------------------------------------------------------------- shape parameters

_B_LOWER = np.array([0, 0, 0, 0, -np.inf, -np.inf, -np.inf, 0, 0, 0], dtype=float)
_B_UPPER = np.full(10, np.inf)
_NEUTRAL_START = np.array([1.0, 0.1, 1.0, 0.01, -0.1, 0.3, 2.0, 0.0, 0.0, 0.0])
_PRED_CAP = 1e6


def _as_arrays(records):
    arr = np.array([(r.f_h, r.f_v, r.f_t, r.e, r.threshold) for r in records], dtype=float)
    return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4]


def predict_thresholds(records, params: SensitivityParams) -> np.ndarray:
    f_h, f_v, f_t, e, _ = _as_arrays(records)
    with np.errstate(over="ignore", invalid="ignore"):
        sens = model.linear_sensitivity(f_t, f_h, f_v, e, params)
    sens = np.nan_to_num(np.asarray(sens, dtype=float), nan=0.0, posinf=_PRED_CAP)
    return 1.0 / np.maximum(sens, 1.0 / _PRED_CAP)


def shape_loss(records, params: SensitivityParams) -> float:
    """Mean squared error of ``ln(1 + threshold)``."""
    pred = predict_thresholds(records, params)
    meas = np.array([r.threshold for r in records])
    return float(np.mean((np.log1p(pred) - np.log1p(meas)) ** 2))


@dataclass
class ShapeFit:
    params: SensitivityParams
    loss: float
    r2: float
    r2_adj: float
    n_records: int
    n_starts: int
    converged: bool

    @property
    def b(self) -> dict:
        return dict(zip(B_NAMES, (float(x) for x in self.params.b)))

    def to_dict(self) -> dict:
        return {"loss": self.loss, "r2": self.r2, "r2_adj": self.r2_adj,
                "n_records": self.n_records, "n_starts": self.n_starts,
                "converged": self.converged, "b": self.b, "params": self.params.to_dict(),
                "loss_definition": "mean squared error of ln(1 + threshold)"}


def _r2(pred_t, meas_t, k=N_MODEL_PARAMS):
    ss_res = float(np.sum((pred_t - meas_t) ** 2))
    ss_tot = float(np.sum((meas_t - meas_t.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    n = len(meas_t)
    r2_adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k - 1) if n - k - 1 > 0 else float("nan")
    return r2, r2_adj


def fit_shape_params(records, *, base: SensitivityParams = DEFAULT_PARAMS, r: float = 1.7,
                     exclude_saturated: bool = True, n_starts: int = 8, seed: int = 0,
                     start=None) -> ShapeFit:
    """Constrained least squares for the ten shape parameters.

    Polynomial coefficients and psychometric constants are taken from
    ``base``; ``r`` is stored in the result.  Starts are the neutral start
    plus seeded multiplicative perturbations of it.
    """
    records = list(records)
    if exclude_saturated:
        records = [rec for rec in records if not rec.saturated]
    if len({rec.key()[:4] for rec in records}) < 12:
        raise ValueError("need at least 12 distinct unsaturated records")
    base = SensitivityParams.from_dict({"r": r}, base)
    meas_t = np.log1p(np.array([rec.threshold for rec in records]))
    scale = 1.0 / math.sqrt(len(records))

    def residuals(vec):
        p = base.with_b(np.maximum(vec, _B_LOWER))
        res = (np.log1p(predict_thresholds(records, p)) - meas_t) * scale
        return np.nan_to_num(res, nan=1e3, posinf=1e3, neginf=-1e3)

    rng = np.random.default_rng(seed)
    x0 = _NEUTRAL_START if start is None else np.asarray(start, dtype=float)
    starts = [x0]
    for _ in range(n_starts - 1):
        jitter = x0 * rng.uniform(0.5, 1.5, size=10) + rng.normal(0.0, 0.02, size=10)
        starts.append(np.clip(jitter, _B_LOWER, None))

    best = None
    any_ok = False
    for x in starts:
        try:
            sol = scipy.optimize.least_squares(residuals, x, bounds=(_B_LOWER, _B_UPPER),
                                               method="trf", x_scale="jac",
                                               ftol=1e-15, xtol=1e-15, gtol=1e-15,
                                               max_nfev=4000)
        except (ValueError, FloatingPointError) as exc:
            log.debug("start failed: %s", exc)
            continue
        any_ok |= sol.status > 0
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or not any_ok:
        raise FitError("shape fit did not converge", best=None if best is None else best.x)
    params = base.with_b(np.maximum(best.x, _B_LOWER))
    pred_t = np.log1p(predict_thresholds(records, params))
    r2, r2_adj = _r2(pred_t, meas_t)
    return ShapeFit(params=params, loss=shape_loss(records, params), r2=r2, r2_adj=r2_adj,
                    n_records=len(records), n_starts=len(starts), converged=True)


# ---------------------------------------------------------------- psychometric

@dataclass
class PsychometricFit:
    r: float
    beta0: float
    beta1: float
    p_l: float
    p_g: float
    neg_log_likelihood: float
    fitted_r: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _weibull(c, beta0, beta1, p_g, p_l):
    return p_g + (1 - p_g) * (1 - p_l) * -np.expm1(-np.power(c / beta0, beta1))


def fit_psychometric(records, components: dict | None = None, *, r: float = DEFAULT_PARAMS.r,
                     p_g: float = 0.5, n_starts: int = 6, seed: int = 0,
                     max_lapse: float = 0.2) -> PsychometricFit:
    """Binomial maximum likelihood for ``(r, beta0, beta1, p_l)``.

    ``components`` maps record id to the JND-scaled components of that
    stimulus; they are re-pooled with each candidate ``r``.  Without them,
    the nominal ``c_jnd`` is used and ``r`` stays fixed.
    """
    records = list(records)
    if len({rec.c_jnd for rec in records}) < 3:
        raise ValueError("need at least three distinct JND levels")
    trials = np.array([rec.trials for rec in records], dtype=float)
    correct = np.array([rec.correct for rec in records], dtype=float)
    if np.all(correct == trials) or np.all(correct <= p_g * trials):
        raise FitError("degenerate detection data: all correct or all at chance")
    fit_r = components is not None
    if fit_r:
        comps = []
        for rec in records:
            if rec.id not in components:
                raise ValueError(f"no components for stimulus {rec.id!r}")
            comps.append(np.abs(np.asarray(components[rec.id], dtype=float)).ravel())
    nominal = np.array([rec.c_jnd for rec in records], dtype=float)

    def pooled(r_):
        if not fit_r:
            return nominal
        return np.array([np.sum(c ** r_) ** (1.0 / r_) for c in comps])

    eps = 1e-12

    def nll(theta):
        if fit_r:
            r_, beta0, beta1, p_l = theta
        else:
            (beta0, beta1, p_l), r_ = theta, r
        psi = np.clip(_weibull(pooled(r_), beta0, beta1, p_g, p_l), eps, 1 - eps)
        return -float(np.sum(correct * np.log(psi) + (trials - correct) * np.log1p(-psi)))

    bounds = [(1e-3, 100.0), (0.1, 10.0), (0.0, max_lapse)]
    x0 = [float(np.median(nominal[nominal > 0])) if np.any(nominal > 0) else 1.0, 1.5, 0.01]
    if fit_r:
        bounds = [(1.0, 6.0)] + bounds
        x0 = [r] + x0
    rng = np.random.default_rng(seed)
    starts = [np.array(x0)]
    for _ in range(n_starts - 1):
        starts.append(np.array([rng.uniform(lo, min(hi, 10.0)) for lo, hi in bounds]))
    best = None
    for x in starts:
        sol = scipy.optimize.minimize(nll, x, method="L-BFGS-B", bounds=bounds)
        if best is None or sol.fun < best.fun:
            best = sol
    if fit_r:
        r_hat, beta0, beta1, p_l = best.x
    else:
        (beta0, beta1, p_l), r_hat = best.x, r
    return PsychometricFit(r=float(r_hat), beta0=float(beta0), beta1=float(beta1),
                           p_l=float(p_l), p_g=p_g, neg_log_likelihood=float(best.fun),
                           fitted_r=fit_r)


# ---------------------------------------------------------------- cross-validation

@dataclass
class FoldResult:
    fold: int
    train_loss: float
    test_loss: float
    params: SensitivityParams
    n_train: int
    n_test: int


@dataclass
class CVReport:
    folds: list[FoldResult] = field(default_factory=list)
    seed: int = 0

    COLUMNS = ("CV-fold", "L_train", "L_test") + B_NAMES

    def rows(self) -> list[list]:
        body = [[f.fold, f.train_loss, f.test_loss, *map(float, f.params.b)] for f in self.folds]
        values = np.array([row[1:] for row in body], dtype=float)
        ddof = 1 if len(body) > 1 else 0
        return body + [["Mean", *values.mean(axis=0)], ["Stdev", *values.std(axis=0, ddof=ddof)]]

    def to_table(self, digits: int = 3) -> str:
        rows = self.rows()
        out = [" | ".join(self.COLUMNS)]
        for row in rows:
            cells = [str(row[0])] + [f"{v:.{digits}f}" for v in row[1:]]
            out.append(" | ".join(cells))
        return "\n".join(out)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "columns": list(self.COLUMNS),
                "rows": [[c if isinstance(c, str) else (int(c) if isinstance(c, int) else float(c))
                          for c in row] for row in self.rows()]}


def partition(records, k: int, seed: int) -> list[list]:
    """Seeded k-way split that ignores the input order of records."""
    ordered = sorted(records, key=lambda rec: rec.key())
    perm = np.random.default_rng(seed).permutation(len(ordered))
    return [[ordered[i] for i in chunk] for chunk in np.array_split(perm, k)]


def cross_validate(records, k: int = 5, seed: int = 0, **fit_kwargs) -> CVReport:
    records = list(records)
    if fit_kwargs.get("exclude_saturated", True):
        records = [rec for rec in records if not rec.saturated]
    if k < 2:
        raise ValueError("cross-validation needs at least two folds")
    if len(records) < k:
        raise ValueError(f"need at least {k} records for {k} folds")
    folds = partition(records, k, seed)
    report = CVReport(seed=seed)
    for i, test in enumerate(folds):
        train = [rec for j, chunk in enumerate(folds) if j != i for rec in chunk]
        fit = fit_shape_params(train, seed=seed, **fit_kwargs)
        report.folds.append(FoldResult(fold=i + 1, train_loss=fit.loss,
                                       test_loss=shape_loss(test, fit.params),
                                       params=fit.params, n_train=len(train), n_test=len(test)))
    return report


# ---------------------------------------------------------------- synthetic data and I/O

EXPERIMENT_SPATIAL = (0.0, 4.54, 9.06)
EXPERIMENT_TEMPORAL = (2.5, 5.0, 10.0, 20.0, 30.0, 60.0)
EXPERIMENT_ECC = (10.0, 25.0, 40.0)


def synthetic_thresholds(params: SensitivityParams = DEFAULT_PARAMS,
                         spatial=EXPERIMENT_SPATIAL, temporal=EXPERIMENT_TEMPORAL,
                         eccentricities=EXPERIMENT_ECC, ceiling: float = 0.5) -> list[ThresholdRecord]:
    """Noise-free model thresholds on the measurement grid, capped at ``ceiling``."""
    out = []
    for fh in spatial:
        for fv in spatial:
            for ft in temporal:
                for e in eccentricities:
                    th = float(model.threshold_contrast(ft, fh, fv, e, params))
                    out.append(ThresholdRecord(fh, fv, ft, e, min(th, ceiling)))
    return out


def read_thresholds(path) -> list[ThresholdRecord]:
    with open(Path(path), newline="") as fh:
        return [ThresholdRecord(float(r["f_h_cpd"]), float(r["f_v_cpd"]), float(r["f_t_hz"]),
                                float(r["ecc_deg"]), float(r["threshold"]))
                for r in csv.DictReader(fh)]


def write_thresholds(path, records) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["f_h_cpd", "f_v_cpd", "f_t_hz", "ecc_deg", "threshold"])
        for r in records:
            w.writerow([repr(r.f_h), repr(r.f_v), repr(r.f_t), repr(r.e), repr(r.threshold)])


def read_detections(path) -> list[DetectionRecord]:
    with open(Path(path), newline="") as fh:
        return [DetectionRecord(r["id"], float(r["c_jnd"]), int(r["trials"]), int(r["correct"]))
                for r in csv.DictReader(fh)]


def write_detections(path, records) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "c_jnd", "trials", "correct"])
        for r in records:
            w.writerow([r.id, repr(r.c_jnd), r.trials, r.correct])
