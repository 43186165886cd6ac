"""Gaussian-process regression on the summary-distance surface.

The simulator's scalar output -- the distance between a simulated panel's
summary and the observed one -- is modeled over gravity-parameter space as

    D ~ N(X beta, Sigma),   Sigma_ij = sigma2 * exp(-phi^2 ||u_i - u_j||^2)
                                       (+ nugget on the diagonal),

with a linear trend X = [1, Theta] and a Gaussian (squared-exponential)
covariance.  Hyperparameters are fit by maximum likelihood with the trend
profiled out by generalized least squares and the scale sigma2 concentrated
analytically, leaving a derivative-free multi-start search over
(log phi, log noise-ratio).  Prediction is the plug-in universal-kriging
conditional normal.

Inputs are standardized to [0, 1] per axis before any distance is computed
(better conditioned, and phi means the same thing on every axis); ``phi`` is
therefore reported in standardized units, with the transform recorded on the
fitted estimator.  Construct with ``standardize=False`` to work in raw units.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.stats import qmc
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .design import TrainingSet
from .errors import NumericalError

__all__ = [
    "GpHyper",
    "DistanceEmulator",
    "gp_covariance",
    "gp_log_likelihood",
    "fit_emulator",
    "predict",
]

_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GpHyper:
    """Covariance hyperparameters: partial sill, nugget and inverse range."""

    sigma2: float
    nugget: float
    phi: float

    def __post_init__(self):
        for name in ("sigma2", "nugget", "phi"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.sigma2 > 0.0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.nugget < 0.0:
            raise ValueError(f"nugget must be non-negative, got {self.nugget}")
        if not self.phi > 0.0:
            raise ValueError(f"phi must be positive, got {self.phi}")


def gp_covariance(a: np.ndarray, b: np.ndarray, hyper: GpHyper,
                  same_index: bool = False) -> float:
    """Covariance between the outputs at two design points.

    Two *distinct* design indices covary by sigma2 * exp(-phi^2 ||a - b||^2)
    even if the points coincide; the nugget enters only on the diagonal
    (same_index=True), where the value is sigma2 + nugget regardless of the
    coordinates.
    """
    if same_index:
        return hyper.sigma2 + hyper.nugget
    delta = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(hyper.sigma2 * np.exp(-hyper.phi ** 2 * (delta @ delta)))


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape (len(a), len(b))."""
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _trend_matrix(x: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((x.shape[0], 1)), x])


def gp_log_likelihood(x: np.ndarray, y: np.ndarray, hyper: GpHyper,
                      trend: np.ndarray) -> float:
    """Gaussian log-density of y under the GP with the given trend.

    The covariance is built exactly as the model states it -- no stabilizing
    jitter -- so a near-singular choice of hyperparameters raises
    NumericalError rather than silently returning a perturbed value.

    Args:
        x: design points, shape (p, d), in the units phi refers to.
        y: observed outputs, shape (p,).
        hyper: covariance hyperparameters.
        trend: d + 1 trend coefficients (intercept first).

    Returns:
        The log-likelihood as a float.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sigma = hyper.sigma2 * np.exp(-hyper.phi ** 2 * _sq_dists(x, x))
    sigma[np.diag_indices_from(sigma)] += hyper.nugget
    try:
        chol = cholesky(sigma, lower=True)
    except np.linalg.LinAlgError as err:
        raise NumericalError(
            "covariance factorization failed; increase the nugget") from err
    resid = y - _trend_matrix(x) @ np.asarray(trend, dtype=float)
    white = solve_triangular(chol, resid, lower=True)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return float(-0.5 * (white @ white + logdet + y.size * _LOG2PI))


def _gls_trend(chol: np.ndarray, trend_mat: np.ndarray, y: np.ndarray,
               ) -> tuple[np.ndarray, np.ndarray]:
    """Profile the trend by GLS given a correlation Cholesky factor.

    Returns (coefficients, whitened residual).  Uses a QR of the whitened
    design, so duplicated design rows and other mild degeneracies stay
    well-behaved.
    """
    a = solve_triangular(chol, trend_mat, lower=True)
    b = solve_triangular(chol, y, lower=True)
    coeff, *_ = np.linalg.lstsq(a, b, rcond=None)
    return coeff, b - a @ coeff


class DistanceEmulator(RegressorMixin, BaseEstimator):
    """Kriging emulator of the simulator's summary-distance output.

    Parameters
    ----------
    n_starts : int
        Multi-start count for the hyperparameter search; starts are a
        space-filling (Latin hypercube) draw over the log-space box.
    phi_bounds, noise_ratio_bounds : (float, float)
        Box constraints for phi (standardized units) and for the
        nugget-to-sill ratio.  The search runs in log space.
    jitter : float
        Relative diagonal inflation (times sigma2) always added to the
        fitted covariance for factorization stability.  Set to 0.0 only
        when exact interpolation is required and the design is small.
    hyper : GpHyper or None
        When given, skips the likelihood search and uses these values
        as-is (phi interpreted in the standardized units of this fit).
    standardize : bool
        Rescale inputs to [0, 1] per axis before computing distances.
    random_state : int
        Seeds the start-point draw.  An integer default keeps fits
        reproducible, which the replay guarantees depend on.

    Attributes (after fit)
    ----------
    hyper_ : GpHyper            fitted (or supplied) hyperparameters
    trend_ : ndarray (d+1,)     intercept + one slope per input column
                                (slopes of constant columns are 0)
    X_train_, y_train_          training data as validated
    offsets_, scales_           the standardization transform
    chol_ : ndarray             lower Cholesky factor of the covariance
    loglik_ : float             log-likelihood at the optimum
    optimizer_diagnostics_      per-start records (start, value, success)
    """

    def __init__(self, n_starts: int = 8,
                 phi_bounds: tuple[float, float] = (0.05, 50.0),
                 noise_ratio_bounds: tuple[float, float] = (1e-8, 10.0),
                 jitter: float = 1e-8, hyper: GpHyper | None = None,
                 standardize: bool = True, random_state: int = 0):
        self.n_starts = n_starts
        self.phi_bounds = phi_bounds
        self.noise_ratio_bounds = noise_ratio_bounds
        self.jitter = jitter
        self.hyper = hyper
        self.standardize = standardize
        self.random_state = random_state

    # -- fitting ------------------------------------------------------------

    def fit(self, X, y) -> "DistanceEmulator":
        """Fit trend and covariance to (design points, distances)."""
        X = check_array(X, dtype=np.float64)
        y = np.asarray(check_array(y, dtype=np.float64, ensure_2d=False),
                       dtype=float).ravel()
        p, d = X.shape
        if y.shape[0] != p:
            raise ValueError(f"X has {p} rows but y has {y.shape[0]} values")
        if p < 6:
            raise ValueError(f"need at least 6 training points, got {p}")
        if self.jitter < 0.0:
            raise ValueError("jitter must be non-negative")

        offsets = X.min(axis=0)
        spans = X.max(axis=0) - offsets
        active = spans > 0.0
        if not self.standardize:
            offsets = np.zeros(d)
            spans = np.ones(d)
        scales = np.where(active, spans, 1.0)
        u = (X - offsets) / scales
        if not active.any():
            raise ValueError("all input columns are constant")
        if p < int(active.sum()) + 2:
            raise ValueError("more trend coefficients than data points")

        # Trend on the raw inputs (interpretable slopes); constant columns
        # are collinear with the intercept and excluded from estimation.
        trend_full = _trend_matrix(X)
        trend_cols = np.concatenate([[True], active])
        trend_mat = trend_full[:, trend_cols]

        d2 = _sq_dists(u, u)
        if self.hyper is not None:
            hyper = self.hyper
            diagnostics = []
            loglik = None
        else:
            hyper, diagnostics, loglik = self._maximize_likelihood(
                d2, trend_mat, y)

        sigma = hyper.sigma2 * np.exp(-hyper.phi ** 2 * d2)
        sigma[np.diag_indices_from(sigma)] += (hyper.nugget
                                               + self.jitter * hyper.sigma2)
        try:
            chol = cholesky(sigma, lower=True)
        except np.linalg.LinAlgError as err:
            raise NumericalError(
                "fitted covariance is numerically singular; "
                "increase jitter or the nugget") from err
        coeff, _ = _gls_trend(chol, trend_mat, y)
        trend = np.zeros(d + 1)
        trend[trend_cols] = coeff

        self.X_train_ = X
        self.y_train_ = y
        self.offsets_ = offsets
        self.scales_ = scales
        self.active_ = active
        self.U_train_ = u
        self.hyper_ = hyper
        self.trend_ = trend
        self.chol_ = chol
        self.resid_solve_ = cho_solve((chol, True),
                                      y - trend_full @ trend)
        self.chol_inv_ = solve_triangular(chol, np.eye(p), lower=True)
        self.sill_ = hyper.sigma2 + hyper.nugget
        self.optimizer_diagnostics_ = diagnostics
        if loglik is None:
            loglik = gp_log_likelihood(u, y, hyper, np.concatenate(
                [[trend[0] + trend[1:] @ offsets],
                 trend[1:] * scales]))
        self.loglik_ = loglik
        return self

    def _maximize_likelihood(self, d2: np.ndarray, trend_mat: np.ndarray,
                             y: np.ndarray):
        """Multi-start concentrated MLE over (log phi, log noise ratio)."""
        p = y.size
        var_floor = max(float(np.var(y)), np.finfo(float).tiny) * 1e-12

        def negloglik(z: np.ndarray) -> float:
            phi, ratio = np.exp(z)
            corr = np.exp(-phi ** 2 * d2)
            corr[np.diag_indices_from(corr)] += ratio + self.jitter
            try:
                chol = cholesky(corr, lower=True)
            except np.linalg.LinAlgError:
                return np.inf
            _, white = _gls_trend(chol, trend_mat, y)
            sigma2 = max(float(white @ white) / p, var_floor)
            return p * np.log(sigma2) + 2.0 * np.log(np.diag(chol)).sum()

        log_box = np.log([self.phi_bounds, self.noise_ratio_bounds])
        sampler = qmc.LatinHypercube(d=2, seed=self.random_state)
        starts = qmc.scale(sampler.random(self.n_starts),
                           log_box[:, 0], log_box[:, 1])
        best = None
        diagnostics = []
        for start in starts:
            res = minimize(negloglik, start, method="Nelder-Mead",
                           bounds=log_box,
                           options={"xatol": 1e-4, "fatol": 1e-8,
                                    "maxiter": 400})
            ok = bool(res.success) and np.isfinite(res.fun)
            diagnostics.append({"start": start.copy(), "value": float(res.fun),
                                "converged": ok})
            if ok and (best is None or res.fun < best.fun):
                best = res
        if best is None:
            raise NumericalError(
                "hyperparameter search failed from every start")

        phi, ratio = np.exp(best.x)
        corr = np.exp(-phi ** 2 * d2)
        corr[np.diag_indices_from(corr)] += ratio + self.jitter
        chol = cholesky(corr, lower=True)
        _, white = _gls_trend(chol, trend_mat, y)
        sigma2 = max(float(white @ white) / p, var_floor)
        logdet = 2.0 * np.log(np.diag(chol)).sum() + p * np.log(sigma2)
        loglik = -0.5 * (p + logdet + p * _LOG2PI)
        return (GpHyper(sigma2=sigma2, nugget=ratio * sigma2, phi=phi),
                diagnostics, float(loglik))

    # -- prediction ---------------------------------------------------------

    def _transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.offsets_) / self.scales_

    def predict(self, X, return_std: bool = False):
        """Kriging predictive mean (and standard deviation) at new points.

        The predictive variance is sill - k' Sigma^-1 k, clamped at a small
        positive floor; it never exceeds sigma2 + nugget.
        """
        check_is_fitted(self, "hyper_")
        X = check_array(X, dtype=np.float64)
        u = self._transform(X)
        hyper = self.hyper_
        cross = hyper.sigma2 * np.exp(-hyper.phi ** 2
                                      * _sq_dists(u, self.U_train_))
        mean = _trend_matrix(X) @ self.trend_ + cross @ self.resid_solve_
        if not return_std:
            return mean
        white = self.chol_inv_ @ cross.T
        var = self.sill_ - np.einsum("ij,ij->j", white, white)
        floor = 1e-12 * self.sill_
        return mean, np.sqrt(np.maximum(var, floor))

    def predictive(self, point: np.ndarray) -> tuple[float, float]:
        """(mean, variance) at one point, skipping sklearn validation.

        This is the MCMC hot path: one trend dot product, one covariance
        row, two matrix-vector products.
        """
        u = (point - self.offsets_) / self.scales_
        diff = self.U_train_ - u
        hyper = self.hyper_
        cross = hyper.sigma2 * np.exp(-hyper.phi ** 2
                                      * np.einsum("ij,ij->i", diff, diff))
        mean = (self.trend_[0] + self.trend_[1:] @ point
                + cross @ self.resid_solve_)
        white = self.chol_inv_ @ cross
        var = self.sill_ - white @ white
        floor = 1e-12 * self.sill_
        return float(mean), float(max(var, floor))

    # -- diagnostics ----------------------------------------------------------

    def loo_residuals(self) -> np.ndarray:
        """Standardized leave-one-out residuals under the fitted covariance.

        Each point is predicted from the other p-1 (hyperparameters held
        fixed, trend re-profiled), giving (y_i - mean_i) / sd_i.  A healthy
        fit has mean near 0 and variance near 1.
        """
        check_is_fitted(self, "hyper_")
        u = self.U_train_
        y = self.y_train_
        x = self.X_train_
        trend_cols = np.concatenate([[True], self.active_])
        p = y.size
        out = np.empty(p)
        hyper = self.hyper_
        diag_add = hyper.nugget + self.jitter * hyper.sigma2
        full = hyper.sigma2 * np.exp(-hyper.phi ** 2 * _sq_dists(u, u))
        for i in range(p):
            keep = np.arange(p) != i
            sigma = full[np.ix_(keep, keep)].copy()
            sigma[np.diag_indices_from(sigma)] += diag_add
            chol = cholesky(sigma, lower=True)
            trend_mat = _trend_matrix(x[keep])[:, trend_cols]
            coeff, _ = _gls_trend(chol, trend_mat, y[keep])
            resid = y[keep] - trend_mat @ coeff
            cross = full[keep, i]
            mean = (_trend_matrix(x[i:i + 1])[:, trend_cols][0] @ coeff
                    + cross @ cho_solve((chol, True), resid))
            white = solve_triangular(chol, cross, lower=True)
            var = max(self.sill_ - white @ white, 1e-12 * self.sill_)
            out[i] = (y[i] - mean) / np.sqrt(var)
        return out

    # -- persistence ----------------------------------------------------------

    FORMAT_VERSION = 1

    def training_hash(self) -> str:
        """Hash of the training table; identifies the fit's data."""
        check_is_fitted(self, "hyper_")
        h = hashlib.sha256()
        for row, d in zip(self.X_train_, self.y_train_):
            h.update((",".join(repr(float(v)) for v in row)
                      + ":" + repr(float(d))).encode())
        return h.hexdigest()

    def save(self, path) -> None:
        """Write a versioned text image sufficient to rebuild the fit."""
        check_is_fitted(self, "hyper_")
        lines = [
            f"# distance-emulator-format {self.FORMAT_VERSION}",
            f"# training_hash {self.training_hash()}",
            f"sigma2 {self.hyper_.sigma2!r}",
            f"nugget {self.hyper_.nugget!r}",
            f"phi {self.hyper_.phi!r}",
            f"jitter {self.jitter!r}",
            f"standardize {int(self.standardize)}",
            "trend " + " ".join(repr(float(v)) for v in self.trend_),
            f"n_points {self.X_train_.shape[0]}",
            f"n_inputs {self.X_train_.shape[1]}",
        ]
        for row, d in zip(self.X_train_, self.y_train_):
            lines.append(" ".join(repr(float(v)) for v in row)
                         + " " + repr(float(d)))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "DistanceEmulator":
        """Rebuild an emulator saved by :meth:`save`.

        The stored hyperparameters are re-fit through the fixed-hyper path,
        so predictions agree with the original to refactorization accuracy
        (identical floating-point inputs, identical operations).
        """
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if not lines or not lines[0].startswith("# distance-emulator-format"):
            raise ValueError(f"{path} is not an emulator file")
        version = int(lines[0].split()[-1])
        if version != cls.FORMAT_VERSION:
            raise ValueError(f"unsupported emulator format version {version}")
        fields = {}
        rows = []
        for ln in lines[1:]:
            if not ln or ln.startswith("#"):
                continue
            key, rest = ln.split(" ", 1)
            if key in {"sigma2", "nugget", "phi", "jitter", "standardize",
                       "trend", "n_points", "n_inputs"}:
                fields[key] = rest
            else:
                rows.append([float(v) for v in (key + " " + rest).split()])
        n_points = int(fields["n_points"])
        n_inputs = int(fields["n_inputs"])
        if len(rows) != n_points or any(len(r) != n_inputs + 1 for r in rows):
            raise ValueError(f"emulator file {path} has a corrupt design table")
        table = np.asarray(rows)
        hyper = GpHyper(sigma2=float(fields["sigma2"]),
                        nugget=float(fields["nugget"]),
                        phi=float(fields["phi"]))
        est = cls(hyper=hyper, jitter=float(fields["jitter"]),
                  standardize=bool(int(fields["standardize"])))
        est.fit(table[:, :n_inputs], table[:, n_inputs])
        return est


def fit_emulator(training: TrainingSet, **kwargs) -> DistanceEmulator:
    """Fit a DistanceEmulator to a TrainingSet (keyword args pass through)."""
    return DistanceEmulator(**kwargs).fit(training.points, training.distances)


def predict(em: DistanceEmulator, point: np.ndarray) -> tuple[float, float]:
    """Predictive (mean, variance) of the distance surface at one point."""
    return em.predictive(np.asarray(point, dtype=float))
