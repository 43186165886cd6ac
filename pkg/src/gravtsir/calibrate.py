"""Bayesian calibration against the emulated distance surface.

The posterior couples the gravity parameters with a positive discrepancy
delta: the "likelihood" of (Theta, delta) is the emulator's predictive
normal density at Theta evaluated at the value delta, times a uniform box
prior on the gravity coordinates and an exponential(1) prior on delta.
Small delta is favored a priori, so mass concentrates where the simulator
can get close to the data; the fitted minimum of the distance surface
anchors the chain's starting point.

Sampling is sequential univariate slice sampling (stepping-out and
shrinkage), one coordinate at a time in fixed order, which needs no tuning
beyond an initial bracket width per coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import gaussian_kde

from .errors import NumericalError
from .model import PARAM_NAMES

__all__ = [
    "CHAIN_COLUMNS",
    "DEFAULT_PRIOR_BOX",
    "CalibrationSample",
    "PosteriorChain",
    "CredibleRegion2D",
    "log_posterior",
    "slice_sample_coordinate",
    "run_mcmc",
    "posterior_mode",
    "credible_region_2d",
    "credible_interval",
]

CHAIN_COLUMNS = PARAM_NAMES + ("delta",)

DEFAULT_PRIOR_BOX = np.array([[0.0, 2.0]] * 4)

# Pinning delta at exactly 0 is ill-defined (the exponential prior's support
# is open at 0 once the log is taken); the no-discrepancy mode uses this floor.
DELTA_FLOOR = 1e-6


@dataclass(frozen=True)
class CalibrationSample:
    """One posterior draw: gravity coordinates plus the discrepancy delta."""

    theta_prime: float
    tau1: float
    tau2: float
    rho: float
    delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.theta_prime, self.tau1, self.tau2, self.rho,
                         self.delta])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "CalibrationSample":
        a, b, c, d, e = (float(v) for v in values)
        return cls(a, b, c, d, e)


@dataclass(frozen=True, eq=False)
class PosteriorChain:
    """Ordered MCMC samples with the settings needed to reproduce them."""

    samples: np.ndarray
    seed: int
    widths: np.ndarray
    pinned: dict[str, float]
    burn_in: int
    thin: int
    n_evals: int
    prior_box: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != len(CHAIN_COLUMNS):
            raise ValueError(
                f"chain must be (n, {len(CHAIN_COLUMNS)}), got {samples.shape}")
        if samples.shape[0] < 1:
            raise ValueError("chain must contain at least one sample")
        if np.any(samples[:, 4] <= 0.0):
            raise ValueError("every delta in the chain must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "widths", np.asarray(self.widths, dtype=float))
        object.__setattr__(self, "prior_box",
                           np.asarray(self.prior_box, dtype=float))

    def __len__(self) -> int:
        return self.samples.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.samples[:, CHAIN_COLUMNS.index(name)]


def _as_sample_array(sample) -> np.ndarray:
    if isinstance(sample, CalibrationSample):
        return sample.as_array()
    return np.asarray(sample, dtype=float)


def _resolve_predictive(emulator) -> Callable[[np.ndarray], tuple[float, float]]:
    if callable(emulator) and not hasattr(emulator, "predictive"):
        return emulator
    return emulator.predictive


def log_posterior(sample, emulator, prior_box: np.ndarray = DEFAULT_PRIOR_BOX,
                  ) -> float:
    """Unnormalized log posterior of (Theta, delta); -inf off support.

    The density is normal_logpdf(delta; predictive(Theta)) - delta, with the
    flat box prior contributing only its support.  ``emulator`` is anything
    with a ``predictive(point) -> (mean, variance)`` method, or such a
    callable itself.
    """
    x = _as_sample_array(sample)
    box = np.asarray(prior_box, dtype=float)
    delta = x[4]
    if delta <= 0.0:
        return -math.inf
    if np.any(x[:4] < box[:, 0]) or np.any(x[:4] > box[:, 1]):
        return -math.inf
    mean, var = _resolve_predictive(emulator)(x[:4])
    return (-0.5 * (math.log(2.0 * math.pi * var)
                    + (delta - mean) ** 2 / var)
            - delta)


# ---------------------------------------------------------------------------
# slice sampling
# ---------------------------------------------------------------------------

def _slice_update(logf: Callable[[np.ndarray], float], x: np.ndarray,
                  axis: int, logf_x: float, width: float,
                  rng: np.random.Generator, max_stepouts: int,
                  ) -> tuple[float, float, int]:
    """One stepping-out + shrinkage update of x[axis] in place.

    Returns (new coordinate, log-density there, evaluation count).  The
    expansion budget is shared between the two sides with random
    apportionment, which keeps the update reversible when the budget caps
    the bracket.
    """
    x0 = x[axis]
    log_level = logf_x - rng.exponential()
    n_evals = 0

    def eval_at(value: float) -> float:
        nonlocal n_evals
        x[axis] = value
        n_evals += 1
        return logf(x)

    left = x0 - width * rng.uniform()
    right = left + width
    budget_left = int(math.floor(max_stepouts * rng.uniform()))
    budget_right = max_stepouts - 1 - budget_left
    while budget_left > 0 and eval_at(left) > log_level:
        left -= width
        budget_left -= 1
    while budget_right > 0 and eval_at(right) > log_level:
        right += width
        budget_right -= 1

    for _ in range(1000):
        proposal = rng.uniform(left, right)
        logf_prop = eval_at(proposal)
        if logf_prop > log_level:
            return proposal, logf_prop, n_evals
        # Shrink toward the current point and try again.
        if proposal < x0:
            left = proposal
        else:
            right = proposal
        if (right - left) < 1e-14 * (1.0 + abs(x0)):
            break
    x[axis] = x0
    raise NumericalError(
        f"slice on coordinate {axis} shrank to numeric width without "
        "acceptance; the target density is pathological at this point")


def slice_sample_coordinate(logf: Callable[[np.ndarray], float],
                            x: Sequence[float], axis: int,
                            rng: np.random.Generator, width: float,
                            max_stepouts: int = 10) -> float:
    """Draw a new value for one coordinate, leaving the target invariant.

    Args:
        logf: log-density over the full vector (may return -inf).
        x: current point; not modified.
        axis: index of the coordinate to update.
        rng: generator consumed by the update.
        width: initial bracket width.
        max_stepouts: total expansion budget for the bracket.

    Returns:
        The accepted coordinate value (its log-density is never -inf).
    """
    point = np.asarray(x, dtype=float).copy()
    logf_x = logf(point)
    if not np.isfinite(logf_x):
        raise ValueError("slice sampling must start at a point of finite density")
    value, _, _ = _slice_update(logf, point, axis, logf_x, width, rng,
                                max_stepouts)
    return value


def _default_widths(box: np.ndarray) -> np.ndarray:
    widths = np.empty(5)
    widths[:4] = (box[:, 1] - box[:, 0]) / 10.0
    widths[4] = 1.0
    return widths


def run_mcmc(emulator, n: int, seed: int,
             init: Sequence[float] | CalibrationSample | None = None,
             pinned: Mapping[str, float] | None = None,
             delta_pinned: float | None = None,
             prior_box: np.ndarray = DEFAULT_PRIOR_BOX,
             widths: Sequence[float] | None = None,
             burn_in: int | None = None, thin: int = 1,
             max_stepouts: int = 10) -> PosteriorChain:
    """Sample the calibration posterior by coordinate-wise slice sweeps.

    One sweep updates the free gravity coordinates in canonical order and
    then delta.  ``burn_in`` extra sweeps are run first and discarded
    (default: 10% of n); with ``thin`` > 1 only every thin-th sweep is kept,
    and the chain still holds exactly n samples.

    Args:
        emulator: fitted DistanceEmulator (or a predictive callable, in
            which case ``init`` is required).
        n: number of retained samples.
        seed: chain seed; identical settings and seed replay exactly.
        init: starting point (5 coordinates).  Defaults to the training
            design point with the smallest distance, with delta set to that
            distance.
        pinned: gravity coordinates held constant, e.g. {"tau1": 1.0}.
        delta_pinned: hold delta fixed at max(value, 1e-6) -- the
            "no discrepancy" mode.
        prior_box: (4, 2) bounds for the gravity coordinates.
        widths: per-coordinate slice widths (5 values); default is a tenth
            of each box side and 1.0 for delta.
        burn_in: discarded leading sweeps.
        thin: keep every thin-th sweep.
        max_stepouts: bracket expansion budget per update.

    Returns:
        PosteriorChain of exactly n samples.
    """
    if n < 1:
        raise ValueError(f"chain length must be >= 1, got {n}")
    if thin < 1:
        raise ValueError(f"thin must be >= 1, got {thin}")
    box = np.asarray(prior_box, dtype=float)
    if box.shape != (4, 2):
        raise ValueError(f"prior box must be (4, 2), got {box.shape}")
    pins = {} if pinned is None else {str(k): float(v) for k, v in pinned.items()}
    for name, value in pins.items():
        if name not in PARAM_NAMES:
            raise ValueError(f"unknown pinned coordinate {name!r}")
        j = PARAM_NAMES.index(name)
        if not box[j, 0] <= value <= box[j, 1]:
            raise ValueError(f"pinned {name}={value} outside the prior box")
    if burn_in is None:
        burn_in = n // 10
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")

    widths = _default_widths(box) if widths is None else np.asarray(widths, float)
    if widths.shape != (5,) or np.any(widths <= 0.0):
        raise ValueError("widths must be 5 positive values")

    if init is None:
        if not hasattr(emulator, "y_train_"):
            raise ValueError("init is required when the emulator carries no "
                             "training data")
        best = int(np.argmin(emulator.y_train_))
        x = np.empty(5)
        x[:4] = emulator.X_train_[best]
        x[4] = emulator.y_train_[best]
    else:
        x = _as_sample_array(init).copy()
        if x.shape != (5,):
            raise ValueError("init must provide 5 coordinates")
    for name, value in pins.items():
        x[PARAM_NAMES.index(name)] = value
    if delta_pinned is not None:
        x[4] = max(float(delta_pinned), DELTA_FLOOR)

    free_axes = [j for j, name in enumerate(PARAM_NAMES) if name not in pins]
    if delta_pinned is None:
        free_axes.append(4)
    predictive = _resolve_predictive(emulator)

    def logf(point: np.ndarray) -> float:
        return log_posterior(point, predictive, box)

    n_evals = 1
    logf_x = logf(x)
    if not np.isfinite(logf_x):
        raise ValueError("chain initialization has zero posterior density")

    rng = np.random.Generator(np.random.PCG64(seed))
    samples = np.empty((n, 5))
    kept = 0
    sweep = 0
    while kept < n:
        for axis in free_axes:
            value, logf_x, used = _slice_update(
                logf, x, axis, logf_x, widths[axis], rng, max_stepouts)
            n_evals += used
            x[axis] = value
        sweep += 1
        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            samples[kept] = x
            kept += 1
    return PosteriorChain(samples=samples, seed=int(seed), widths=widths,
                          pinned=(pins | {"delta": x[4]} if delta_pinned
                                  is not None else pins),
                          burn_in=int(burn_in), thin=int(thin),
                          n_evals=n_evals, prior_box=box)


# ---------------------------------------------------------------------------
# posterior summaries
# ---------------------------------------------------------------------------

def _chain_columns(chain, names: Sequence[str]) -> np.ndarray:
    if isinstance(chain, PosteriorChain):
        return np.column_stack([chain.column(n) for n in names])
    arr = np.asarray(chain, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def posterior_mode(chain, names: Sequence[str] | None = None,
                   grid_size: int | None = None) -> np.ndarray:
    """KDE argmax over a lattice spanning the sample range.

    ``names`` selects 1 or 2 chain coordinates (ignored when ``chain`` is
    already a plain array of samples).  At least 1000 samples are required
    for the density estimate to be trustworthy.
    """
    names = list(names) if names is not None else ["theta_prime"]
    pts = _chain_columns(chain, names)
    n, d = pts.shape
    if n < 1000:
        raise ValueError(f"need at least 1000 samples for a KDE mode, got {n}")
    if d > 2:
        raise ValueError("mode lattice supports 1 or 2 coordinates")
    spread = np.ptp(pts, axis=0)
    if np.all(spread == 0.0):
        return pts[0].copy()
    if np.any(spread == 0.0):
        flat = names[int(np.argmin(spread))]
        raise ValueError(f"coordinate {flat!r} is constant; drop it from the "
                         "mode request")
    if grid_size is None:
        grid_size = 512 if d == 1 else 101
    kde = gaussian_kde(pts.T)
    axes = [np.linspace(pts[:, j].min(), pts[:, j].max(), grid_size)
            for j in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    lattice = np.stack([m.ravel() for m in mesh])
    dens = kde(lattice)
    return lattice[:, int(np.argmax(dens))].copy()


def credible_interval(values, gamma: float) -> tuple[float, float]:
    """Equal-tailed interval: quantiles (1-gamma)/2 and 1-(1-gamma)/2."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("cannot form an interval from an empty sample")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    tail = (1.0 - gamma) / 2.0
    lo, hi = np.quantile(values, [tail, 1.0 - tail])
    return float(lo), float(hi)


@dataclass(frozen=True, eq=False)
class CredibleRegion2D:
    """Smallest KDE level set holding >= gamma of the chain's samples."""

    names: tuple[str, str]
    gamma: float
    level: float
    mass: float
    polylines: list[np.ndarray]
    area: float
    _kde: gaussian_kde

    def contains(self, point: Sequence[float]) -> bool:
        """Whether a (2,) point falls inside the region."""
        value = self._kde(np.asarray(point, dtype=float).reshape(2, 1))[0]
        return bool(value >= self.level)


def credible_region_2d(chain, names: Sequence[str] = ("theta_prime", "rho"),
                       gamma: float = 0.95, grid_size: int = 128,
                       max_kde_points: int = 4000) -> CredibleRegion2D:
    """Highest-density region for a coordinate pair from a 2-D KDE.

    The level is the largest density value whose superlevel set covers at
    least ``gamma`` of the samples (so the reported mass estimate can only
    exceed gamma by the resolution of one sample).  Contour polylines and
    the area come from a marching-squares pass over a padded evaluation
    grid.  For tractability the KDE itself uses at most ``max_kde_points``
    evenly spaced chain draws; the level search still scores every draw.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    names = tuple(names)
    if len(names) != 2:
        raise ValueError("a credible region needs exactly 2 coordinates")
    pts = _chain_columns(chain, names)
    n = pts.shape[0]
    if n < 5000:
        raise ValueError(f"need at least 5000 samples for a stable 2-D "
                         f"region, got {n}")
    for j in (0, 1):
        if np.ptp(pts[:, j]) == 0.0:
            raise ValueError(f"coordinate {names[j]} is constant; no 2-D "
                             "region exists (was it pinned?)")
    subset = pts[np.unique(np.linspace(0, n - 1, min(n, max_kde_points))
                           .astype(int))]
    kde = gaussian_kde(subset.T)

    dens = kde(pts.T)
    order = np.sort(dens)[::-1]
    level = float(order[min(int(math.ceil(gamma * n)), n) - 1])
    mass = float(np.mean(dens >= level))

    # Evaluation window: sample range padded by 3 KDE bandwidths.
    cov = kde.covariance
    pad = 3.0 * np.sqrt(np.diag(cov))
    x_axis = np.linspace(pts[:, 0].min() - pad[0], pts[:, 0].max() + pad[0],
                         grid_size)
    y_axis = np.linspace(pts[:, 1].min() - pad[1], pts[:, 1].max() + pad[1],
                         grid_size)
    mesh_x, mesh_y = np.meshgrid(x_axis, y_axis, indexing="ij")
    grid_dens = kde(np.vstack([mesh_x.ravel(), mesh_y.ravel()])).reshape(
        grid_size, grid_size)
    cell = (x_axis[1] - x_axis[0]) * (y_axis[1] - y_axis[0])
    area = float(cell * np.count_nonzero(grid_dens >= level))

    from skimage import measure

    polylines = []
    for contour in measure.find_contours(grid_dens, level):
        line = np.empty_like(contour)
        line[:, 0] = np.interp(contour[:, 0], np.arange(grid_size), x_axis)
        line[:, 1] = np.interp(contour[:, 1], np.arange(grid_size), y_axis)
        polylines.append(line)

    return CredibleRegion2D(names=names, gamma=float(gamma), level=level,
                            mass=mass, polylines=polylines, area=area,
                            _kde=kde)
