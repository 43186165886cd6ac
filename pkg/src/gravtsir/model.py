"""Gravity-coupled stochastic TSIR metapopulation model.

Discrete-time (biweekly) susceptible/infected dynamics for K cities.  Within
a city the chain follows the classic time-series SIR recursion with seasonal
transmission and a mixing exponent; cities are coupled through a gravity
kernel: city k receives an infected influx drawn from a Gamma distribution
whose mean scales with the city's population and with distance-discounted
infecteds elsewhere,

    m_kt = theta * N_kt**tau1 * sum_{j != k} I_jt**tau2 / d_kj**rho.

New cases are Poisson with intensity beta_t * S_kt * (I_kt + L_kt)**alpha,
optionally divided by N_kt (frequency-dependent transmission, the default);
susceptibles are then replenished by births, discounted for vaccination
coverage, and depleted by the new cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .rng import StreamFamily

__all__ = [
    "SEASONAL_BETA",
    "ALPHA_DEFAULT",
    "PARAM_NAMES",
    "GravityParams",
    "LocalDynamics",
    "Demographics",
    "DistanceMatrix",
    "EpidemicState",
    "EpidemicPanel",
    "seasonal_beta",
    "theta_from_reparam",
    "reparam_from_theta",
    "gravity_mean",
    "gravity_means",
    "sample_influx",
    "infection_intensity",
    "sample_poisson",
    "step",
    "simulate",
]

# Biweekly seasonal transmission rates (one school-year cycle) and mixing
# exponent for prevaccination-era measles, taken as known from previous work.
SEASONAL_BETA = np.array([
    1.24, 1.14, 1.16, 1.31, 1.24, 1.12, 1.06, 1.02, 0.94, 0.98, 1.06, 1.08,
    0.96, 0.92, 0.92, 0.86, 0.76, 0.63, 0.62, 0.83, 1.13, 1.20, 1.11, 1.02,
    1.04, 1.08,
])
SEASONAL_BETA.setflags(write=False)

ALPHA_DEFAULT = 0.97

# Canonical ordering of the gravity parameters everywhere (grids, trend
# coefficients, chain columns, CSV headers).
PARAM_NAMES = ("theta_prime", "tau1", "tau2", "rho")

# numpy's Generator.poisson rejects means beyond ~9.2e18.  Intensities are
# capped here before drawing: a draw this large always exceeds the susceptible
# bound and is truncated to it, so the cap never shows up in output.
_POISSON_CAP = 1.0e15


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

def theta_from_reparam(theta_prime: float) -> float:
    """Map the rescaled coupling strength back to its natural scale.

    The coupling strength theta spans many orders of magnitude, so it is
    handled as theta_prime = -log10(theta) / 5 throughout; this puts all
    four gravity parameters on comparable [0, 2]-ish scales.
    """
    return 10.0 ** (-5.0 * float(theta_prime))


def reparam_from_theta(theta: float) -> float:
    """Inverse of :func:`theta_from_reparam` (theta must be positive)."""
    if theta <= 0.0:
        raise ValueError(f"theta must be positive, got {theta}")
    return -math.log10(theta) / 5.0


@dataclass(frozen=True)
class GravityParams:
    """Gravity-coupling parameters, with the coupling strength rescaled.

    Attributes:
        theta_prime: -log10(theta)/5 where theta is the natural-scale
            coupling strength.
        tau1: exponent on the receiving city's population.
        tau2: exponent on the sending cities' infecteds.
        rho: exponent on distance.
    """

    theta_prime: float
    tau1: float
    tau2: float
    rho: float

    @property
    def theta(self) -> float:
        return theta_from_reparam(self.theta_prime)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "GravityParams":
        tp, t1, t2, r = (float(v) for v in values)
        return cls(tp, t1, t2, r)

    def as_array(self) -> np.ndarray:
        return np.array([self.theta_prime, self.tau1, self.tau2, self.rho])


@dataclass(frozen=True)
class LocalDynamics:
    """Within-city dynamics: seasonal transmission profile and mixing exponent.

    ``beta`` holds one transmission rate per biweek of the seasonal cycle
    (length 26 for an annual cycle); biweek t uses beta[(t - 1) % len(beta)].
    """

    beta: np.ndarray = field(default_factory=lambda: SEASONAL_BETA.copy())
    alpha: float = ALPHA_DEFAULT

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 1 or beta.size == 0:
            raise ValueError("beta must be a non-empty 1-D array")
        if not np.all(beta > 0.0):
            raise ValueError("seasonal transmission rates must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        object.__setattr__(self, "beta", beta)


def seasonal_beta(local: LocalDynamics, t: int) -> float:
    """Transmission rate for 1-based biweek t, cycling through the profile."""
    if t < 1:
        raise ValueError(f"biweek index must be >= 1, got {t}")
    return float(local.beta[(t - 1) % len(local.beta)])


# ---------------------------------------------------------------------------
# spatial containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Demographics:
    """Population, births per biweek, and vaccination coverage for K cities.

    Each field is either shape (K,) for time-constant values or (K, T) for
    biweek-varying ones.  ``at(t)`` resolves both layouts to per-city vectors
    for 1-based biweek t.
    """

    city_ids: tuple[str, ...]
    population: np.ndarray
    births: np.ndarray
    vaccination: np.ndarray | None = None

    def __post_init__(self):
        ids = tuple(str(c) for c in self.city_ids)
        if len(set(ids)) != len(ids):
            raise ValueError("city identifiers must be unique")
        k = len(ids)
        pop = np.asarray(self.population, dtype=float)
        births = np.asarray(self.births, dtype=float)
        vacc = self.vaccination
        vacc = np.zeros(k) if vacc is None else np.asarray(vacc, dtype=float)
        for name, arr in (("population", pop), ("births", births),
                          ("vaccination", vacc)):
            if arr.ndim not in (1, 2) or arr.shape[0] != k:
                raise ValueError(
                    f"{name} must have shape ({k},) or ({k}, T), got {arr.shape}")
        if not np.all(pop > 0.0):
            raise ValueError("populations must be positive")
        if not np.all(births >= 0.0):
            raise ValueError("births must be non-negative")
        if not (np.all(vacc >= 0.0) and np.all(vacc <= 1.0)):
            raise ValueError("vaccination coverage must lie in [0, 1]")
        object.__setattr__(self, "city_ids", ids)
        object.__setattr__(self, "population", pop)
        object.__setattr__(self, "births", births)
        object.__setattr__(self, "vaccination", vacc)

    @property
    def n_cities(self) -> int:
        return len(self.city_ids)

    def _column(self, arr: np.ndarray, t: int) -> np.ndarray:
        if arr.ndim == 1:
            return arr
        if t > arr.shape[1]:
            raise ValueError(
                f"demographics cover {arr.shape[1]} biweeks; biweek {t} requested")
        return arr[:, t - 1]

    def at(self, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(population, births, vaccination) vectors at 1-based biweek t."""
        if t < 1:
            raise ValueError(f"biweek index must be >= 1, got {t}")
        return (self._column(self.population, t),
                self._column(self.births, t),
                self._column(self.vaccination, t))

    def mean_population(self) -> np.ndarray:
        """Per-city population, averaged over biweeks when time-varying."""
        pop = self.population
        return pop.mean(axis=1) if pop.ndim == 2 else pop.copy()


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric K x K matrix of pairwise distances in km."""

    km: np.ndarray

    def __post_init__(self):
        km = np.asarray(self.km, dtype=float)
        if km.ndim != 2 or km.shape[0] != km.shape[1]:
            raise ValueError(f"distance matrix must be square, got {km.shape}")
        if not np.array_equal(km, km.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diag(km) != 0.0):
            raise ValueError("distance matrix diagonal must be zero")
        off = ~np.eye(km.shape[0], dtype=bool)
        if km.shape[0] > 1 and not np.all(km[off] > 0.0):
            raise ValueError("off-diagonal distances must be positive")
        object.__setattr__(self, "km", km)

    @property
    def n_cities(self) -> int:
        return self.km.shape[0]


# ---------------------------------------------------------------------------
# state containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EpidemicState:
    """System state entering biweek t: susceptibles (real) and infecteds."""

    t: int
    susceptible: np.ndarray
    infected: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.susceptible, dtype=float)
        i = np.asarray(self.infected)
        if not np.issubdtype(i.dtype, np.integer):
            given = i
            i = np.asarray(np.rint(given), dtype=np.int64)
            if not np.array_equal(given, i):
                raise ValueError("infected counts must be integers")
        i = i.astype(np.int64, copy=False)
        if s.shape != i.shape or s.ndim != 1:
            raise ValueError("susceptible and infected must be 1-D and aligned")
        if self.t < 1:
            raise ValueError(f"biweek index must be >= 1, got {self.t}")
        if np.any(s < 0.0):
            raise ValueError("susceptibles must be non-negative")
        if np.any(i < 0):
            raise ValueError("infected counts must be non-negative")
        object.__setattr__(self, "susceptible", s)
        object.__setattr__(self, "infected", i)

    @property
    def n_cities(self) -> int:
        return self.susceptible.shape[0]


@dataclass(frozen=True, eq=False)
class EpidemicPanel:
    """Integer case counts, cities in rows and biweeks in columns.

    ``truncations`` counts the steps in which a Poisson draw had to be cut
    down to the available susceptibles (diagnostic only).
    """

    cases: np.ndarray
    city_ids: tuple[str, ...]
    biweeks: np.ndarray
    truncations: int = 0

    def __post_init__(self):
        cases = np.asarray(self.cases)
        if not np.issubdtype(cases.dtype, np.integer):
            raise ValueError("case counts must be integers")
        cases = cases.astype(np.int64, copy=False)
        if cases.ndim != 2:
            raise ValueError(f"cases must be 2-D (K x T), got shape {cases.shape}")
        if np.any(cases < 0):
            raise ValueError("case counts must be non-negative")
        ids = tuple(str(c) for c in self.city_ids)
        if len(ids) != cases.shape[0]:
            raise ValueError(
                f"{len(ids)} city ids for {cases.shape[0]} case rows")
        if len(set(ids)) != len(ids):
            raise ValueError("city identifiers must be unique")
        biweeks = np.asarray(self.biweeks, dtype=np.int64)
        if biweeks.shape != (cases.shape[1],):
            raise ValueError("biweek labels must match the number of columns")
        object.__setattr__(self, "cases", cases)
        object.__setattr__(self, "city_ids", ids)
        object.__setattr__(self, "biweeks", biweeks)

    @property
    def n_cities(self) -> int:
        return self.cases.shape[0]

    @property
    def n_biweeks(self) -> int:
        return self.cases.shape[1]


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------

def _distance_weights(km: np.ndarray, rho: float) -> np.ndarray:
    """d**(-rho) with a zero diagonal (a city never couples to itself)."""
    weights = np.zeros_like(km)
    off = ~np.eye(km.shape[0], dtype=bool)
    weights[off] = km[off] ** (-rho)
    return weights


def _powered_infecteds(infected: np.ndarray, tau2: float) -> np.ndarray:
    # Cities with zero infecteds export nothing, even when tau2 == 0
    # (numpy's 0**0 == 1 would say otherwise).
    infected = np.asarray(infected, dtype=float)
    return np.where(infected > 0.0, infected ** tau2, 0.0)


def gravity_means(infected: np.ndarray, gravity: GravityParams,
                  population: np.ndarray, dist: DistanceMatrix,
                  weights: np.ndarray | None = None) -> np.ndarray:
    """Expected gravity influx m_kt for every city at once.

    Args:
        infected: current infecteds, shape (K,).
        gravity: coupling parameters.
        population: per-city population at the current biweek, shape (K,).
        dist: pairwise distances.
        weights: optional precomputed ``d**(-rho)`` matrix (zero diagonal);
            pass it when stepping repeatedly with fixed rho.

    Returns:
        Non-negative means, shape (K,).
    """
    if weights is None:
        weights = _distance_weights(dist.km, gravity.rho)
    pulled = weights @ _powered_infecteds(infected, gravity.tau2)
    population = np.asarray(population, dtype=float)
    return gravity.theta * population ** gravity.tau1 * pulled


def gravity_mean(k: int, infected: np.ndarray, gravity: GravityParams,
                 population: np.ndarray, dist: DistanceMatrix) -> float:
    """Expected gravity influx into city k (see :func:`gravity_means`)."""
    if not 0 <= k < dist.n_cities:
        raise ValueError(f"city index {k} out of range")
    row = dist.km[k]
    others = np.arange(dist.n_cities) != k
    if np.any(row[others] <= 0.0):
        raise ValueError("distances to other cities must be positive")
    pulled = (_powered_infecteds(infected, gravity.tau2)[others]
              / row[others] ** gravity.rho).sum()
    return float(gravity.theta * float(population[k]) ** gravity.tau1 * pulled)


def sample_influx(m: float, rng: np.random.Generator) -> float:
    """Draw the Gamma(m, 1) infected influx; exactly 0 for m == 0.

    The zero case consumes no randomness, so decoupled systems (theta == 0)
    replay identically with or without neighbours.
    """
    if m < 0.0:
        raise ValueError(f"gravity mean must be non-negative, got {m}")
    if m == 0.0:
        return 0.0
    return float(rng.gamma(m, 1.0))


def infection_intensity(beta: float, susceptible: float, infectious: float,
                        alpha: float, population: float | None = None) -> float:
    """Poisson intensity beta * S * (I + L)**alpha, optionally / N.

    Pass ``population`` for frequency-dependent transmission (the default
    used by the simulator); omit it for the density-dependent variant.
    """
    if susceptible < 0.0 or infectious < 0.0:
        raise ValueError("susceptibles and infectious load must be non-negative")
    if susceptible == 0.0 or infectious == 0.0:
        return 0.0
    lam = beta * susceptible * infectious ** alpha
    if population is not None:
        if population <= 0.0:
            raise ValueError(f"population must be positive, got {population}")
        lam /= population
    return float(lam)


def sample_poisson(lam: float, rng: np.random.Generator) -> int:
    """Poisson draw as a plain int; exact (0) for lam == 0."""
    if not math.isfinite(lam):
        raise ValueError(f"intensity must be finite, got {lam}")
    if lam < 0.0:
        raise ValueError(f"intensity must be non-negative, got {lam}")
    return int(rng.poisson(lam if lam < _POISSON_CAP else _POISSON_CAP))


# ---------------------------------------------------------------------------
# transition and trajectory
# ---------------------------------------------------------------------------

def _resolve_stream_ids(stream_ids: Sequence[int] | None, k: int) -> list[int]:
    if stream_ids is None:
        return list(range(k))
    ids = [int(s) for s in stream_ids]
    if len(ids) != k:
        raise ValueError(f"expected {k} stream ids, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ValueError("stream ids must be distinct")
    return ids


def step(state: EpidemicState, gravity: GravityParams, local: LocalDynamics,
         demo: Demographics, dist: DistanceMatrix, streams: StreamFamily,
         stream_ids: Sequence[int] | None = None,
         normalize_by_population: bool = True,
         _weights: np.ndarray | None = None) -> tuple[EpidemicState, int]:
    """Advance the system one biweek.

    Per city: draw the Gamma gravity influx, then the Poisson case count
    (truncated so susceptibles never go negative), then update susceptibles
    with vaccination-discounted births.  City k draws from substream
    (stream_ids[k], t), so cities may be processed in any order -- or in
    parallel -- without changing the result.

    Returns:
        (state at t + 1, number of cities whose draw was truncated).
    """
    k = state.n_cities
    if demo.n_cities != k or dist.n_cities != k:
        raise ValueError("state, demographics and distances disagree on K")
    ids = _resolve_stream_ids(stream_ids, k)
    t = state.t
    beta = seasonal_beta(local, t)
    population, births, vaccination = demo.at(t)
    if _weights is None:
        _weights = _distance_weights(dist.km, gravity.rho)
    means = gravity_means(state.infected, gravity, population, dist,
                          weights=_weights)
    effective_births = births * (1.0 - vaccination)
    bound = state.susceptible + effective_births
    alpha = local.alpha
    susceptible = state.susceptible
    infected = state.infected
    new_cases = np.zeros(k, dtype=np.int64)
    truncated = 0
    for i in range(k):
        gen = streams.at(ids[i], t)
        influx = sample_influx(means[i], gen)
        force = infected[i] + influx
        s = susceptible[i]
        if s <= 0.0 or force <= 0.0:
            continue
        lam = beta * s * force ** alpha
        if normalize_by_population:
            lam /= population[i]
        draw = int(gen.poisson(lam if lam < _POISSON_CAP else _POISSON_CAP))
        limit = int(bound[i])
        if draw > limit:
            draw = limit
            truncated += 1
        new_cases[i] = draw
    new_susceptible = bound - new_cases
    return EpidemicState(t + 1, new_susceptible, new_cases), truncated


def simulate(initial: EpidemicState, gravity: GravityParams,
             local: LocalDynamics, demo: Demographics, dist: DistanceMatrix,
             horizon: int, seed: int,
             stream_ids: Sequence[int] | None = None,
             normalize_by_population: bool = True) -> EpidemicPanel:
    """Simulate a case-count panel over ``horizon`` biweeks.

    Column 1 of the panel is the initial infecteds; columns 2..horizon are
    generated by repeated :func:`step`.  With the same seed, inputs, and
    stream ids the output is bit-identical, regardless of worker layout.

    Args:
        initial: state entering the first biweek.
        gravity: coupling parameters.
        local: seasonal transmission profile and mixing exponent.
        demo: per-city demographics (must cover the simulated biweeks).
        dist: pairwise distances.
        horizon: number of biweeks in the output panel (>= 1).
        seed: root seed for the per-(city, step) substreams.
        stream_ids: per-city substream identities; defaults to 0..K-1.
            Passing explicit ids lets a subsystem replay the exact streams
            it had inside a larger system.
        normalize_by_population: frequency-dependent transmission if True.

    Returns:
        EpidemicPanel of shape (K, horizon).
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    k = initial.n_cities
    ids = _resolve_stream_ids(stream_ids, k)
    weights = _distance_weights(dist.km, gravity.rho)
    streams = StreamFamily(seed)
    cases = np.empty((k, horizon), dtype=np.int64)
    cases[:, 0] = initial.infected
    state = initial
    truncations = 0
    for col in range(1, horizon):
        state, n_trunc = step(state, gravity, local, demo, dist, streams,
                              stream_ids=ids,
                              normalize_by_population=normalize_by_population,
                              _weights=weights)
        truncations += n_trunc
        cases[:, col] = state.infected
    biweeks = np.arange(initial.t, initial.t + horizon, dtype=np.int64)
    return EpidemicPanel(cases=cases, city_ids=demo.city_ids, biweeks=biweeks,
                         truncations=truncations)
