"""Infection movement matrices and per-city flux with posterior uncertainty.

Given gravity parameters and an observed panel, the movement matrix entry
(k, j) is the gravity kernel applied to city j's case history:

    m_kj = theta * N_k**tau1 * sum_t I_jt**tau2 / d_kj**rho,

optionally divided by the number of biweeks summed ("average movement per
biweek").  Row sums are read as a city's outgoing flux and column sums as
its incoming flux.  Evaluating the matrix over posterior draws of the
gravity parameters yields medians and equal-tailed credible intervals for
every city's flux, plus the edge lists and histograms behind network views.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibrate import PosteriorChain, credible_interval
from .model import (Demographics, DistanceMatrix, EpidemicPanel,
                    GravityParams, _distance_weights, _powered_infecteds)

__all__ = [
    "FluxSummary",
    "movement_matrix",
    "city_flux",
    "flux_posterior_summary",
    "export_network",
    "degree_histogram",
]


def movement_matrix(gravity: GravityParams, demo: Demographics,
                    dist: DistanceMatrix, panel: EpidemicPanel,
                    average: bool = False,
                    biweek_mask: np.ndarray | None = None) -> np.ndarray:
    """Expected infected movement between every ordered city pair.

    Args:
        gravity: coupling parameters (theta enters on its natural scale).
        demo: city demographics; a time-varying population is collapsed to
            its per-city mean over the panel window.
        dist: pairwise distances.
        panel: case counts whose per-city time sums drive the flux.
        average: divide by the number of biweeks summed.
        biweek_mask: optional boolean selector over panel columns (e.g. the
            holiday biweeks); default all.

    Returns:
        (K, K) matrix with zero diagonal; entry (k, j) couples receiving
        city k with sending city j.
    """
    k = panel.n_cities
    if demo.n_cities != k or dist.n_cities != k:
        raise ValueError("panel, demographics and distances disagree on K")
    cases = panel.cases
    if biweek_mask is not None:
        biweek_mask = np.asarray(biweek_mask, dtype=bool)
        if biweek_mask.shape != (panel.n_biweeks,):
            raise ValueError(
                f"biweek mask must have {panel.n_biweeks} entries")
        if not biweek_mask.any():
            raise ValueError("biweek mask selects no biweeks")
        cases = cases[:, biweek_mask]
    summed = _powered_infecteds(cases, gravity.tau2).sum(axis=1)
    weights = _distance_weights(dist.km, gravity.rho)
    population = demo.mean_population()
    matrix = (gravity.theta
              * np.outer(population ** gravity.tau1, summed) * weights)
    if average:
        matrix /= cases.shape[1]
    return matrix


def city_flux(matrix: np.ndarray, k: int | None = None):
    """Outgoing (row-sum) and incoming (column-sum) flux.

    With ``k`` given returns the scalar pair for that city; otherwise the
    two K-vectors.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"flux matrix must be square, got {matrix.shape}")
    outgoing = matrix.sum(axis=1)
    incoming = matrix.sum(axis=0)
    if k is None:
        return outgoing, incoming
    if not 0 <= k < matrix.shape[0]:
        raise IndexError(f"city index {k} out of range")
    return float(outgoing[k]), float(incoming[k])


@dataclass(frozen=True, eq=False)
class FluxSummary:
    """Posterior flux per city: median and equal-tailed interval, both ways."""

    city_ids: tuple[str, ...]
    gamma: float
    outgoing_median: np.ndarray
    outgoing_lo: np.ndarray
    outgoing_hi: np.ndarray
    incoming_median: np.ndarray
    incoming_lo: np.ndarray
    incoming_hi: np.ndarray
    n_samples: int

    def __post_init__(self):
        k = len(self.city_ids)
        for name in ("outgoing_median", "outgoing_lo", "outgoing_hi",
                     "incoming_median", "incoming_lo", "incoming_hi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (k,):
                raise ValueError(f"{name} must have shape ({k},)")
            object.__setattr__(self, name, arr)
        if (np.any(self.outgoing_lo > self.outgoing_median)
                or np.any(self.outgoing_median > self.outgoing_hi)
                or np.any(self.incoming_lo > self.incoming_median)
                or np.any(self.incoming_median > self.incoming_hi)):
            raise ValueError("interval endpoints must bracket the median")


def _flux_for_draws(draws: np.ndarray, demo: Demographics,
                    dist: DistanceMatrix, panel: EpidemicPanel,
                    rows: np.ndarray, average: bool,
                    biweek_mask: np.ndarray | None,
                    ) -> tuple[np.ndarray, np.ndarray]:
    outgoing = np.empty((draws.shape[0], rows.size))
    incoming = np.empty((draws.shape[0], rows.size))
    for s, draw in enumerate(draws):
        matrix = movement_matrix(GravityParams.from_array(draw[:4]), demo,
                                 dist, panel, average=average,
                                 biweek_mask=biweek_mask)
        out_all, in_all = city_flux(matrix)
        outgoing[s] = out_all[rows]
        incoming[s] = in_all[rows]
    return outgoing, incoming


def flux_posterior_summary(chain: PosteriorChain, demo: Demographics,
                           dist: DistanceMatrix, panel: EpidemicPanel,
                           cities: Sequence[str] | None = None,
                           gamma: float = 0.95, thin: int = 1,
                           average: bool = True,
                           biweek_mask: np.ndarray | None = None,
                           workers: int = 1) -> FluxSummary:
    """Median and equal-tailed flux intervals over posterior draws.

    Every thin-th chain sample (pinned coordinates included as stored)
    produces one movement matrix and one in/out flux pair per city.

    Args:
        chain: posterior samples of the gravity parameters.
        demo, dist, panel: as in :func:`movement_matrix`.
        cities: optional subset of city ids to report (order preserved).
        gamma: interval mass.
        thin: keep every thin-th draw.
        average, biweek_mask: passed to :func:`movement_matrix`.
        workers: process count for the per-draw loop; any split gives the
            same result.
    """
    if thin < 1:
        raise ValueError(f"thin must be >= 1, got {thin}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    draws = chain.samples[::thin]
    if cities is None:
        rows = np.arange(demo.n_cities)
        ids = demo.city_ids
    else:
        index = {cid: i for i, cid in enumerate(demo.city_ids)}
        missing = [c for c in cities if c not in index]
        if missing:
            raise ValueError(f"unknown city ids: {missing}")
        rows = np.array([index[c] for c in cities])
        ids = tuple(cities)
    if workers == 1 or draws.shape[0] < 2 * workers:
        outgoing, incoming = _flux_for_draws(draws, demo, dist, panel, rows,
                                             average, biweek_mask)
    else:
        chunks = [c for c in np.array_split(draws, workers) if c.size]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_flux_for_draws, chunk, demo, dist, panel,
                                   rows, average, biweek_mask)
                       for chunk in chunks]
            parts = [f.result() for f in futures]
        outgoing = np.concatenate([p[0] for p in parts])
        incoming = np.concatenate([p[1] for p in parts])
    intervals_out = np.array([credible_interval(outgoing[:, j], gamma)
                              for j in range(rows.size)])
    intervals_in = np.array([credible_interval(incoming[:, j], gamma)
                             for j in range(rows.size)])
    return FluxSummary(
        city_ids=ids, gamma=float(gamma),
        outgoing_median=np.median(outgoing, axis=0),
        outgoing_lo=intervals_out[:, 0], outgoing_hi=intervals_out[:, 1],
        incoming_median=np.median(incoming, axis=0),
        incoming_lo=intervals_in[:, 0], incoming_hi=intervals_in[:, 1],
        n_samples=draws.shape[0])


def export_network(matrix: np.ndarray, city_ids: Sequence[str],
                   threshold: float = 0.0, direction: str = "out",
                   ) -> list[tuple[str, str, float]]:
    """Edge list (source, target, weight) for weights >= threshold.

    ``direction="out"`` reads entry (k, j) as an edge k -> j; "in" exports
    the transpose (who sends into each city).  Diagonal entries are never
    listed.  Edges are ordered by (source, target) position.
    """
    if threshold < 0.0:
        raise ValueError(f"threshold must be non-negative, got {threshold}")
    if direction not in ("out", "in"):
        raise ValueError(f"direction must be 'out' or 'in', got {direction!r}")
    matrix = np.asarray(matrix, dtype=float)
    k = matrix.shape[0]
    if len(city_ids) != k:
        raise ValueError(f"{len(city_ids)} ids for a {k}x{k} matrix")
    if direction == "in":
        matrix = matrix.T
    edges = []
    for a in range(k):
        for b in range(k):
            if a == b:
                continue
            weight = matrix[a, b]
            if weight >= threshold:
                edges.append((str(city_ids[a]), str(city_ids[b]),
                              float(weight)))
    return edges


def degree_histogram(matrix: np.ndarray, direction: str = "out",
                     bins: int = 10, log_transform: bool = False,
                     eps: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of per-city total flux (counts sum to K).

    With ``log_transform`` the histogram is taken over log10(flux + eps),
    which spreads the many-orders-of-magnitude range fluxes typically span.

    Returns:
        (bin_edges, counts) as from numpy.histogram.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    outgoing, incoming = city_flux(matrix)
    if direction == "out":
        values = outgoing
    elif direction == "in":
        values = incoming
    else:
        raise ValueError(f"direction must be 'out' or 'in', got {direction!r}")
    if log_transform:
        values = np.log10(values + eps)
    counts, edges = np.histogram(values, bins=bins)
    return edges, counts
