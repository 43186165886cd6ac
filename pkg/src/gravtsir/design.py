"""Design grids over gravity-parameter space and emulator training sets.

The calibration pipeline evaluates the simulator on a full-factorial grid of
gravity parameters, reduces each simulated panel to its summary distance from
the observed panel, and hands the (parameter point, distance) pairs to the
emulator as training data.  Replicate simulations at one grid point draw from
substreams addressed by (root seed, grid index, replicate), so the training
set is identical no matter how the work is scheduled.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .model import (PARAM_NAMES, Demographics, DistanceMatrix, EpidemicPanel,
                    EpidemicState, GravityParams, LocalDynamics, simulate)
from .rng import spawn_seed
from .summaries import SummaryVector, summarize_panel, summary_distance

__all__ = [
    "DEFAULT_BOUNDS",
    "DesignGrid",
    "SimulationSettings",
    "TrainingSet",
    "make_grid",
    "build_training_set",
]

DEFAULT_BOUNDS = {name: (0.0, 2.0) for name in PARAM_NAMES}


@dataclass(frozen=True, eq=False)
class DesignGrid:
    """Full-factorial design over the free gravity axes.

    ``points`` has one row per design point, columns in PARAM_NAMES order;
    pinned axes hold their constant in every row.
    """

    points: np.ndarray
    bounds: dict[str, tuple[float, float]]
    counts: dict[str, int]
    pinned: dict[str, float]

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2 or points.shape[1] != len(PARAM_NAMES):
            raise ValueError(
                f"grid points must be (p, {len(PARAM_NAMES)}), got {points.shape}")
        if len(np.unique(points, axis=0)) != points.shape[0]:
            raise ValueError("grid points must be unique")
        for j, name in enumerate(PARAM_NAMES):
            lo, hi = self.bounds[name]
            col = points[:, j]
            if np.any(col < lo) or np.any(col > hi):
                raise ValueError(f"grid leaves the {name} bounds [{lo}, {hi}]")
        object.__setattr__(self, "points", points)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def free_axes(self) -> tuple[str, ...]:
        return tuple(n for n in PARAM_NAMES if n not in self.pinned)

    def params(self, i: int) -> GravityParams:
        return GravityParams.from_array(self.points[i])


def _resolve_bounds(
        bounds: Mapping[str, tuple[float, float]] | tuple[float, float] | None,
) -> dict[str, tuple[float, float]]:
    if bounds is None:
        return dict(DEFAULT_BOUNDS)
    if isinstance(bounds, tuple):
        lo, hi = float(bounds[0]), float(bounds[1])
        return {name: (lo, hi) for name in PARAM_NAMES}
    out = dict(DEFAULT_BOUNDS)
    for name, pair in bounds.items():
        if name not in PARAM_NAMES:
            raise ValueError(f"unknown axis {name!r}")
        out[name] = (float(pair[0]), float(pair[1]))
    return out


def make_grid(counts: Mapping[str, int] | int,
              bounds: Mapping[str, tuple[float, float]] | tuple[float, float] | None = None,
              pinned: Mapping[str, float] | None = None) -> DesignGrid:
    """Build a full factorial of endpoint-inclusive equally spaced values.

    Args:
        counts: points per free axis -- a shared int or a mapping by axis
            name; each free axis needs at least 2 points.
        bounds: per-axis (lo, hi), a shared pair, or None for [0, 2] on all
            axes.
        pinned: axes held at a constant (e.g. {"tau1": 1.0, "tau2": 1.0});
            pinned values must sit inside their axis bounds.

    Returns:
        DesignGrid whose rows enumerate the cartesian product in canonical
        axis order, last axis fastest.
    """
    box = _resolve_bounds(bounds)
    pins = {} if pinned is None else {str(k): float(v) for k, v in pinned.items()}
    for name, value in pins.items():
        if name not in PARAM_NAMES:
            raise ValueError(f"unknown axis {name!r}")
        lo, hi = box[name]
        if not lo <= value <= hi:
            raise ValueError(
                f"pinned {name}={value} outside its bounds [{lo}, {hi}]")
    axes = []
    resolved_counts: dict[str, int] = {}
    for name in PARAM_NAMES:
        lo, hi = box[name]
        if hi < lo:
            raise ValueError(f"inverted bounds for {name}: [{lo}, {hi}]")
        if name in pins:
            axes.append(np.array([pins[name]]))
            continue
        n = int(counts) if isinstance(counts, int) else int(counts[name])
        if n < 2:
            raise ValueError(f"need at least 2 grid values on free axis {name}")
        if hi == lo:
            raise ValueError(f"degenerate bounds for free axis {name}")
        resolved_counts[name] = n
        axes.append(np.linspace(lo, hi, n))
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    return DesignGrid(points=points, bounds=box, counts=resolved_counts,
                      pinned=pins)


@dataclass(frozen=True, eq=False)
class SimulationSettings:
    """Everything a grid simulation needs besides the gravity parameters."""

    initial: EpidemicState
    local: LocalDynamics
    demo: Demographics
    dist: DistanceMatrix
    horizon: int
    normalize_by_population: bool = True

    def run(self, gravity: GravityParams, seed: int) -> EpidemicPanel:
        return simulate(self.initial, gravity, self.local, self.demo,
                        self.dist, self.horizon, seed,
                        normalize_by_population=self.normalize_by_population)


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """(design point, mean summary distance) pairs plus provenance."""

    points: np.ndarray
    distances: np.ndarray
    kind: str
    replicates: int
    root_seed: int
    observed_hash: str
    pinned: dict[str, float]

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        distances = np.asarray(self.distances, dtype=float)
        if points.ndim != 2 or points.shape[1] != len(PARAM_NAMES):
            raise ValueError("training points must be (p, 4)")
        if distances.shape != (points.shape[0],):
            raise ValueError("one distance per design point required")
        if np.any(distances < 0.0):
            raise ValueError("summary distances must be non-negative")
        if points.shape[0] < 6:
            raise ValueError(
                f"need at least 6 design points to train, got {points.shape[0]}")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "distances", distances)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def _distances_for_range(settings: SimulationSettings, observed: SummaryVector,
                         points: np.ndarray, indices: Sequence[int],
                         root_seed: int, replicates: int,
                         simulator: Callable[[GravityParams, int], EpidemicPanel],
                         ) -> list[float]:
    out = []
    for i in indices:
        gravity = GravityParams.from_array(points[i])
        total = 0.0
        for r in range(replicates):
            panel = simulator(gravity, spawn_seed(root_seed, i, r))
            total += summary_distance(summarize_panel(panel, observed.kind),
                                      observed)
        out.append(total / replicates)
    return out


def build_training_set(grid: DesignGrid, observed: SummaryVector,
                       settings: SimulationSettings, root_seed: int,
                       replicates: int = 1, workers: int = 1,
                       simulator: Callable[[GravityParams, int], EpidemicPanel] | None = None,
                       ) -> TrainingSet:
    """Simulate the grid and assemble the emulator training set.

    Each (grid point i, replicate r) simulation is seeded by
    spawn_seed(root_seed, i, r), so the result does not depend on the worker
    count; D_i is the mean over replicates of the summary distance to
    ``observed``.  Any simulation failure aborts the whole build.

    Args:
        grid: design points.
        observed: summary of the observed panel; defines the statistic kind
            and the target values.
        settings: simulator configuration shared across grid points.
        root_seed: seed all replicate substreams derive from.
        replicates: simulations averaged per grid point (>= 1).
        workers: process count for parallel construction.
        simulator: replacement for the configured simulator, mainly for
            tests; must accept (GravityParams, seed) and return a panel.

    Returns:
        TrainingSet with one mean distance per grid point, in grid order.
    """
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if observed.city_ids != settings.demo.city_ids:
        raise ValueError("observed summary covers different cities than the "
                         "simulation settings")
    if simulator is None:
        simulator = settings.run
    p = grid.n_points
    distances = np.empty(p)
    if workers == 1 or p < 2 * workers:
        distances[:] = _distances_for_range(settings, observed, grid.points,
                                            range(p), root_seed, replicates,
                                            simulator)
    else:
        # Static chunking; chunk results are reassembled by position, so the
        # ordering is canonical whatever the pool's completion order.
        chunks = [c for c in np.array_split(np.arange(p), workers) if c.size]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_distances_for_range, settings, observed,
                            grid.points, chunk.tolist(), root_seed,
                            replicates, simulator)
                for chunk in chunks
            ]
            for chunk, fut in zip(chunks, futures):
                distances[chunk] = fut.result()
    return TrainingSet(points=grid.points.copy(), distances=distances,
                       kind=observed.kind, replicates=replicates,
                       root_seed=int(root_seed),
                       observed_hash=observed.content_hash(),
                       pinned=dict(grid.pinned))
