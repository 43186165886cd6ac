"""File formats: case/city/vaccination CSVs, config files, run artifacts.

Input files (header row required, UTF-8, ``#`` starts a comment line):

* cities.csv -- ``city_id,name,x_km,y_km,population,births_per_biweek``.
  Coordinates are projected km by default; with ``coords=latlon`` the two
  columns are read as longitude/latitude degrees and distances become
  great-circle km.
* cases.csv -- long form ``city_id,biweek_index,cases`` (canonical) or wide
  form ``biweek_index,<id>,<id>,...``.  Weekly data may be loaded with
  ``weekly=True``, which sums calendar pairs (1,2), (3,4), ... into biweeks
  and rejects an odd trailing week.
* vaccination.csv -- ``city_id,biweek_index,coverage`` with coverage in
  [0, 1]; unlisted pairs default to zero coverage.
* distances.csv (optional) -- square matrix, header ``city_id,<id>,...``,
  one row per city, replacing coordinate-derived distances.
* mask.csv (optional) -- ``biweek_index,label``; groups biweeks (e.g.
  holiday vs. school periods) for split flux analyses.

Artifacts round-trip losslessly: floats are written with ``repr`` so that
reading a file back reproduces the exact IEEE values, and every writer is
deterministic (no timestamps, fixed ordering, ``\\n`` line endings).
Malformed data raises :class:`~gravtsir.errors.SchemaError` naming the file
and line; bad configuration raises :class:`~gravtsir.errors.ConfigError`.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .calibrate import (CHAIN_COLUMNS, CredibleRegion2D, PosteriorChain,
                        DEFAULT_PRIOR_BOX)
from .design import TrainingSet
from .errors import ConfigError, SchemaError
from .flux import FluxSummary
from .model import (ALPHA_DEFAULT, Demographics, DistanceMatrix,
                    EpidemicPanel, PARAM_NAMES, SEASONAL_BETA)
from .summaries import SUMMARY_KINDS, SummaryVector

__all__ = [
    "RunConfig",
    "load_config",
    "load_panel",
    "read_panel",
    "load_mask",
    "correct_underreporting",
    "adjust_births_for_vaccination",
    "file_sha256",
    "write_panel",
    "write_summary",
    "read_summary",
    "write_training",
    "read_training",
    "write_chain",
    "read_chain",
    "write_region",
    "write_flux_summary",
    "write_edges",
    "write_histogram",
    "write_manifest",
]

_EARTH_RADIUS_KM = 6371.0088


# ---------------------------------------------------------------------------
# low-level CSV plumbing
# ---------------------------------------------------------------------------

def _rows(path: Path) -> Iterator[tuple[int, list[str]]]:
    """Yield (1-based line number, cells) for non-blank, non-comment lines."""
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (row[0].lstrip().startswith("#")):
                continue
            if all(not cell.strip() for cell in row):
                continue
            yield lineno, [cell.strip() for cell in row]


def _read_table(path, expected_header: Sequence[str] | None = None,
                ) -> tuple[list[str], list[tuple[int, list[str]]]]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    stream = _rows(path)
    try:
        _, header = next(stream)
    except StopIteration:
        raise SchemaError(f"{path}: file is empty") from None
    if expected_header is not None and header != list(expected_header):
        raise SchemaError(
            f"{path}:1: expected header {','.join(expected_header)!r}, "
            f"got {','.join(header)!r}")
    return header, list(stream)


def _cell_int(path: Path, lineno: int, name: str, cell: str,
              minimum: int | None = None) -> int:
    try:
        value = int(cell)
    except ValueError:
        raise SchemaError(
            f"{path}:{lineno}: column {name!r} must be an integer, "
            f"got {cell!r}") from None
    if minimum is not None and value < minimum:
        raise SchemaError(
            f"{path}:{lineno}: column {name!r} must be >= {minimum}, "
            f"got {value}")
    return value


def _cell_float(path: Path, lineno: int, name: str, cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise SchemaError(
            f"{path}:{lineno}: column {name!r} must be a number, "
            f"got {cell!r}") from None


def file_sha256(path) -> str:
    """Hex digest of a file's bytes (manifest input fingerprints)."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# input loaders
# ---------------------------------------------------------------------------

_CITIES_HEADER = ["city_id", "name", "x_km", "y_km", "population",
                  "births_per_biweek"]


def _load_cities(path) -> tuple[tuple[str, ...], np.ndarray, np.ndarray,
                                np.ndarray]:
    path = Path(path)
    _, rows = _read_table(path, _CITIES_HEADER)
    ids: list[str] = []
    xy, population, births = [], [], []
    for lineno, row in rows:
        if len(row) != 6:
            raise SchemaError(f"{path}:{lineno}: expected 6 columns, "
                              f"got {len(row)}")
        cid = row[0]
        if not cid:
            raise SchemaError(f"{path}:{lineno}: empty city_id")
        if cid in ids:
            raise SchemaError(f"{path}:{lineno}: duplicate city_id {cid!r}")
        ids.append(cid)
        xy.append((_cell_float(path, lineno, "x_km", row[2]),
                   _cell_float(path, lineno, "y_km", row[3])))
        pop = _cell_float(path, lineno, "population", row[4])
        if pop <= 0.0:
            raise SchemaError(f"{path}:{lineno}: population must be positive")
        population.append(pop)
        b = _cell_float(path, lineno, "births_per_biweek", row[5])
        if b < 0.0:
            raise SchemaError(
                f"{path}:{lineno}: births_per_biweek must be non-negative")
        births.append(b)
    if not ids:
        raise SchemaError(f"{path}: no city rows")
    return tuple(ids), np.array(xy), np.array(population), np.array(births)


def _planar_distances(xy: np.ndarray) -> np.ndarray:
    diff = xy[:, None, :] - xy[None, :, :]
    km = np.sqrt((diff ** 2).sum(axis=2))
    return np.triu(km, 1) + np.triu(km, 1).T


def _great_circle_distances(lonlat_deg: np.ndarray) -> np.ndarray:
    lon = np.radians(lonlat_deg[:, 0])
    lat = np.radians(lonlat_deg[:, 1])
    half_dlat = 0.5 * (lat[:, None] - lat[None, :])
    half_dlon = 0.5 * (lon[:, None] - lon[None, :])
    h = (np.sin(half_dlat) ** 2
         + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(half_dlon) ** 2)
    km = 2.0 * _EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    return np.triu(km, 1) + np.triu(km, 1).T


def _load_distance_file(path, city_ids: tuple[str, ...]) -> np.ndarray:
    path = Path(path)
    header, rows = _read_table(path)
    if header != ["city_id", *city_ids]:
        raise SchemaError(f"{path}:1: distance header must list the city ids "
                          "in cities-file order")
    k = len(city_ids)
    km = np.zeros((k, k))
    seen = []
    for lineno, row in rows:
        if len(row) != k + 1:
            raise SchemaError(f"{path}:{lineno}: expected {k + 1} columns, "
                              f"got {len(row)}")
        if row[0] != city_ids[len(seen)]:
            raise SchemaError(f"{path}:{lineno}: rows must follow cities-file "
                              f"order; expected {city_ids[len(seen)]!r}")
        seen.append(row[0])
        km[len(seen) - 1] = [_cell_float(path, lineno, cid, cell)
                             for cid, cell in zip(city_ids, row[1:])]
    if len(seen) != k:
        raise SchemaError(f"{path}: expected {k} rows, got {len(seen)}")
    try:
        return DistanceMatrix(km=km).km
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def _aggregate_weekly(path: Path,
                      cases: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = cases.shape[1]
    if t % 2:
        raise SchemaError(
            f"{path}: weekly series has {t} weeks; an odd trailing week "
            "cannot be aggregated into a biweek")
    summed = cases[:, 0::2] + cases[:, 1::2]
    return summed, np.arange(1, t // 2 + 1)


def _load_cases(path, city_ids: tuple[str, ...],
                weekly: bool = False) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    header, rows = _read_table(path)
    time_col = "week_index" if weekly else "biweek_index"
    if header == ["city_id", time_col, "cases"]:
        table = _cases_long(path, rows, city_ids, time_col)
    elif len(header) >= 2 and header[0] == time_col:
        table = _cases_wide(path, header, rows, city_ids, time_col)
    else:
        raise SchemaError(
            f"{path}:1: header must be 'city_id,{time_col},cases' (long) or "
            f"'{time_col},<city ids>' (wide), got {','.join(header)!r}")
    if weekly:
        return _aggregate_weekly(path, table)
    return table, np.arange(1, table.shape[1] + 1)


def _cases_long(path: Path, rows, city_ids: tuple[str, ...],
                time_col: str) -> np.ndarray:
    index = {cid: i for i, cid in enumerate(city_ids)}
    entries: dict[tuple[int, int], int] = {}
    t_max = 0
    for lineno, row in rows:
        if len(row) != 3:
            raise SchemaError(f"{path}:{lineno}: expected 3 columns, "
                              f"got {len(row)}")
        if row[0] not in index:
            raise SchemaError(f"{path}:{lineno}: unknown city_id {row[0]!r} "
                              "(not in the cities file)")
        t = _cell_int(path, lineno, time_col, row[1], minimum=1)
        count = _cell_int(path, lineno, "cases", row[2], minimum=0)
        key = (index[row[0]], t)
        if key in entries:
            raise SchemaError(f"{path}:{lineno}: duplicate entry for city "
                              f"{row[0]!r}, {time_col} {t}")
        entries[key] = count
        t_max = max(t_max, t)
    if not entries:
        raise SchemaError(f"{path}: no case rows")
    cases = np.zeros((len(city_ids), t_max), dtype=np.int64)
    for i, cid in enumerate(city_ids):
        for t in range(1, t_max + 1):
            if (i, t) not in entries:
                raise SchemaError(f"{path}: missing entry for city {cid!r}, "
                                  f"{time_col} {t}")
            cases[i, t - 1] = entries[(i, t)]
    return cases


def _cases_wide(path: Path, header, rows, city_ids: tuple[str, ...],
                time_col: str) -> np.ndarray:
    if tuple(header[1:]) != city_ids:
        missing = set(city_ids) - set(header[1:])
        extra = set(header[1:]) - set(city_ids)
        if missing or extra:
            raise SchemaError(
                f"{path}:1: wide columns disagree with the cities file "
                f"(missing {sorted(missing)}, unknown {sorted(extra)})")
        raise SchemaError(f"{path}:1: wide columns must follow cities-file "
                          "order")
    columns: dict[int, list[int]] = {}
    for lineno, row in rows:
        if len(row) != len(city_ids) + 1:
            raise SchemaError(f"{path}:{lineno}: expected "
                              f"{len(city_ids) + 1} columns, got {len(row)}")
        t = _cell_int(path, lineno, time_col, row[0], minimum=1)
        if t in columns:
            raise SchemaError(f"{path}:{lineno}: duplicate {time_col} {t}")
        columns[t] = [_cell_int(path, lineno, cid, cell, minimum=0)
                      for cid, cell in zip(city_ids, row[1:])]
    if not columns:
        raise SchemaError(f"{path}: no case rows")
    t_max = max(columns)
    missing_t = [t for t in range(1, t_max + 1) if t not in columns]
    if missing_t:
        raise SchemaError(f"{path}: missing {time_col} values {missing_t}")
    cases = np.empty((len(city_ids), t_max), dtype=np.int64)
    for t in range(1, t_max + 1):
        cases[:, t - 1] = columns[t]
    return cases


def _load_vaccination(path, city_ids: tuple[str, ...],
                      n_biweeks: int) -> np.ndarray:
    path = Path(path)
    _, rows = _read_table(path, ["city_id", "biweek_index", "coverage"])
    index = {cid: i for i, cid in enumerate(city_ids)}
    coverage = np.zeros((len(city_ids), n_biweeks))
    seen: set[tuple[int, int]] = set()
    for lineno, row in rows:
        if len(row) != 3:
            raise SchemaError(f"{path}:{lineno}: expected 3 columns, "
                              f"got {len(row)}")
        if row[0] not in index:
            raise SchemaError(f"{path}:{lineno}: unknown city_id {row[0]!r} "
                              "(not in the cities file)")
        t = _cell_int(path, lineno, "biweek_index", row[1], minimum=1)
        if t > n_biweeks:
            raise SchemaError(f"{path}:{lineno}: biweek_index {t} exceeds the "
                              f"panel length {n_biweeks}")
        v = _cell_float(path, lineno, "coverage", row[2])
        if not 0.0 <= v <= 1.0:
            raise SchemaError(f"{path}:{lineno}: coverage must lie in [0, 1], "
                              f"got {v}")
        key = (index[row[0]], t)
        if key in seen:
            raise SchemaError(f"{path}:{lineno}: duplicate entry for city "
                              f"{row[0]!r}, biweek {t}")
        seen.add(key)
        coverage[key[0], t - 1] = v
    return coverage


def load_mask(path, n_biweeks: int) -> dict[str, np.ndarray]:
    """Read biweek group labels; returns label -> boolean biweek mask."""
    path = Path(path)
    _, rows = _read_table(path, ["biweek_index", "label"])
    masks: dict[str, np.ndarray] = {}
    seen: set[int] = set()
    for lineno, row in rows:
        if len(row) != 2:
            raise SchemaError(f"{path}:{lineno}: expected 2 columns, "
                              f"got {len(row)}")
        t = _cell_int(path, lineno, "biweek_index", row[0], minimum=1)
        if t > n_biweeks:
            raise SchemaError(f"{path}:{lineno}: biweek_index {t} exceeds the "
                              f"panel length {n_biweeks}")
        if t in seen:
            raise SchemaError(f"{path}:{lineno}: biweek {t} labelled twice")
        seen.add(t)
        label = row[1]
        if not label:
            raise SchemaError(f"{path}:{lineno}: empty label")
        masks.setdefault(label, np.zeros(n_biweeks, dtype=bool))[t - 1] = True
    if not masks:
        raise SchemaError(f"{path}: no mask rows")
    return masks


def load_panel(cases_path, cities_path, vaccination_path=None,
               distances_path=None, coords: str = "km",
               weekly: bool = False,
               ) -> tuple[EpidemicPanel, Demographics, DistanceMatrix]:
    """Load a case panel with its demographics and pairwise distances.

    Args:
        cases_path: long- or wide-form case counts (weekly with
            ``weekly=True``).
        cities_path: city attributes and coordinates.
        vaccination_path: optional per-biweek coverage (default none).
        distances_path: optional precomputed distance matrix; otherwise
            distances derive from the city coordinates.
        coords: "km" for planar Euclidean, "latlon" for great-circle
            (x_km read as longitude degrees, y_km as latitude).
        weekly: case file is weekly; calendar pairs are summed to biweeks.

    Returns:
        (panel, demographics, distances), all over the cities-file order.
    """
    if coords not in ("km", "latlon"):
        raise SchemaError(f"coords must be 'km' or 'latlon', got {coords!r}")
    city_ids, xy, population, births = _load_cities(cities_path)
    cases, biweeks = _load_cases(cases_path, city_ids, weekly=weekly)
    vaccination = None
    if vaccination_path is not None:
        vaccination = _load_vaccination(vaccination_path, city_ids,
                                        cases.shape[1])
    if distances_path is not None:
        km = _load_distance_file(distances_path, city_ids)
    elif coords == "latlon":
        km = _great_circle_distances(xy)
    else:
        km = _planar_distances(xy)
    panel = EpidemicPanel(cases=cases, city_ids=city_ids, biweeks=biweeks)
    demo = Demographics(city_ids=city_ids, population=population,
                        births=births, vaccination=vaccination)
    try:
        dist = DistanceMatrix(km=km)
    except ValueError as exc:
        raise SchemaError(f"{cities_path}: coordinates give an invalid "
                          f"distance matrix ({exc})") from None
    return panel, demo, dist


def read_panel(path, weekly: bool = False) -> EpidemicPanel:
    """Read a case CSV alone; cities appear in first-encounter order."""
    path = Path(path)
    header, rows = _read_table(path)
    time_col = "week_index" if weekly else "biweek_index"
    if header == ["city_id", time_col, "cases"]:
        ids: list[str] = []
        for _, row in rows:
            if len(row) == 3 and row[0] not in ids:
                ids.append(row[0])
    elif len(header) >= 2 and header[0] == time_col:
        ids = list(header[1:])
    else:
        raise SchemaError(
            f"{path}:1: header must be 'city_id,{time_col},cases' (long) or "
            f"'{time_col},<city ids>' (wide), got {','.join(header)!r}")
    city_ids = tuple(ids)
    if header[0] == "city_id":
        cases = _cases_long(path, rows, city_ids, time_col)
    else:
        cases = _cases_wide(path, header, rows, city_ids, time_col)
    if weekly:
        cases, biweeks = _aggregate_weekly(path, cases)
    else:
        biweeks = np.arange(1, cases.shape[1] + 1)
    return EpidemicPanel(cases=cases, city_ids=city_ids, biweeks=biweeks)


# ---------------------------------------------------------------------------
# corrections
# ---------------------------------------------------------------------------

def correct_underreporting(panel: EpidemicPanel,
                           rate: float = 0.52) -> EpidemicPanel:
    """Scale counts by the reciprocal reporting rate, rounding to integers.

    Each count becomes round(count / rate); zeros stay zero.  The default
    rate is the 52% reporting fraction commonly used for historical measles
    series.
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"reporting rate must lie in (0, 1], got {rate}")
    corrected = np.rint(panel.cases / rate).astype(np.int64)
    return EpidemicPanel(cases=corrected, city_ids=panel.city_ids,
                         biweeks=panel.biweeks,
                         truncations=panel.truncations)


def adjust_births_for_vaccination(births, vaccination) -> np.ndarray:
    """Effective susceptible recruitment B * (1 - V)."""
    births = np.asarray(births, dtype=float)
    vaccination = np.asarray(vaccination, dtype=float)
    if np.any(vaccination < 0.0) or np.any(vaccination > 1.0):
        raise ValueError("vaccination coverage must lie in [0, 1]")
    return births * (1.0 - vaccination)


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Resolved settings for one pipeline run.

    Built by :func:`load_config`; path fields are absolute (resolved
    against the config file's directory) and are verified to exist at load
    time.
    """

    seed: int | None = None
    statistic: str = "zero_proportion"
    cases: Path | None = None
    cities: Path | None = None
    vaccination: Path | None = None
    distances: Path | None = None
    mask: Path | None = None
    coords: str = "km"
    weekly: bool = False
    reporting_rate: float | None = None
    horizon: int | None = None
    s0: float = 1.0
    normalize: bool = True
    alpha: float = ALPHA_DEFAULT
    beta: tuple[float, ...] = tuple(SEASONAL_BETA)
    theta_prime: float | None = None
    tau1: float | None = None
    tau2: float | None = None
    rho: float | None = None
    grid: dict[str, int] = field(default_factory=dict)
    pinned: dict[str, float] = field(default_factory=dict)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    replicates: int = 1
    chain_length: int = 20000
    burn_in: int | None = None
    thin: int = 1
    delta_pinned: float | None = None
    gamma: float = 0.95
    region_axes: tuple[str, str] = ("theta_prime", "rho")
    grid_size: int = 128
    n_starts: int = 8
    jitter: float = 1e-8
    flux_average: bool = True
    flux_threshold: float = 0.0
    flux_bins: int = 10
    flux_log: bool = False
    flux_direction: str = "out"
    flux_cities: tuple[str, ...] | None = None
    flux_thin: int = 1

    def gravity_values(self) -> tuple[float, float, float, float]:
        missing = [n for n in PARAM_NAMES if getattr(self, n) is None]
        if missing:
            raise ConfigError(
                f"simulation needs gravity parameters; missing {missing}")
        return (self.theta_prime, self.tau1, self.tau2, self.rho)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"config is missing required keys: {missing}")

    def prior_box(self) -> np.ndarray:
        box = DEFAULT_PRIOR_BOX.copy()
        for j, name in enumerate(PARAM_NAMES):
            if name in self.bounds:
                box[j] = self.bounds[name]
        return box

    def as_manifest_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, dict):
                value = {k: list(v) if isinstance(v, tuple) else v
                         for k, v in sorted(value.items())}
            out[f.name] = value
        return out


def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_pair(raw: str) -> tuple[float, float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'lo,hi', got {raw!r}")
    return float(parts[0]), float(parts[1])


_PATH_KEYS = ("cases", "cities", "vaccination", "distances", "mask")
_SCALAR_PARSERS = {
    "seed": int,
    "statistic": str,
    "coords": str,
    "weekly": _parse_bool,
    "reporting_rate": float,
    "horizon": int,
    "s0": float,
    "normalize": _parse_bool,
    "alpha": float,
    "theta_prime": float,
    "tau1": float,
    "tau2": float,
    "rho": float,
    "replicates": int,
    "chain_length": int,
    "burn_in": int,
    "thin": int,
    "delta_pinned": float,
    "gamma": float,
    "grid_size": int,
    "n_starts": int,
    "jitter": float,
    "flux_average": _parse_bool,
    "flux_threshold": float,
    "flux_bins": int,
    "flux_log": _parse_bool,
    "flux_direction": str,
    "flux_thin": int,
}


def _validate_config(cfg: RunConfig, path: Path) -> None:
    def bad(message: str) -> ConfigError:
        return ConfigError(f"{path}: {message}")

    if cfg.statistic not in SUMMARY_KINDS:
        raise bad(f"statistic must be one of {SUMMARY_KINDS}, "
                  f"got {cfg.statistic!r}")
    if cfg.coords not in ("km", "latlon"):
        raise bad(f"coords must be 'km' or 'latlon', got {cfg.coords!r}")
    if cfg.reporting_rate is not None and not 0.0 < cfg.reporting_rate <= 1.0:
        raise bad(f"reporting_rate must lie in (0, 1], "
                  f"got {cfg.reporting_rate}")
    if not 0.0 < cfg.s0 <= 1.0:
        raise bad(f"s0 must lie in (0, 1], got {cfg.s0}")
    if cfg.horizon is not None and cfg.horizon < 2:
        raise bad(f"horizon must be >= 2, got {cfg.horizon}")
    if not 0.0 < cfg.alpha <= 1.0:
        raise bad(f"alpha must lie in (0, 1], got {cfg.alpha}")
    if not cfg.beta or any(b <= 0.0 for b in cfg.beta):
        raise bad("beta values must be positive")
    if cfg.replicates < 1:
        raise bad(f"replicates must be >= 1, got {cfg.replicates}")
    if cfg.chain_length < 1:
        raise bad(f"chain_length must be >= 1, got {cfg.chain_length}")
    if cfg.burn_in is not None and cfg.burn_in < 0:
        raise bad(f"burn_in must be >= 0, got {cfg.burn_in}")
    if cfg.thin < 1 or cfg.flux_thin < 1:
        raise bad("thin and flux_thin must be >= 1")
    if not 0.0 < cfg.gamma < 1.0:
        raise bad(f"gamma must lie in (0, 1), got {cfg.gamma}")
    if cfg.flux_direction not in ("out", "in"):
        raise bad(f"flux_direction must be 'out' or 'in', "
                  f"got {cfg.flux_direction!r}")
    if cfg.flux_threshold < 0.0 or cfg.flux_bins < 1:
        raise bad("flux_threshold must be >= 0 and flux_bins >= 1")
    if cfg.jitter < 0.0:
        raise bad(f"jitter must be >= 0, got {cfg.jitter}")
    for name, (lo, hi) in cfg.bounds.items():
        if hi <= lo:
            raise bad(f"bounds_{name} must satisfy lo < hi, got {lo},{hi}")
    for name in set(cfg.grid) & set(cfg.pinned):
        raise bad(f"axis {name} is both gridded and pinned")
    for name, count in cfg.grid.items():
        if count < 2:
            raise bad(f"grid_{name} must be >= 2, got {count}")
    for path_key in _PATH_KEYS:
        value = getattr(cfg, path_key)
        if value is not None and not value.exists():
            raise bad(f"{path_key} file {value} does not exist")


def load_config(path) -> RunConfig:
    """Parse a line-oriented ``key = value`` config file.

    ``#`` starts a comment; blank lines are ignored; keys outside the known
    set, duplicate keys, and malformed values are errors.  Relative paths
    are resolved against the config file's directory, and referenced files
    must exist.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    cfg = RunConfig()
    seen: set[str] = set()
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        value = raw_value.strip()
        if key in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        if not value:
            raise ConfigError(f"{path}:{lineno}: empty value for {key!r}")
        try:
            if key in _SCALAR_PARSERS:
                setattr(cfg, key, _SCALAR_PARSERS[key](value))
            elif key in _PATH_KEYS:
                setattr(cfg, key, (path.parent / value).resolve())
            elif key == "beta":
                cfg.beta = tuple(float(v) for v in value.split(","))
            elif key == "region_axes":
                axes = tuple(a.strip() for a in value.split(","))
                if len(axes) != 2 or any(a not in PARAM_NAMES for a in axes):
                    raise ValueError(
                        f"expected two axis names from {PARAM_NAMES}")
                cfg.region_axes = axes
            elif key == "flux_cities":
                cfg.flux_cities = tuple(c.strip() for c in value.split(","))
            elif key.startswith("grid_") and key[5:] in PARAM_NAMES:
                cfg.grid[key[5:]] = int(value)
            elif key.startswith("pin_") and key[4:] in PARAM_NAMES:
                cfg.pinned[key[4:]] = float(value)
            elif key.startswith("bounds_") and key[7:] in PARAM_NAMES:
                cfg.bounds[key[7:]] = _parse_pair(value)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: "
                              f"{exc}") from None
    _validate_config(cfg, path)
    return cfg


# ---------------------------------------------------------------------------
# artifact writers and readers
# ---------------------------------------------------------------------------

def _open_writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_panel(panel: EpidemicPanel, path) -> None:
    """Write a panel in canonical long form (city-major, biweek ascending)."""
    fh, writer = _open_writer(path)
    with fh:
        writer.writerow(["city_id", "biweek_index", "cases"])
        for i, cid in enumerate(panel.city_ids):
            for j, label in enumerate(panel.biweeks):
                writer.writerow([cid, int(label), int(panel.cases[i, j])])


def write_summary(summary: SummaryVector, path) -> None:
    """Write city_id,value rows; the value column is named after the kind."""
    fh, writer = _open_writer(path)
    with fh:
        writer.writerow(["city_id", summary.kind])
        for cid, value in zip(summary.city_ids, summary.values):
            writer.writerow([cid, repr(float(value))])


def read_summary(path) -> SummaryVector:
    path = Path(path)
    header, rows = _read_table(path)
    if len(header) != 2 or header[0] != "city_id":
        raise SchemaError(f"{path}:1: expected header 'city_id,<kind>', "
                          f"got {','.join(header)!r}")
    kind = header[1]
    if kind not in SUMMARY_KINDS:
        raise SchemaError(f"{path}:1: unknown summary kind {kind!r}")
    ids, values = [], []
    for lineno, row in rows:
        if len(row) != 2:
            raise SchemaError(f"{path}:{lineno}: expected 2 columns")
        ids.append(row[0])
        values.append(_cell_float(path, lineno, kind, row[1]))
    try:
        return SummaryVector(kind=kind, values=np.array(values),
                             city_ids=tuple(ids))
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def _meta_lines(fh) -> dict[str, str]:
    meta = {}
    position = fh.tell()
    while True:
        line = fh.readline()
        if not line.startswith("#"):
            fh.seek(position)
            return meta
        position = fh.tell()
        body = line[1:].strip()
        key, _, value = body.partition(" ")
        meta[key] = value.strip()


def _require_meta(meta: dict[str, str], keys: Sequence[str],
                  path: Path) -> None:
    missing = [k for k in keys if k not in meta]
    if missing:
        raise SchemaError(f"{path}: missing metadata lines {missing}")


def write_training(training: TrainingSet, path) -> None:
    """Serialize a training set: metadata comments, then one row per point."""
    fh, writer = _open_writer(path)
    with fh:
        fh.write(f"# statistic {training.kind}\n")
        fh.write(f"# replicates {training.replicates}\n")
        fh.write(f"# root_seed {training.root_seed}\n")
        fh.write(f"# observed_hash {training.observed_hash}\n")
        fh.write(f"# pinned {json.dumps(training.pinned, sort_keys=True)}\n")
        writer.writerow([*PARAM_NAMES, "distance"])
        for point, d in zip(training.points, training.distances):
            writer.writerow([repr(float(v)) for v in point]
                            + [repr(float(d))])


def read_training(path) -> TrainingSet:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    with open(path, newline="") as fh:
        meta = _meta_lines(fh)
        _require_meta(meta, ["statistic", "replicates", "root_seed",
                             "observed_hash", "pinned"], path)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != [*PARAM_NAMES, "distance"]:
            raise SchemaError(f"{path}: expected header "
                              f"{','.join([*PARAM_NAMES, 'distance'])!r}")
        table = []
        for row in reader:
            if not row:
                continue
            if len(row) != 5:
                raise SchemaError(f"{path}: expected 5 columns, got {row!r}")
            table.append([float(v) for v in row])
    if not table:
        raise SchemaError(f"{path}: no training rows")
    arr = np.array(table)
    try:
        return TrainingSet(points=arr[:, :4], distances=arr[:, 4],
                           kind=meta["statistic"],
                           replicates=int(meta["replicates"]),
                           root_seed=int(meta["root_seed"]),
                           observed_hash=meta["observed_hash"],
                           pinned=json.loads(meta["pinned"]))
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def write_chain(chain: PosteriorChain, path, emulator_hash: str = "") -> None:
    """Serialize a chain with the settings needed to reproduce it."""
    fh, writer = _open_writer(path)
    with fh:
        fh.write(f"# seed {chain.seed}\n")
        fh.write("# widths " + " ".join(repr(float(w))
                                        for w in chain.widths) + "\n")
        fh.write(f"# pinned {json.dumps(chain.pinned, sort_keys=True)}\n")
        fh.write(f"# burn_in {chain.burn_in}\n")
        fh.write(f"# thin {chain.thin}\n")
        fh.write(f"# n_evals {chain.n_evals}\n")
        fh.write("# prior_box " + " ".join(repr(float(v)) for v in
                                           chain.prior_box.ravel()) + "\n")
        fh.write(f"# emulator_hash {emulator_hash}\n")
        writer.writerow(["iteration", *CHAIN_COLUMNS])
        for i, row in enumerate(chain.samples, start=1):
            writer.writerow([i] + [repr(float(v)) for v in row])


def read_chain(path) -> tuple[PosteriorChain, str]:
    """Read a chain CSV back; returns (chain, emulator hash)."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    with open(path, newline="") as fh:
        meta = _meta_lines(fh)
        _require_meta(meta, ["seed", "widths", "pinned", "burn_in", "thin",
                             "n_evals", "prior_box"], path)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["iteration", *CHAIN_COLUMNS]:
            raise SchemaError(f"{path}: expected header "
                              f"{','.join(['iteration', *CHAIN_COLUMNS])!r}")
        samples = []
        for row in reader:
            if not row:
                continue
            if len(row) != 6:
                raise SchemaError(f"{path}: expected 6 columns, got {row!r}")
            samples.append([float(v) for v in row[1:]])
    if not samples:
        raise SchemaError(f"{path}: no samples")
    try:
        chain = PosteriorChain(
            samples=np.array(samples), seed=int(meta["seed"]),
            widths=np.array([float(v) for v in meta["widths"].split()]),
            pinned=json.loads(meta["pinned"]), burn_in=int(meta["burn_in"]),
            thin=int(meta["thin"]), n_evals=int(meta["n_evals"]),
            prior_box=np.array([float(v) for v in
                                meta["prior_box"].split()]).reshape(4, 2))
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None
    return chain, meta.get("emulator_hash", "")


def write_region(region: CredibleRegion2D, path) -> None:
    """Write credible-region boundary polylines for external plotting."""
    fh, writer = _open_writer(path)
    with fh:
        fh.write(f"# names {region.names[0]},{region.names[1]}\n")
        fh.write(f"# gamma {region.gamma!r}\n")
        fh.write(f"# level {region.level!r}\n")
        fh.write(f"# mass {region.mass!r}\n")
        fh.write(f"# area {region.area!r}\n")
        writer.writerow(["polyline", region.names[0], region.names[1]])
        for idx, line in enumerate(region.polylines, start=1):
            for x, y in line:
                writer.writerow([idx, repr(float(x)), repr(float(y))])


def write_flux_summary(summary: FluxSummary, path) -> None:
    """Write per-city outgoing ("from") and incoming ("to") flux intervals."""
    fh, writer = _open_writer(path)
    with fh:
        fh.write(f"# gamma {summary.gamma!r}\n")
        fh.write(f"# n_samples {summary.n_samples}\n")
        writer.writerow(["city", "from_median", "from_lo", "from_hi",
                         "to_median", "to_lo", "to_hi"])
        for i, cid in enumerate(summary.city_ids):
            writer.writerow([cid] + [
                repr(float(v)) for v in
                (summary.outgoing_median[i], summary.outgoing_lo[i],
                 summary.outgoing_hi[i], summary.incoming_median[i],
                 summary.incoming_lo[i], summary.incoming_hi[i])])


def write_edges(edges: Sequence[tuple[str, str, float]], path) -> None:
    """Write a network edge list (source_id,target_id,weight)."""
    fh, writer = _open_writer(path)
    with fh:
        writer.writerow(["source_id", "target_id", "weight"])
        for source, target, weight in edges:
            writer.writerow([source, target, repr(float(weight))])


def write_histogram(bin_edges: np.ndarray, counts: np.ndarray, path) -> None:
    """Write histogram bins (bin_lo,bin_hi,count)."""
    fh, writer = _open_writer(path)
    with fh:
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, count in zip(bin_edges[:-1], bin_edges[1:], counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(count)])


def write_manifest(path, command: str, config: RunConfig, seed: int | None,
                   inputs: Sequence[Path | str],
                   outputs: Sequence[Path | str]) -> None:
    """Record what a run consumed and produced.

    The manifest carries the resolved configuration, the effective seed,
    content hashes of every input file, output names, and tool versions --
    enough to verify byte-identical replay.  Nothing time-dependent is
    written.
    """
    import scipy

    from . import __version__

    manifest = {
        "format": 1,
        "tool": "gravtsir",
        "version": __version__,
        "versions": {"numpy": np.__version__, "scipy": scipy.__version__},
        "command": command,
        "seed": seed,
        "config": config.as_manifest_dict(),
        "inputs": {str(Path(p).name): file_sha256(p) for p in inputs},
        "outputs": sorted(str(Path(p).name) for p in outputs),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
