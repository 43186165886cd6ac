"""Per-city summary statistics of case panels, and distances between them.

A panel is reduced to one number per city -- either the maximum biweekly
incidence or the proportion of zero-case biweeks -- and two panels are
compared through the Euclidean distance between their summary vectors.
That scalar distance is what the emulation stage models as a function of
the gravity parameters.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .model import EpidemicPanel

__all__ = [
    "SUMMARY_KINDS",
    "SummaryVector",
    "max_incidence",
    "zero_proportion",
    "summarize_panel",
    "summary_distance",
]

SUMMARY_KINDS = ("max_incidence", "zero_proportion")


@dataclass(frozen=True, eq=False)
class SummaryVector:
    """One summary value per city, tagged with the statistic it came from."""

    kind: str
    values: np.ndarray
    city_ids: tuple[str, ...]

    def __post_init__(self):
        if self.kind not in SUMMARY_KINDS:
            raise ValueError(
                f"unknown summary kind {self.kind!r}; expected one of {SUMMARY_KINDS}")
        values = np.asarray(self.values, dtype=float)
        ids = tuple(str(c) for c in self.city_ids)
        if values.ndim != 1 or values.shape[0] != len(ids):
            raise ValueError("summary values and city ids must align")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "city_ids", ids)

    @property
    def n_cities(self) -> int:
        return self.values.shape[0]

    def content_hash(self) -> str:
        """Stable hash of (kind, cities, values); identifies an observation."""
        h = hashlib.sha256()
        h.update(self.kind.encode())
        for cid, v in zip(self.city_ids, self.values):
            h.update(cid.encode())
            h.update(repr(float(v)).encode())
        return h.hexdigest()


def max_incidence(panel: EpidemicPanel) -> SummaryVector:
    """Largest single-biweek case count in each city."""
    return SummaryVector("max_incidence",
                         panel.cases.max(axis=1).astype(float),
                         panel.city_ids)


def zero_proportion(panel: EpidemicPanel) -> SummaryVector:
    """Fraction of biweeks with zero cases in each city."""
    values = (panel.cases == 0).mean(axis=1)
    return SummaryVector("zero_proportion", values, panel.city_ids)


def summarize_panel(panel: EpidemicPanel, kind: str) -> SummaryVector:
    """Dispatch on the statistic name ("max_incidence" or "zero_proportion")."""
    if kind == "max_incidence":
        return max_incidence(panel)
    if kind == "zero_proportion":
        return zero_proportion(panel)
    raise ValueError(
        f"unknown summary kind {kind!r}; expected one of {SUMMARY_KINDS}")


def summary_distance(a: SummaryVector, b: SummaryVector) -> float:
    """Euclidean distance between two summary vectors of the same kind.

    The vectors must come from the same statistic and the same city set,
    in the same order; anything else is a hard error rather than a silent
    apples-to-oranges comparison.
    """
    if a.kind != b.kind:
        raise ValueError(f"summary kinds differ: {a.kind!r} vs {b.kind!r}")
    if a.city_ids != b.city_ids:
        raise ValueError("summary vectors cover different cities")
    return float(np.linalg.norm(a.values - b.values))
