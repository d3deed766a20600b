"""Inter-topic similarity measures and empirical-CDF-based pruning thresholds.

Topics are probability vectors over a shared vocabulary. Three measures are
supported; the Hellinger distance is canonicalized to a similarity (1 - H)
so a single "prune everything below the threshold" rule covers all three.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_SUM_TOL = 1e-6


class MeasureKind(enum.Enum):
    HELLINGER = "hellinger"
    BHATTACHARYYA = "bhattacharyya"
    QUASI_JACCARD = "quasi_jaccard"

    @classmethod
    def parse(cls, name: str) -> "MeasureKind":
        try:
            return cls(name.strip().lower().replace("-", "_"))
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValidationError(f"unknown measure {name!r}; expected one of: {valid}") from None


def _check_pair(p: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValidationError(f"distribution lengths differ: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if abs(float(v.sum()) - 1.0) > _SUM_TOL:
            raise ValidationError(f"{name} does not sum to 1 (got {v.sum():.8f})")
    return p, q


def hellinger(p, q) -> float:
    """Hellinger distance: 0 for identical distributions, 1 for disjoint."""
    p, q = _check_pair(p, q)
    s = float(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))
    return min(1.0, math.sqrt(max(0.0, s) / 2.0))


def bhattacharyya(p, q) -> float:
    """Bhattacharyya coefficient: 1 for identical distributions, 0 for disjoint."""
    p, q = _check_pair(p, q)
    return min(1.0, float(np.sum(np.sqrt(p * q))))


def quasi_jaccard(p, q) -> float:
    """Inner-product overlap p.q / (|p|^2 + |q|^2 - p.q), often miscalled Tanimoto."""
    p, q = _check_pair(p, q)
    dot = float(np.dot(p, q))
    denom = float(np.dot(p, p)) + float(np.dot(q, q)) - dot
    return min(1.0, dot / denom) if denom > 0 else 0.0


_MEASURE_FN = {
    MeasureKind.HELLINGER: hellinger,
    MeasureKind.BHATTACHARYYA: bhattacharyya,
    MeasureKind.QUASI_JACCARD: quasi_jaccard,
}


def measure(kind: MeasureKind, p, q) -> float:
    """Raw value of the chosen measure (distance for Hellinger)."""
    return _MEASURE_FN[kind](p, q)


def to_similarity(kind: MeasureKind, value: float) -> float:
    """Canonicalize a raw measure value so larger always means more similar."""
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"measure value {value} outside [0, 1]")
    return 1.0 - value if kind is MeasureKind.HELLINGER else value


def similarity(kind: MeasureKind, p, q) -> float:
    """Canonical similarity of two distributions under the chosen measure."""
    return to_similarity(kind, measure(kind, p, q))


@dataclass(frozen=True)
class EmpiricalCDF:
    """The empirical distribution of a sample, F(x) = #{values <= x} / n."""

    sorted_values: np.ndarray  # ascending
    n: int

    @classmethod
    def from_values(cls, values) -> "EmpiricalCDF":
        arr = np.sort(np.asarray(values, dtype=np.float64))
        if arr.size == 0:
            raise ValidationError("cannot build an empirical CDF from no values")
        return cls(sorted_values=arr, n=int(arr.size))

    def __call__(self, x: float) -> float:
        return float(np.searchsorted(self.sorted_values, x, side="right")) / self.n

    def to_csv(self) -> str:
        """CSV "value,cdf" at the stored sample points."""
        lines = ["value,cdf"]
        for i, v in enumerate(self.sorted_values):
            lines.append(f"{float(v)!r},{(i + 1) / self.n!r}")
        return "\n".join(lines) + "\n"


def empirical_cdf(values) -> EmpiricalCDF:
    return EmpiricalCDF.from_values(values)


def threshold_at(cdf: EmpiricalCDF, zeta: float) -> float:
    """Lower empirical quantile: the smallest stored value v with F(v) >= zeta.

    zeta=0 returns the smallest sample, zeta=1 the largest; no interpolation.
    """
    if not 0.0 <= zeta <= 1.0:
        raise ValidationError("zeta must lie in [0, 1]")
    ranks = np.arange(1, cdf.n + 1, dtype=np.float64) / cdf.n
    idx = int(np.searchsorted(ranks, zeta, side="left"))
    idx = min(idx, cdf.n - 1)
    return float(cdf.sorted_values[idx])
