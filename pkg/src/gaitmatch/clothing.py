"""Silhouette-difference clothing thickness and THK0-THK9 binning."""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DegenerateInputError, DomainError, StructuralError

LEVEL_WIDTH = 0.15
MAX_LEVEL = 9
# lower edges of THK1..THK9 as the doubles nearest to 0.15 * k, so a literal 0.30 lands in THK2
_EDGES = tuple(float(Fraction(3, 20) * k) for k in range(1, MAX_LEVEL + 1))


@dataclass(frozen=True)
class Silhouette:
    """Binary foreground mask, stored as a ``(height, width)`` bool array."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise StructuralError(f"silhouette mask must be 2-D and non-empty, got shape {m.shape}")
        m = m.astype(bool, copy=True)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.mask))


def non_overlap_area(unclothed: Silhouette, clothed: Silhouette) -> int:
    """Pixels that are foreground in exactly one of the two masks."""
    if unclothed.mask.shape != clothed.mask.shape:
        raise StructuralError(
            f"silhouette sizes differ: {unclothed.width}x{unclothed.height} vs {clothed.width}x{clothed.height}"
        )
    return int(np.count_nonzero(unclothed.mask ^ clothed.mask))


def relative_thickness(unclothed: Silhouette, clothed: Silhouette) -> float:
    area = unclothed.area
    if area == 0:
        raise DegenerateInputError("unclothed silhouette has no foreground pixels")
    return non_overlap_area(unclothed, clothed) / area


def thickness_level(t: float) -> int:
    """Bin a relative thickness into THK0..THK9 (15% wide, half-open, saturating)."""
    if not math.isfinite(t) or t < 0:
        raise DomainError(f"relative thickness must be finite and non-negative, got {t!r}")
    return bisect_right(_EDGES, t)


def level_name(level: int) -> str:
    return f"THK{level}"
