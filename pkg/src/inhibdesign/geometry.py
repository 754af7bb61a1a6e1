"""
Planar geometry for design construction: regions, candidate sets, distances
and disc sampling.

Point sets are carried around as ``(n, 2)`` float arrays. Coordinates are
assumed to live in a projected, planar system; no geodesic handling is done.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ValidationError

logger = logging.getLogger(__name__)


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        bounds = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(b) for b in bounds):
            raise ValidationError(f"region bounds must be finite, got {bounds}")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValidationError(f"degenerate region {bounds}")

    @classmethod
    def unit(cls):
        return cls(0.0, 0.0, 1.0, 1.0)

    @classmethod
    def bounding(cls, points, pad=0.0):
        """Smallest rectangle containing ``points``, grown by ``pad`` on each side."""
        pts = as_points(points)
        lo = pts.min(axis=0) - pad
        hi = pts.max(axis=0) + pad
        # a single point or collinear set still needs a nondegenerate box
        hi = np.where(hi > lo, hi, lo + max(pad, 1e-9))
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    @property
    def width(self):
        return self.xmax - self.xmin

    @property
    def height(self):
        return self.ymax - self.ymin

    @property
    def area(self):
        return self.width * self.height

    def contains(self, points):
        pts = as_points(points)
        return (
            (pts[:, 0] >= self.xmin)
            & (pts[:, 0] <= self.xmax)
            & (pts[:, 1] >= self.ymin)
            & (pts[:, 1] <= self.ymax)
        )


@dataclass
class CandidateSet:
    """Finite set of permissible sampling locations with unique ids."""

    points: np.ndarray
    ids: list = field(default=None)

    def __post_init__(self):
        self.points = as_points(self.points)
        if len(self.points) < 1:
            raise ValidationError("candidate set is empty")
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.points))]
        else:
            self.ids = [str(i) for i in self.ids]
        if len(self.ids) != len(self.points):
            raise ValidationError("candidate ids and points differ in length")
        if len(set(self.ids)) != len(self.ids):
            seen = set()
            dup = next(i for i in self.ids if i in seen or seen.add(i))
            raise ValidationError(f"duplicate candidate id {dup!r}")

    def __len__(self):
        return len(self.points)

    @property
    def region(self):
        return Region.bounding(self.points)

    def deduplicated(self):
        """Drop coincident locations, keeping the first id seen for each."""
        _, first = np.unique(self.points, axis=0, return_index=True)
        first = np.sort(first)
        dropped = len(self.points) - len(first)
        if dropped == 0:
            return self
        logger.warning("dropped %d coincident candidate location(s)", dropped)
        return CandidateSet(self.points[first], [self.ids[i] for i in first])


def as_points(points):
    """Coerce a sequence of points to a finite ``(n, 2)`` float array."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and pts.size == 2:
        pts = pts.reshape(1, 2)
    if pts.size == 0:
        return pts.reshape(0, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError(f"expected (n, 2) coordinates, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("coordinates must be finite")
    return pts


def distance(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


def min_pairwise_distance(points: Sequence) -> float:
    pts = as_points(points)
    if len(pts) < 2:
        raise ValidationError("minimum pairwise distance needs at least 2 points")
    return float(pdist(pts).min())


def packing_density(n, delta, region):
    """Fraction of ``region`` covered by ``n`` discs of diameter ``delta``.

    Values of 1 or more are returned as-is but logged, since no design can
    reach them.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    if delta <= 0:
        raise ValidationError("delta must be positive")
    rho = n * math.pi * delta**2 / (4.0 * region.area)
    if rho >= 1.0:
        logger.warning("packing density %.3f >= 1: design infeasible by area", rho)
    return rho


def uniform_in_region(region, rng, size=None):
    """Uniform draw(s) over a rectangle; ``size`` gives an ``(size, 2)`` array."""
    shape = (2,) if size is None else (size, 2)
    u = rng.random(shape)
    lo = np.array([region.xmin, region.ymin])
    span = np.array([region.width, region.height])
    return lo + u * span


def uniform_in_disc(center, radius, rng, size=None):
    """Area-uniform draw(s) from the closed disc via ``r = radius * sqrt(u)``.

    Always consumes exactly two uniforms per point.
    """
    if radius <= 0:
        raise ValidationError("disc radius must be positive")
    shape = (2,) if size is None else (size, 2)
    u = rng.random(shape)
    r = radius * np.sqrt(u[..., 0])
    theta = 2.0 * np.pi * u[..., 1]
    offset = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    return np.asarray(center, dtype=float) + offset
