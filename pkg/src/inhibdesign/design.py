"""
Randomised sampling designs.

Families:

* ``SI``          simple inhibitory, no two points closer than ``delta``
* ``ICP``         inhibitory plus ``k`` close pairs
* ``CRD``         completely random
* ``LATTICE``     square lattice with (optionally) random origin
* ``LATTICE_CP``  lattice plus close pairs

``SI`` and ``ICP`` also have finite-candidate-set variants that pick
locations from a :class:`~inhibdesign.geometry.CandidateSet`.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FeasibilityError, ValidationError
from .geometry import (
    Region,
    as_points,
    min_pairwise_distance,
    packing_density,
    uniform_in_disc,
    uniform_in_region,
)

logger = logging.getLogger(__name__)

FAMILIES = ("SI", "ICP", "CRD", "LATTICE", "LATTICE_CP")

#: packing densities above this are refused outright
MAX_PACKING_DENSITY = 0.55
#: packing densities above this are allowed but logged
WARN_PACKING_DENSITY = 0.45
DEFAULT_MAX_ITER = 1_000_000


@dataclass
class Design:
    """An ordered set of sample locations and how they were generated.

    ``parents[i]`` is ``-1`` for primary (inhibitory or lattice) points and
    the index of the paired primary point for close-pair points.
    """

    points: np.ndarray
    family: str
    params: dict = field(default_factory=dict)
    seed: int = None
    parents: np.ndarray = None
    candidate_ids: list = None

    def __post_init__(self):
        self.points = as_points(self.points)
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown design family {self.family!r}")
        if self.parents is None:
            self.parents = np.full(len(self.points), -1, dtype=int)
        self.parents = np.asarray(self.parents, dtype=int)

    def __len__(self):
        return len(self.points)

    @property
    def n_close_pairs(self):
        return int(np.sum(self.parents >= 0))

    @property
    def roles(self):
        return ["close_pair" if p >= 0 else "inhibitory" for p in self.parents]

    @property
    def primary_points(self):
        return self.points[self.parents < 0]

    @property
    def ids(self):
        if self.candidate_ids is not None:
            return list(self.candidate_ids)
        return [str(i) for i in range(len(self.points))]


def make_rng(rng=None):
    """Return ``(generator, seed)``; ``seed`` is ``None`` when a generator was passed."""
    if isinstance(rng, np.random.Generator):
        return rng, None
    if rng is None:
        rng = int(np.random.SeedSequence().entropy % (2**63))
    return np.random.default_rng(int(rng)), int(rng)


def delta_for_k(delta0, n, k):
    """Inhibition distance that keeps the ``n - k`` primary points as regular
    as ``n`` points at ``delta0``: ``delta0 * sqrt(n / (n - k))``."""
    if k < 0 or k >= n:
        raise ValidationError(f"need 0 <= k < n, got k={k}, n={n}")
    return delta0 * math.sqrt(n / (n - k))


def check_packing(n, delta, region):
    rho = packing_density(n, delta, region)
    if rho > MAX_PACKING_DENSITY:
        raise FeasibilityError(
            f"packing density {rho:.3f} exceeds {MAX_PACKING_DENSITY} "
            f"for n={n}, delta={delta}",
            packing_density=rho,
        )
    if rho > WARN_PACKING_DENSITY:
        logger.warning("packing density %.3f is high; generation may be slow", rho)
    return rho


def _too_close(pts, i, delta):
    d = pts - pts[i]
    dist = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
    dist[i] = np.inf
    return dist.min() < delta


def _si_points(n, delta, region, rng, max_iter):
    pts = uniform_in_region(region, rng, size=n)
    attempts = 0
    for i in range(n):
        while n > 1 and _too_close(pts, i, delta):
            attempts += 1
            if attempts > max_iter:
                raise FeasibilityError(
                    f"SI({n}, {delta}) not reached after {max_iter} replacements "
                    f"(packing density {packing_density(n, delta, region):.3f})",
                    packing_density=packing_density(n, delta, region),
                )
            pts[i] = uniform_in_region(region, rng)
    return pts


def generate_si(n, delta, region=None, rng=None, max_iter=DEFAULT_MAX_ITER):
    """Simple inhibitory design by sequential replacement.

    Start from ``n`` uniform points, then visit each point in turn and
    redraw it uniformly until its nearest neighbour is at least ``delta``
    away. A point that passes is never revisited; later redraws are checked
    against it, so one sweep leaves every pair compliant.
    """
    region = region or Region.unit()
    if n < 1:
        raise ValidationError("n must be at least 1")
    rho = check_packing(n, delta, region)
    gen, seed = make_rng(rng)
    pts = _si_points(n, delta, region, gen, max_iter)
    params = {"n": n, "delta": delta, "packing_density": rho}
    return Design(pts, "SI", params, seed)


def _check_icp(n, k, delta0, zeta):
    if k < 0 or k > n / 2:
        raise ValidationError(f"close pairs need 0 <= k <= n/2, got k={k}, n={n}")
    delta_k = delta_for_k(delta0, n, k)
    if zeta is None:
        zeta = delta_k / 2
    if zeta <= 0:
        raise ValidationError("zeta must be positive")
    if zeta > delta_k / 2 * (1 + 1e-12):
        raise ValidationError(f"zeta={zeta} exceeds delta_k/2={delta_k / 2}")
    return delta_k, zeta


def generate_icp(n, k, delta0, zeta=None, region=None, rng=None,
                 max_iter=DEFAULT_MAX_ITER):
    """Inhibitory design with ``k`` close pairs.

    The first ``n - k`` points are SI(n - k, delta_k); the remaining ``k``
    are uniform in discs of radius ``zeta`` around distinct parents drawn
    without replacement. Disc draws falling outside the region are redrawn.
    """
    region = region or Region.unit()
    delta_k, zeta = _check_icp(n, k, delta0, zeta)
    rho = check_packing(n - k, delta_k, region)
    gen, seed = make_rng(rng)
    primary = _si_points(n - k, delta_k, region, gen, max_iter)
    parents = gen.choice(n - k, size=k, replace=False) if k else np.empty(0, int)
    pairs = _disc_points_in_region(primary[parents], zeta, region, gen)
    pts = np.vstack([primary, pairs])
    parent_idx = np.concatenate([np.full(n - k, -1), parents])
    params = {"n": n, "k": k, "delta0": delta0, "delta": delta_k,
              "zeta": zeta, "packing_density": rho}
    family = "ICP" if k else "SI"
    if k == 0:
        params = {"n": n, "delta": delta_k, "packing_density": rho}
    return Design(pts, family, params, seed, parent_idx)


def _disc_points_in_region(centers, radius, region, rng, max_tries=10_000):
    out = np.empty((len(centers), 2))
    for j, c in enumerate(centers):
        for _ in range(max_tries):
            p = uniform_in_disc(c, radius, rng)
            if region.contains(p)[0]:
                break
        else:
            raise FeasibilityError(f"no disc draw around {tuple(c)} fell inside the region")
        out[j] = p
    return out


def _finite_si_indices(n, delta, cands, rng, max_iter):
    N = len(cands)
    if n > N:
        raise FeasibilityError(f"cannot select {n} points from {N} candidates")
    pts = cands.points
    chosen = rng.choice(N, size=n, replace=False)
    used = np.zeros(N, dtype=bool)
    used[chosen] = True
    attempts = 0
    for i in range(n):
        while n > 1 and _too_close(pts[chosen], i, delta):
            free = np.flatnonzero(~used)
            attempts += 1
            if free.size == 0 or attempts > max_iter:
                raise FeasibilityError(
                    f"no SI({n}, {delta}) subset found among {N} candidates "
                    f"after {attempts} replacements"
                )
            j = free[rng.integers(free.size)]
            used[chosen[i]] = False
            used[j] = True
            chosen[i] = j
    return chosen


def generate_si_finite(n, delta, candidates, rng=None, max_iter=DEFAULT_MAX_ITER):
    """SI design restricted to a candidate set; redraws come from unused candidates."""
    if n < 1:
        raise ValidationError("n must be at least 1")
    if delta <= 0:
        raise ValidationError("delta must be positive")
    cands = candidates.deduplicated()
    gen, seed = make_rng(rng)
    idx = _finite_si_indices(n, delta, cands, gen, max_iter)
    rho = packing_density(n, delta, cands.region)
    params = {"n": n, "delta": delta, "packing_density": rho, "N": len(cands)}
    return Design(cands.points[idx], "SI", params, seed,
                  candidate_ids=[cands.ids[i] for i in idx])


def generate_icp_finite(n, k, delta0, zeta=None, candidates=None, rng=None,
                        max_iter=DEFAULT_MAX_ITER):
    """ICP design on a candidate set.

    Each close-pair point is drawn uniformly from the unused candidates lying
    strictly within ``zeta`` of its parent. Parents are visited in random
    order; one without such a neighbour is skipped in favour of the next.
    """
    if candidates is None:
        raise ValidationError("a candidate set is required")
    delta_k, zeta = _check_icp(n, k, delta0, zeta)
    cands = candidates.deduplicated()
    gen, seed = make_rng(rng)
    idx = _finite_si_indices(n - k, delta_k, cands, gen, max_iter)
    used = np.zeros(len(cands), dtype=bool)
    used[idx] = True
    pair_idx, parent_of = [], []
    for p in gen.permutation(n - k):
        if len(pair_idx) == k:
            break
        d = np.hypot(*(cands.points - cands.points[idx[p]]).T)
        near = np.flatnonzero((d < zeta) & ~used)
        if near.size == 0:
            continue
        j = near[gen.integers(near.size)]
        used[j] = True
        pair_idx.append(j)
        parent_of.append(p)
    if len(pair_idx) < k:
        raise FeasibilityError(
            f"only {len(pair_idx)} of {k} close pairs possible with zeta={zeta}"
        )
    all_idx = np.concatenate([idx, np.asarray(pair_idx, dtype=int)])
    parents = np.concatenate([np.full(n - k, -1), np.asarray(parent_of, dtype=int)])
    rho = packing_density(n - k, delta_k, cands.region)
    params = {"n": n, "k": k, "delta0": delta0, "delta": delta_k, "zeta": zeta,
              "packing_density": rho, "N": len(cands)}
    family = "ICP" if k else "SI"
    if k == 0:
        params = {"n": n, "delta": delta_k, "packing_density": rho, "N": len(cands)}
    return Design(cands.points[all_idx], family, params, seed, parents,
                  [cands.ids[i] for i in all_idx])


def generate_crd(n, region=None, rng=None):
    region = region or Region.unit()
    if n < 1:
        raise ValidationError("n must be at least 1")
    gen, seed = make_rng(rng)
    return Design(uniform_in_region(region, gen, size=n), "CRD", {"n": n}, seed)


def lattice_shape(n_target, region, at_least=False):
    """Square-lattice spacing and ``(nx, ny)`` for a target count.

    By default the densest lattice with at most ``n_target`` sites that fits
    the region; with ``at_least`` the sparsest one with at least that many.
    """
    if n_target < 1:
        raise ValidationError("lattice needs at least one point")
    w, h = region.width, region.height
    # candidate spacings are the breakpoints w/i and h/j
    spacings = sorted(
        {w / i for i in range(1, n_target + 1)} | {h / j for j in range(1, n_target + 1)},
        reverse=True,
    )
    best = None
    for s in spacings:
        nx = max(1, int(math.floor(w / s + 1e-9)))
        ny = max(1, int(math.floor(h / s + 1e-9)))
        count = nx * ny
        if at_least:
            if count >= n_target:
                return s, nx, ny
        elif count <= n_target:
            best = (s, nx, ny)
        else:
            break
    if best is None:
        raise ValidationError(f"no lattice with {'>=' if at_least else '<='} {n_target} sites")
    return best


def _lattice_points(spacing, nx, ny, region, rng, jitter_origin):
    if jitter_origin:
        origin = rng.random(2) * spacing
    else:
        origin = np.array([spacing / 2, spacing / 2])
    gx = region.xmin + origin[0] + spacing * np.arange(nx)
    gy = region.ymin + origin[1] + spacing * np.arange(ny)
    xx, yy = np.meshgrid(gx, gy)
    return np.column_stack([xx.ravel(), yy.ravel()])


def generate_lattice(n_target, region=None, rng=None, jitter_origin=True):
    region = region or Region.unit()
    gen, seed = make_rng(rng)
    spacing, nx, ny = lattice_shape(n_target, region)
    pts = _lattice_points(spacing, nx, ny, region, gen, jitter_origin)
    params = {"n_target": n_target, "n": len(pts), "spacing": spacing,
              "jitter_origin": bool(jitter_origin)}
    return Design(pts, "LATTICE", params, seed)


def generate_lattice_cp(n, k, spacing=None, zeta=None, region=None, rng=None):
    """Lattice of ``n - k`` sites plus ``k`` disc-uniform companions.

    Without ``spacing`` the sparsest square lattice with at least ``n - k``
    sites is used; sites are taken in row-major order, so the last row may be
    partial. ``zeta`` defaults to half the spacing.
    """
    region = region or Region.unit()
    if k < 0 or k > n / 2:
        raise ValidationError(f"close pairs need 0 <= k <= n/2, got k={k}, n={n}")
    gen, seed = make_rng(rng)
    m = n - k
    if spacing is None:
        spacing, nx, ny = lattice_shape(m, region, at_least=True)
    else:
        nx = int(math.floor(region.width / spacing + 1e-9))
        ny = int(math.floor(region.height / spacing + 1e-9))
        if nx * ny < m:
            raise FeasibilityError(f"spacing {spacing} fits only {nx * ny} < {m} sites")
    if zeta is None:
        zeta = spacing / 2
    if zeta <= 0:
        raise ValidationError("zeta must be positive")
    lattice = _lattice_points(spacing, nx, ny, region, gen, True)[:m]
    parents = gen.choice(m, size=k, replace=False) if k else np.empty(0, int)
    pairs = _disc_points_in_region(lattice[parents], zeta, region, gen)
    pts = np.vstack([lattice, pairs])
    parent_idx = np.concatenate([np.full(m, -1), parents])
    params = {"n": n, "k": k, "spacing": spacing, "zeta": zeta}
    return Design(pts, "LATTICE_CP", params, seed, parent_idx)


def verify_design(design, tol=0.0):
    """Check a design's structural constraints; returns a list of problems."""
    problems = []
    p = design.params
    primary = design.primary_points
    if design.family in ("SI", "ICP") and len(primary) >= 2:
        dmin = min_pairwise_distance(primary)
        if dmin < p["delta"] - tol:
            problems.append(f"min distance {dmin} < delta {p['delta']}")
    if design.family in ("ICP", "LATTICE_CP"):
        kids = np.flatnonzero(design.parents >= 0)
        par = design.parents[kids]
        if len(set(par.tolist())) != len(par):
            problems.append("a parent has more than one close-pair point")
        if np.any(design.parents[par] >= 0):
            problems.append("a close-pair point has a close-pair parent")
        gaps = np.hypot(*(design.points[kids] - design.points[par]).T)
        if np.any(gaps > p["zeta"] + tol):
            problems.append(f"close pair farther than zeta={p['zeta']}")
        if len(kids) != p.get("k", len(kids)):
            problems.append(f"expected {p['k']} close pairs, found {len(kids)}")
    if design.family == "ICP":
        if p["k"] > p["n"] / 2:
            problems.append("k > n/2")
        if p["zeta"] > p["delta"] / 2 * (1 + 1e-12):
            problems.append("zeta > delta_k/2")
    return problems
