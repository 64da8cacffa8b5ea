"""Reproducible Brownian increments on uniform time grids.

Every Gaussian draw is a pure function of (master_seed, path_index, stream,
step, component), produced by a splitmix64-style counter hash followed by
the inverse normal CDF.  This makes parallel Monte Carlo deterministic and
independent of generation order, and lets the same driving noise be reused
across every perturbation size in a coupled experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, ContractError

# Stream tags separate independent uses of the same (seed, path) key.
_STREAM_BASE = 0x1000
_STREAM_REFINE = 0x2000

MAX_REFINED_STEPS = 2 ** 22

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finaliser; wraps modulo 2^64.
    with np.errstate(over="ignore"):
        z = (x + _GOLDEN) & _MASK64
        z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _MASK64
        z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _MASK64
        return z ^ (z >> np.uint64(31))


def counter_normals(master_seed: int, path_index: int, stream: int,
                    steps: np.ndarray, components: np.ndarray) -> np.ndarray:
    """Standard normal draws keyed by (seed, path, stream, step, component).

    ``steps`` and ``components`` are integer arrays broadcast against each
    other; the output has their broadcast shape.
    """
    seed = np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF)
    h = _mix64(np.asarray(seed))
    with np.errstate(over="ignore"):
        h = _mix64(h ^ np.uint64((path_index + 0x5851F42D) & 0xFFFFFFFFFFFFFFFF))
        h = _mix64(h ^ np.uint64((stream + 0x14057B7E) & 0xFFFFFFFFFFFFFFFF))
        h = _mix64(h ^ (np.asarray(steps, dtype=np.uint64) + np.uint64(0x2545F491)))
        h = _mix64(h ^ (np.asarray(components, dtype=np.uint64)
                        + np.uint64(0x3C6EF372)))
    # 53-bit uniform strictly inside (0, 1), then inverse CDF.
    u = (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53 + 2.0 ** -54
    return ndtri(u)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = j T / n on [0, T]."""

    T: float
    n: int

    def __post_init__(self):
        if not self.T > 0.0:
            raise ContractError(f"grid horizon must be positive, got T={self.T!r}")
        if self.n < 1:
            raise ContractError(f"grid needs at least one step, got n={self.n!r}")

    @property
    def dt(self) -> float:
        return self.T / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) * (self.T / self.n)


@dataclass(frozen=True)
class PathBundle:
    """Brownian increments for one path on a grid.

    ``increments[j, k]`` is the k-th component of B_{t_{j+1}} - B_{t_j}.
    The bundle is a pure function of (master_seed, path_index, grid, m).
    Refined bundles keep their parent so that coarse-graining along the
    refinement ancestry is exact by construction.
    """

    grid: TimeGrid
    m: int
    increments: np.ndarray
    master_seed: int
    path_index: int
    refine_depth: int = field(default=0)
    parent: "PathBundle | None" = field(default=None, repr=False,
                                        compare=False)
    refine_factor: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.increments.shape != (self.grid.n, self.m):
            raise ContractError(
                f"increments shape {self.increments.shape} does not match "
                f"(n, m)=({self.grid.n}, {self.m})")
        self.increments.setflags(write=False)


def make_path(master_seed: int, path_index: int, grid: TimeGrid,
              m: int) -> PathBundle:
    """Generate the Brownian increments of one path, deterministically."""
    if m < 1:
        raise ContractError(f"noise dimension must be >= 1, got m={m!r}")
    if path_index < 0:
        raise ContractError(f"path_index must be >= 0, got {path_index!r}")
    steps = np.arange(grid.n, dtype=np.uint64)[:, None]
    comps = np.arange(m, dtype=np.uint64)[None, :]
    z = counter_normals(master_seed, path_index, _STREAM_BASE, steps, comps)
    increments = z * math.sqrt(grid.dt)
    return PathBundle(grid=grid, m=m, increments=increments,
                      master_seed=master_seed, path_index=path_index)


def make_increment_stack(master_seed: int, path_indices, grid: TimeGrid,
                         m: int) -> np.ndarray:
    """Increment arrays for many paths, shaped (paths, n, m)."""
    out = np.empty((len(path_indices), grid.n, m))
    for row, idx in enumerate(path_indices):
        out[row] = make_path(master_seed, int(idx), grid, m).increments
    return out


def _tree_sum(groups: np.ndarray) -> np.ndarray:
    # Pairwise summation over axis 1 with a fixed bracketing, so that nested
    # refinements aggregate through the same floating-point tree.
    n = groups.shape[1]
    if n == 1:
        return groups[:, 0]
    half = n // 2
    return _tree_sum(groups[:, :half]) + _tree_sum(groups[:, half:])


def refine_path(bundle: PathBundle, factor: int) -> PathBundle:
    """Refine a path onto a ``factor`` times finer grid.

    Fine increments are drawn by sequential Brownian-bridge conditioning
    inside each coarse panel, the last increment of each panel being the
    residual of the coarse one, and are then nudged by at most a few ulps
    toward an exact pairwise group sum.  The refined bundle records its
    parent, and :func:`coarse_grain` walks that ancestry, so coarse-graining
    a refinement reproduces the coarse increments exactly while the bridge
    noise stays unbiased.  Bridge draws are keyed deterministically by the
    refinement depth.
    """
    if factor < 2:
        raise ContractError(f"refinement factor must be >= 2, got {factor!r}")
    n_fine = bundle.grid.n * factor
    if n_fine > MAX_REFINED_STEPS:
        raise ConfigError(
            f"refined grid would have {n_fine} steps, above the configured "
            f"maximum {MAX_REFINED_STEPS}")
    grid_fine = TimeGrid(bundle.grid.T, n_fine)
    dt_fine = grid_fine.dt
    n_coarse = bundle.grid.n
    target = bundle.increments
    stream = _STREAM_REFINE + bundle.refine_depth
    steps = np.arange(n_fine, dtype=np.uint64).reshape(n_coarse, factor, 1)
    comps = np.arange(bundle.m, dtype=np.uint64)[None, None, :]
    z = counter_normals(bundle.master_seed, bundle.path_index, stream,
                        steps, comps)
    fine = np.empty((n_coarse, factor, bundle.m))
    remainder = target.copy()
    for k in range(factor - 1):
        left = factor - k
        # Conditional law of the next fine increment given the rest of the
        # panel sum: N(remainder/left, dt_fine * (left-1)/left).
        draw = remainder / left \
            + math.sqrt(dt_fine * (left - 1) / left) * z[:, k]
        fine[:, k] = draw
        remainder = remainder - draw
    fine[:, factor - 1] = remainder
    _nudge_group_sums(fine, target)
    return PathBundle(grid=grid_fine, m=bundle.m,
                      increments=fine.reshape(n_fine, bundle.m),
                      master_seed=bundle.master_seed,
                      path_index=bundle.path_index,
                      refine_depth=bundle.refine_depth + 1,
                      parent=bundle, refine_factor=factor)


def _nudge_group_sums(fine: np.ndarray, target: np.ndarray,
                      max_iters: int = 12) -> None:
    # Nudge the last element of each group toward an exact pairwise sum.
    # Exactness is not always attainable (a group whose target is far
    # smaller than its members has no representable solution), so residual
    # one-ulp gaps are tolerated here; ancestry-based coarse-graining keeps
    # the round trip exact regardless.
    for _ in range(max_iters):
        err = target - _tree_sum(fine)
        if not np.any(err):
            return
        last = fine[:, -1]
        stepped = last + err
        stuck = (stepped == last) & (err != 0.0)
        if np.any(stuck):
            stepped = np.where(
                stuck, np.nextafter(last, np.where(err > 0, np.inf, -np.inf)),
                stepped)
        fine[:, -1] = stepped


def coarse_grain(bundle: PathBundle, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` increments.

    Follows the refinement ancestry when the requested factor is a multiple
    of the bundle's own refinement factor (reproducing ancestor increments
    exactly); otherwise sums the groups pairwise.
    """
    if factor < 1:
        raise ContractError(f"factor must be >= 1, got {factor!r}")
    if bundle.grid.n % factor != 0:
        raise ContractError(
            f"cannot coarse-grain {bundle.grid.n} steps by factor {factor}")
    if factor == 1:
        return bundle.increments.copy()
    if bundle.parent is not None and factor % bundle.refine_factor == 0:
        return coarse_grain(bundle.parent, factor // bundle.refine_factor)
    groups = bundle.increments.reshape(bundle.grid.n // factor, factor,
                                       bundle.m)
    return _tree_sum(groups)
