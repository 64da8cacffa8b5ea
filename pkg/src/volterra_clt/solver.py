"""Explicit left-point / kernel-integrated schemes for the coupled system.

Three recursions share one grid, one pair of weight matrices and one
Brownian path:

* perturbed state      X_j = x0 + sum_{i<j} w_ji b(t_i, X_i)
                              + sqrt(eps) sum_{i<j} z_ji sigma(t_i, X_i) dB_i
* deterministic state  X0_j = x0 + sum_{i<j} w_ji b(t_i, X0_i)
* linearised state     Z_j  = sum_{i<j} w_ji grad_b(t_i, X0_i) Z_i
                              + sum_{i<j} z_ji sigma(t_i, X0_i) dB_i

The drift weights w_ji integrate the kernel over each panel (exact for the
power-law kind, graded quadrature for the fBm kind) or evaluate it at the
left node; the diffusion weights z_ji always use left-node evaluation,
which stays clear of the diagonal singularity.  The fBm kernel is also
singular at s = 0, so its weights for the very first panel evaluate the
kernel at the panel midpoint instead of the left node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DivergenceError
from .kernels import (CONSTANT, RIEMANN_LIOUVILLE, KernelSpec,
                      QuadratureConfig, integrate_graded, kernel_eval,
                      kernel_eval_gap)
from .models import ModelSpec
from .paths import PathBundle, TimeGrid

KERNEL_INTEGRATED = "kernel-integrated"
LEFT_POINT = "left-point"

DIVERGENCE_THRESHOLD = 1e12

LABEL_PERTURBED = "PerturbedX"
LABEL_DETERMINISTIC = "DeterministicX0"
LABEL_NORMALIZED = "NormalizedZeps"
LABEL_LIMIT = "LimitZ"


@dataclass(frozen=True)
class SchemeConfig:
    drift_weighting: str = KERNEL_INTEGRATED
    diffusion_weighting: str = LEFT_POINT
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)

    def __post_init__(self):
        if self.drift_weighting not in (KERNEL_INTEGRATED, LEFT_POINT):
            raise ContractError(
                f"unknown drift weighting {self.drift_weighting!r}")
        if self.diffusion_weighting != LEFT_POINT:
            raise ContractError(
                f"unknown diffusion weighting {self.diffusion_weighting!r}")


@dataclass(frozen=True)
class Trajectory:
    """Discretised process values on the grid, shaped (n+1, d)."""

    grid: TimeGrid
    values: np.ndarray
    label: str

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.n + 1:
            raise ContractError(
                f"trajectory values shape {self.values.shape} does not match "
                f"grid with n={self.grid.n}")

    @property
    def d(self) -> int:
        return self.values.shape[1]


def _left_point_matrix(kernel: KernelSpec, grid: TimeGrid) -> np.ndarray:
    # K(t_j, t_i) for i < j, with the first-panel midpoint substitution for
    # the origin-singular fBm kernel.
    n = grid.n
    nodes = grid.nodes
    out = np.zeros((n + 1, n))
    rows, cols = np.tril_indices(n, k=0)
    t_vals = nodes[rows + 1]
    s_vals = nodes[cols].copy()
    if kernel.singular_at_origin:
        s_vals[cols == 0] = 0.5 * grid.dt
    out[rows + 1, cols] = kernel_eval(kernel, t_vals, s_vals)
    return out


def drift_weights(kernel: KernelSpec, grid: TimeGrid,
                  cfg: SchemeConfig | None = None) -> np.ndarray:
    """Lower-triangular drift weight matrix, shape (n+1, n).

    Row j carries the weights of b(t_i, .) for i < j; entries with i >= j
    are zero.  Kernel-integrated weights are w_ji = int_{t_i}^{t_{i+1}}
    K(t_j, s) ds; left-point weights are K(t_j, t_i) dt.
    """
    cfg = cfg or SchemeConfig()
    n = grid.n
    nodes = grid.nodes
    dt = grid.dt
    if cfg.drift_weighting == LEFT_POINT:
        return _left_point_matrix(kernel, grid) * dt

    out = np.zeros((n + 1, n))
    if kernel.kind == CONSTANT:
        rows, cols = np.tril_indices(n, k=0)
        out[rows + 1, cols] = kernel.value * dt
        return out

    H = kernel.H
    if kernel.kind == RIEMANN_LIOUVILLE:
        # Exact panel integrals: difference of (t_j - t_i)^{H + 1/2} powers.
        e = H + 0.5
        norm = e * math.gamma(e)
        rows, cols = np.tril_indices(n, k=0)
        left = nodes[rows + 1] - nodes[cols]
        right = nodes[rows + 1] - nodes[cols + 1]
        out[rows + 1, cols] = (left ** e - right ** e) / norm
        return out

    # fBm kind: batched Gauss-Legendre on interior panels, graded quadrature
    # on the panels touching s = 0 and s = t_j.
    from scipy.special import roots_legendre

    gl_nodes, gl_weights = roots_legendre(cfg.quad.gauss_order)
    rows, cols = np.tril_indices(n, k=0)
    rows = rows + 1
    boundary = (cols == 0) | (cols == rows - 1)
    in_rows, in_cols = rows[~boundary], cols[~boundary]
    if in_rows.size:
        lo = nodes[in_cols]
        hi = nodes[in_cols + 1]
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        s_pts = mid[:, None] + half[:, None] * gl_nodes[None, :]
        t_pts = np.broadcast_to(nodes[in_rows][:, None], s_pts.shape)
        vals = kernel_eval(kernel, t_pts.ravel(), s_pts.ravel())
        vals = vals.reshape(s_pts.shape)
        out[in_rows, in_cols] = half * (vals @ gl_weights)
    for j, i in zip(rows[boundary], cols[boundary]):
        t_j = float(nodes[j])
        sing_lo = (i == 0) and kernel.singular_at_origin
        sing_hi = (i == j - 1)
        shift = t_j - float(nodes[i + 1])  # gap offset of the panel's top
        out[j, i] = integrate_graded(
            lambda s, t_j=t_j: kernel_eval(kernel, t_j, s),
            float(nodes[i]), float(nodes[i + 1]), cfg.quad,
            singular_lo=sing_lo, singular_hi=sing_hi,
            f_gap=lambda u, t_j=t_j, shift=shift:
                kernel_eval_gap(kernel, t_j, shift + u))
    return out


def diffusion_weights(kernel: KernelSpec, grid: TimeGrid) -> np.ndarray:
    """Left-point diffusion weight matrix z_ji = K(t_j, t_i), shape (n+1, n)."""
    return _left_point_matrix(kernel, grid)


class VolterraScheme:
    """Weight matrices for a kernel pair on a grid, plus batched recursions.

    All solvers are vectorised over a leading path axis; state histories are
    kept dense so the non-Markovian memory term is a matrix-vector product
    per step.
    """

    def __init__(self, k1: KernelSpec, k2: KernelSpec, grid: TimeGrid,
                 cfg: SchemeConfig | None = None):
        self.cfg = cfg or SchemeConfig()
        self.grid = grid
        self.k1 = k1
        self.k2 = k2
        self.w_drift = drift_weights(k1, grid, self.cfg)
        self.w_diff = diffusion_weights(k2, grid)

    def _check_noise(self, model: ModelSpec, increments: np.ndarray):
        if increments.ndim != 3 or increments.shape[1] != self.grid.n \
                or increments.shape[2] != model.m:
            raise ContractError(
                f"increments shape {increments.shape} does not match "
                f"(paths, n={self.grid.n}, m={model.m})")

    def _recurse(self, model: ModelSpec, x0: np.ndarray, sqrt_eps: float,
                 increments: np.ndarray | None,
                 x0_traj: np.ndarray | None = None) -> np.ndarray:
        # Shared recursion kernel.  With x0_traj set, runs the linearised
        # dynamics around it (initial value zero, drift through grad_b);
        # otherwise runs the plain dynamics from x0.
        grid = self.grid
        n, d = grid.n, model.d
        nodes = grid.nodes
        linear = x0_traj is not None
        if increments is not None:
            paths = increments.shape[0]
        else:
            paths = 1
        x0_row = np.broadcast_to(np.asarray(x0, dtype=float), (paths, d))

        values = np.empty((n + 1, paths, d))
        values[0] = 0.0 if linear else x0_row
        drift_hist = np.empty((n, paths, d))
        diff_hist = np.zeros((n, paths, d))
        flat = (paths * d,)
        for j in range(1, n + 1):
            i = j - 1
            t_i = nodes[i]
            state = values[i]
            if linear:
                frozen = np.broadcast_to(x0_traj[i], (paths, d))
                jac = model.grad_b(t_i, frozen)
                drift_hist[i] = np.einsum("...ij,...j->...i", jac, state)
                if increments is not None:
                    sig = model.sigma(t_i, frozen)
                    diff_hist[i] = np.einsum("...ij,...j->...i", sig,
                                             increments[:, i])
            else:
                drift_hist[i] = model.b(t_i, state)
                if increments is not None and sqrt_eps != 0.0:
                    sig = model.sigma(t_i, state)
                    diff_hist[i] = np.einsum("...ij,...j->...i", sig,
                                             increments[:, i])
            acc = self.w_drift[j, :j] @ drift_hist[:j].reshape(j, *flat)
            if increments is not None:
                acc = acc + sqrt_eps * (
                    self.w_diff[j, :j] @ diff_hist[:j].reshape(j, *flat))
            step = acc.reshape(paths, d)
            values[j] = step if linear else x0_row + step
            mx = float(np.max(np.abs(values[j]))) if values[j].size else 0.0
            if not math.isfinite(mx) or mx > DIVERGENCE_THRESHOLD:
                raise DivergenceError(
                    f"state blew up at step {j} (t={nodes[j]:.6g}, "
                    f"max |state| = {mx:.3e})", step=j)
        return np.swapaxes(values, 0, 1)

    def deterministic(self, model: ModelSpec, x0) -> np.ndarray:
        """Drift-only skeleton, shape (n+1, d)."""
        out = self._recurse(model, x0, 0.0, None)
        return out[0]

    def perturbed(self, model: ModelSpec, x0, eps: float,
                  increments: np.ndarray) -> np.ndarray:
        """Perturbed states for a batch of paths, shape (paths, n+1, d)."""
        if not 0.0 < eps <= 1.0:
            raise ContractError(f"eps must lie in (0, 1], got {eps!r}")
        self._check_noise(model, increments)
        return self._recurse(model, x0, math.sqrt(eps), increments)

    def limit(self, model: ModelSpec, x0, increments: np.ndarray,
              x0_traj: np.ndarray | None = None) -> np.ndarray:
        """Linearised fluctuation states, shape (paths, n+1, d)."""
        self._check_noise(model, increments)
        if x0_traj is None:
            x0_traj = self.deterministic(model, x0)
        return self._recurse(model, x0, 1.0, increments, x0_traj=x0_traj)


def solve_deterministic(model: ModelSpec, k1: KernelSpec, x0, grid: TimeGrid,
                        cfg: SchemeConfig | None = None) -> Trajectory:
    """Solve the drift-only equation; the value at t_j uses nodes before j."""
    scheme = VolterraScheme(k1, k1, grid, cfg)
    return Trajectory(grid, scheme.deterministic(model, x0),
                      LABEL_DETERMINISTIC)


def solve_perturbed(model: ModelSpec, k1: KernelSpec, k2: KernelSpec, x0,
                    eps: float, path: PathBundle, grid: TimeGrid,
                    cfg: SchemeConfig | None = None) -> Trajectory:
    """Solve the noise-perturbed equation on the given path."""
    if path.grid != grid:
        raise ContractError("path grid does not match the solver grid")
    scheme = VolterraScheme(k1, k2, grid, cfg)
    values = scheme.perturbed(model, x0, eps, path.increments[None])
    return Trajectory(grid, values[0], LABEL_PERTURBED)


def solve_limit(model: ModelSpec, k1: KernelSpec, k2: KernelSpec, x0,
                path: PathBundle, grid: TimeGrid,
                cfg: SchemeConfig | None = None) -> Trajectory:
    """Solve the linearised fluctuation equation on the given path."""
    if path.grid != grid:
        raise ContractError("path grid does not match the solver grid")
    scheme = VolterraScheme(k1, k2, grid, cfg)
    values = scheme.limit(model, x0, path.increments[None])
    return Trajectory(grid, values[0], LABEL_LIMIT)


def normalized_error(perturbed: Trajectory, deterministic: Trajectory,
                     eps: float) -> Trajectory:
    """(perturbed - deterministic) / sqrt(eps), the rescaled fluctuation."""
    if not eps > 0.0:
        raise ContractError(f"eps must be positive, got {eps!r}")
    if perturbed.grid != deterministic.grid:
        raise ContractError("trajectories live on different grids")
    if perturbed.values.shape != deterministic.values.shape:
        raise ContractError(
            f"trajectory shapes differ: {perturbed.values.shape} vs "
            f"{deterministic.values.shape}")
    values = (perturbed.values - deterministic.values) / math.sqrt(eps)
    return Trajectory(perturbed.grid, values, LABEL_NORMALIZED)
