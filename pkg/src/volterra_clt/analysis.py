"""Monte Carlo estimators, rate fitting and hypothesis checkers.

Ensemble arrays are shaped (paths, nodes, d); an optional trailing axis of
initial points is folded into the pathwise supremum before any expectation
is taken.  Reductions always run in fixed path order, so estimates do not
depend on how the simulation work was scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, DomainError
from .kernels import (DEFAULT_QUAD, KernelSpec, QuadratureConfig,
                      kernel_pow_integral, kernel_time_modulus)
from .models import ModelSpec
from .paths import TimeGrid, counter_normals

SUP_OVER_GRID = "sup-over-grid"


@dataclass(frozen=True)
class MomentEstimate:
    p: float
    value: float
    std_error: float
    paths: int
    at_time: float | str = SUP_OVER_GRID


@dataclass(frozen=True)
class RateReport:
    eps_ladder: tuple
    p: float
    errors: tuple
    slope: float | None
    intercept: float | None
    r_squared: float | None
    exact: tuple = field(default=())


@dataclass(frozen=True)
class HypothesisReport:
    name: str
    parameters: dict
    passed: bool
    evidence: tuple


def _state_norms(values: np.ndarray) -> np.ndarray:
    # Euclidean norm over the state axis; accepts (paths, nodes, d) plus an
    # optional trailing initial-point axis (paths, nodes, d, k).
    values = np.asarray(values, dtype=float)
    if values.ndim == 3:
        return np.sqrt(np.sum(values ** 2, axis=2))
    if values.ndim == 4:
        norms = np.sqrt(np.sum(values ** 2, axis=2))
        return norms.max(axis=2)
    raise ContractError(
        f"expected ensemble shaped (paths, nodes, d[, k]), got {values.shape}")


def _jackknife_mean_se(samples: np.ndarray) -> float:
    n = samples.size
    if n < 2:
        return 0.0
    total = samples.sum()
    loo = (total - samples) / (n - 1)
    centre = loo.mean()
    return math.sqrt((n - 1) / n * float(np.sum((loo - centre) ** 2)))


def _jackknife_transformed_se(samples: np.ndarray, power: float) -> float:
    # Jackknife standard error of (mean of samples)^power.
    n = samples.size
    if n < 2:
        return 0.0
    total = samples.sum()
    loo = ((total - samples) / (n - 1)) ** power
    centre = loo.mean()
    return math.sqrt((n - 1) / n * float(np.sum((loo - centre) ** 2)))


def sup_moment_from_maxima(maxima: np.ndarray, p: float
                           ) -> tuple[MomentEstimate, MomentEstimate]:
    """Estimate E[max|.|^p] and its p-th root from per-path suprema."""
    maxima = np.asarray(maxima, dtype=float)
    paths = maxima.size
    if paths < 2:
        raise ContractError(f"need at least 2 paths, got {paths}")
    powered = maxima ** p
    value = float(powered.mean())
    moment = MomentEstimate(p=p, value=value,
                            std_error=_jackknife_mean_se(powered),
                            paths=paths)
    root = MomentEstimate(p=p, value=value ** (1.0 / p),
                          std_error=_jackknife_transformed_se(powered, 1.0 / p),
                          paths=paths)
    return moment, root


def lp_error_sup(a: np.ndarray, b: np.ndarray, p: float
                 ) -> tuple[MomentEstimate, MomentEstimate]:
    """MC estimate of E[max over nodes |a - b|^p] with jackknife errors.

    Returns the raw moment and its p-th root.  The max also runs over a
    trailing initial-point axis when present.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractError(f"ensemble shapes differ: {a.shape} vs {b.shape}")
    if p < 1.0:
        raise ContractError(f"p must be >= 1, got {p!r}")
    maxima = _state_norms(a - b).max(axis=1)
    return sup_moment_from_maxima(maxima, p)


def moment_curve(values: np.ndarray, grid: TimeGrid, p: float
                 ) -> tuple[list[MomentEstimate], MomentEstimate]:
    """Per-node E|X_t|^p estimates plus the maximum over nodes."""
    values = np.asarray(values, dtype=float)
    if p < 1.0:
        raise ContractError(f"p must be >= 1, got {p!r}")
    norms = _state_norms(values)
    paths, n_nodes = norms.shape
    if paths < 2:
        raise ContractError(f"need at least 2 paths, got {paths}")
    if n_nodes != grid.n + 1:
        raise ContractError(
            f"ensemble has {n_nodes} nodes but grid expects {grid.n + 1}")
    powered = norms ** p
    means = powered.mean(axis=0)
    ses = powered.std(axis=0, ddof=1) / math.sqrt(paths)
    nodes = grid.nodes
    curve = [MomentEstimate(p=p, value=float(means[j]),
                            std_error=float(ses[j]), paths=paths,
                            at_time=float(nodes[j]))
             for j in range(n_nodes)]
    peak = int(np.argmax(means))
    top = MomentEstimate(p=p, value=float(means[peak]),
                         std_error=float(ses[peak]), paths=paths,
                         at_time=SUP_OVER_GRID)
    return curve, top


def _log_centered(y: np.ndarray) -> tuple[np.ndarray, float]:
    # Mean-centred logarithms via a mantissa/exponent split.  Rescaling all
    # entries by a power of two shifts the integer exponents uniformly and
    # leaves the mantissas untouched, so the centred values (and with them
    # any fitted slope) are bit-identical under such rescalings.
    mant, expo = np.frexp(y)
    log_mant = np.log(mant)
    expo = expo.astype(float)
    centred = (expo - expo.mean()) * math.log(2.0) \
        + (log_mant - log_mant.mean())
    mean = expo.mean() * math.log(2.0) + log_mant.mean()
    return centred, float(mean)


def _ols_loglog(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    cx, mx = _log_centered(np.asarray(x, dtype=float))
    cy, my = _log_centered(np.asarray(y, dtype=float))
    sxx = float(np.sum(cx ** 2))
    if sxx == 0.0:
        raise ContractError("regression abscissae are all identical")
    slope = float(np.sum(cx * cy)) / sxx
    intercept = my - slope * mx
    residual = cy - slope * cx
    ss_res = float(np.sum(residual ** 2))
    ss_tot = float(np.sum(cy ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def fit_rate(pairs: Sequence[tuple[float, float]],
             p: float = float("nan")) -> RateReport:
    """Log-log least squares of error against perturbation size.

    Zero errors (exact couplings) are flagged and excluded from the
    regression; negative errors are contract violations.
    """
    if len(pairs) < 3:
        raise ContractError(f"need at least 3 (eps, error) pairs, got {len(pairs)}")
    eps = np.asarray([q[0] for q in pairs], dtype=float)
    err = np.asarray([q[1] for q in pairs], dtype=float)
    if np.any(eps <= 0.0):
        raise ContractError("eps values must be positive")
    if np.any(err < 0.0):
        raise ContractError("error values must be nonnegative")
    exact = err == 0.0
    estimates = tuple(
        MomentEstimate(p=p, value=float(e), std_error=0.0, paths=0)
        for e in err)
    if np.count_nonzero(~exact) >= 2:
        slope, intercept, r2 = _ols_loglog(eps[~exact], err[~exact])
    else:
        slope = intercept = r2 = None
    return RateReport(eps_ladder=tuple(eps), p=p, errors=estimates,
                      slope=slope, intercept=intercept, r_squared=r2,
                      exact=tuple(bool(f) for f in exact))


def increment_moments(values: np.ndarray, grid: TimeGrid, p: float,
                      lag_set: Sequence[int]) -> list[tuple[int, float, float]]:
    """Pooled E|X_{t+lag} - X_t|^p per lag, as (lag, lag_time, moment) rows."""
    values = np.asarray(values, dtype=float)
    norms_in = values if values.ndim == 3 else values[:, :, None]
    rows = []
    n_nodes = norms_in.shape[1]
    for lag in lag_set:
        lag = int(lag)
        if lag < 1 or lag >= n_nodes:
            raise ContractError(f"lag {lag} outside the grid with "
                                f"{n_nodes - 1} steps")
        diffs = norms_in[:, lag:, :] - norms_in[:, :-lag, :]
        mags = np.sqrt(np.sum(diffs ** 2, axis=2))
        rows.append((lag, lag * grid.dt, float(np.mean(mags ** p))))
    return rows


def holder_exponent(values: np.ndarray, grid: TimeGrid, p: float,
                    lag_set: Sequence[int]) -> float:
    """Fitted time-regularity exponent theta.

    Fits log E|increment|^p against log lag and divides the slope by p;
    increments are pooled over paths and start nodes.
    """
    if p < 2.0:
        raise ContractError(f"p must be >= 2 for the regularity fit, got {p!r}")
    rows = increment_moments(values, grid, p, lag_set)
    lags = np.asarray([r[1] for r in rows])
    moments = np.asarray([r[2] for r in rows])
    if np.any(moments <= 0.0):
        raise ContractError("increment moments must be positive to fit")
    slope, _, _ = _ols_loglog(lags, moments)
    return slope / p


# ---------------------------------------------------------------------------
# hypothesis checkers
# ---------------------------------------------------------------------------


def check_hk1(k1: KernelSpec, k2: KernelSpec, beta: float, grid: TimeGrid,
              quad: QuadratureConfig = DEFAULT_QUAD) -> HypothesisReport:
    """Kernel power integrability: sup_t of int_0^t [K1^beta + K2^{2 beta}].

    Passes iff the integral is finite at every grid node; integrability
    violations are reported, not raised.
    """
    if not beta > 1.0:
        raise ContractError(f"beta must exceed 1, got {beta!r}")
    evidence = []
    sup_val = 0.0
    for t in grid.nodes:
        t = float(t)
        try:
            val = kernel_pow_integral(k1, t, beta, quad) \
                + kernel_pow_integral(k2, t, 2.0 * beta, quad)
        except DomainError as exc:
            return HypothesisReport(
                name="HK1",
                parameters={"beta": beta, "violated": str(exc)},
                passed=False, evidence=tuple(evidence))
        evidence.append((t, val))
        sup_val = max(sup_val, val)
    return HypothesisReport(
        name="HK1", parameters={"beta": beta, "sup": sup_val},
        passed=bool(np.isfinite(sup_val)), evidence=tuple(evidence))


def _modulus_gamma(kernel: KernelSpec, power: float, base_t: float,
                   gaps: np.ndarray, quad: QuadratureConfig):
    moduli = np.asarray([
        kernel_time_modulus(kernel, base_t, base_t + g, power, quad)
        for g in gaps])
    if np.all(moduli == 0.0):
        return None, None, moduli  # exact invariance
    if np.any(moduli <= 0.0):
        raise ContractError("time modulus produced nonpositive values")
    slope, _, r2 = _ols_loglog(gaps, moduli)
    return slope, r2, moduli


def check_hk2(k1: KernelSpec, k2: KernelSpec, grid: TimeGrid,
              quad: QuadratureConfig = DEFAULT_QUAD,
              n_gaps: int = 6) -> HypothesisReport:
    """Kernel time-shift modulus: fits the decay exponent over dyadic gaps.

    The modulus of K1 enters with power 1, that of K2 with power 2.  Passes
    iff each fitted exponent is positive with r^2 >= 0.9 (constant kernels
    are exactly invariant and pass outright).
    """
    base_t = grid.T / 2.0
    gaps = (grid.T / 4.0) * 0.5 ** np.arange(n_gaps)
    g1, r2_1, mod1 = _modulus_gamma(k1, 1.0, base_t, gaps, quad)
    g2, r2_2, mod2 = _modulus_gamma(k2, 2.0, base_t, gaps, quad)
    evidence = tuple(
        (float(g), float(m1), float(m2))
        for g, m1, m2 in zip(gaps, mod1, mod2))
    params: dict = {"base_t": base_t}
    passed = True
    for tag, gamma_val, r2 in (("k1", g1, r2_1), ("k2", g2, r2_2)):
        if gamma_val is None:
            params[f"gamma_{tag}"] = "exact"
        else:
            params[f"gamma_{tag}"] = gamma_val
            params[f"r2_{tag}"] = r2
            passed = passed and gamma_val > 0.0 and r2 >= 0.9
    return HypothesisReport(name="HK2", parameters=params, passed=passed,
                            evidence=evidence)


def check_model(model: ModelSpec, samples: int, box: float,
                seed: int = 0x5EED) -> HypothesisReport:
    """Empirical coefficient-regularity ratios over random samples.

    Checks the drift gradient norm, both linear-growth ratios and the sigma
    Lipschitz ratio against L1, and the drift-gradient Lipschitz ratio
    against L2.  Sampling is deterministic in the seed.
    """
    if samples < 100:
        raise ContractError(f"need at least 100 samples, got {samples}")
    d = model.d
    idx = np.arange(samples, dtype=np.uint64)[:, None]
    comp = np.arange(2 * d + 1, dtype=np.uint64)[None, :]
    draws = counter_normals(seed, 0, 0x7A57, idx, comp)
    # Map standard normals onto the box via the probit-free clip-scale; a
    # plain affine fold keeps the sampling spread across the whole box.
    u = 0.5 * (1.0 + np.tanh(draws / 2.0))
    t_vals = u[:, 0]
    x = box * (2.0 * u[:, 1:d + 1] - 1.0)
    y = box * (2.0 * u[:, d + 1:2 * d + 1] - 1.0)

    tiny = 1e-300
    grad_ratio = growth_b = growth_sig = lip_sig = lip_grad = 0.0
    for k in range(samples):
        t = float(t_vals[k])
        bx = np.asarray(model.b(t, x[k]), dtype=float)
        jac_x = np.asarray(model.grad_b(t, x[k]), dtype=float)
        jac_y = np.asarray(model.grad_b(t, y[k]), dtype=float)
        sig_x = np.asarray(model.sigma(t, x[k]), dtype=float)
        sig_y = np.asarray(model.sigma(t, y[k]), dtype=float)
        nx = float(np.linalg.norm(x[k]))
        dxy = float(np.linalg.norm(x[k] - y[k]))
        grad_ratio = max(grad_ratio, float(np.linalg.norm(jac_x, 2)))
        growth_b = max(growth_b, float(np.linalg.norm(bx)) / (1.0 + nx))
        growth_sig = max(growth_sig,
                         float(np.linalg.norm(sig_x, 2)) / (1.0 + nx))
        lip_sig = max(lip_sig,
                      float(np.linalg.norm(sig_x - sig_y, 2)) / max(dxy, tiny))
        lip_grad = max(lip_grad,
                       float(np.linalg.norm(jac_x - jac_y, 2)) / max(dxy, tiny))
    slack = 1.0 + 1e-9
    passed = (grad_ratio <= model.L1 * slack
              and growth_b <= model.L1 * slack
              and growth_sig <= model.L1 * slack
              and lip_sig <= model.L1 * slack
              and lip_grad <= model.L2 * slack + 1e-15)
    params = {
        "L1": model.L1, "L2": model.L2,
        "grad_norm": grad_ratio, "b_growth": growth_b,
        "sigma_growth": growth_sig, "sigma_lipschitz": lip_sig,
        "grad_lipschitz": lip_grad, "samples": samples, "box": box,
    }
    return HypothesisReport(name="Hbs1", parameters=params, passed=passed,
                            evidence=((grad_ratio, growth_b, growth_sig,
                                       lip_sig, lip_grad),))
