"""Coefficient triples (b, sigma, grad_b) with declared regularity constants.

All maps are vectorised over a trailing state axis: ``b(t, x)`` and
``grad_b(t, x)`` accept ``x`` of shape (..., d) and return (..., d) and
(..., d, d); ``sigma(t, x)`` returns (..., d, m).  ``L1`` bounds the drift
gradient, the sigma Lipschitz constant and both linear-growth ratios;
``L2`` bounds the Lipschitz constant of the drift gradient itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ContractError

BUILTIN_MODELS = ("zero", "linear-additive", "sin-drift", "tanh-mixed")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    d: int
    m: int
    b: Callable
    sigma: Callable
    grad_b: Callable
    L1: float
    L2: float
    params: tuple = field(default=())

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ConfigError(f"model dimensions must be positive, got "
                              f"d={self.d}, m={self.m}")
        if not self.L1 > 0.0:
            raise ConfigError(f"L1 must be positive, got {self.L1!r}")
        if self.L2 < 0.0:
            raise ConfigError(f"L2 must be nonnegative, got {self.L2!r}")


def _broadcast_const(mat: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.broadcast_to(mat, x.shape[:-1] + mat.shape)


def _spectral_norm(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    return float(np.linalg.norm(mat, 2))


def builtin_model(name: str, params: Sequence[float] = (), d: int = 1,
                  m: int = 1) -> ModelSpec:
    """Instantiate a named coefficient model.

    ``zero``            : b = 0, sigma = 0 (any d, m); no parameters.
    ``linear-additive`` : b(t,x) = A x + shift, sigma constant; params
                          flatten A (d*d), Sigma (d*m) and optionally a
                          shift vector (d).
    ``sin-drift``       : d = m = 1, b = a sin(x), sigma = 1; params = [a].
    ``tanh-mixed``      : d = m = 1, b = a tanh(x), sigma = 1 + tanh(x)/2;
                          params = [a].
    """
    params = tuple(float(p) for p in params)
    if name == "zero":
        if params:
            raise ConfigError(f"zero model takes no parameters, got {params}")
        zero_vec = np.zeros(d)
        zero_mat = np.zeros((d, m))
        zero_jac = np.zeros((d, d))
        return ModelSpec(
            name=name, d=d, m=m,
            b=lambda t, x: _broadcast_const(zero_vec, np.asarray(x)),
            sigma=lambda t, x: _broadcast_const(zero_mat, np.asarray(x)),
            grad_b=lambda t, x: _broadcast_const(zero_jac, np.asarray(x)),
            L1=1.0, L2=0.0, params=params)

    if name == "linear-additive":
        n_lin = d * d + d * m
        if len(params) == n_lin:
            shift = np.zeros(d)
        elif len(params) == n_lin + d:
            shift = np.asarray(params[n_lin:], dtype=float)
        else:
            raise ConfigError(
                f"linear-additive with d={d}, m={m} needs {n_lin} or "
                f"{n_lin + d} parameters, got {len(params)}")
        A = np.asarray(params[:d * d], dtype=float).reshape(d, d)
        S = np.asarray(params[d * d:n_lin], dtype=float).reshape(d, m)
        L1 = max(_spectral_norm(A), _spectral_norm(S),
                 float(np.linalg.norm(shift)))
        if L1 == 0.0:
            L1 = 1.0
        return ModelSpec(
            name=name, d=d, m=m,
            b=lambda t, x: np.asarray(x) @ A.T + shift,
            sigma=lambda t, x: _broadcast_const(S, np.asarray(x)),
            grad_b=lambda t, x: _broadcast_const(A, np.asarray(x)),
            L1=L1, L2=0.0, params=params)

    if name == "sin-drift":
        if d != 1 or m != 1:
            raise ConfigError("sin-drift is a scalar model (d = m = 1)")
        if len(params) != 1:
            raise ConfigError(f"sin-drift needs one parameter, got {len(params)}")
        a = params[0]
        one_mat = np.ones((1, 1))
        return ModelSpec(
            name=name, d=1, m=1,
            b=lambda t, x: a * np.sin(np.asarray(x)),
            sigma=lambda t, x: _broadcast_const(one_mat, np.asarray(x)),
            grad_b=lambda t, x: (a * np.cos(np.asarray(x)))[..., None],
            L1=max(abs(a), 1.0), L2=abs(a), params=params)

    if name == "tanh-mixed":
        if d != 1 or m != 1:
            raise ConfigError("tanh-mixed is a scalar model (d = m = 1)")
        if len(params) != 1:
            raise ConfigError(f"tanh-mixed needs one parameter, got {len(params)}")
        a = params[0]
        # max |d/dx (1 - tanh^2 x)| = 4 / (3 sqrt(3)), attained at
        # tanh(x) = 1/sqrt(3).
        l2 = abs(a) * 4.0 / (3.0 * math.sqrt(3.0))
        return ModelSpec(
            name=name, d=1, m=1,
            b=lambda t, x: a * np.tanh(np.asarray(x)),
            sigma=lambda t, x: (1.0 + 0.5 * np.tanh(np.asarray(x)))[..., None],
            grad_b=lambda t, x: (a * (1.0 - np.tanh(np.asarray(x)) ** 2))[..., None],
            L1=max(abs(a), 1.5), L2=l2, params=params)

    raise ConfigError(f"unknown model {name!r}; choose from {BUILTIN_MODELS}")


def directional_drift_derivative(model: ModelSpec, t: float, base, direction):
    """Jacobian-vector product grad_b(t, base) @ direction.

    ``base`` and ``direction`` broadcast over leading axes with trailing
    dimension d.
    """
    base = np.asarray(base, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if base.shape[-1] != model.d or direction.shape[-1] != model.d:
        raise ContractError(
            f"state dimension mismatch: model d={model.d}, base "
            f"{base.shape}, direction {direction.shape}")
    jac = model.grad_b(t, base)
    return np.einsum("...ij,...j->...i", jac, direction)
