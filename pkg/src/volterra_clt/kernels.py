"""Two-time Volterra kernels and the special functions backing them.

Three kernel kinds are supported:

* ``constant`` : K(t, s) = v everywhere,
* ``riemann-liouville`` : K(t, s) = (t - s)_+^{H - 1/2} / Gamma(H + 1/2),
* ``fbm-molchan-golosov`` : the kernel mapping Brownian increments to
  fractional Brownian motion,

      K_H(t, s) = (t - s)^{H - 1/2} / Gamma(H + 1/2)
                  * 2F1(1/2 - H, H - 1/2; H + 1/2; 1 - t/s)   for 0 < s < t.

For H < 1/2 the power-law kernels blow up as s -> t, and the fBm kernel is
additionally singular at s -> 0 for every H != 1/2.  Singular evaluation
points raise :class:`DomainError`; they are never returned as infinities.

The Gauss hypergeometric factor is evaluated through the Pfaff transform
F(a,b;c;z) = (1-z)^{-a} F(a, c-b; c; z/(z-1)), which maps the argument range
z = 1 - t/s in (-inf, 0] onto w = 1 - s/t in [0, 1).  For w close to 1
(s << t) the transformed series alone converges too slowly, so the standard
two-series connection formula in 1 - w is used there; both series then have
arguments below 1/2 and converge geometrically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from .errors import ConvergenceError, DomainError

CONSTANT = "constant"
RIEMANN_LIOUVILLE = "riemann-liouville"
FBM_MOLCHAN_GOLOSOV = "fbm-molchan-golosov"

KERNEL_KINDS = (CONSTANT, RIEMANN_LIOUVILLE, FBM_MOLCHAN_GOLOSOV)

# Direct-series budget; generous because the Pfaff/connection split keeps
# series arguments below ~0.6 on every internal code path.
MAX_SERIES_TERMS = 200_000
_SERIES_TOL = 1e-15

# Argument above which the transformed series switches to the 1-w connection
# formula.
_CONNECTION_SWITCH = 0.5


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------


def gamma_fn(x: float) -> float:
    """Gamma function restricted to the positive half line."""
    if not x > 0:
        raise DomainError(f"gamma_fn requires x > 0, got x={x!r}")
    return math.gamma(x)


def beta_fn(a: float, b: float) -> float:
    """Euler Beta function B(a, b) for positive arguments."""
    if not (a > 0 and b > 0):
        raise DomainError(f"beta_fn requires a, b > 0, got a={a!r}, b={b!r}")
    return math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def _gamma_any(x: float) -> float:
    # Gamma at negative non-integer arguments, needed by the connection
    # formula coefficients.  Poles propagate as DomainError.
    try:
        return math.gamma(x)
    except ValueError as exc:
        raise DomainError(f"gamma pole at x={x!r}") from exc


def _rgamma(x: float) -> float:
    # 1/Gamma(x); zero at the poles, which silently removes the corresponding
    # connection-formula term (the correct limit).
    try:
        return 1.0 / math.gamma(x)
    except ValueError:
        return 0.0


def _is_nonpositive_int(x: float, tol: float = 1e-12) -> bool:
    return x <= tol and abs(x - round(x)) < tol


def _series_2f1(a: float, b: float, c: float, z: float,
                max_terms: int = MAX_SERIES_TERMS) -> float:
    # Plain hypergeometric power series; caller guarantees |z| < 1.
    term = 1.0
    total = 1.0
    for k in range(max_terms):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z
        total += term
        if term == 0.0 or abs(term) <= _SERIES_TOL * max(1.0, abs(total)):
            return total
    raise ConvergenceError(
        f"2F1 series did not converge after {max_terms} terms "
        f"(a={a}, b={b}, c={c}, z={z})")


def _series_2f1_vec(a: float, b: float, c: float, z: np.ndarray,
                    max_terms: int = 20_000) -> np.ndarray:
    # Vectorised series over an argument array with |z| bounded away from 1.
    z = np.asarray(z, dtype=float)
    term = np.ones_like(z)
    total = np.ones_like(z)
    for k in range(max_terms):
        term = term * ((a + k) * (b + k) / ((c + k) * (k + 1.0))) * z
        total = total + term
        if np.all(np.abs(term) <= _SERIES_TOL * np.maximum(1.0, np.abs(total))):
            return total
    raise ConvergenceError(
        f"vectorised 2F1 series did not converge (a={a}, b={b}, c={c}, "
        f"max |z|={np.max(np.abs(z))})")


def _connection_near_one(a: float, b: float, c: float, x):
    # F(a,b;c;w) for w near 1, expanded in x = 1 - w, which the caller
    # supplies directly to avoid cancellation.  Requires c - a - b
    # non-integer.
    m = c - a - b
    if abs(m - round(m)) < 1e-9:
        raise DomainError(
            f"connection formula needs non-integer c-a-b, got {m!r}")
    coef1 = _gamma_any(c) * _gamma_any(m) * _rgamma(c - a) * _rgamma(c - b)
    coef2 = _gamma_any(c) * _gamma_any(-m) * _rgamma(a) * _rgamma(b)
    if isinstance(x, np.ndarray):
        s1 = _series_2f1_vec(a, b, 1.0 - m, x) if coef1 != 0.0 else 0.0
        s2 = _series_2f1_vec(c - a, c - b, 1.0 + m, x) if coef2 != 0.0 else 0.0
    else:
        s1 = _series_2f1(a, b, 1.0 - m, x) if coef1 != 0.0 else 0.0
        s2 = _series_2f1(c - a, c - b, 1.0 + m, x) if coef2 != 0.0 else 0.0
    return coef1 * s1 + coef2 * x ** m * s2


def gauss_2f1(a: float, b: float, c: float, z: float) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; z) for real z <= 1.

    Evaluation strategy: the defining series for z in [0, 1); the Pfaff
    transform for z < 0, followed by the 1-w connection formula when the
    transformed argument exceeds 1/2; the Gauss summation formula at z = 1
    (which requires c - a - b > 0).
    """
    if _is_nonpositive_int(c):
        raise DomainError(f"2F1 undefined for non-positive integer c={c!r}")
    if a == 0.0 or b == 0.0:
        return 1.0
    # Negative-integer a or b truncates the series to a polynomial, valid for
    # every argument.
    if _is_nonpositive_int(a) or _is_nonpositive_int(b):
        n_terms = int(-min(round(a), round(b))) + 2
        return _series_2f1(a, b, c, z, max_terms=max(n_terms, 4))
    if z > 1.0:
        raise DomainError(f"2F1 requires z <= 1, got z={z!r}")
    if z == 1.0:
        if not c - a - b > 0:
            raise DomainError(
                f"2F1 at z=1 requires c-a-b > 0, got {c - a - b!r}")
        return (_gamma_any(c) * _gamma_any(c - a - b)
                / (_gamma_any(c - a) * _gamma_any(c - b)))
    if z >= 0.0:
        return _series_2f1(a, b, c, z)
    # z < 0: Pfaff maps onto w in (0, 1); 1 - w = 1/(1 - z) exactly.
    w = z / (z - 1.0)
    prefactor = (1.0 - z) ** (-a)
    if w <= _CONNECTION_SWITCH:
        return prefactor * _series_2f1(a, c - b, c, w)
    m = b - a  # c - A - B for the transformed parameter triple
    if abs(m - round(m)) < 1e-9:
        return prefactor * _series_2f1(a, c - b, c, w)
    return prefactor * _connection_near_one(a, c - b, c, 1.0 / (1.0 - z))


# ---------------------------------------------------------------------------
# kernel registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """A two-time kernel K(t, s).

    ``value`` is used by the constant kind only; ``H`` by the power-law
    kinds, which require H in (0, 1).
    """

    kind: str
    H: float | None = None
    value: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise DomainError(f"unknown kernel kind {self.kind!r}")
        if self.kind != CONSTANT:
            if self.H is None or not (0.0 < self.H < 1.0):
                raise DomainError(
                    f"kernel kind {self.kind!r} requires H in (0, 1), "
                    f"got H={self.H!r}")
        elif self.value < 0.0:
            raise DomainError(f"constant kernel needs value >= 0, got {self.value!r}")

    @property
    def alpha(self) -> float:
        """|1/2 - H| for the power-law kinds."""
        if self.H is None:
            raise DomainError("constant kernels have no Hurst parameter")
        return abs(0.5 - self.H)

    @property
    def singular_at_diagonal(self) -> bool:
        return self.kind != CONSTANT and self.H is not None and self.H < 0.5

    @property
    def singular_at_origin(self) -> bool:
        return self.kind == FBM_MOLCHAN_GOLOSOV and self.H != 0.5


def constant_kernel(value: float = 1.0, label: str = "") -> KernelSpec:
    return KernelSpec(CONSTANT, value=value, label=label or f"const({value})")


def riemann_liouville(H: float, label: str = "") -> KernelSpec:
    return KernelSpec(RIEMANN_LIOUVILLE, H=H, label=label or f"rl(H={H})")


def fbm_kernel(H: float, label: str = "") -> KernelSpec:
    return KernelSpec(FBM_MOLCHAN_GOLOSOV, H=H,
                      label=label or f"fbm(H={H})")


def _fbm_hyp_factor(H: float, ratio: np.ndarray) -> np.ndarray:
    # F(1/2-H, 1; H+1/2; w) at w = 1 - ratio, the post-Pfaff hypergeometric
    # factor of the fBm kernel with ratio = s/t in (0, 1).  Passing the
    # ratio keeps the near-singular branch cancellation-free.
    a = 0.5 - H
    c = H + 0.5
    m = 2.0 * H - 1.0
    out = np.empty_like(ratio)
    near = ratio < 1.0 - _CONNECTION_SWITCH
    if np.any(~near):
        out[~near] = _series_2f1_vec(a, 1.0, c, 1.0 - ratio[~near])
    if np.any(near):
        if abs(m) < 1e-3:
            # Connection coefficients lose accuracy when 2H-1 is nearly an
            # integer; fall back to the slow but convergent direct series.
            out[near] = _series_2f1_vec(a, 1.0, c, 1.0 - ratio[near],
                                        max_terms=MAX_SERIES_TERMS)
        else:
            out[near] = _connection_near_one(a, 1.0, c, ratio[near])
    return out


def kernel_eval(kernel: KernelSpec, t, s):
    """Pointwise kernel evaluation; accepts scalars or broadcastable arrays.

    Power-law kinds vanish for s >= t.  Evaluation exactly at a singular
    point (s = t with H < 1/2, or s = 0 for the fBm kind) raises
    :class:`DomainError` with the offending pair.
    """
    t_arr = np.asarray(t, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    scalar = t_arr.ndim == 0 and s_arr.ndim == 0
    t_arr, s_arr = np.broadcast_arrays(t_arr, s_arr)

    if kernel.kind == CONSTANT:
        out = np.full(t_arr.shape, kernel.value)
        return float(out) if scalar else out

    H = kernel.H
    inside = s_arr < t_arr
    if H < 0.5 and np.any((s_arr == t_arr) & (t_arr > 0)):
        bad = np.argwhere((s_arr == t_arr) & (t_arr > 0))
        idx = tuple(bad[0])
        raise DomainError(
            f"singular kernel evaluation at t=s={t_arr[idx]!r} (H={H} < 1/2)")
    if kernel.kind == FBM_MOLCHAN_GOLOSOV and H != 0.5 \
            and np.any(inside & (s_arr <= 0.0)):
        bad = np.argwhere(inside & (s_arr <= 0.0))
        idx = tuple(bad[0])
        raise DomainError(
            f"fbm kernel requires s > 0, got (t, s)="
            f"({t_arr[idx]!r}, {s_arr[idx]!r})")

    out = np.zeros(t_arr.shape)
    if H == 0.5:
        out[inside] = 1.0
        return float(out) if scalar else out

    gamma_h = math.gamma(H + 0.5)
    diff = np.where(inside, t_arr - s_arr, 1.0)
    if kernel.kind == RIEMANN_LIOUVILLE:
        out[inside] = diff[inside] ** (H - 0.5) / gamma_h
    else:
        ss = s_arr[inside]
        tt = t_arr[inside]
        ratio = ss / tt
        hyp = _fbm_hyp_factor(H, ratio)
        out[inside] = ((tt - ss) ** (H - 0.5) * ratio ** (0.5 - H)
                       / gamma_h * hyp)
    return float(out) if scalar else out


def kernel_eval_gap(kernel: KernelSpec, t, gap):
    """Evaluate K(t, t - gap) directly from the time gap.

    Near the diagonal the position t - gap rounds to t once the gap drops
    below one ulp; computing from the gap keeps singular kernels accurate
    at arbitrarily small separations.  Requires 0 < gap <= t.
    """
    t_arr = np.asarray(t, dtype=float)
    gap_arr = np.asarray(gap, dtype=float)
    scalar = t_arr.ndim == 0 and gap_arr.ndim == 0
    t_arr, gap_arr = np.broadcast_arrays(t_arr, gap_arr)
    if np.any(gap_arr <= 0.0) or np.any(gap_arr > t_arr):
        raise DomainError("kernel_eval_gap requires 0 < gap <= t")
    if kernel.kind == CONSTANT:
        out = np.full(t_arr.shape, kernel.value)
        return float(out) if scalar else out
    H = kernel.H
    if H == 0.5:
        out = np.ones(t_arr.shape)
        return float(out) if scalar else out
    gamma_h = math.gamma(H + 0.5)
    if kernel.kind == RIEMANN_LIOUVILLE:
        out = gap_arr ** (H - 0.5) / gamma_h
        return float(out) if scalar else out
    if np.any(gap_arr == t_arr):
        raise DomainError("fbm kernel undefined at s = 0 (gap = t)")
    w = gap_arr / t_arr
    ratio = 1.0 - w
    hyp = np.empty_like(w)
    small_w = w <= 1.0 - _CONNECTION_SWITCH
    if np.any(small_w):
        # Series argument taken from the gap itself: no cancellation.
        hyp[small_w] = _series_2f1_vec(0.5 - H, 1.0, H + 0.5, w[small_w])
    if np.any(~small_w):
        hyp[~small_w] = _fbm_hyp_factor(H, ratio[~small_w])
    out = gap_arr ** (H - 0.5) * ratio ** (0.5 - H) / gamma_h * hyp
    return float(out) if scalar else out


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureConfig:
    """Panelised Gauss-Legendre rule with geometric endpoint grading.

    ``singularity_split`` is the shrink factor of successive subpanels
    stacked toward a singular endpoint.  Deterministic by construction.
    """

    panels: int = 8
    gauss_order: int = 16
    singularity_split: float = 0.25
    abs_tol: float = 1e-10

    def __post_init__(self):
        if self.panels < 1:
            raise DomainError(f"panels must be >= 1, got {self.panels}")
        if self.gauss_order < 1:
            raise DomainError(f"gauss_order must be >= 1, got {self.gauss_order}")
        if not (0.0 < self.singularity_split < 1.0):
            raise DomainError(
                f"singularity_split must lie in (0, 1), got {self.singularity_split}")
        if not self.abs_tol > 0.0:
            raise DomainError(f"abs_tol must be positive, got {self.abs_tol}")


DEFAULT_QUAD = QuadratureConfig()

_MAX_GRADE_LEVELS = 240


def _panel_gauss(f, lo: float, hi: float, nodes, weights) -> float:
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return half * float(np.dot(weights, f(mid + half * nodes)))


def _graded_panel(f, lo: float, hi: float, toward_hi: bool,
                  quad: QuadratureConfig, nodes, weights,
                  exact_gap: bool = False) -> float:
    # Geometric subpanels accumulating toward the singular endpoint; stops
    # once the last contribution is small enough that the geometric tail is
    # below tolerance.  When grading toward ``hi`` the integrand is
    # re-parametrised by the gap u = hi - s, which stays exactly
    # representable at every scale; without a true gap integrand the
    # refinement stops at the ulp of ``hi``.
    width = hi - lo
    split = quad.singularity_split
    threshold = quad.abs_tol * (1.0 - split) / 8.0
    total = 0.0
    prev = width
    for level in range(1, _MAX_GRADE_LEVELS + 1):
        cur = width * split ** level
        if toward_hi:
            if not exact_gap and hi - cur >= hi:
                break
            part = _panel_gauss(lambda u: f(u, gap=True), cur, prev,
                                nodes, weights)
        else:
            if not lo + cur < lo + prev:
                break
            part = _panel_gauss(lambda s: f(s, gap=False), lo + cur,
                                lo + prev, nodes, weights)
        total += part
        prev = cur
        if abs(part) <= threshold:
            break
    return total


def integrate_graded(f, lo: float, hi: float, quad: QuadratureConfig,
                     singular_lo: bool = False, singular_hi: bool = False,
                     f_gap=None) -> float:
    """Integrate a vectorised integrand over [lo, hi].

    Inner panels use plain Gauss-Legendre; panels adjacent to a flagged
    singular endpoint are geometrically refined toward it.  When
    ``singular_hi`` is set, the refined panel evaluates ``f_gap(u)`` with
    u = hi - s (defaulting to ``f(hi - u)``), so evaluations can approach
    the endpoint far below one ulp of ``hi``.
    """
    if hi <= lo:
        return 0.0
    nodes, weights = roots_legendre(quad.gauss_order)
    n_panels = quad.panels
    if n_panels == 1 and singular_lo and singular_hi:
        n_panels = 2
    bounds = np.linspace(lo, hi, n_panels + 1)
    exact_gap = f_gap is not None
    if f_gap is None:
        f_gap = lambda u: f(hi - u)  # noqa: E731

    def dispatch(x, gap: bool):
        return f_gap(x) if gap else f(x)

    total = 0.0
    for i in range(n_panels):
        a, b = float(bounds[i]), float(bounds[i + 1])
        if i == 0 and singular_lo:
            total += _graded_panel(dispatch, a, b, False, quad, nodes, weights)
        elif i == n_panels - 1 and singular_hi:
            total += _graded_panel(dispatch, a, b, True, quad, nodes,
                                   weights, exact_gap=exact_gap)
        else:
            total += _panel_gauss(f, a, b, nodes, weights)
    return total


# ---------------------------------------------------------------------------
# kernel integrals
# ---------------------------------------------------------------------------


def _pow_integral_constraints(kernel: KernelSpec, q: float) -> None:
    H = kernel.H
    exponent = 1.0 + q * (H - 0.5)
    if exponent <= 0.0:
        raise DomainError(
            f"kernel power integral diverges at s=t: "
            f"1 + q*(H - 1/2) = {exponent:.6g} <= 0 (q={q}, H={H})")
    if kernel.kind == FBM_MOLCHAN_GOLOSOV and q * abs(H - 0.5) >= 1.0:
        raise DomainError(
            f"kernel power integral diverges at s=0: "
            f"q*|H - 1/2| = {q * abs(H - 0.5):.6g} >= 1 (q={q}, H={H})")


def kernel_pow_integral(kernel: KernelSpec, t: float, q: float,
                        quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Integral of K(t, s)^q in s over (0, t).

    Closed form for the constant and Riemann-Liouville kinds, graded
    quadrature for the fBm kind.  Raises :class:`DomainError` naming the
    violated constraint when the integrand is not integrable.
    """
    if q < 1.0:
        raise DomainError(f"power integral requires q >= 1, got q={q!r}")
    if t < 0.0:
        raise DomainError(f"power integral requires t >= 0, got t={t!r}")
    if t == 0.0:
        return 0.0
    if kernel.kind == CONSTANT:
        return kernel.value ** q * t
    _pow_integral_constraints(kernel, q)
    H = kernel.H
    exponent = 1.0 + q * (H - 0.5)
    if kernel.kind == RIEMANN_LIOUVILLE:
        return t ** exponent / (exponent * math.gamma(H + 0.5) ** q)

    def integrand(s):
        return kernel_eval(kernel, t, s) ** q

    def integrand_gap(u):
        return kernel_eval_gap(kernel, t, u) ** q

    return integrate_graded(integrand, 0.0, t, quad,
                            singular_lo=kernel.singular_at_origin,
                            singular_hi=True, f_gap=integrand_gap)


def kernel_time_modulus(kernel: KernelSpec, t: float, t2: float, power: float,
                        quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Integral of |K(t2, s) - K(t, s)|^power in s over (0, t /\\ t2).

    Symmetric in (t, t2) and zero when the arguments coincide.
    """
    if power not in (1.0, 2.0, 1, 2):
        raise DomainError(f"power must be 1 or 2, got {power!r}")
    lo_t, hi_t = (t, t2) if t <= t2 else (t2, t)
    if lo_t == hi_t or lo_t <= 0.0 or kernel.kind == CONSTANT:
        return 0.0

    delta = hi_t - lo_t

    def integrand(s):
        return np.abs(kernel_eval(kernel, hi_t, s)
                      - kernel_eval(kernel, lo_t, s)) ** power

    def integrand_gap(u):
        # s = lo_t - u sits at gap u from lo_t and at gap delta + u from hi_t.
        return np.abs(kernel_eval_gap(kernel, hi_t, delta + u)
                      - kernel_eval_gap(kernel, lo_t, u)) ** power

    return integrate_graded(integrand, 0.0, lo_t, quad,
                            singular_lo=kernel.singular_at_origin,
                            singular_hi=True, f_gap=integrand_gap)


# ---------------------------------------------------------------------------
# fractional Brownian motion covariance machinery
# ---------------------------------------------------------------------------


def fbm_v_constant(H: float) -> float:
    """Normalisation constant of the fBm covariance.

    V_H = Gamma(2 - 2H) cos(pi H) / (pi H (1 - 2H)); singular 0/0 at H = 1/2.
    """
    if not (0.0 < H < 1.0):
        raise DomainError(f"fbm_v_constant requires H in (0, 1), got {H!r}")
    if H == 0.5:
        raise DomainError("V_H is a 0/0 form at H = 1/2; covariance is s /\\ t")
    return math.gamma(2.0 - 2.0 * H) * math.cos(math.pi * H) \
        / (math.pi * H * (1.0 - 2.0 * H))


def fbm_covariance(H: float, s: float, t: float) -> float:
    """Fractional Brownian motion covariance R_H(s, t).

    R_H(s, t) = V_H/2 * (s^{2H} + t^{2H} - |t - s|^{2H}); the H = 1/2 case
    reduces to the Brownian covariance s /\\ t.
    """
    if not (0.0 < H < 1.0):
        raise DomainError(f"fbm_covariance requires H in (0, 1), got {H!r}")
    if s < 0.0 or t < 0.0:
        raise DomainError(f"fbm_covariance requires s, t >= 0, got ({s}, {t})")
    if H == 0.5:
        return min(s, t)
    vh = fbm_v_constant(H)
    return 0.5 * vh * (s ** (2 * H) + t ** (2 * H) - abs(t - s) ** (2 * H))


def fbm_kernel_gram(H: float, s: float, t: float,
                    quad: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Integral of K_H(s, r) K_H(t, r) in r over (0, s /\\ t).

    This is the kernel-side reconstruction of the fBm covariance, up to the
    normalisation constant of the covariance convention.
    """
    kernel = fbm_kernel(H)
    lo_t = min(s, t)
    hi_t = max(s, t)
    if lo_t <= 0.0:
        return 0.0
    if H == 0.5:
        return lo_t

    delta = hi_t - lo_t

    def integrand(r):
        return kernel_eval(kernel, lo_t, r) * kernel_eval(kernel, hi_t, r)

    def integrand_gap(u):
        if delta == 0.0:
            return kernel_eval_gap(kernel, lo_t, u) ** 2
        return kernel_eval_gap(kernel, lo_t, u) \
            * kernel_eval_gap(kernel, hi_t, delta + u)

    return integrate_graded(integrand, 0.0, lo_t, quad,
                            singular_lo=True, singular_hi=True,
                            f_gap=integrand_gap)
