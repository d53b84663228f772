"""Two-sided Gaussian tail functionals evaluated by quadrature.

For a standard bivariate normal pair ``(X, Y)`` with correlation ``u`` and a
threshold ``theta`` this module computes

* ``alpha(theta)``   -- ``P[|X| >= theta]``,
* ``phi(u, ...)``    -- ``P[|X| >= theta, |Y| >= theta]``,
* ``iota(theta)``    -- half the second derivative of ``phi`` at ``u = 0``
  (the quadratic Taylor coefficient ``c_2``),
* ``taylor_c(m, ...)`` -- Taylor coefficients ``c_m`` of ``phi`` around 0.

The threshold is a first-class parameter with default 1.0.  Large
thresholds make ``alpha`` astronomically small (``alpha(10) ~ 1.5e-23``),
so any run that thresholds real data needs ``alpha = Theta(1)``; keep
``theta`` near 1 for experiments on feasible matrix sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import NumericError, ParameterError

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Integration window: beyond theta + 12 the standard normal mass is below
# 2e-33, which is negligible against every tolerance used here.
_TAIL_SPAN = 12.0

# |u| this close to 1 is treated as the exact degenerate limit phi(+-1) = alpha.
_UNIT_CORR_EPS = 1e-12


@dataclass(frozen=True)
class TailParams:
    """Threshold and quadrature controls for the tail functionals."""

    theta: float = 1.0
    quad_tol: float = 1e-10
    quad_limit: int = 200

    def __post_init__(self):
        if not (self.theta > 0):
            raise ParameterError(f"theta must be positive, got {self.theta}")
        if not (0 < self.quad_tol <= 1e-6):
            raise ParameterError(f"quad_tol must be in (0, 1e-6], got {self.quad_tol}")
        if self.quad_limit < 10:
            raise ParameterError(f"quad_limit too small: {self.quad_limit}")


@dataclass(frozen=True)
class ModelConstants:
    """Cached scalar constants for one threshold.

    ``phi0`` is the quadrature value of ``phi(0)``; analytically it equals
    ``alpha**2`` and the constructor enforces agreement within ``quad_tol``.
    """

    theta: float
    alpha: float
    iota: float
    phi0: float
    params: TailParams = field(repr=False, default=TailParams())

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha out of (0,1): {self.alpha}")
        if not (self.iota > 0.0):
            raise NumericError(f"iota must be positive, got {self.iota}")
        if abs(self.phi0 - self.alpha**2) > self.params.quad_tol:
            raise NumericError(
                "phi(0) disagrees with alpha^2 beyond quad_tol",
                achieved=abs(self.phi0 - self.alpha**2),
            )

    @property
    def alpha_var(self) -> float:
        """Variance of the set-membership indicator, ``alpha - alpha^2``."""
        return self.alpha - self.alpha**2


def constants(theta: float = 1.0, quad_tol: float = 1e-10) -> ModelConstants:
    """Compute and validate the constants for one threshold."""
    params = TailParams(theta=theta, quad_tol=quad_tol)
    return ModelConstants(
        theta=theta,
        alpha=alpha(theta),
        iota=iota(theta, quad_tol=quad_tol),
        phi0=phi(0.0, params),
        params=params,
    )


def alpha(theta: float) -> float:
    """Two-sided standard normal tail ``P[|X| >= theta]``.

    Evaluated through the complementary error function; absolute error
    below 1e-14 over the whole admissible range.
    """
    if theta < 0:
        raise ParameterError(f"theta must be nonnegative, got {theta}")
    return float(special.erfc(theta / _SQRT2))


def _phi_integrand(x, u: float, theta: float, s: float):
    # Conditional two-sided tail of Y | X = x, with mean u*x and sd s.
    cond = special.ndtr(-(theta - u * x) / s) + special.ndtr(-(theta + u * x) / s)
    return np.exp(-x * x / 2.0) / _SQRT_2PI * cond


def phi(u: float, params: TailParams = TailParams()) -> float:
    """Joint two-sided tail ``P[|X| >= theta, |Y| >= theta]`` at correlation ``u``.

    Computed as a single adaptive integral over ``x >= theta`` (the
    integrand is even in ``x``) of the normal density times the conditional
    two-sided tail of ``Y | X = x``.  ``|u| = 1`` returns the exact limit
    ``alpha(theta)``.
    """
    if not np.isfinite(u) or abs(u) > 1.0:
        raise ParameterError(f"correlation must lie in [-1, 1], got {u}")
    theta = params.theta
    if abs(u) >= 1.0 - _UNIT_CORR_EPS:
        return alpha(theta)
    s = math.sqrt(1.0 - u * u)
    val, err = integrate.quad(
        _phi_integrand,
        theta,
        theta + _TAIL_SPAN,
        args=(u, theta, s),
        epsabs=params.quad_tol / 4.0,
        epsrel=1e-13,
        limit=params.quad_limit,
    )
    if 2.0 * err > params.quad_tol:
        raise NumericError(
            f"phi quadrature did not converge at u={u}", achieved=2.0 * err
        )
    return 2.0 * val


# Fixed composite Gauss-Legendre rule for the vectorized evaluator.  The
# integrand is analytic on [theta, theta + 12]; six panels of 40 nodes put
# the rule error far below 1e-12, which the tests check against phi().
_GL_PANELS = 6
_GL_NODES = 40


def _gl_grid(theta: float):
    nodes, weights = np.polynomial.legendre.leggauss(_GL_NODES)
    edges = np.linspace(theta, theta + _TAIL_SPAN, _GL_PANELS + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return x, w


def phi_batch(us: np.ndarray, params: TailParams = TailParams()) -> np.ndarray:
    """Vectorized ``phi`` over an array of correlations.

    Repeated values are evaluated once.  Used for bulk matrix construction;
    agrees with the scalar adaptive route to well below ``quad_tol``.
    """
    us = np.asarray(us, dtype=float)
    if not np.all(np.isfinite(us)) or np.any(np.abs(us) > 1.0):
        raise ParameterError("correlations must lie in [-1, 1]")
    flat = us.ravel()
    uniq, inverse = np.unique(flat, return_inverse=True)
    out = np.empty_like(uniq)
    degenerate = np.abs(uniq) >= 1.0 - _UNIT_CORR_EPS
    out[degenerate] = alpha(params.theta)
    # near-unit correlations make the conditional tail nearly a step
    # function, too sharp for the fixed rule; defer those to the adaptive path
    sharp = (~degenerate) & (np.abs(uniq) > 0.97)
    for idx in np.flatnonzero(sharp):
        out[idx] = phi(float(uniq[idx]), params)
    live = ~degenerate & ~sharp
    if np.any(live):
        u = uniq[live][:, None]
        x, w = _gl_grid(params.theta)
        s = np.sqrt(1.0 - u * u)
        cond = special.ndtr(-(params.theta - u * x[None, :]) / s) + special.ndtr(
            -(params.theta + u * x[None, :]) / s
        )
        dens = np.exp(-x * x / 2.0) / _SQRT_2PI
        out[live] = 2.0 * (cond * (dens * w)[None, :]).sum(axis=1)
    return out[inverse].reshape(us.shape)


def tail_moment(j: int, theta: float, quad_tol: float = 1e-13) -> float:
    """``(2*pi)**-0.5 * integral of x**j * exp(-x^2/2) over |x| >= theta``.

    Zero for odd ``j`` by symmetry.
    """
    if j < 0:
        raise ParameterError(f"moment order must be nonnegative, got {j}")
    if theta < 0:
        raise ParameterError(f"theta must be nonnegative, got {theta}")
    if j % 2 == 1:
        return 0.0
    val, err = integrate.quad(
        lambda x: x**j * np.exp(-x * x / 2.0) / _SQRT_2PI,
        theta,
        theta + _TAIL_SPAN + 4.0,
        epsabs=quad_tol / 4.0,
        epsrel=1e-13,
        limit=300,
    )
    # high moments exceed 1, so the accuracy contract is relative there
    if 2.0 * err > quad_tol * max(1.0, 2.0 * abs(val)):
        raise NumericError(f"tail moment {j} did not converge", achieved=2.0 * err)
    return 2.0 * val


def iota(theta: float, quad_tol: float = 1e-10) -> float:
    """Quadratic Taylor coefficient ``c_2`` of ``phi``, always positive.

    With ``a_k`` the two-sided tail moments, ``c_2 = (a_2 - a_0)^2 / 2``;
    the tests confirm this against the symmetric second difference of
    ``phi`` and a 2-D brute-force integral.
    """
    if not (theta > 0):
        raise ParameterError(f"theta must be positive, got {theta}")
    a0 = tail_moment(0, theta, quad_tol=min(quad_tol, 1e-13))
    a2 = tail_moment(2, theta, quad_tol=min(quad_tol, 1e-13))
    val = 0.5 * a2 * a2 - a2 * a0 + 0.5 * a0 * a0
    if not (val > 0.0):
        raise NumericError(f"iota came out nonpositive at theta={theta}: {val}")
    return val


def _double_factorial_ratio(z: int) -> float:
    # (2z-1)!! / (2z)!!, with the empty-product convention at z = 0.
    out = 1.0
    for i in range(1, z + 1):
        out *= (2 * i - 1) / (2 * i)
    return out


def _binom_series(a: int, b: int) -> float:
    # C(a, b) extended so that C(-1, 0) = 1 and C(a, b) = 0 when b > a >= 0.
    if b == 0:
        return 1.0
    if a < b:
        return 0.0
    return float(math.comb(a, b))


MAX_TAYLOR_ORDER = 8


def taylor_c(m: int, theta: float, params: TailParams = TailParams()) -> float:
    """Taylor coefficient ``c_m`` of ``phi(u)`` around ``u = 0``.

    Evaluated as the finite combinatorial sum over ``(k, l, z, r)`` with
    ``k + 2l + 2z + 2r = m`` of tail-quadrant integrals of
    ``(xy)^k * (-(x^2+y^2)/2)^l``; each term factorizes into products of
    one-dimensional tail moments.  Orders above 8 are not supported (the
    coefficients obey ``|c_m| <= (m+1) * 4**m``, so partial sums up to
    order 6 already control ``phi`` for ``|u| <= 0.1``).
    """
    if not (0 <= m <= MAX_TAYLOR_ORDER):
        raise ParameterError(f"taylor order must be in [0, {MAX_TAYLOR_ORDER}], got {m}")
    moments = {}

    def mom(j: int) -> float:
        if j not in moments:
            moments[j] = tail_moment(j, theta, quad_tol=min(params.quad_tol, 1e-13))
        return moments[j]

    total = 0.0
    for k in range(m + 1):
        for l in range((m - k) // 2 + 1):
            for z in range((m - k - 2 * l) // 2 + 1):
                rem = m - k - 2 * l - 2 * z
                if rem % 2:
                    continue
                r = rem // 2
                coef = (
                    _double_factorial_ratio(z)
                    * _binom_series(k + l, k)
                    * _binom_series(k + l + r - 1, r)
                    / math.factorial(k + l)
                )
                if coef == 0.0:
                    continue
                inner = sum(
                    math.comb(l, i) * mom(k + 2 * i) * mom(k + 2 * (l - i))
                    for i in range(l + 1)
                )
                total += coef * (-0.5) ** l * inner
    bound = (m + 1) * 4.0**m
    if abs(total) > bound:
        raise NumericError(
            f"c_{m} violates its bound (m+1)4^m: {total} vs {bound}", achieved=abs(total)
        )
    return total
