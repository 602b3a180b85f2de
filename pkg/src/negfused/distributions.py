"""Densities, special functions, and scalar random-variate generators.

The normal-exponential-gamma (NEG) distribution is the workhorse prior here.
It arises by mixing a zero-mean normal over its variance with an exponential,
whose rate is in turn gamma distributed; integrating the two latent stages
gives a closed form in terms of the parabolic cylinder function,

    p(b | shape, scale) = k * exp(b^2 / (4 scale^2)) * D(-2*shape - 1, |b|/scale),

with normalizing constant ``k = 2^shape * shape * Gamma(shape + 1/2) /
(scale * sqrt(pi))``.  The density has a finite spike at zero and polynomial
tails, which is what lets fused-regression posteriors keep large jumps intact
while aggressively flattening small ones.

Everything is evaluated in log space through the integral representation

    D(-a-1, z) = exp(-z^2/4) / Gamma(a+1) * I(a, z),
    I(a, z)    = integral_0^inf w^a exp(-w^2/2 - z w) dw,

so the code stays finite for shape values up to 1e4 and large arguments where
the classical recurrences overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NegParams",
    "LassoPenalty",
    "parabolic_cylinder_d",
    "neg_log_density",
    "neg_log_density_grad",
    "sample_inverse_gaussian",
    "sample_inverse_gamma",
    "sample_gamma",
    "univariate_shrinkage",
]

_LOG_HALF_PI = 0.5 * math.log(math.pi)

# Gauss-Legendre rule reused for every integral; 200 nodes gives ~1e-13
# relative accuracy on these log-concave integrands once the window is chosen
# to cover everything within _WINDOW_DROP nats of the peak.
_QUAD_NODES, _QUAD_WEIGHTS = np.polynomial.legendre.leggauss(200)
_WINDOW_DROP = 45.0  # exp(-45) ~ 3e-20: truncation is far below quadrature error


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def _require_positive(name: str, value: float) -> float:
    value = _require_finite(name, value)
    if value <= 0.0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


@dataclass(frozen=True)
class NegParams:
    """Shape and scale of a normal-exponential-gamma distribution.

    Parameters
    ----------
    shape : float
        Gamma-stage shape; small values thicken the tails and sharpen the
        spike at zero.  Must be positive.
    scale : float
        Overall scale of the density.  Must be positive.
    """

    shape: float
    scale: float

    def __post_init__(self) -> None:
        _require_positive("shape", self.shape)
        _require_positive("scale", self.scale)

    @property
    def log_norm(self) -> float:
        """Logarithm of the normalizing constant k."""
        lam = self.shape
        return (
            lam * math.log(2.0)
            + math.log(lam)
            + math.lgamma(lam + 0.5)
            - math.log(self.scale)
            - _LOG_HALF_PI
        )


@dataclass(frozen=True)
class LassoPenalty:
    """Soft-threshold penalty with the given threshold level."""

    strength: float

    def __post_init__(self) -> None:
        _require_positive("strength", self.strength)


def _log_kernel_window(exponent: float, slope: float) -> tuple[float, float]:
    """Window [lo, hi] in v = log(w) holding the mass of the transformed integrand.

    The substitution w = e^v turns w^a exp(-w^2/2 - slope*w) dw into
    exp(g(v)) dv with g(v) = exponent*v - e^{2v}/2 - slope*e^v where
    exponent = a + 1.  g is strictly concave with a single peak; the window
    ends where g has dropped _WINDOW_DROP nats below that peak.
    """
    q = exponent
    # peak location in w solves w^2 + slope*w = q
    w_peak = 0.5 * (math.sqrt(slope * slope + 4.0 * q) - slope)
    if w_peak <= 0.0:  # slope overwhelmingly large; fall back to q/slope
        w_peak = q / slope
    v_peak = math.log(w_peak)

    def g(v: float) -> float:
        if v > 350.0:
            return -math.inf
        ev = math.exp(v)
        return q * v - 0.5 * ev * ev - slope * ev

    top = g(v_peak)
    target = top - _WINDOW_DROP

    edges = []
    for sgn in (-1.0, 1.0):
        step = 1.0 / math.sqrt(q) if q > 1.0 else 1.0
        inner = v_peak
        outer = v_peak + sgn * step
        while g(outer) > target:
            inner = outer
            step *= 2.0
            outer = v_peak + sgn * step
        # bisect to tighten; the exact drop point barely matters, the window
        # just needs to contain it
        for _ in range(30):
            mid = 0.5 * (inner + outer)
            if g(mid) > target:
                inner = mid
            else:
                outer = mid
        edges.append(outer)
    return edges[0], edges[1]


def _log_power_gauss_integral(power: float, slope: float) -> float:
    """log of integral_0^inf w^power exp(-w^2/2 - slope*w) dw.

    Requires power > -1 and slope >= 0.  Evaluated by Gauss-Legendre in
    log-coordinates with a log-sum-exp reduction, so it neither overflows nor
    underflows for power up to ~1e5.
    """
    q = power + 1.0
    lo, hi = _log_kernel_window(q, slope)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    v = mid + half * _QUAD_NODES
    ev = np.exp(v)
    logs = q * v - 0.5 * ev * ev - slope * ev
    m = logs.max()
    return float(m + math.log(half * float(np.dot(_QUAD_WEIGHTS, np.exp(logs - m)))))


def _log_power_gauss_integral_batch(power: float, slopes: np.ndarray) -> np.ndarray:
    """Vectorized version of :func:`_log_power_gauss_integral` over slopes.

    Uses one shared window wide enough for every slope in the batch plus a
    denser rule, trading a little per-point tightness for a single vectorized
    sweep.  Accuracy stays well under 1e-9 relative for the slope ranges the
    shrinkage grid produces.
    """
    q = power + 1.0
    smax = float(np.max(slopes))
    lo_far, _ = _log_kernel_window(q, smax)
    lo_near, hi_near = _log_kernel_window(q, 0.0)
    lo = min(lo_far, lo_near)
    hi = hi_near
    nodes, weights = np.polynomial.legendre.leggauss(400)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    v = mid + half * nodes
    ev = np.exp(v)
    base = q * v - 0.5 * ev * ev
    logs = base[None, :] - np.outer(slopes, ev)
    m = logs.max(axis=1)
    return m + np.log(half * np.exp(logs - m[:, None]) @ weights)


def parabolic_cylinder_d(order: float, x: float) -> float:
    """Parabolic cylinder function D_order(x) for order <= 0 and x >= 0.

    Uses the integral representation in log space, which stays stable for
    strongly negative orders (down to about -2e4) and large arguments.
    """
    order = _require_finite("order", order)
    x = _require_finite("x", x)
    if order > 0.0:
        raise ValueError(f"order must be <= 0, got {order!r}")
    if x < 0.0:
        raise ValueError(f"x must be >= 0, got {x!r}")
    if order == 0.0:
        return math.exp(-0.25 * x * x)
    a = -order - 1.0
    log_d = -0.25 * x * x - math.lgamma(-order) + _log_power_gauss_integral(a, x)
    return math.exp(log_d)


def neg_log_density(value: float, params: NegParams) -> float:
    """Log density of the NEG distribution at ``value``.

    Stable for shapes up to 1e4; the exp(b^2/4) prefactor and the gaussian
    factor inside the parabolic cylinder function cancel analytically, so only
    the bounded integral term is evaluated.
    """
    value = _require_finite("value", value)
    lam = params.shape
    z = abs(value) / params.scale
    return (
        params.log_norm
        - math.lgamma(2.0 * lam + 1.0)
        + _log_power_gauss_integral(2.0 * lam, z)
    )


def _neg_log_density_batch(values: np.ndarray, params: NegParams) -> np.ndarray:
    lam = params.shape
    z = np.abs(np.asarray(values, dtype=float)) / params.scale
    const = params.log_norm - math.lgamma(2.0 * lam + 1.0)
    return const + _log_power_gauss_integral_batch(2.0 * lam, z)


def neg_log_density_grad(value: float, params: NegParams) -> float:
    """Derivative of :func:`neg_log_density` with respect to ``value``.

    The density has a kink at zero, so ``value`` must be nonzero.  The result
    equals -sign(value)/scale times a ratio of two power-gaussian integrals
    and decays like -(2*shape+1)/value for large ``value``, which is the
    near-unbiasedness property of this penalty family.
    """
    value = _require_finite("value", value)
    if value == 0.0:
        raise ValueError("gradient undefined at 0: the density has a kink there")
    lam = params.shape
    z = abs(value) / params.scale
    log_ratio = _log_power_gauss_integral(2.0 * lam + 1.0, z) - _log_power_gauss_integral(
        2.0 * lam, z
    )
    return -math.copysign(1.0, value) / params.scale * math.exp(log_ratio)


def sample_inverse_gaussian(mean: float, shape: float, rng: np.random.Generator) -> float:
    """One draw from the inverse-gaussian (Wald) distribution.

    Parameters are the mean ``mu > 0`` and shape ``lam > 0`` of the density
    sqrt(lam/(2 pi x^3)) exp(-lam (x-mu)^2 / (2 mu^2 x)).  Uses the
    Michael-Schucany-Haas transformation with the root expressed in a
    cancellation-free form, so extreme mean/shape ratios (the regime near-zero
    coefficients push the samplers into) still give strictly positive draws.
    """
    mean = _require_positive("mean", mean)
    shape = _require_positive("shape", shape)
    nu = rng.standard_normal()
    y = nu * nu
    w = mean * y
    if w == 0.0:
        return mean
    # smaller root of the quadratic, written to avoid subtracting near-equal terms
    x = mean * (1.0 - 2.0 * w / (w + math.sqrt(w * (w + 4.0 * shape))))
    if x <= 0.0:  # underflow guard for astronomically large w/shape
        x = mean * shape / w
    if rng.random() <= mean / (mean + x):
        return x
    return mean * mean / x


def _sample_inverse_gaussian_vec(
    mean: np.ndarray, shape: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized inverse-gaussian draws; same transformation as the scalar op."""
    mean = np.asarray(mean, dtype=float)
    shape = np.broadcast_to(np.asarray(shape, dtype=float), mean.shape)
    nu = rng.standard_normal(mean.shape)
    y = nu * nu
    w = mean * y
    root = w + np.sqrt(w * (w + 4.0 * shape))
    with np.errstate(invalid="ignore"):
        x = mean * (1.0 - 2.0 * w / root)
    x = np.where(w == 0.0, mean, x)
    bad = x <= 0.0
    if np.any(bad):
        x = np.where(bad, mean * shape / np.maximum(w, 1e-300), x)
    u = rng.random(mean.shape)
    return np.where(u <= mean / (mean + x), x, mean * mean / x)


def sample_inverse_gamma(shape: float, scale: float, rng: np.random.Generator) -> float:
    """One draw X with 1/X ~ Gamma(shape, rate=scale).

    Density proportional to x^(-shape-1) exp(-scale/x).
    """
    shape = _require_positive("shape", shape)
    scale = _require_positive("scale", scale)
    return scale / rng.gamma(shape, 1.0)


def sample_gamma(shape: float, rate: float, rng: np.random.Generator) -> float:
    """One draw from Gamma(shape, rate) with mean shape/rate."""
    shape = _require_positive("shape", shape)
    rate = _require_positive("rate", rate)
    return rng.gamma(shape, 1.0 / rate)


def _golden_section(fun, lo: float, hi: float, tol: float = 1e-9) -> float:
    """Minimize a unimodal scalar function on [lo, hi] by golden-section search."""
    inv_phi = 0.5 * (math.sqrt(5.0) - 1.0)
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def univariate_shrinkage(beta_ls: float, penalty: LassoPenalty | NegParams) -> float:
    """Penalized least-squares shrinkage of a single coefficient.

    Solves ``argmin_b 0.5 (beta_ls - b)^2 + pen(b)`` where ``pen`` is either
    the absolute-value penalty (closed-form soft threshold) or the negative
    NEG log density.  The NEG branch minimizes over a dense symmetric grid and
    polishes the winner with golden-section search; zero is always checked
    exactly so the dead zone around the spike is hit bitwise.
    """
    beta_ls = _require_finite("beta_ls", beta_ls)
    if isinstance(penalty, LassoPenalty):
        t = penalty.strength
        return math.copysign(max(abs(beta_ls) - t, 0.0), beta_ls)
    if not isinstance(penalty, NegParams):
        raise TypeError(f"penalty must be LassoPenalty or NegParams, got {type(penalty)!r}")

    span = abs(beta_ls) + 1.0
    grid = np.linspace(-span, span, 10_001)
    objective = 0.5 * (beta_ls - grid) ** 2 - _neg_log_density_batch(grid, penalty)
    k = int(np.argmin(objective))

    def f(b: float) -> float:
        return 0.5 * (beta_ls - b) ** 2 - neg_log_density(b, penalty)

    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    best = _golden_section(f, lo, hi)
    if f(0.0) <= f(best):
        return 0.0
    return float(best)
