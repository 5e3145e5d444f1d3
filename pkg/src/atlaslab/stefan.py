"""Closed-form solution of the one-sided free-boundary problem.

The limiting density profile of the Atlas gas started from intensity lam is

    u(t, x) = (c1 + c2 * Phi(x / sqrt(t))) * 1{x > kappa * sqrt(t)},

with a square-root-in-time front y(t) = kappa * sqrt(t).  The constants
solve the algebraic system

    c1 + c2 = lam                (far-field density)
    c1 + c2 * Phi(kappa) = 2     (density at the front)
    kappa + (c2 / 2) * phi(kappa) = 0   (flux balance at the front)

which reduces to the scalar root-finding problem g(kappa) = 1 - lam/2 for
g(k) = k * (1 - Phi(k)) / phi(k).  This module provides the special
functions, the solver, profile evaluators, and the flux fixed-point
iteration that sandwiches kappa from below and above for lam < 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

SQRT2 = math.sqrt(2.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_PI_OVER_2 = math.sqrt(math.pi / 2.0)


def phi_cdf(x):
    """Standard normal CDF, evaluated through erfc to keep the tails accurate."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * special.erfc(-x / SQRT2)
    return float(out) if out.ndim == 0 else out


def phi_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / SQRT_2PI
    return float(out) if out.ndim == 0 else out


def mills_ratio(x):
    """(1 - Phi(x)) / phi(x), cancellation-free via the scaled erfc."""
    x = np.asarray(x, dtype=float)
    out = SQRT_PI_OVER_2 * special.erfcx(x / SQRT2)
    return float(out) if out.ndim == 0 else out


def g(kappa):
    """g(k) = k * (1 - Phi(k)) / phi(k).

    Strictly increasing, g(0) = 0, g -> 1 as k -> +inf and g ~ k - 1/k as
    k -> -inf.  Computed as k * sqrt(pi/2) * erfcx(k / sqrt(2)) so that the
    1 - Phi(k) factor never suffers cancellation for large k.
    """
    kappa = np.asarray(kappa, dtype=float)
    out = kappa * mills_ratio(kappa)
    return float(out) if out.ndim == 0 else out


def g_prime(kappa):
    """Derivative of g.  With h the Mills ratio, h' = k*h - 1, so
    g' = h * (1 + k^2) - k."""
    kappa = np.asarray(kappa, dtype=float)
    h = mills_ratio(kappa)
    out = h * (1.0 + kappa * kappa) - kappa
    return float(out) if out.ndim == 0 else out


def _bracketed_newton(f, fprime, lo, hi, flo, fhi, tol=1e-14, max_iter=100):
    """Newton iteration confined to a bracket, bisection step on escape.

    Requires f(lo) <= 0 <= f(hi) (f increasing across the bracket).  Returns
    the root to |f| <= tol or after the bracket collapses to a few ulps.
    """
    if flo > 0.0 or fhi < 0.0:
        raise ValueError("root not bracketed")
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x)
        if abs(fx) <= tol:
            return x
        if fx > 0.0:
            hi = x
        else:
            lo = x
        dfx = fprime(x)
        x_new = x - fx / dfx if dfx > 0.0 else lo  # force bisection on flat spots
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if hi - lo <= 4.0 * np.finfo(float).eps * max(1.0, abs(x)):
            return x_new
        x = x_new
    return x


@dataclass(frozen=True)
class StefanSolution:
    """Front coefficient and profile constants for one initial intensity."""

    lam: float
    kappa: float
    c1: float
    c2: float

    def u(self, t, x):
        return u_star(self, t, x)

    def y(self, t):
        return y_star(self, t)


def solve_kappa(lam: float, tol: float = 1e-14) -> StefanSolution:
    """Solve g(kappa) = 1 - lam/2 and assemble the profile constants.

    Args:
        lam: initial intensity, must be > 0.
        tol: absolute tolerance on the g-residual.

    Returns:
        StefanSolution with kappa, c1, c2.  sign(kappa) = sign(2 - lam);
        lam = 2 short-circuits to the exact equilibrium (0, 2, 0).
    """
    if not lam > 0.0:
        raise ValueError(f"intensity must be positive, got {lam}")
    if lam == 2.0:
        return StefanSolution(lam=2.0, kappa=0.0, c1=2.0, c2=0.0)

    target = 1.0 - lam / 2.0
    f = lambda k: g(k) - target
    fprime = g_prime
    # g is increasing with g(0) = 0, so the root shares the sign of target.
    if target > 0.0:
        lo, hi = 0.0, 6.0
        while f(hi) < 0.0:  # lam near 0 pushes kappa far right; g < 1 always
            lo, hi = hi, 2.0 * hi
    else:
        lo, hi = -6.0, 0.0
        while f(lo) > 0.0:
            lo, hi = 2.0 * lo, lo
    kappa = _bracketed_newton(f, fprime, lo, hi, f(lo), f(hi), tol=tol)

    one_minus_phi = 0.5 * special.erfc(kappa / SQRT2)
    c2 = (lam - 2.0) / one_minus_phi
    c1 = lam - c2  # enforces the far-field identity c1 + c2 = lam exactly
    return StefanSolution(lam=lam, kappa=kappa, c1=c1, c2=c2)


def _profile(sol: StefanSolution, t, x):
    # Smooth branch c1 + c2*Phi(x/sqrt(t)) without the front indicator;
    # used by the residual checks which need values on the closed front.
    return sol.c1 + sol.c2 * phi_cdf(np.asarray(x, dtype=float) / math.sqrt(t))


def u_star(sol: StefanSolution, t: float, x):
    """Density profile at time t: c1 + c2*Phi(x/sqrt(t)) right of the front, 0 left of it."""
    if not t > 0.0:
        raise ValueError(f"profile is defined for t > 0, got t={t}")
    x = np.asarray(x, dtype=float)
    vals = np.where(x > sol.kappa * math.sqrt(t), _profile(sol, t, x), 0.0)
    return float(vals) if vals.ndim == 0 else vals


def y_star(sol: StefanSolution, t: float) -> float:
    """Front position kappa * sqrt(t)."""
    if t < 0.0:
        raise ValueError(f"time must be nonnegative, got {t}")
    return sol.kappa * math.sqrt(t)


def _int_phi(z):
    # Antiderivative of the normal CDF: int Phi = z*Phi(z) + phi(z).
    return z * phi_cdf(z) + phi_pdf(z)


def integrated_profile(sol: StefanSolution, t: float, x) -> float | np.ndarray:
    """Mass between the front and x: int_{y(t)}^{x} u(t, r) dr, in closed form."""
    if not t > 0.0:
        raise ValueError(f"profile is defined for t > 0, got t={t}")
    x = np.asarray(x, dtype=float)
    if np.any(x < sol.kappa * math.sqrt(t) - 1e-12 * max(1.0, abs(sol.kappa))):
        raise ValueError("mass queried left of the front")
    rt = math.sqrt(t)
    z, k = x / rt, sol.kappa
    out = rt * (sol.c1 * (z - k) + sol.c2 * (_int_phi(z) - _int_phi(k)))
    return float(out) if out.ndim == 0 else out


def profile_quantile(sol: StefanSolution, t: float, q: float) -> float:
    """Inverse of integrated_profile in x: the position holding mass q right of the front.

    The integrand is bounded below by min(lam, 2) > 0, so the mass is
    strictly increasing and a bracketed Newton iteration converges fast.
    """
    if not t > 0.0:
        raise ValueError(f"profile is defined for t > 0, got t={t}")
    if q < 0.0:
        raise ValueError(f"mass must be nonnegative, got {q}")
    y0 = sol.kappa * math.sqrt(t)
    if q == 0.0:
        return y0
    f = lambda x: integrated_profile(sol, t, x) - q
    fprime = lambda x: _profile(sol, t, x)
    hi = y0 + q / min(sol.lam, 2.0)  # density >= min(lam,2) makes this an upper bound
    return _bracketed_newton(f, fprime, y0, hi, -q, f(hi), tol=1e-13)


def fixed_point_map(c: float, lam: float) -> float:
    """One step of the flux iteration: I(c) = (1 - lam/2) * phi(c) / (1 - Phi(c)).

    Stated for the rarefied regime lam < 2 where the iteration's monotone
    sandwich argument applies; its unique fixed point is kappa.
    """
    if not lam < 2.0:
        raise ValueError(f"flux iteration applies to lam < 2, got lam={lam}")
    return (1.0 - lam / 2.0) / mills_ratio(c)


def fixed_point_iterates(lam: float, c0: float, max_iter: int = 200, tol: float = 0.0) -> np.ndarray:
    """Iterate the flux map from c0; returns the sequence including c0.

    Stops early once two consecutive iterates agree within tol (tol = 0
    keeps iterating for max_iter steps).
    """
    out = [float(c0)]
    for _ in range(max_iter):
        nxt = fixed_point_map(out[-1], lam)
        if nxt == out[-1]:  # saturated at the floating-point fixed point
            break
        out.append(nxt)
        if abs(nxt - out[-2]) <= tol:
            break
    return np.array(out)


def similarity_a(c: float, lam: float) -> float:
    """Amplitude a(c) = (1 - lam/2) / (1 - Phi(c)) of the similarity solution."""
    return (1.0 - lam / 2.0) / (0.5 * special.erfc(c / SQRT2))


def similarity_w(t: float, x, c: float, lam: float):
    """Similarity heat solution w(t, x; c) = a(c) * (Phi(x/sqrt(t)) - Phi(c)).

    Vanishes on the parabola x = c * sqrt(t) by construction.
    """
    if not t > 0.0:
        raise ValueError(f"similarity solution needs t > 0, got t={t}")
    x = np.asarray(x, dtype=float)
    out = similarity_a(c, lam) * (phi_cdf(x / math.sqrt(t)) - phi_cdf(c))
    return float(out) if out.ndim == 0 else out


def residual_heat(sol: StefanSolution, t: float, x: float, h: float | None = None) -> float:
    """Central-difference residual of u_t - (1/2) u_xx at (t, x), right of the front.

    O(h^2) for the analytic profile; exactly 0 at lam = 2 where the profile
    is constant.  Default h follows the usual eps^(1/3) conditioning rule.
    """
    if h is None:
        h = np.finfo(float).eps ** (1.0 / 3.0) * max(1.0, abs(x))
    if not (t > h and x - h > sol.kappa * math.sqrt(t + h)):
        raise ValueError("stencil must stay right of the front and at positive times")
    u_t = (_profile(sol, t + h, x) - _profile(sol, t - h, x)) / (2.0 * h)
    u_xx = (_profile(sol, t, x + h) - 2.0 * _profile(sol, t, x) + _profile(sol, t, x - h)) / (h * h)
    return u_t - 0.5 * u_xx


def residual_flux(sol: StefanSolution, t: float, h: float | None = None) -> float:
    """One-sided residual of the front condition u(t,y+) * y'(t) + (1/2) u_x(t,y+).

    Uses the three-point second-order forward difference on the smooth
    branch; the continuum value is exactly 0 by the flux-balance identity.
    """
    if not t > 0.0:
        raise ValueError(f"front condition needs t > 0, got t={t}")
    if h is None:
        h = np.finfo(float).eps ** (1.0 / 3.0) * max(1.0, math.sqrt(t))
    y = sol.kappa * math.sqrt(t)
    u0 = _profile(sol, t, y)
    u_x = (-3.0 * u0 + 4.0 * _profile(sol, t, y + h) - _profile(sol, t, y + 2.0 * h)) / (2.0 * h)
    ydot = 0.0 if sol.kappa == 0.0 else sol.kappa / (2.0 * math.sqrt(t))
    return u0 * ydot + 0.5 * u_x
