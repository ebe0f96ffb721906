"""
Gamma and Bessel functions of real order.

Everything the propagator code needs from special-function land lives here:
Gamma (Lanczos), J_nu for real nu >= 0 and real x >= 0, the modified function
I_nu for complex argument, plus the envelope bounds used to truncate mode
sums.

Two layers are exposed:

* vectorised kernels (``jv``, ``jvp``, ``iv``, ``ive``, ``log_gamma``) that
  broadcast over numpy arrays and are used inside mode sums and grid
  transforms;
* scalar entry points (``bessel_j``, ``bessel_j_derivative``, ``bessel_i``)
  that return an :class:`EvalResult` with an error estimate and the regime
  used, and raise :class:`~conelab.errors.PrecisionLossError` when the
  requested tolerance is not met.

Regimes for J_nu(x)
-------------------
series      x <= 12 or x <= 0.6 nu: alternating power series. The sum of the
            absolute values of the terms is bounded by max(I_nu(x), 1), so
            cancellation stays below ~1e-11 absolute in this region.
asymptotic  x >= 25: Hankel expansion, summed up to its smallest term and
            accepted only when that term is below 1e-15.
quadrature  everything else: Schlaefli's integral
            (1/pi) int_0^pi cos(nu t - x sin t) dt
            - (sin(nu pi)/pi) int_0^inf exp(-x sinh t - nu t) dt
            with a Gauss-Legendre rule sized to the phase variation.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, MagnitudeOverflowError, OutOfRangeError, PrecisionLossError

__all__ = [
    "EvalResult",
    "Regime",
    "gamma",
    "log_gamma",
    "jv",
    "jvp",
    "iv",
    "ive",
    "bessel_j",
    "bessel_j_derivative",
    "bessel_i",
    "bessel_envelope",
    "bessel_derivative_envelope",
    "verify_i_integral_representation",
]

_EPS = np.finfo(float).eps
_LN2 = math.log(2.0)

SERIES_X = 12.0
SERIES_RATIO = 0.6
ASYM_X = 25.0
I_MAX_ABS = 60.0
_CHUNK = 1 << 21


class Regime(str, enum.Enum):
    SERIES = "series"
    ASYMPTOTIC = "asymptotic"
    QUADRATURE = "quadrature"


@dataclass(frozen=True)
class EvalResult:
    value: complex
    abs_error_estimate: float
    regime: Regime


# ---------------------------------------------------------------------------
# Gamma
# ---------------------------------------------------------------------------

_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _lanczos_sum(x):
    # x is shifted by -1 as in the usual g=7, n=9 formulation
    s = np.full_like(x, _LANCZOS[0])
    for i in range(1, 9):
        s = s + _LANCZOS[i] / (x + i)
    return s


def gamma(x: float) -> float:
    """Gamma function for real x > 0 (Lanczos, g=7, 9 coefficients).

    Raises DomainError for x <= 0 and MagnitudeOverflowError for x > 170.
    """
    x = float(x)
    if not x > 0.0 or math.isnan(x):
        raise DomainError(f"gamma: domain error, x={x!r} must be > 0")
    if x > 170.0:
        raise MagnitudeOverflowError(f"gamma: magnitude overflow for x={x!r} > 170")
    if x < 0.5:
        return gamma(x + 1.0) / x
    if x == round(x) and x <= 23:
        return float(math.factorial(int(x) - 1))
    xm = x - 1.0
    s = float(_lanczos_sum(np.array(xm)))
    t = xm + _LANCZOS_G + 0.5
    # split the power so t**(xm+0.5) never overflows on the way
    half = t ** ((xm + 0.5) / 2.0)
    return math.sqrt(2.0 * math.pi) * half * math.exp(-t) * half * s


def log_gamma(x):
    """Vectorised log Gamma for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("log_gamma: all arguments must be > 0")
    shift = np.zeros_like(x)
    small = x < 0.5
    xs = np.where(small, x + 1.0, x)
    shift = np.where(small, np.log(np.where(small, x, 1.0)), 0.0)
    xm = xs - 1.0
    t = xm + _LANCZOS_G + 0.5
    out = _HALF_LOG_2PI + (xm + 0.5) * np.log(t) - t + np.log(_lanczos_sum(xm))
    return out - shift


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _bucket(n):
    n = np.asarray(n)
    return (np.ceil(n / 16.0) * 16).astype(int)


# ---------------------------------------------------------------------------
# J_nu
# ---------------------------------------------------------------------------

def _j_series(nu, x, max_terms=2000):
    """Power series. Returns (value, abs_error_estimate)."""
    h = 0.5 * x
    with np.errstate(divide="ignore", invalid="ignore"):
        # log(x) - log 2 rather than log(x/2), which underflows for subnormal x
        logpre = np.where(nu == 0, 0.0, nu * (np.log(x) - _LN2)) - log_gamma(nu + 1.0)
    pre = np.exp(logpre)
    q = -(h * h)
    term = np.ones_like(x)
    total = np.ones_like(x)
    abs_total = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    j = 0
    while active.any() and j < max_terms:
        j += 1
        idx = np.nonzero(active)[0]
        t = term[idx] * q[idx] / (j * (nu[idx] + j))
        term[idx] = t
        total[idx] += t
        abs_total[idx] += np.abs(t)
        done = np.abs(t) <= 1e-17 * abs_total[idx]
        active[idx[done]] = False
    val = pre * total
    err = pre * (4.0 * _EPS * abs_total + np.where(active, np.abs(term), 0.0))
    if active.any():
        err = np.where(active, np.inf, err)
    return val, err


def _hankel_pq(nu, x, kmax=40):
    """Hankel asymptotic amplitudes P, Q summed to the smallest term.

    Points are processed in octaves of x so each batch runs a fixed number of
    dense iterations. Returns (P, Q, first_omitted_term_magnitude).
    """
    P = np.ones_like(x)
    Q = np.zeros_like(x)
    err = np.zeros_like(x)
    octave = np.floor(np.log2(x)).astype(int)
    for o in np.unique(octave):
        sel = np.nonzero(octave == o)[0]
        xs, mu = x[sel], 4.0 * nu[sel] ** 2
        inv8x = 1.0 / (8.0 * xs)
        p, q = np.ones_like(xs), np.zeros_like(xs)
        t = np.ones_like(xs)
        live = np.ones(xs.shape)
        e = np.zeros_like(xs)
        for k in range(1, kmax + 1):
            t_new = t * (mu - (2 * k - 1) ** 2) * (inv8x / k)
            a_new = np.abs(t_new)
            grow = (a_new >= np.abs(t)) & (live > 0)
            e = np.where(grow, a_new, e)
            live = live * ~grow
            sign = -1.0 if (k // 2) % 2 else 1.0
            if k % 2 == 0:
                p += (sign * live) * t_new
            else:
                q += (sign * live) * t_new
            t = t_new
            if not np.any(a_new * live >= 1e-18):
                break
        else:
            e = np.where(live > 0, np.abs(t), e)
        P[sel], Q[sel], err[sel] = p, q, e
    return P, Q, err


def _j_asym(nu, x):
    P, Q, err = _hankel_pq(nu, x)
    omega = x - (0.5 * nu + 0.25) * math.pi
    amp = np.sqrt(2.0 / (math.pi * x))
    val = amp * (P * np.cos(omega) - Q * np.sin(omega))
    return val, amp * (err + 4.0 * _EPS * (np.abs(P) + np.abs(Q)))


def _j_quad_nodes(nu, x):
    return _bucket(0.55 * math.pi * (nu + x) + 40)


def _j_quad(nu, x, extra=0):
    """Schlaefli integral by Gauss-Legendre, grouped by node count."""
    out = np.empty_like(x)
    n_nodes = _j_quad_nodes(nu, x) + extra
    for n in np.unique(n_nodes):
        sel = np.nonzero(n_nodes == n)[0]
        u, w = _gauss_legendre(int(n))
        theta = 0.5 * math.pi * (u + 1.0)
        wt = 0.5 * w  # (pi/2) * w / pi
        sin_t = np.sin(theta)
        step = max(1, _CHUNK // int(n))
        for s in range(0, sel.size, step):
            ii = sel[s:s + step]
            phase = nu[ii, None] * theta[None, :] - x[ii, None] * sin_t[None, :]
            out[ii] = np.cos(phase) @ wt
    # second integral, only for non-integer orders
    s_nu = np.sin(math.pi * nu)
    nonint = np.abs(s_nu) > 1e-15
    if nonint.any():
        ii = np.nonzero(nonint)[0]
        u, w = _gauss_legendre(64 + extra)
        with np.errstate(divide="ignore"):
            T = np.minimum(np.arcsinh(40.0 / x[ii]), 40.0 / np.maximum(nu[ii], 1e-300))
        t = 0.5 * T[:, None] * (u[None, :] + 1.0)
        g = np.exp(-x[ii, None] * np.sinh(t) - nu[ii, None] * t)
        second = 0.5 * T * (g @ w)
        out[ii] -= s_nu[ii] / math.pi * second
    return out


def _check_nonneg(nu, x, name):
    if np.any(~(nu >= 0)):
        raise DomainError(f"{name}: order must be >= 0")
    if np.any(~(x >= 0)):
        raise DomainError(f"{name}: argument must be >= 0")


def _jv_impl(nu, x, with_info=False):
    nu, x = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(x, dtype=float))
    shape = nu.shape
    nu = nu.ravel().copy()
    x = x.ravel().copy()
    _check_nonneg(nu, x, "jv")
    out = np.zeros_like(x)
    err = np.zeros_like(x)
    regime = np.zeros(x.shape, dtype=np.int8)  # 0 series, 1 asymptotic, 2 quadrature

    zero = x == 0
    out[zero] = (nu[zero] == 0).astype(float)
    ser = ~zero & ((x <= SERIES_X) | (x <= SERIES_RATIO * nu))
    if ser.any():
        v, e = _j_series(nu[ser], x[ser])
        out[ser], err[ser] = v, e
    rest = ~zero & ~ser
    quad = rest.copy()
    cand = rest & (x >= ASYM_X) & (x >= nu * nu)
    if cand.any():
        ii = np.nonzero(cand)[0]
        v, e = _j_asym(nu[ii], x[ii])
        ok = e < 1e-15
        out[ii[ok]] = v[ok]
        err[ii[ok]] = e[ok]
        regime[ii[ok]] = 1
        quad[ii[ok]] = False
    if quad.any():
        ii = np.nonzero(quad)[0]
        v = _j_quad(nu[ii], x[ii])
        out[ii] = v
        regime[ii] = 2
        if with_info:
            v2 = _j_quad(nu[ii], x[ii], extra=16)
            err[ii] = np.abs(v - v2) + 8.0 * _EPS
    if with_info:
        return out.reshape(shape), err.reshape(shape), regime.reshape(shape)
    return out.reshape(shape)


def jv(nu, x):
    """Bessel function J_nu(x), vectorised over nu >= 0 and x >= 0."""
    return _jv_impl(nu, x)


def jvp(nu, x):
    """Derivative J'_nu(x) for nu >= 0, x > 0 (vectorised).

    Uses J_{nu-1} - (nu/x) J_nu for nu >= 1 and (nu/x) J_nu - J_{nu+1}
    otherwise, so that only non-negative orders are ever evaluated.
    """
    nu, x = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(x, dtype=float))
    if np.any(~(x > 0)):
        raise DomainError("jvp: argument must be > 0")
    j = jv(nu, x)
    hi = nu >= 1.0
    other = jv(np.where(hi, nu - 1.0, nu + 1.0), x)
    return np.where(hi, other - nu / x * j, nu / x * j - other)


# ---------------------------------------------------------------------------
# I_nu
# ---------------------------------------------------------------------------

def _i_series(nu, w, max_terms=4000):
    """Complex power series for I_nu(w). Returns (value, abs_error_estimate)."""
    h = 0.5 * w
    with np.errstate(divide="ignore", invalid="ignore"):
        logpre = np.where(nu == 0, 0.0, nu * (np.log(w) - _LN2)) - log_gamma(nu + 1.0)
    pre = np.exp(logpre)
    pre = np.where(w == 0, (nu == 0).astype(float), pre)
    q = h * h
    term = np.ones_like(w)
    total = np.ones_like(w)
    abs_total = np.ones(w.shape)
    active = np.ones(w.shape, dtype=bool) & (w != 0)
    j = 0
    while active.any() and j < max_terms:
        j += 1
        idx = np.nonzero(active)[0]
        t = term[idx] * q[idx] / (j * (nu[idx] + j))
        term[idx] = t
        total[idx] += t
        abs_total[idx] += np.abs(t)
        done = np.abs(t) <= 1e-17 * abs_total[idx]
        active[idx[done]] = False
    val = pre * total
    err = np.abs(pre) * (4.0 * _EPS * abs_total + np.where(active, np.abs(term), 0.0))
    return val, err


def _i_quad(nu, w, extra=0):
    """I_nu(w) for Re w >= 0 from the integral representation on a rotated contour.

    I = (1/pi) int_0^pi e^{w cos s} cos(nu s) ds - (sin(nu pi)/pi) B, where the
    path of B = int_0^inf e^{-w cosh s - nu s} ds is moved to
    0 -> -i phi -> -i phi + inf, phi = arg w, on which the integrand no
    longer oscillates.
    """
    out = np.empty(w.shape, dtype=complex)
    a = np.abs(w)
    phi = np.angle(w)
    n1 = _bucket(0.55 * math.pi * (np.abs(w.imag) + nu) + 3.0 * np.sqrt(np.abs(w.real)) + 40) + extra
    for n in np.unique(n1):
        sel = np.nonzero(n1 == n)[0]
        u, wt = _gauss_legendre(int(n))
        s = 0.5 * math.pi * (u + 1.0)
        cs = np.cos(s)
        g = np.exp(w[sel, None] * cs[None, :]) * np.cos(nu[sel, None] * s[None, :])
        out[sel] = 0.5 * (g @ wt)
    s_nu = np.sin(math.pi * nu)
    nonint = np.abs(s_nu) > 1e-15
    if nonint.any():
        ii = np.nonzero(nonint)[0]
        ww, nn, pp, aa = w[ii], nu[ii], phi[ii], a[ii]
        # segment 0 -> -i phi
        m = _bucket(0.55 * (aa + nn) * np.abs(pp) + 40) + extra
        seg1 = np.zeros(ii.size, dtype=complex)
        for n in np.unique(m):
            sel = np.nonzero(m == n)[0]
            u, wt = _gauss_legendre(int(n))
            psi = 0.5 * pp[sel, None] * (u[None, :] + 1.0)
            g = np.exp(-ww[sel, None] * np.cos(psi) + 1j * nn[sel, None] * psi)
            seg1[sel] = -1j * 0.5 * pp[sel] * (g @ wt)
        # segment -i phi -> -i phi + inf
        with np.errstate(divide="ignore"):
            U = np.minimum(np.arcsinh(40.0 / np.maximum(aa, 1e-300)), 40.0 / np.maximum(nn, 1e-300))
        U = np.minimum(U, 60.0)
        u, wt = _gauss_legendre(96 + extra)
        uu = 0.5 * U[:, None] * (u[None, :] + 1.0)
        ch = np.cosh(uu) * np.cos(pp)[:, None] - 1j * np.sinh(uu) * np.sin(pp)[:, None]
        g = np.exp(-ww[:, None] * ch - nn[:, None] * uu)
        seg2 = np.exp(1j * nn * pp) * 0.5 * U * (g @ wt)
        out[ii] -= s_nu[ii] / math.pi * (seg1 + seg2)
    return out


def _iv_impl(nu, w, with_info=False, check_range=True):
    nu, w = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(w, dtype=complex))
    shape = nu.shape
    nu = nu.ravel().copy()
    w = w.ravel().copy()
    if np.any(~(nu >= 0)):
        raise DomainError("iv: order must be >= 0")
    if check_range and np.any(np.abs(w) > I_MAX_ABS):
        raise OutOfRangeError(f"iv: |w| > {I_MAX_ABS} is out of validated range")
    # Re w < 0: I_nu(w) = exp(+-i nu pi) I_nu(-w) on the principal branch
    flip = w.real < 0
    rot = np.ones(w.shape, dtype=complex)
    if flip.any():
        sgn = np.where(w.imag >= 0, 1.0, -1.0)
        rot = np.where(flip, np.exp(1j * sgn * math.pi * nu), 1.0)
        w = np.where(flip, -w, w)
    out = np.empty(w.shape, dtype=complex)
    err = np.zeros(w.shape)
    regime = np.zeros(w.shape, dtype=np.int8)
    a = np.abs(w)
    ser = (a <= SERIES_X) | (a - w.real <= 10.0)
    if ser.any():
        v, e = _i_series(nu[ser], w[ser])
        out[ser], err[ser] = v, e
    quad = ~ser
    if quad.any():
        ii = np.nonzero(quad)[0]
        v = _i_quad(nu[ii], w[ii])
        out[ii] = v
        regime[ii] = 2
        if with_info:
            v2 = _i_quad(nu[ii], w[ii], extra=16)
            err[ii] = np.abs(v - v2) + 8.0 * _EPS * np.maximum(1.0, np.abs(v))
    out = out * rot
    if with_info:
        return out.reshape(shape), err.reshape(shape), regime.reshape(shape)
    return out.reshape(shape)


def iv(nu, w):
    """Modified Bessel function I_nu(w), complex w with |w| <= 60 (principal branch)."""
    return _iv_impl(nu, w)


def ive(nu, x):
    """Exponentially scaled exp(-x) I_nu(x) for real x >= 0 (no range limit).

    Used by the heat kernel, where r1 r2 / (2 sigma) can be large.
    """
    nu, x = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(x, dtype=float))
    shape = nu.shape
    nu = nu.ravel().copy()
    x = x.ravel().copy()
    _check_nonneg(nu, x, "ive")
    out = np.empty_like(x)
    done = np.zeros(x.shape, dtype=bool)
    big = x >= ASYM_X
    if big.any():
        ii = np.nonzero(big)[0]
        # e^{-x} I_nu(x) ~ (2 pi x)^{-1/2} sum (-1)^k a_k / x^k
        mu = 4.0 * nu[ii] ** 2
        xx = x[ii]
        t = np.ones_like(xx)
        s = np.ones_like(xx)
        err = np.full_like(xx, np.inf)
        active = np.ones(xx.shape, dtype=bool)
        for k in range(1, 80):
            t_new = -t * (mu - (2 * k - 1) ** 2) / (8.0 * k * xx)
            growing = np.abs(t_new) >= np.abs(t)
            err = np.where(active & growing, np.abs(t_new), err)
            active &= ~growing
            s = np.where(active, s + t_new, s)
            t = np.where(active, t_new, t)
            tiny = active & (np.abs(t_new) < 1e-18)
            err = np.where(tiny, 0.0, err)
            active &= ~tiny
            if not active.any():
                break
        ok = err < 1e-15 * np.abs(s)
        out[ii[ok]] = s[ok] / np.sqrt(2.0 * math.pi * xx[ok])
        done[ii[ok]] = True
    rest = ~done
    if rest.any():
        ii = np.nonzero(rest)[0]
        nn, xx = nu[ii], x[ii]
        h = 0.5 * xx
        with np.errstate(divide="ignore"):
            logpre = np.where(nn == 0, 0.0, nn * (np.log(xx) - _LN2)) - log_gamma(nn + 1.0) - xx
        # positive terms; peak term ~ e^{x}, so rescale the running sum
        # relative to the peak to stay in range
        logscale = np.zeros_like(xx)
        term = np.ones_like(xx)
        total = np.ones_like(xx)
        q = h * h
        active = (xx > 0).copy()
        j = 0
        while active.any() and j < 20000:
            j += 1
            idx = np.nonzero(active)[0]
            t = term[idx] * q[idx] / (j * (nn[idx] + j))
            term[idx] = t
            total[idx] += t
            big_t = total[idx] > 1e280
            if big_t.any():
                k = idx[big_t]
                term[k] *= 1e-280
                total[k] *= 1e-280
                logscale[k] += 280.0 * math.log(10.0)
            done_t = t <= 1e-17 * total[idx]
            active[idx[done_t]] = False
        with np.errstate(divide="ignore"):
            val = np.exp(logpre + logscale + np.log(total))
        val = np.where(xx == 0, (nn == 0).astype(float), val)
        out[ii] = val
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# scalar entry points with error estimates
# ---------------------------------------------------------------------------

_REGIMES = (Regime.SERIES, Regime.ASYMPTOTIC, Regime.QUADRATURE)


def _check_tol(tol):
    if not (0.0 < tol <= 1e-4):
        raise DomainError(f"tol={tol!r} must lie in (0, 1e-4]")


def bessel_j(nu: float, x: float, tol: float = 1e-10) -> EvalResult:
    """J_nu(x) with an error estimate.

    The guarantee is |value - J_nu(x)| <= tol * max(1, |J_nu(x)|). Exact 0 is
    returned at x = 0 for nu > 0.
    """
    _check_tol(tol)
    if x == 0:
        return EvalResult(1.0 if nu == 0 else 0.0, 0.0, Regime.SERIES)
    v, e, r = _jv_impl(np.array([nu]), np.array([x]), with_info=True)
    res = EvalResult(float(v[0]), float(e[0]), _REGIMES[int(r[0])])
    if not res.abs_error_estimate <= tol * max(1.0, abs(res.value)):
        raise PrecisionLossError(
            f"bessel_j: precision loss at nu={nu}, x={x}: estimate {res.abs_error_estimate:.3g}", res
        )
    return res


def bessel_j_derivative(nu: float, x: float, tol: float = 1e-10) -> EvalResult:
    """J'_nu(x) from the three-term identities.

    J'_nu = J_{nu-1} - nu J_nu / x for nu >= 1; for 0 < nu < 1 the order
    nu - 1 would be negative, so nu J_nu / x - J_{nu+1} is used instead.
    """
    if not nu > 0:
        raise DomainError("bessel_j_derivative: nu must be > 0")
    if not x > 0:
        raise DomainError("bessel_j_derivative: x must be > 0")
    a = bessel_j(nu, x, tol)
    if nu >= 1.0:
        b = bessel_j(nu - 1.0, x, tol)
        val = b.value - nu * a.value / x
    else:
        b = bessel_j(nu + 1.0, x, tol)
        val = nu * a.value / x - b.value
    err = b.abs_error_estimate + nu / x * a.abs_error_estimate
    regime = max(a.regime, b.regime, key=_REGIMES.index)
    return EvalResult(val, err, regime)


def bessel_i(nu: float, w: complex, tol: float = 1e-10) -> EvalResult:
    """I_nu(w) for complex |w| <= 60, principal branch.

    For purely imaginary w = i x this agrees with i**nu * J_nu(x).
    """
    _check_tol(tol)
    if abs(w) > I_MAX_ABS:
        raise OutOfRangeError(f"bessel_i: |w|={abs(w):.3g} out of validated range (<= {I_MAX_ABS})")
    v, e, r = _iv_impl(np.array([nu]), np.array([w], dtype=complex), with_info=True)
    res = EvalResult(complex(v[0]), float(e[0]), _REGIMES[int(r[0])])
    if not res.abs_error_estimate <= tol * max(1.0, abs(res.value)):
        raise PrecisionLossError(f"bessel_i: precision loss at nu={nu}, w={w}", res)
    return res


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------

def _small_arg_shape(nu, r):
    """z^nu / (2^nu Gamma(nu+1/2) Gamma(1/2)) * (1 + 1/(nu+1/2))."""
    nu = np.asarray(nu, dtype=float)
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        logv = nu * np.log(r) - nu * math.log(2.0) - log_gamma(nu + 0.5) - 0.5 * math.log(math.pi)
    v = np.exp(logv) * (1.0 + 1.0 / (nu + 0.5))
    return np.where(r == 0, np.where(nu == 0, 1.0 + 2.0, 0.0) / math.pi, v)


def _order_shape(nu, r):
    """r^nu (1+r)^{-nu-1/2}."""
    nu = np.asarray(nu, dtype=float)
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.exp(nu * np.log(r) - (nu + 0.5) * np.log1p(r))
    return np.where(r == 0, (nu == 0).astype(float), v)


def _derivative_shape(nu, r):
    """r^{nu-1} (1+r)^{-nu+1/2}."""
    nu = np.asarray(nu, dtype=float)
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.exp((nu - 1.0) * np.log(r) - (nu - 0.5) * np.log1p(r))
    return v


def bessel_envelope(nu, r):
    """Upper envelope for |J_nu(r)|.

    Minimum of the absolute-constant small-argument bound and the
    order-dependent bound C_nu r^nu (1+r)^{-nu-1/2}; constants come from the
    calibration table shipped with the package. Orders beyond the table use
    the first bound only.
    """
    from .calibration import envelope_constants

    tab = envelope_constants()
    nu_a, r_a = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(r, dtype=float))
    first = tab.c_abs * _small_arg_shape(nu_a, r_a)
    c_nu = tab.c_order(nu_a)
    with np.errstate(invalid="ignore"):
        second = np.where(np.isfinite(c_nu), c_nu * _order_shape(nu_a, r_a), np.inf)
    out = np.minimum(first, second)
    return float(out) if out.ndim == 0 else out


def bessel_derivative_envelope(nu, r):
    """Envelope C'_nu r^{nu-1} (1+r)^{-nu+1/2} for |J'_nu(r)|, r > 0."""
    from .calibration import envelope_constants

    tab = envelope_constants()
    nu_a, r_a = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(r, dtype=float))
    out = tab.c_derivative(nu_a) * _derivative_shape(nu_a, r_a)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# integral representation check
# ---------------------------------------------------------------------------

def verify_i_integral_representation(nu: float, w: complex, tol: float = 1e-10) -> float:
    """Residual between adaptive quadrature of the integral representation and bessel_i.

    I_nu(w) = (1/pi) int_0^pi e^{w cos s} cos(nu s) ds
              - (sin(nu pi)/pi) int_0^inf e^{-w cosh s} e^{-s nu} ds.

    Both integrals use scipy's adaptive QUADPACK routines on the original
    (undeformed) path, so this is independent of the rotated-contour rule
    used inside :func:`iv`. Where Im w != 0 the far part of the second
    integral is mapped to u = cosh s and handed to the Fourier-weight
    routine; otherwise it is truncated at s_max = ln(1/tol)/nu + ln 2.
    Returns +inf when quadrature does not converge.
    """
    import warnings

    from scipy import integrate

    if not nu > 0:
        raise DomainError("verify_i_integral_representation: nu must be > 0")
    w = complex(w)
    if abs(w) > 40.0 or w.real < 0:
        raise DomainError("verify_i_integral_representation: need |w| <= 40 and Re w >= 0")

    def cquad(f, a, b, **kw):
        re, e1 = integrate.quad(lambda s: f(s).real, a, b, **kw)
        im, e2 = integrate.quad(lambda s: f(s).imag, a, b, **kw)
        return complex(re, im), e1 + e2

    kw = dict(epsabs=tol * 1e-2, epsrel=1e-13, limit=500)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            first, _ = cquad(lambda s: np.exp(w * np.cos(s)) * np.cos(nu * s), 0.0, math.pi, **kw)
            first /= math.pi
            s_nu = math.sin(nu * math.pi)
            second = 0.0
            if abs(s_nu) > 1e-15:
                s_max = math.log(1.0 / tol) / nu + math.log(2.0)
                if w.imag == 0.0:
                    second, _ = cquad(lambda s: np.exp(-w * np.cosh(s) - nu * s), 0.0, s_max, **kw)
                else:
                    s1 = min(1.0, s_max)
                    second, _ = cquad(lambda s: np.exp(-w * np.cosh(s) - nu * s), 0.0, s1, **kw)
                    # u = cosh s: e^{-w u} (u + sqrt(u^2-1))^{-nu} / sqrt(u^2-1)
                    om = w.imag
                    u0 = math.cosh(s1)

                    def amp(u):
                        q = math.sqrt(u * u - 1.0)
                        return math.exp(-w.real * u) * (u + q) ** (-nu) / q

                    c, _ = integrate.quad(amp, u0, np.inf, weight="cos", wvar=om, limlst=200)
                    s, _ = integrate.quad(amp, u0, np.inf, weight="sin", wvar=om, limlst=200)
                    second += complex(c, -s)
                second *= s_nu / math.pi
    except integrate.IntegrationWarning:
        return math.inf
    rhs = first - second
    ref = bessel_i(nu, w, 1e-10).value if abs(w) > 0 else (1.0 if nu == 0 else 0.0)
    return abs(rhs - ref)
