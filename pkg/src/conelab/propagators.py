"""
Propagator kernels on the cone and the bounds they are measured against.

All kernels are mode sums over the spectrum of P. With z = r1 r2 / (2|t|)
and Pi_k the projector kernel of the k-th eigenspace:

Schroedinger   (r1 r2)^{-(n-2)/2} e^{-(r1^2+r2^2)/(4it)} / (2it)
               * sum_k Pi_k (-i sgn t)^{nu_k} J_{nu_k}(z)
heat           (r1 r2)^{-(n-2)/2} e^{-(r1-r2)^2/(4 sigma)} / (2 sigma)
               * sum_k Pi_k e^{-x} I_{nu_k}(x),   x = r1 r2 / (2 sigma)
Poisson-wave   sum_k Pi_k e^{-(s +- i pi) nu_k}
half-wave      kernel of phi(2^{-j} sqrt H) e^{it sqrt H} by per-mode quadrature
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from . import specfun
from .cross_section import ConeModel, SpectralMode
from .errors import BudgetExceeded, DomainError
from .spectral_calculus import (
    DEFAULT_NU_BUDGET,
    KernelQuery,
    ModeCoefficients,
    Multiplier,
    _pairwise_sum,
    cached_spectrum,
    kernel_of_function,
    panel_rule,
)

__all__ = [
    "BoundReport",
    "mode_sum",
    "schrodinger_kernel",
    "schrodinger_kernel_integral_form",
    "weber_identity_residual",
    "heat_kernel",
    "heat_kernel_field",
    "heat_bound",
    "poisson_wave_kernel",
    "poisson_bound",
    "halfwave_localized_kernel",
    "halfwave_multiplier",
    "halfwave_bound",
    "split_projection",
    "dispersive_bound",
    "schrodinger_evolve",
    "cone_distance",
    "POISSON_DELTA",
]

POISSON_DELTA = 0.1
WEBER_MAX_ABS = specfun.I_MAX_ABS


@dataclass(frozen=True)
class BoundReport:
    kernel_abs: float
    bound_value: float
    ratio: float

    @classmethod
    def make(cls, kernel_abs: float, bound_value: float) -> "BoundReport":
        if not bound_value > 0:
            raise DomainError("bound value must be > 0")
        return cls(float(kernel_abs), float(bound_value), float(kernel_abs) / float(bound_value))


def _truncation(sp, per_mode_bound, tol, what):
    """Number of leading modes whose complement is bounded by tol."""
    tails = np.cumsum(per_mode_bound[::-1])[::-1]
    beyond = 0.0 if sp.exhaustive else 2.0 * per_mode_bound[-1]
    if sp.exhaustive and tails[0] >= tol:
        return len(sp), 0.0
    ok = np.nonzero(tails + beyond < tol)[0]
    if ok.size == 0:
        return None, float(tails[0] + beyond)
    return max(1, int(ok[0])), float(tails[ok[0]] + beyond) if ok[0] < tails.size else beyond


def _j_tail_bounds(sp, z):
    from .spectral_calculus import _mode_envelope

    return sp.sup_projector_diag() * _mode_envelope(sp.nu, z)


# ---------------------------------------------------------------------------
# Schroedinger
# ---------------------------------------------------------------------------

def mode_sum(model: ConeModel, z: float, y1, y2, sign: int = 1, tol: float = 1e-12,
             nu_budget: float = DEFAULT_NU_BUDGET) -> complex:
    """S(z) = sum_k Pi_k(y1, y2) (-i sign)^{nu_k} J_{nu_k}(z), truncated at tol."""
    sp = cached_spectrum(model, nu_budget)
    keep, bound = _truncation(sp, _j_tail_bounds(sp, z), tol, "mode_sum")
    if keep is None:
        raise BudgetExceeded(f"budget exceeded: z={z:.4g} needs orders beyond nu_budget={nu_budget}", None, bound)
    nus = sp.nu[:keep]
    proj = sp.projector(np.asarray(y1, float), np.asarray(y2, float))[:keep]
    phase = np.exp(-0.5j * math.pi * nus * np.sign(sign))
    return complex(_pairwise_sum(proj * phase * specfun.jv(nus, z)))


def _schrodinger_prefactor(model, q: KernelQuery):
    t = q.t
    return (q.r1 * q.r2) ** (-(model.n - 2) / 2.0) * np.exp(-(q.r1 ** 2 + q.r2 ** 2) / (4j * t)) / (2j * t)


def schrodinger_kernel(model: ConeModel, q: KernelQuery, tol: float = 1e-8,
                       nu_budget: float = DEFAULT_NU_BUDGET) -> complex:
    """Kernel of e^{itH} from the Bessel series; error <= tol |t|^{-n/2}."""
    if q.t == 0:
        raise DomainError("t must be nonzero")
    pref = _schrodinger_prefactor(model, q)
    # |pref| = |t|^{-n/2} (2z)^{-(n-2)/2} / 2, so the series needs tol * 2 (2z)^{(n-2)/2}
    series_tol = tol * 2.0 * (2.0 * q.z) ** ((model.n - 2) / 2.0)
    return complex(pref * mode_sum(model, q.z, q.y1, q.y2, int(np.sign(q.t)), series_tol, nu_budget))


def _i_rotated(nu: float, z: float, tol: float, s_max: float) -> complex:
    """I_nu(-i z), z > 0, from the integral representation on a rotated path.

    The second integral int_0^inf e^{iz cosh s - nu s} ds does not decay
    along the real axis; it is moved to 0 -> i pi/2 -> i pi/2 + inf where
    cosh becomes i sinh and the integrand is e^{-z sinh u - nu u}.
    """
    kw = dict(epsabs=tol * 1e-2, epsrel=1e-12, limit=400, complex_func=True)
    first = integrate.quad(lambda s: np.exp(-1j * z * np.cos(s)) * np.cos(nu * s), 0.0, math.pi, **kw)[0] / math.pi
    s_nu = math.sin(nu * math.pi)
    if abs(s_nu) < 1e-15:
        return first
    leg1 = 1j * integrate.quad(lambda p: np.exp(1j * z * np.cos(p) - 1j * nu * p), 0.0, 0.5 * math.pi, **kw)[0]
    leg2 = np.exp(-0.5j * math.pi * nu) * integrate.quad(
        lambda u: math.exp(-z * math.sinh(u) - nu * u), 0.0, s_max, epsabs=tol * 1e-2, epsrel=1e-12, limit=400
    )[0]
    return first - s_nu / math.pi * (leg1 + leg2)


def schrodinger_kernel_integral_form(model: ConeModel, q: KernelQuery, tol: float = 1e-8,
                                     nu_budget: float = DEFAULT_NU_BUDGET) -> complex:
    """Kernel of e^{itH} with each mode from the I_nu integral representation.

    Independent of the series route: per-mode integrals use adaptive
    QUADPACK quadrature; only the truncation order is shared.
    """
    if q.t == 0:
        raise DomainError("t must be nonzero")
    z = q.z
    pref = _schrodinger_prefactor(model, q)
    series_tol = tol * 2.0 * (2.0 * z) ** ((model.n - 2) / 2.0)
    sp = cached_spectrum(model, nu_budget)
    keep, bound = _truncation(sp, _j_tail_bounds(sp, z), series_tol, "integral form")
    if keep is None:
        raise BudgetExceeded(f"budget exceeded at z={z:.4g}", None, bound)
    s_max = math.log(1.0 / series_tol) / model.nu0 + math.log(2.0)
    proj = sp.projector(np.asarray(q.y1), np.asarray(q.y2))[:keep]
    vals = np.array([_i_rotated(float(nu), z, series_tol, s_max) for nu in sp.nu[:keep]])
    if q.t < 0:
        vals = np.conj(vals)
    return complex(pref * _pairwise_sum(proj * vals))


def weber_identity_residual(nu: float, epsilon: float, t: float, r1: float, r2: float,
                            tol: float = 1e-10) -> float:
    """|int_0^inf e^{-(eps+it) rho^2} J_nu(r1 rho) J_nu(r2 rho) rho d rho - closed form|.

    The left side is integrated by oscillation-aware panel quadrature up to
    rho_max = sqrt(ln(1/tol)/eps) + margin; the right side is
    e^{-(r1^2+r2^2)/(4p)} / (2p) I_nu(r1 r2 / (2p)) with p = eps + it.
    """
    if not epsilon >= 0.02:
        raise DomainError("epsilon must be >= 0.02")
    if r1 < 0 or r2 < 0:
        raise DomainError("radii must be >= 0")
    p = complex(epsilon, t)
    w = r1 * r2 / (2.0 * p)
    if abs(w) > WEBER_MAX_ABS:
        raise DomainError(f"|r1 r2 / 2(eps+it)| = {abs(w):.3g} exceeds {WEBER_MAX_ABS}")
    rho_max = math.sqrt(math.log(1.0 / tol) / epsilon) + 2.0
    freq = 2.0 * abs(t) * rho_max + r1 + r2 + 1.0
    npan = max(16, int(math.ceil(freq * rho_max / (2 * math.pi) * 12 / 16)))
    edges = np.linspace(0.0, rho_max, npan + 1)
    edges = np.concatenate([[0.0], edges[1] * 2.0 ** -np.arange(8, 0, -1), edges[1:]])
    rho, wt = panel_rule(edges, 16)
    j1 = specfun.jv(nu, r1 * rho)
    j2 = j1 if r1 == r2 else specfun.jv(nu, r2 * rho)
    lhs = np.sum(np.exp(-p * rho * rho) * j1 * j2 * rho * wt)
    rhs = np.exp(-(r1 * r1 + r2 * r2) / (4.0 * p)) / (2.0 * p) * complex(specfun.iv(nu, w))
    return float(abs(lhs - rhs))


def dispersive_bound(model: ConeModel, q: KernelQuery, constant: float = 1.0) -> float:
    """C |t|^{-n/2} z^{alpha} for z <= 1 and C |t|^{-n/2} for z > 1."""
    if q.t == 0:
        raise DomainError("t must be nonzero")
    base = abs(q.t) ** (-model.n / 2.0)
    z = q.z
    return constant * base * (z ** model.alpha if z <= 1.0 else 1.0)


def schrodinger_evolve(f: ModeCoefficients, t: float, tail_tol: float = 1e-10,
                       rho_grid=None) -> ModeCoefficients:
    """e^{itH} f for a gridded mode expansion.

    Same convention as :func:`schrodinger_kernel`, whose modes are the
    t-continuation of e^{-(eps + it) rho^2}: the multiplier is e^{-i t rho^2}.
    """
    return f.apply_multiplier(lambda rho: np.exp(-1j * t * rho * rho), tail_tol, rho_grid)


# ---------------------------------------------------------------------------
# heat
# ---------------------------------------------------------------------------

def cone_distance(model: ConeModel, q: KernelQuery) -> float:
    """Distance on C(Y): d^2 = r1^2 + r2^2 - 2 r1 r2 cos(min(d_Y, pi))."""
    dy = float(model.spec.geodesic_distance(np.array(q.y1), np.array(q.y2)))
    ang = min(dy, math.pi)
    return math.sqrt(max(q.r1 ** 2 + q.r2 ** 2 - 2.0 * q.r1 * q.r2 * math.cos(ang), 0.0))


def heat_bound(model: ConeModel, sigma: float, q: KernelQuery, C: float = 1.0, c: float = 4.0) -> float:
    """C [min(1, r1 r2 / 2 sigma)]^alpha sigma^{-n/2} exp(-d^2 / (c sigma))."""
    x = min(1.0, q.r1 * q.r2 / (2.0 * sigma))
    d = cone_distance(model, q)
    return C * x ** model.alpha * sigma ** (-model.n / 2.0) * math.exp(-d * d / (c * sigma))


def _heat_series(model, sigma, r1, r2, proj, nus):
    x = r1 * r2 / (2.0 * sigma)
    radial = specfun.ive(nus, np.full(nus.shape, x))
    pref = (r1 * r2) ** (-(model.n - 2) / 2.0) * math.exp(-((r1 - r2) ** 2) / (4.0 * sigma)) / (2.0 * sigma)
    return pref * (proj @ radial if proj.ndim > 1 else _pairwise_sum(proj * radial))


def _heat_keep(model, sigma, r1, r2, tol, nu_budget):
    sp = cached_spectrum(model, nu_budget)
    x = r1 * r2 / (2.0 * sigma)
    with np.errstate(divide="ignore"):
        lb = sp.nu * math.log(max(x, 1e-300) / 2.0) - specfun.log_gamma(sp.nu + 1.0)
    per = sp.sup_projector_diag() * np.minimum(1.0, np.exp(lb))
    pref = (r1 * r2) ** (-(model.n - 2) / 2.0) / (2.0 * sigma)
    keep, bound = _truncation(sp, per * pref, tol, "heat")
    if keep is None:
        raise BudgetExceeded(f"budget exceeded: heat kernel at x={x:.3g}", None, bound)
    return sp, keep


def heat_kernel(model: ConeModel, sigma: float, q: KernelQuery, tol: float = 1e-10,
                bound_constants: tuple = (1.0, 4.0), nu_budget: float = DEFAULT_NU_BUDGET):
    """Heat kernel e^{-sigma H}(z1, z2) and its BoundReport.

    Each mode uses the Weber closed form with epsilon = sigma, t = 0, written
    with the scaled function e^{-x} I_nu(x) so large r1 r2 / sigma is safe.
    """
    if not sigma > 0:
        raise DomainError("sigma must be > 0")
    sp, keep = _heat_keep(model, sigma, q.r1, q.r2, tol, nu_budget)
    proj = sp.projector(np.asarray(q.y1), np.asarray(q.y2))[:keep]
    val = float(np.real(_heat_series(model, sigma, q.r1, q.r2, proj, sp.nu[:keep])))
    C, c = bound_constants
    return val, BoundReport.make(abs(val), heat_bound(model, sigma, q, C, c))


def heat_kernel_field(model: ConeModel, sigma: float, r1: float, y1, r_nodes, y_points,
                      tol: float = 1e-12, nu_budget: float = DEFAULT_NU_BUDGET) -> np.ndarray:
    """K_sigma((r1, y1), (r, y)) for all r in r_nodes, y in y_points; shape (n_r, n_y)."""
    r_nodes = np.asarray(r_nodes, dtype=float)
    sp, keep = _heat_keep(model, sigma, r1, float(r_nodes.max()), tol, nu_budget)
    nus = sp.nu[:keep]
    proj = np.real(sp.projector(np.asarray(y1)[None, :], np.asarray(y_points)))[:, :keep]  # (n_y, K)
    x = r1 * r_nodes / (2.0 * sigma)
    radial = specfun.ive(nus[None, :], x[:, None])  # (n_r, K)
    pref = (r1 * r_nodes) ** (-(model.n - 2) / 2.0) * np.exp(-((r1 - r_nodes) ** 2) / (4.0 * sigma)) / (2.0 * sigma)
    return pref[:, None] * (radial @ proj.T)


# ---------------------------------------------------------------------------
# Poisson-wave
# ---------------------------------------------------------------------------

def poisson_bound(model: ConeModel, s: float, constant: float = 1.0) -> float:
    """C s^{-n/2+1} on [delta, 2 pi] and C (2 pi)^{n/2} s^{-n+1} beyond (continuous at 2 pi)."""
    n = model.n
    if s <= 2.0 * math.pi:
        return constant * s ** (-n / 2.0 + 1.0)
    return constant * (2.0 * math.pi) ** (n / 2.0) * s ** (-n + 1.0)


def poisson_wave_kernel(model: ConeModel, s: float, sign: int, y1, y2, tol: float = 1e-10,
                        delta: float = POISSON_DELTA, bound_constant: float = 1.0):
    """sum_k Pi_k(y1, y2) e^{-(s + i sign pi) nu_k} and its BoundReport."""
    if not s >= delta:
        raise DomainError(f"s={s} is below the resolved floor delta={delta}")
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    # e^{-s nu} times Weyl growth: enumerate until the geometric tail is below tol
    nu_max = model.nu0 + (math.log(1.0 / tol) + 10.0) / s
    while True:
        sp = cached_spectrum(model, round(nu_max, 6))
        per = sp.sup_projector_diag() * np.exp(-s * sp.nu)
        shell = per[sp.nu > sp.nu[-1] - 1.0].sum()
        tail = 0.0 if sp.exhaustive else shell / (1.0 - math.exp(-s)) ** (model.n)
        if tail < tol or nu_max > 4000:
            break
        nu_max *= 1.5
    if tail >= tol:
        raise BudgetExceeded(f"budget exceeded for Poisson-wave at s={s}", None, float(tail))
    proj = sp.projector(np.asarray(y1, float), np.asarray(y2, float))
    vals = proj * np.exp(-(s + 1j * sign * math.pi) * sp.nu)
    val = complex(_pairwise_sum(vals))
    return val, BoundReport.make(abs(val), poisson_bound(model, s, bound_constant))


# ---------------------------------------------------------------------------
# frequency-localised half-wave
# ---------------------------------------------------------------------------

def halfwave_multiplier(j: int, t: float) -> Multiplier:
    """F(rho) = phi(2^{-j} rho) e^{i t rho}."""
    from .lp_theory import BUMP_SUPPORT, bump

    lo, hi = BUMP_SUPPORT
    scale = 2.0 ** j
    return Multiplier(
        func=lambda rho: bump(rho / scale) * np.exp(1j * t * rho),
        support=(lo * scale, hi * scale),
        oscillation=t,
        sup_abs=1.0,
        real=(t == 0),
    )


def halfwave_bound(model: ConeModel, j: int, t: float, constant: float = 1.0) -> float:
    """C 2^{jn} (1 + 2^j |t|)^{-(n-1)/2}."""
    n = model.n
    return constant * 2.0 ** (j * n) * (1.0 + 2.0 ** j * abs(t)) ** (-(n - 1) / 2.0)


def halfwave_localized_kernel(model: ConeModel, j: int, t: float, q: KernelQuery, tol: float = 1e-8,
                              bound_constant: float = 1.0, nu_budget: float = DEFAULT_NU_BUDGET):
    """Kernel of phi(2^{-j} sqrt H) e^{it sqrt H} at (z1, z2) and its BoundReport."""
    if abs(t) * 2.0 ** j > 1e3:
        raise DomainError("|t| 2^j must be <= 1e3")
    F = halfwave_multiplier(j, t)
    val = kernel_of_function(model, F, q, tol, nu_budget)
    return val, BoundReport.make(abs(val), halfwave_bound(model, j, t, bound_constant))


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def split_projection(modes: Sequence[SpectralMode], n: int):
    """Split modes at nu = (n-2)/2: (low, high) with low = {nu_k < (n-2)/2}."""
    thr = (n - 2) / 2.0
    low = [m for m in modes if m.nu < thr]
    high = [m for m in modes if m.nu >= thr]
    return low, high
