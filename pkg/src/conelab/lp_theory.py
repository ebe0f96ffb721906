"""
Littlewood-Paley calculus for sqrt(H) on the cone.

The dyadic bump is built by telescoping a smooth step chi (1 on [0, A],
0 on [B, inf)):

    phi(lam) = chi(lam) - chi(2 lam),

so that sum_{j=-N}^{N} phi(2^{-j} lam) = chi(2^{-N} lam) - chi(2^{N+1} lam)
is exactly 1 once N is large, supp phi = [A/2, B] lies inside [1/2, 2], and
phi = 1 on the plateau [B/2, A].

Test functions are described spectrally: each row of a
:class:`SpectralFunction` is an eigenfunction phi_b of Y times the Hankel
transform of a profile g_b(rho). Projections phi_j(sqrt H) f are evaluated
on r-grids scaled by 2^{-j}, so one Bessel matrix serves every j.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import specfun
from .cross_section import ConeModel, Spectrum, y_grid
from .errors import DomainError
from .spectral_calculus import ModeCoefficients, RadialGrid, cached_spectrum, panel_rule

__all__ = [
    "BUMP_SUPPORT",
    "BUMP_PLATEAU",
    "DEFAULT_J_WINDOW",
    "smooth_step",
    "bump",
    "dyadic_cutoff_value",
    "partition_sum",
    "DyadicCutoff",
    "BesovParams",
    "SpectralFunction",
    "random_band_limited",
    "lp_project",
    "lp_project_values",
    "besov_norm",
    "bernstein_ratio",
    "square_function_ratio",
    "square_sum_bounds",
    "active_scales",
    "besov_weight",
    "square_function_grid",
]

STEP_A = 1.25
STEP_B = 1.6
BUMP_SUPPORT = (STEP_A / 2.0, STEP_B)
BUMP_PLATEAU = (STEP_B / 2.0, STEP_A)
DEFAULT_J_WINDOW = (-6, 8)


def _psi(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(lam):
    """C-infinity step: 1 on [0, A], 0 on [B, inf)."""
    u = (STEP_B - np.asarray(lam, dtype=float)) / (STEP_B - STEP_A)
    a, b = _psi(u), _psi(1.0 - u)
    return a / (a + b)


def bump(lam):
    """Dyadic bump phi = chi(lam) - chi(2 lam), supported in [A/2, B]."""
    lam = np.asarray(lam, dtype=float)
    return smooth_step(lam) - smooth_step(2.0 * lam)


def dyadic_cutoff_value(j: int, lam):
    """phi_j(lam) = phi(2^{-j} lam)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("lambda must be >= 0")
    out = bump(lam * 2.0 ** (-j))
    return float(out) if out.ndim == 0 else out


def partition_sum(lam, j_lo: int = -40, j_hi: int = 40):
    """sum_{j_lo <= j <= j_hi} phi_j(lam)."""
    lam = np.asarray(lam, dtype=float)
    return sum(dyadic_cutoff_value(j, lam) for j in range(j_lo, j_hi + 1))


def square_sum_bounds(samples: int = 20001) -> tuple:
    """(min, max) of sum_j phi_j(lam)^2 over one dyadic period."""
    lam = np.exp(np.linspace(0.0, math.log(2.0), samples))
    s = sum(dyadic_cutoff_value(j, lam) ** 2 for j in range(-3, 4))
    return float(s.min()), float(s.max())


@dataclass(frozen=True)
class DyadicCutoff:
    j: int

    def __call__(self, lam):
        return dyadic_cutoff_value(self.j, lam)

    @property
    def support(self) -> tuple:
        return (BUMP_SUPPORT[0] * 2.0 ** self.j, BUMP_SUPPORT[1] * 2.0 ** self.j)


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float
    r: float

    def __post_init__(self):
        if not self.p >= 1:
            raise DomainError("Besov p must be >= 1")
        if not (self.r >= 1 and math.isfinite(self.r)):
            raise DomainError("Besov r must lie in [1, inf)")


# ---------------------------------------------------------------------------
# spectrally described functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralFunction:
    """f(r, y) = sum_b phi_b(y) (H_{nu_b} g_b)(r).

    ``basis`` entries are (mode index, position inside the eigenspace) and
    ``profiles`` are vectorised callables rho -> g_b(rho); ``band`` bounds the
    support of every g_b.
    """

    model: ConeModel
    spectrum: Spectrum
    basis: tuple
    profiles: tuple
    band: tuple

    def orders(self) -> np.ndarray:
        return np.array([self.spectrum.nu[k] for k, _ in self.basis])

    def scaled(self, lam: float) -> "SpectralFunction":
        return SpectralFunction(self.model, self.spectrum, self.basis,
                                tuple((lambda g: (lambda rho: lam * g(rho)))(g) for g in self.profiles),
                                self.band)

    def sobolev_sq(self, s: float, weight: Callable | None = None, nodes: int = 4000) -> float:
        """sum_b int |g_b|^2 rho^{2s} w(rho) rho^{n-1} d rho (w defaults to 1)."""
        lo, hi = self.band
        rho, wt = panel_rule(np.linspace(lo, hi, nodes // 16 + 1), 16)
        w = 1.0 if weight is None else weight(rho)
        tot = 0.0
        for g in self.profiles:
            tot += np.sum(np.abs(g(rho)) ** 2 * rho ** (2 * s + self.model.n - 1) * w * wt)
        return float(tot)


def random_band_limited(model: ConeModel, rng: np.random.Generator, band: tuple = (0.25, 16.0),
                        n_terms: int = 4, nu_cap: float = 3.0) -> SpectralFunction:
    """Seeded band-limited test function.

    A few eigenfunctions with nu <= nu_cap carry profiles
    g(rho) = c rho^{-n/2} (1 + 0.5 sin(omega log rho + theta)) w(rho), where w
    is a smooth window equal to 1 on most of ``band``. The rho^{-n/2} weight
    spreads the L^2 mass evenly across dyadic scales.
    """
    sp = cached_spectrum(model, max(nu_cap, model.nu0 + 1e-9))
    choices = [(k, m) for k in range(len(sp)) if sp.nu[k] <= nu_cap for m in range(sp.multiplicity[k])]
    pick = rng.choice(len(choices), size=min(n_terms, len(choices)), replace=False)
    basis = tuple(choices[i] for i in sorted(pick))
    lo, hi = band
    n = model.n
    profiles = []
    for _ in basis:
        c = complex(rng.normal(), rng.normal())
        om = rng.uniform(0.5, 3.0)
        th = rng.uniform(0.0, 2.0 * math.pi)

        def g(rho, c=c, om=om, th=th):
            rho = np.asarray(rho, dtype=float)
            u = np.clip(rho, lo, hi)
            w = (1.0 - smooth_step(u / lo * STEP_A)) * smooth_step(u / hi * STEP_B)
            return c * u ** (-n / 2.0) * (1.0 + 0.5 * np.sin(om * np.log(u) + th)) * w

        profiles.append(g)
    return SpectralFunction(model, sp, basis, tuple(profiles), (float(lo), float(hi)))


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

# rho = 2^j u with u on the bump support; 12 Gauss panels resolve phi to 1e-13
_U_NODES, _U_WEIGHTS = panel_rule(np.linspace(BUMP_SUPPORT[0], BUMP_SUPPORT[1], 13), 16)
_U_BUMP = bump(_U_NODES)
# r-grid in the scaled variable s = 2^j r; projections decay to ~1e-6 by s = 240
SCALED_GRID = RadialGrid(3, size=2048, r_max=240.0, n_graded=8)


def lp_project(model: ConeModel, f: ModeCoefficients, j: int, tail_tol: float = 1e-10,
               rho_grid: RadialGrid | None = None) -> ModeCoefficients:
    """phi_j(sqrt H) f as a per-mode Hankel multiplier (see ModeCoefficients.apply_multiplier)."""
    if f.grid.n != model.n:
        raise DomainError("grid dimension does not match the model")
    return f.apply_multiplier(DyadicCutoff(j), tail_tol, rho_grid)


@lru_cache(maxsize=128)
def _bessel_block(nu: float, n: int, x_key: tuple, factor: float) -> np.ndarray:
    """(x u)^{-(n-2)/2} J_nu(x u) u^{n-1} w_u phi(u) with x scaled by ``factor``."""
    x = np.asarray(x_key, dtype=float) * factor
    xu = np.outer(x, _U_NODES)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = specfun.jv(nu, xu) * xu ** (-(n - 2) / 2.0)
    return k * (_U_NODES ** (n - 1) * _U_WEIGHTS * _U_BUMP)[None, :]


def _radial_pieces(f: SpectralFunction, j: int, x, factor: float) -> np.ndarray:
    """Rows U_b(x) = 2^{jn} int phi(u) g_b(2^j u) K_nu(factor x u) u^{n-1} du."""
    n = f.model.n
    key = tuple(np.asarray(x, dtype=float).tolist())
    scale = 2.0 ** j
    rows = []
    for (k, _), g in zip(f.basis, f.profiles):
        blk = _bessel_block(float(f.spectrum.nu[k]), n, key, float(factor))
        rows.append(scale ** n * (blk @ g(scale * _U_NODES)))
    return np.array(rows)


def _basis_values(f: SpectralFunction, y_points) -> np.ndarray:
    return np.stack([f.spectrum.basis(k, y_points)[..., m] for k, m in f.basis], axis=0)


def lp_project_values(f: SpectralFunction, j: int, r, y_points) -> np.ndarray:
    """(phi_j(sqrt H) f)(r, y) on the product of ``r`` and ``y_points``, shape (n_r, n_y)."""
    r = np.asarray(r, dtype=float)
    pieces = _radial_pieces(f, j, r, 2.0 ** j)
    return pieces.T @ _basis_values(f, y_points)


def _lp_norm(vals, weights, p: float) -> float:
    a = np.abs(vals)
    m = a.max()
    if m == 0:
        return 0.0
    if math.isinf(p):
        return float(m)
    return float(m * np.sum(weights * (a / m) ** p) ** (1.0 / p))


@dataclass(frozen=True)
class _ScaledView:
    """phi_j f sampled at r = 2^{-j} s on the fixed scaled grid."""

    values: np.ndarray  # (n_s, n_y)
    weights: np.ndarray  # s^{n-1} ds dh(y)
    j: int
    n: int

    def norm(self, p: float) -> float:
        """Cone L^p norm; the 2^{-jn/p} factor undoes the change of variables."""
        base = _lp_norm(self.values, self.weights, p)
        return base if math.isinf(p) else base * 2.0 ** (-self.j * self.n / p)


def _scaled_view(f: SpectralFunction, j: int, y_m: int = 16) -> _ScaledView:
    grid = SCALED_GRID if f.model.n == 3 else RadialGrid(f.model.n, SCALED_GRID.size, SCALED_GRID.r_max,
                                                         SCALED_GRID.order, SCALED_GRID.n_graded)
    y_pts, y_w = y_grid(f.model.spec, y_m)
    pieces = _radial_pieces(f, j, grid.nodes, 1.0)
    vals = pieces.T @ _basis_values(f, y_pts)
    return _ScaledView(vals, grid.weights[:, None] * y_w[None, :], j, f.model.n)


def active_scales(f: SpectralFunction) -> range:
    """Scales j whose bump support meets the band of ``f``."""
    lo, hi = f.band
    j_lo = math.floor(math.log2(lo / BUMP_SUPPORT[1])) + 1
    j_hi = math.ceil(math.log2(hi / BUMP_SUPPORT[0])) - 1
    return range(j_lo, j_hi + 1)


def _check_window(f: SpectralFunction, window: tuple) -> range:
    js = active_scales(f)
    if js.start < window[0] or js.stop - 1 > window[1]:
        raise DomainError(f"band {f.band} needs scales {js.start}..{js.stop - 1}, outside the window {window}")
    return js


# ---------------------------------------------------------------------------
# norms and probes
# ---------------------------------------------------------------------------

def besov_norm(model: ConeModel, f, params: BesovParams, window: tuple = DEFAULT_J_WINDOW,
               rho_grid: RadialGrid | None = None) -> float:
    """(sum_j 2^{j s r} ||phi_j(sqrt H) f||_p^r)^{1/r} over the active scales.

    ``f`` is a :class:`SpectralFunction` (projections on scale-adapted grids)
    or :class:`ModeCoefficients` (projections on the grid of ``f``, with the
    frequency side sampled on ``rho_grid``, see :func:`lp_project`).
    """
    if isinstance(f, SpectralFunction):
        js = _check_window(f, window)
        norms = [(j, _scaled_view(f, j).norm(params.p)) for j in js]
    elif isinstance(f, ModeCoefficients):
        from .spectral_calculus import cone_lq_norm

        norms = [(j, cone_lq_norm(model, lp_project(model, f, j, rho_grid=rho_grid), params.p))
                 for j in range(window[0], window[1] + 1)]
    else:
        raise DomainError("f must be a SpectralFunction or ModeCoefficients")
    tot = sum(2.0 ** (j * params.s * params.r) * v ** params.r for j, v in norms)
    return float(tot ** (1.0 / params.r))


def besov_weight(s: float, r_exp: float = 2.0, window: tuple = DEFAULT_J_WINDOW) -> Callable:
    """rho -> sum_j 2^{j s r} phi_j(rho)^r, the spectral weight of the p = 2 Besov norm."""
    def w(rho):
        return sum(2.0 ** (j * s * r_exp) * dyadic_cutoff_value(j, rho) ** r_exp
                   for j in range(window[0], window[1] + 1))
    return w


def _check_exponents(model: ConeModel, lo: float, hi: float, lo_name: str, hi_name: str) -> None:
    qa, qd = model.q_alpha, model.q_alpha_dual
    if math.isinf(qa):
        # alpha >= 0: every 1 <= lo <= hi <= inf is admissible
        if lo < 1:
            raise DomainError(f"{lo_name}={lo} must be >= 1")
        return
    if not lo > qd:
        raise DomainError(f"{lo_name}={lo} violates {lo_name} > q'(alpha)={qd:.6g}")
    if not hi < qa:
        raise DomainError(f"{hi_name}={hi} violates {hi_name} < q(alpha)={qa:.6g}")


def bernstein_ratio(model: ConeModel, f: SpectralFunction, j: int, p: float = math.inf,
                    q: float = 2.0) -> float:
    """||phi_j f||_p / (2^{n j (1/q - 1/p)} ||phi_j f||_q).

    Admissible exponents are q'(alpha) < q <= p < q(alpha); for alpha >= 0
    this is 1 <= q <= p <= inf.
    """
    if not q <= p:
        raise DomainError(f"q={q} must not exceed p={p}")
    _check_exponents(model, q, p, "q", "p")
    if p == q:
        return 1.0
    view = _scaled_view(f, j)
    num, den = view.norm(p), view.norm(q)
    if den == 0:
        raise DomainError(f"phi_{j} f vanishes; the ratio is undefined")
    n = model.n
    inv = lambda x: 0.0 if math.isinf(x) else 1.0 / x  # noqa: E731
    return float(num / (2.0 ** (n * j * (inv(q) - inv(p))) * den))


def square_function_grid(n: int, r_max: float = 240.0, h0: float = 0.25, r_knee: float = 6.0,
                         order: int = 16):
    """Nodes and r^{n-1} dr weights shared by all scales.

    Width h0 up to ``r_knee``, then growing proportionally to r: the piece at
    scale j has frequency ~2^j and lives at r <~ 60 2^{-j}.
    """
    edges = [0.0]
    for k in range(10, 0, -1):
        edges.append(h0 * 2.0 ** -k)
    x = h0
    while x < r_knee:
        edges.append(x)
        x += h0
    ratio = 1.0 + h0 / r_knee
    while x < r_max:
        edges.append(x)
        x *= ratio
    edges.append(r_max)
    r, w = panel_rule(np.array(edges), order)
    return r, w * r ** (n - 1)


def square_function_ratio(model: ConeModel, f: SpectralFunction, p: float = 4.0, y_m: int = 16) -> float:
    """||(sum_j |phi_j f|^2)^{1/2}||_p / ||f||_p over the active scales.

    ``f`` is rebuilt as the sum of its projections, which is exact on its band.
    """
    _check_exponents(model, p, p, "p", "p")
    if math.isinf(p) or (math.isinf(model.q_alpha) and p <= 1):
        raise DomainError(f"p={p} must satisfy 1 < p < inf")
    r, wr = square_function_grid(model.n)
    y_pts, y_w = y_grid(model.spec, y_m)
    w = wr[:, None] * y_w[None, :]
    total = np.zeros((r.size, y_pts.shape[0]), dtype=complex)
    sq = np.zeros(total.shape)
    for j in active_scales(f):
        v = lp_project_values(f, j, r, y_pts)
        total += v
        sq += np.abs(v) ** 2
    return _lp_norm(np.sqrt(sq), w, p) / _lp_norm(total, w, p)
