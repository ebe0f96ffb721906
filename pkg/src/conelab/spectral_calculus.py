"""
Hankel transforms and the functional calculus F(sqrt H) on the cone.

By separation of variables every function of sqrt(H) acts mode by mode:

    F(sqrt H)(z1, z2) = (r1 r2)^{-(n-2)/2} sum_k Pi_k(y1, y2)
                        int_0^inf F(rho) J_{nu_k}(r1 rho) J_{nu_k}(r2 rho) rho d rho,

where Pi_k is the projector kernel of the k-th eigenspace of P. On the
radial side the Hankel transform of order nu,

    (H_nu f)(rho) = int_0^inf (r rho)^{-(n-2)/2} J_nu(r rho) f(r) r^{n-1} dr,

is unitary on L^2(r^{n-1} dr) and its own inverse, and diagonalises the
radial part of H with eigenvalue rho^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from . import specfun
from .cross_section import ConeModel, Spectrum, build_spectrum, y_grid
from .errors import BudgetExceeded, DomainError, GridResolutionError

__all__ = [
    "RadialGrid",
    "RadialProfile",
    "ConeGrid",
    "ModeCoefficients",
    "Multiplier",
    "KernelQuery",
    "hankel_matrix",
    "hankel_transform",
    "kernel_of_function",
    "mode_tail_bound",
    "cone_lq_norm",
    "cached_spectrum",
    "panel_rule",
    "band_limited_coefficients",
]

DEFAULT_NODES = 4096
DEFAULT_RMAX = 40.0
DEFAULT_TAIL_TOL = 1e-10
DEFAULT_NU_BUDGET = 250.0


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gl(n):
    return np.polynomial.legendre.leggauss(n)


def panel_rule(edges, order=16):
    """Composite Gauss-Legendre nodes and weights on consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    u, w = _gl(order)
    a, b = edges[:-1, None], edges[1:, None]
    x = 0.5 * (b - a) * u[None, :] + 0.5 * (a + b)
    wt = 0.5 * (b - a) * w[None, :]
    return x.ravel(), wt.ravel()


@dataclass(frozen=True)
class RadialGrid:
    """Composite Gauss-Legendre grid on (0, r_max] with r^{n-1} in the weights.

    Panels are uniform except for the first, which is split geometrically
    toward r = 0 (``n_graded`` panels halving in width) so that profiles
    behaving like r^{nu - (n-2)/2} at the tip are integrated accurately.
    """

    n: int
    size: int = DEFAULT_NODES
    r_max: float = DEFAULT_RMAX
    order: int = 16
    n_graded: int = 12

    def __post_init__(self):
        if self.size % self.order:
            raise DomainError("grid size must be a multiple of the panel order")
        if self.size // self.order <= self.n_graded:
            raise DomainError("grid too small for the requested grading")
        if not self.r_max > 0:
            raise DomainError("r_max must be > 0")

    @cached_property
    def edges(self) -> np.ndarray:
        npan = self.size // self.order
        n_uniform = npan - self.n_graded
        h = self.r_max / (n_uniform + 1)
        graded = h * 2.0 ** -np.arange(self.n_graded - 1, -1, -1)
        return np.concatenate([[0.0], graded, h + h * np.arange(1, n_uniform + 1)])

    @cached_property
    def _rule(self):
        return panel_rule(self.edges, self.order)

    @property
    def nodes(self) -> np.ndarray:
        return self._rule[0]

    @property
    def dr_weights(self) -> np.ndarray:
        """Weights for plain dr."""
        return self._rule[1]

    @cached_property
    def weights(self) -> np.ndarray:
        """Weights for r^{n-1} dr."""
        return self._rule[1] * self.nodes ** (self.n - 1)

    def scaled(self, factor: float) -> "RadialGrid":
        return RadialGrid(self.n, self.size, self.r_max * factor, self.order, self.n_graded)

    def integrate(self, values) -> complex:
        return np.sum(self.weights * np.asarray(values), axis=-1)

    def l2_norm(self, values) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(values) ** 2, axis=-1)))

    def to_dict(self) -> dict:
        return {"n": self.n, "size": self.size, "r_max": self.r_max, "order": self.order, "n_graded": self.n_graded}


@dataclass(frozen=True, eq=False)
class RadialProfile:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        if np.shape(self.values) != self.grid.nodes.shape:
            raise DomainError("profile values do not match the grid")

    @classmethod
    def from_function(cls, grid: RadialGrid, func: Callable) -> "RadialProfile":
        return cls(grid, np.asarray(func(grid.nodes)))

    def norm(self) -> float:
        return self.grid.l2_norm(self.values)


def tail_check(grid: RadialGrid, values, tail_tol=DEFAULT_TAIL_TOL) -> None:
    """Raise GridResolutionError unless |f| < tail_tol * max|f| on the last panel."""
    values = np.abs(np.asarray(values))
    peak = values.max(initial=0.0)
    if peak == 0.0:
        return
    tail = values[-grid.order:].max()
    if tail > tail_tol * peak:
        raise GridResolutionError(
            f"profile not resolved by grid: tail {tail:.3g} exceeds {tail_tol:g} x peak at r_max={grid.r_max}"
        )


@lru_cache(maxsize=16)
def hankel_matrix(nu: float, r_grid: RadialGrid, rho_grid: RadialGrid) -> np.ndarray:
    """Matrix M with (H_nu f)(rho_i) = sum_j M_ij f(r_j).

    Symmetric grids only need the upper triangle of J_nu(r rho).
    """
    if not nu >= 0:
        raise DomainError("Hankel order must be >= 0")
    r, rho = r_grid.nodes, rho_grid.nodes
    shift = (r_grid.n - 2) / 2.0
    if r_grid == rho_grid:
        iu = np.triu_indices(r.size)
        prod = r[iu[0]] * r[iu[1]]
        vals = specfun.jv(nu, prod) * prod ** -shift
        K = np.empty((r.size, r.size))
        K[iu] = vals
        K[iu[1], iu[0]] = vals
    else:
        prod = np.outer(rho, r)
        K = specfun.jv(nu, prod) * prod ** -shift
    K *= r_grid.weights[None, :]
    K.setflags(write=False)
    return K


def hankel_transform(nu: float, f: RadialProfile, rho_grid: RadialGrid | None = None,
                     tail_tol: float = DEFAULT_TAIL_TOL) -> RadialProfile:
    """Discrete Hankel transform of order nu (see module docstring).

    The input must be negligible on the last panel of its grid, otherwise
    GridResolutionError is raised.
    """
    if not nu > 0 and nu != 0:
        raise DomainError("Hankel order must be >= 0")
    rho_grid = f.grid if rho_grid is None else rho_grid
    if rho_grid.n != f.grid.n:
        raise DomainError("grids belong to different cone dimensions")
    tail_check(f.grid, f.values, tail_tol)
    M = hankel_matrix(float(nu), f.grid, rho_grid)
    return RadialProfile(rho_grid, M @ f.values)


# ---------------------------------------------------------------------------
# spectra and tail bounds
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def cached_spectrum(model: ConeModel, nu_max: float) -> Spectrum:
    return build_spectrum(model, nu_max)


def _mode_envelope(nu, z):
    return np.minimum(1.0, specfun.bessel_envelope(nu, z))


def _rising_envelope(nu, z):
    """Envelope for sup_{0 <= x <= z} |J_nu(x)|, non-decreasing in z.

    The small-argument form grows with x; the order form peaks at x = 2 nu.
    """
    from .calibration import envelope_constants

    tab = envelope_constants()
    nu = np.asarray(nu, dtype=float)
    small = tab.c_abs * specfun._small_arg_shape(nu, z)
    c_nu = tab.c_order(nu)
    order = np.where(np.isfinite(c_nu), c_nu * specfun._order_shape(nu, np.minimum(z, 2.0 * nu)), np.inf)
    return np.minimum(1.0, np.minimum(small, order))


def mode_tail_bound(model: ConeModel, z_max: float, nu_start: float, spectrum: Spectrum | None = None) -> float:
    """Bound on sum_{nu_k >= nu_start} mult_k sup|phi_k|^2 min(1, env(nu_k, z_max)).

    Modes are enumerated up to an order where the envelope decays
    geometrically; the rest is summed as a geometric series using the
    Weyl growth of the multiplicities.
    """
    if not z_max > 0:
        raise DomainError("z_max must be > 0")
    nu_hi = max(nu_start, model.nu0) + 4.0 * z_max + 60.0
    sp = spectrum if spectrum is not None and spectrum.nu[-1] >= nu_hi else cached_spectrum(model, nu_hi)
    sel = sp.nu >= nu_start
    if sp.exhaustive and not sel.any():
        return 0.0
    if not sel.any():
        sel = slice(len(sp) - 1, None)
    diag = sp.sup_projector_diag()[sel]
    terms = diag * _mode_envelope(sp.nu[sel], z_max)
    total = float(np.sum(terms))
    # remainder beyond nu_hi: envelope ratio between consecutive orders is
    # below (e z / 2 nu) << 1 there; bound by twice the last term
    if sp.exhaustive:
        return total
    return total + 2.0 * float(terms[-1]) if terms.size else total


# ---------------------------------------------------------------------------
# functional calculus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelQuery:
    """Evaluation point (t, z1 = (r1, y1), z2 = (r2, y2)) of a propagator kernel."""

    t: float
    r1: float
    y1: tuple
    r2: float
    y2: tuple

    def __post_init__(self):
        if not (self.r1 > 0 and self.r2 > 0):
            raise DomainError("r1 and r2 must be > 0")
        object.__setattr__(self, "y1", tuple(float(v) for v in np.ravel(self.y1)))
        object.__setattr__(self, "y2", tuple(float(v) for v in np.ravel(self.y2)))

    @property
    def z(self) -> float:
        if self.t == 0:
            return math.inf
        return self.r1 * self.r2 / (2.0 * abs(self.t))

    def swapped(self) -> "KernelQuery":
        return KernelQuery(self.t, self.r2, self.y2, self.r1, self.y1)

    def with_t(self, t: float) -> "KernelQuery":
        return KernelQuery(t, self.r1, self.y1, self.r2, self.y2)


@dataclass(frozen=True, eq=False)
class Multiplier:
    """Spectral multiplier F(rho) with the descriptors the quadrature needs.

    func         vectorised rho -> complex
    support      (lo, hi); hi may be finite cut-off of a rapidly decaying F
    oscillation  t for a factor e^{i t rho} (sets the panel density)
    sup_abs      bound on |F| (defaults to a sampled maximum)
    closed_form  optional (nu_array, r1, r2) -> per-mode integrals
    real         whether F is real valued
    """

    func: Callable
    support: tuple
    oscillation: float = 0.0
    sup_abs: float | None = None
    closed_form: Callable | None = None
    real: bool = False

    def bound(self) -> float:
        if self.sup_abs is not None:
            return self.sup_abs
        lo, hi = self.support
        rho = np.linspace(lo, hi, 2001)
        return float(np.max(np.abs(self.func(rho))))

    @classmethod
    def gaussian(cls, epsilon: float, t: float = 0.0) -> "Multiplier":
        """F(rho) = exp(-(epsilon + i t) rho^2), with the Weber closed form."""
        p = complex(epsilon, t)
        hi = math.sqrt(40.0 / epsilon)

        def closed(nu, r1, r2):
            w = r1 * r2 / (2.0 * p)
            return np.exp(-(r1 * r1 + r2 * r2) / (4.0 * p)) / (2.0 * p) * specfun.iv(nu, w)

        return cls(lambda rho: np.exp(-p * rho * rho), (0.0, hi), 2.0 * abs(t) * hi, 1.0, closed, t == 0)


def _rho_rule(F: Multiplier, r1: float, r2: float, min_nodes_per_wave=10, order=16):
    lo, hi = F.support
    freq = abs(F.oscillation) + r1 + r2
    length = hi - lo
    waves = freq * length / (2.0 * math.pi)
    npan = max(8, int(math.ceil(waves * min_nodes_per_wave / order)))
    edges = np.linspace(lo, hi, npan + 1)
    if lo == 0.0:
        # grade toward 0 where rho^{2 nu + 1} may be non-smooth
        h = edges[1]
        graded = h * 2.0 ** -np.arange(10, 0, -1)
        edges = np.concatenate([[0.0], graded, edges[1:]])
    return panel_rule(edges, order)


def _mode_integrals(F: Multiplier, nus, r1, r2):
    """int F(rho) J_nu(r1 rho) J_nu(r2 rho) rho d rho for each order."""
    if F.closed_form is not None:
        return np.asarray(F.closed_form(np.asarray(nus), r1, r2))
    rho, w = _rho_rule(F, r1, r2)
    fw = F.func(rho) * rho * w
    out = np.empty(len(nus), dtype=complex)
    for i, nu in enumerate(nus):
        j1 = specfun.jv(nu, r1 * rho)
        j2 = j1 if r1 == r2 else specfun.jv(nu, r2 * rho)
        out[i] = np.sum(fw * j1 * j2)
    return out


def kernel_of_function(model: ConeModel, F: Multiplier, q: KernelQuery, tol: float = 1e-8,
                       nu_budget: float = DEFAULT_NU_BUDGET, return_terms: bool = False):
    """Kernel of F(sqrt H) at (z1, z2).

    The mode sum is truncated where the remaining modes are provably below
    ``tol``: each mode is bounded by sup|F| (rho_max^2 / 2) times envelopes
    of J_nu(r1 rho) and J_nu(r2 rho) on the support. BudgetExceeded is raised
    if even ``nu_budget`` does not reach the tolerance.
    """
    if not tol > 0:
        raise DomainError("tol must be > 0")
    r1, r2 = q.r1, q.r2
    hi = F.support[1]
    pref = (r1 * r2) ** (-(model.n - 2) / 2.0)
    scale = pref * F.bound() * hi * hi / 2.0
    sp = cached_spectrum(model, nu_budget)
    env = _rising_envelope(sp.nu, r1 * hi) * _rising_envelope(sp.nu, r2 * hi)
    per_mode = scale * sp.sup_projector_diag() * env
    tails = np.cumsum(per_mode[::-1])[::-1]  # tails[k] = sum_{i >= k}
    beyond = 0.0 if sp.exhaustive else 2.0 * per_mode[-1]
    ok = np.nonzero(tails + beyond < tol)[0]
    if ok.size == 0 and sp.exhaustive:
        ok = np.array([len(sp)])
    if ok.size == 0:
        keep = len(sp)
        partial = _sum_modes(model, sp, F, q, keep)
        raise BudgetExceeded(
            f"budget exceeded: mode tail {beyond:.3g} >= tol at nu_budget={nu_budget}", partial, float(beyond)
        )
    keep = max(1, int(ok[0]))
    if return_terms:
        return _sum_modes(model, sp, F, q, keep, terms=True)
    return _sum_modes(model, sp, F, q, keep)


def _sum_modes(model, sp, F, q, keep, terms=False):
    nus = sp.nu[:keep]
    proj = sp.projector(np.array(q.y1), np.array(q.y2))[:keep]
    ints = _mode_integrals(F, nus, q.r1, q.r2)
    pref = (q.r1 * q.r2) ** (-(model.n - 2) / 2.0)
    contrib = pref * proj * ints
    if terms:
        return contrib
    return complex(_pairwise_sum(contrib))


def _pairwise_sum(x):
    """Fixed binary-tree reduction (order independent of threading)."""
    x = np.asarray(x)
    while x.size > 1:
        if x.size % 2:
            x = np.append(x, 0)
        x = x[0::2] + x[1::2]
    return x[0] if x.size else 0.0


# ---------------------------------------------------------------------------
# mode expansions on the cone
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConeGrid:
    radial: RadialGrid
    y_points: np.ndarray
    y_weights: np.ndarray

    @classmethod
    def build(cls, model: ConeModel, radial: RadialGrid, m: int = 16) -> "ConeGrid":
        pts, w = y_grid(model.spec, m)
        return cls(radial, pts, w)

    @property
    def weights(self) -> np.ndarray:
        """Weights of r^{n-1} dr dh(y), shape (n_r, n_y)."""
        return self.radial.weights[:, None] * self.y_weights[None, :]


@dataclass(frozen=True, eq=False)
class ModeCoefficients:
    """f = sum_b c_b(r) phi_b(y) over individual eigenfunctions.

    ``basis`` lists (mode index k, position inside the eigenspace) for each
    row of ``coeffs`` (shape (n_basis, n_r)).
    """

    spectrum: Spectrum
    grid: RadialGrid
    basis: tuple
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (len(self.basis), self.grid.nodes.size):
            raise DomainError("coefficient array shape does not match basis and grid")

    def orders(self) -> np.ndarray:
        return np.array([self.spectrum.nu[k] for k, _ in self.basis])

    def l2_norm(self) -> float:
        """sqrt(sum_b int |c_b|^2 r^{n-1} dr) (orthonormal basis)."""
        return float(np.sqrt(np.sum(self.grid.weights * np.abs(self.coeffs) ** 2)))

    def with_coeffs(self, coeffs) -> "ModeCoefficients":
        return ModeCoefficients(self.spectrum, self.grid, self.basis, np.asarray(coeffs))

    @classmethod
    def from_spectral(cls, spectrum: Spectrum, grid: RadialGrid, basis: tuple, spec_coeffs,
                      rho_grid: RadialGrid | None = None) -> "ModeCoefficients":
        """Rows given as Hankel transforms g_b(rho) sampled on ``rho_grid`` (default: ``grid``)."""
        rho_grid = grid if rho_grid is None else rho_grid
        spec_coeffs = np.asarray(spec_coeffs)
        out = np.empty((len(basis), grid.nodes.size), dtype=complex)
        for i, (k, _) in enumerate(basis):
            out[i] = hankel_matrix(float(spectrum.nu[k]), rho_grid, grid) @ spec_coeffs[i]
        return cls(spectrum, grid, tuple(basis), out)

    def evaluate(self, y_points) -> np.ndarray:
        """Values on grid r-nodes x y_points, shape (n_r, n_y)."""
        phis = []
        for k, m in self.basis:
            phis.append(self.spectrum.basis(k, y_points)[..., m])
        phi = np.stack(phis, axis=0)  # (n_basis, n_y)
        return self.coeffs.T @ phi

    def spectral(self, nu_tail_tol: float = DEFAULT_TAIL_TOL,
                 rho_grid: RadialGrid | None = None) -> "ModeCoefficients":
        """Per-mode Hankel transforms H_{nu_b} c_b, sampled on ``rho_grid`` (default: same grid)."""
        rho_grid = self.grid if rho_grid is None else rho_grid
        out = np.empty((len(self.basis), rho_grid.nodes.size), dtype=complex)
        for i, nu in enumerate(self.orders()):
            tail_check(self.grid, self.coeffs[i], nu_tail_tol)
            out[i] = hankel_matrix(float(nu), self.grid, rho_grid) @ self.coeffs[i]
        return ModeCoefficients(self.spectrum, rho_grid, self.basis, out)

    def apply_multiplier(self, func: Callable, tail_tol: float = DEFAULT_TAIL_TOL,
                         rho_grid: RadialGrid | None = None) -> "ModeCoefficients":
        """F(sqrt H) f via H_nu [F(rho) H_nu c].

        A separate ``rho_grid`` covering the band of f lets the r-grid reach
        farther out than its own node spacing could resolve in rho.
        """
        spec = self.spectral(tail_tol, rho_grid)
        vals = spec.coeffs * func(spec.grid.nodes)[None, :]
        out = np.empty((len(self.basis), self.grid.nodes.size), dtype=complex)
        for i, nu in enumerate(self.orders()):
            out[i] = hankel_matrix(float(nu), spec.grid, self.grid) @ vals[i]
        return self.with_coeffs(out)


def _smooth_cutoff(x, a, b):
    """1 for x <= a, 0 for x >= b, C-infinity in between."""
    u = np.clip((b - np.asarray(x, dtype=float)) / (b - a), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        p = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        q = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return p / (p + q)


def band_limited_coefficients(model: ConeModel, rng: np.random.Generator, grid: RadialGrid | None = None,
                              n_terms: int = 3, nu_cap: float = 3.0, rho_cut: tuple = (8.0, 9.0),
                              rho_grid: RadialGrid | None = None) -> ModeCoefficients:
    """Seeded f with every Hankel profile supported in [0, rho_cut[1]].

    Profiles are rho^{nu-(n-2)/2} (c0 + c1 rho^2) exp(-rho^2/2) times a smooth
    cutoff; the cutoff sits where the Gaussian is below 1e-13, so f is both
    band-limited and resolved by the default grid.
    """
    grid = RadialGrid(model.n) if grid is None else grid
    sp = cached_spectrum(model, max(nu_cap, model.nu0 + 1e-9))
    choices = [(k, m) for k in range(len(sp)) if sp.nu[k] <= nu_cap for m in range(sp.multiplicity[k])]
    pick = rng.choice(len(choices), size=min(n_terms, len(choices)), replace=False)
    basis = tuple(choices[i] for i in sorted(pick))
    rho = (grid if rho_grid is None else rho_grid).nodes
    rows = []
    for k, _ in basis:
        c0, c1 = rng.normal(size=2) + 1j * rng.normal(size=2)
        nu = float(sp.nu[k])
        rows.append(rho ** (nu - (model.n - 2) / 2.0) * (c0 + c1 * rho ** 2) * np.exp(-rho ** 2 / 2.0)
                    * _smooth_cutoff(rho, *rho_cut))
    return ModeCoefficients.from_spectral(sp, grid, basis, np.array(rows), rho_grid)


def cone_lq_norm(model: ConeModel, f, q: float, cone_grid: ConeGrid | None = None) -> float:
    """L^q norm on the cone, (sum_i w_i |f_i|^q)^{1/q}; q = inf gives the nodal max.

    ``f`` is either a gridded array of shape (n_r, n_y) on ``cone_grid`` or
    :class:`ModeCoefficients` (evaluated on ``cone_grid``, built on demand).
    """
    if not (q >= 1):
        raise DomainError(f"q={q!r} must be >= 1")
    if isinstance(f, ModeCoefficients):
        if cone_grid is None:
            cone_grid = ConeGrid.build(model, f.grid)
        vals = f.evaluate(cone_grid.y_points)
    else:
        if cone_grid is None:
            raise DomainError("gridded input needs its cone_grid")
        vals = np.asarray(f)
    a = np.abs(vals)
    if math.isinf(q):
        return float(a.max())
    w = cone_grid.weights
    m = a.max()
    if m == 0:
        return 0.0
    return float(m * np.sum(w * (a / m) ** q) ** (1.0 / q))
