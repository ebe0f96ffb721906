"""
Cross-sections Y of the cone: eigendata, geometry and the hypothesis gate.

Supported kinds are flat circles and tori, round spheres S^d of radius
sigma, and custom spectra read from a table. Points on Y are represented as

* circle / torus: arrays of angles, last axis of length ``dim``, in [0, 2 pi);
* sphere: unit vectors in R^{d+1} (last axis of length ``dim + 1``).

Eigenfunctions within a degenerate eigenvalue are grouped into a single
:class:`SpectralMode`; the quantity propagators need is the projector kernel
sum_{phi in mode} phi(y1) conj(phi(y2)), exposed by
:meth:`Spectrum.projector`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse, special

from .errors import DomainError, GeometryUnavailable, HypothesisViolation, InsufficientData

__all__ = [
    "CrossSectionSpec",
    "SpectralMode",
    "Spectrum",
    "ConeModel",
    "HypothesisReport",
    "build_spectrum",
    "conjugate_radius",
    "check_hypothesis",
    "distance_spectrum",
    "weyl_slope",
    "y_grid",
    "register_evaluator",
    "load_custom_table",
    "DEGENERATE",
]

DEGENERATE = "degenerate"
DEFAULT_EPSILON = 0.1


# ---------------------------------------------------------------------------
# custom evaluator registry
# ---------------------------------------------------------------------------

# An evaluator maps (points, volume) -> array of shape points.shape[:-1] + (m,)
# holding an orthonormal basis of the eigenspace.
_EVALUATORS: dict[str, Callable] = {}


def register_evaluator(name: str, func: Callable) -> None:
    """Register an eigenfunction evaluator for custom spectra."""
    _EVALUATORS[name] = func


def _constant(points, volume):
    points = np.asarray(points, dtype=float)
    shape = points.shape[:-1] if points.ndim else ()
    return np.full(shape + (1,), 1.0 / math.sqrt(volume), dtype=complex)


register_evaluator("constant", _constant)


# ---------------------------------------------------------------------------
# specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossSectionSpec:
    """Description of (Y, h).

    Use the ``circle``, ``torus``, ``sphere`` and ``custom`` constructors
    rather than the raw initialiser.
    """

    kind: str
    dim: int
    radii: tuple = ()
    custom_modes: tuple = ()  # (mu, multiplicity, evaluator id)
    custom_volume: float = 1.0

    def __post_init__(self):
        if self.kind not in ("circle", "torus", "sphere", "custom"):
            raise DomainError(f"unknown cross-section kind {self.kind!r}")
        if self.dim < 1:
            raise DomainError("dim must be a positive integer")
        if any(not (s > 0) for s in self.radii):
            raise DomainError("all radii must be > 0")
        if self.kind == "custom":
            if not self.custom_modes:
                raise DomainError("custom spec needs at least one mode")
            if not self.custom_volume > 0:
                raise DomainError("custom volume must be > 0")
            for mu, mult, eid in self.custom_modes:
                if int(mult) != mult or mult < 1:
                    raise DomainError(f"multiplicity {mult!r} is not a positive integer")
                if eid not in _EVALUATORS:
                    raise DomainError(f"unknown eigenfunction id {eid!r}")

    @classmethod
    def circle(cls, sigma: float) -> "CrossSectionSpec":
        return cls("circle", 1, (float(sigma),))

    @classmethod
    def torus(cls, *radii: float) -> "CrossSectionSpec":
        if len(radii) < 1:
            raise DomainError("torus needs at least one radius")
        return cls("torus", len(radii), tuple(float(s) for s in radii))

    @classmethod
    def sphere(cls, dim: int, sigma: float = 1.0) -> "CrossSectionSpec":
        return cls("sphere", int(dim), (float(sigma),))

    @classmethod
    def custom(cls, modes: Sequence, volume: float, dim: int = 2) -> "CrossSectionSpec":
        """``modes`` is a sequence of (mu, multiplicity, evaluator id)."""
        return cls(
            "custom",
            int(dim),
            (),
            tuple((float(mu), int(m), str(e)) for mu, m, e in modes),
            float(volume),
        )

    @property
    def volume(self) -> float:
        if self.kind in ("circle", "torus"):
            return float(np.prod([2.0 * math.pi * s for s in self.radii]))
        if self.kind == "sphere":
            d = self.dim
            return 2.0 * math.pi ** ((d + 1) / 2) / math.gamma((d + 1) / 2) * self.radii[0] ** d
        return self.custom_volume

    @property
    def point_dim(self) -> int:
        return self.dim + 1 if self.kind == "sphere" else self.dim

    def geodesic_distance(self, y1, y2):
        """Riemannian distance d_h(y1, y2) (vectorised over leading axes)."""
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        if self.kind in ("circle", "torus"):
            d = np.mod(y1 - y2, 2.0 * math.pi)
            d = np.minimum(d, 2.0 * math.pi - d) * np.asarray(self.radii)
            return np.sqrt(np.sum(d * d, axis=-1))
        if self.kind == "sphere":
            c = np.clip(np.sum(y1 * y2, axis=-1), -1.0, 1.0)
            return self.radii[0] * np.arccos(c)
        raise GeometryUnavailable("geometry unavailable for a custom spectrum")


def load_custom_table(text: str, volume: float, dim: int = 2) -> CrossSectionSpec:
    """Parse a whitespace-separated table with columns mu, multiplicity, eigenfunction-id.

    Lines starting with ``#`` and a header line beginning with ``mu`` are
    skipped.
    """
    modes = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or line.lower().startswith("mu"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DomainError(f"line {lineno}: expected 3 columns, got {len(parts)}")
        try:
            mu, mult = float(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DomainError(f"line {lineno}: {exc}") from None
        modes.append((mu, mult, parts[2]))
    return CrossSectionSpec.custom(modes, volume, dim)


# ---------------------------------------------------------------------------
# cone model
# ---------------------------------------------------------------------------

def _laplace_ground(spec: CrossSectionSpec) -> float:
    if spec.kind == "custom":
        return min(mu for mu, _, _ in spec.custom_modes)
    return 0.0


@dataclass(frozen=True)
class ConeModel:
    """Cone C(Y) of dimension n with constant potential a r^{-2}.

    For custom spectra the listed mu are eigenvalues of the Laplacian on Y;
    the potential a is added on top like for the explicit kinds.
    """

    n: int
    spec: CrossSectionSpec
    a: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError("n must be an integer >= 2")
        if self.spec.dim != self.n - 1:
            raise DomainError(f"cross-section dimension {self.spec.dim} != n - 1 = {self.n - 1}")

    @property
    def shift(self) -> float:
        """(n-2)^2 / 4."""
        return (self.n - 2) ** 2 / 4.0

    @property
    def p_min(self) -> float:
        """Lowest eigenvalue of P = Delta_h + a + (n-2)^2/4."""
        return _laplace_ground(self.spec) + self.a + self.shift

    @property
    def p_positive(self) -> bool:
        return self.p_min > 0

    @property
    def nu0(self) -> float:
        if not self.p_positive:
            raise HypothesisViolation("hypothesis violated: P not positive")
        return math.sqrt(self.p_min)

    @property
    def alpha(self) -> float:
        return self.nu0 - (self.n - 2) / 2.0

    @property
    def q_alpha(self) -> float:
        al = self.alpha
        # alpha = 0 for a = 0 only up to rounding in sqrt
        if al >= -1e-14:
            return math.inf
        return -self.n / al

    @property
    def q_alpha_dual(self) -> float:
        q = self.q_alpha
        return 1.0 if math.isinf(q) else q / (q - 1.0)

    @classmethod
    def with_nu0(cls, n: int, spec: CrossSectionSpec, nu0: float) -> "ConeModel":
        """Pick the potential a so that the lowest order equals ``nu0``."""
        a = nu0 ** 2 - (n - 2) ** 2 / 4.0 - _laplace_ground(spec)
        return cls(n, spec, a)


@dataclass(frozen=True)
class HypothesisReport:
    rconj_ok: bool | None
    p_positive: bool
    conjugate_radius: float | None
    p_min: float


def check_hypothesis(model: ConeModel) -> HypothesisReport:
    """Evaluate R_Conj > pi and positivity of P.

    ``rconj_ok`` is ``None`` for custom spectra whose geometry is unknown.
    """
    try:
        rc = conjugate_radius(model.spec)
        ok = bool(rc > math.pi)
    except GeometryUnavailable:
        rc, ok = None, None
    return HypothesisReport(ok, model.p_positive, rc, model.p_min)


def conjugate_radius(spec: CrossSectionSpec) -> float:
    if spec.kind in ("circle", "torus"):
        return math.inf
    if spec.kind == "sphere":
        return math.pi * spec.radii[0] if spec.dim >= 2 else math.inf
    raise GeometryUnavailable("geometry unavailable for a custom spectrum")


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralMode:
    index: int
    mu: float
    multiplicity: int
    nu: float
    labels: tuple = field(default=(), compare=False)


def _sphere_dim_harmonics(d: int, ell: int) -> int:
    """Dimension of degree-ell harmonics on S^d."""
    if ell == 0:
        return 1
    return int(round((2 * ell + d - 1) / (ell + d - 1) * math.comb(ell + d - 1, ell)))


class Spectrum:
    """Modes of P with nu <= nu_max, sorted by nu (ties by label), plus evaluators."""

    def __init__(self, model: ConeModel, modes: list[SpectralMode], lattice=None, lattice_group=None):
        self.model = model
        self.modes = modes
        self.nu = np.array([m.nu for m in modes])
        self.mu = np.array([m.mu for m in modes])
        self.multiplicity = np.array([m.multiplicity for m in modes], dtype=int)
        # torus: lattice vectors and the mode each one belongs to
        self._lattice = lattice
        self._group = lattice_group
        # True when no mode of P lies beyond the list (finite custom spectra)
        self.exhaustive = False

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, i):
        return self.modes[i]

    @property
    def volume(self) -> float:
        return self.model.spec.volume

    def truncate(self, nu_max: float) -> "Spectrum":
        keep = int(np.searchsorted(self.nu, nu_max, side="right"))
        lat = grp = None
        if self._lattice is not None:
            sel = self._group < keep
            lat, grp = self._lattice[sel], self._group[sel]
        out = Spectrum(self.model, self.modes[:keep], lat, grp)
        out.exhaustive = self.exhaustive and keep == len(self)
        if hasattr(self, "_custom_order"):
            out._custom_order = self._custom_order[:keep]
        return out

    def _indicator(self):
        if getattr(self, "_ind", None) is None:
            rows = np.arange(self._group.size)
            self._ind = sparse.csr_matrix(
                (np.ones(self._group.size), (rows, self._group)), shape=(self._group.size, len(self))
            )
        return self._ind

    # -- projector kernels -------------------------------------------------

    def projector(self, y1, y2) -> np.ndarray:
        """sum_{phi in mode k} phi(y1) conj(phi(y2)) for every mode k.

        ``y1`` and ``y2`` broadcast over leading axes; the result has shape
        ``broadcast_shape + (len(self),)``.
        """
        spec = self.model.spec
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        if spec.kind in ("circle", "torus"):
            delta = y1 - y2
            lead = delta.shape[:-1]
            flat = delta.reshape(-1, spec.dim)
            vals = np.cos(flat @ self._lattice.T.astype(float))
            out = np.asarray((self._indicator().T @ vals.T).T)
            return (out / spec.volume).reshape(lead + (len(self),))
        if spec.kind == "sphere":
            c = np.clip(np.sum(y1 * y2, axis=-1), -1.0, 1.0)
            return self._zonal(c)
        # custom: evaluate bases explicitly
        lead = np.broadcast_shapes(y1.shape[:-1], y2.shape[:-1])
        out = np.zeros(lead + (len(self),), dtype=complex)
        for k, (mu, mult, eid) in enumerate(self._custom_order):
            f1 = np.broadcast_to(_EVALUATORS[eid](y1, spec.volume), lead + (mult,))
            f2 = np.broadcast_to(_EVALUATORS[eid](y2, spec.volume), lead + (mult,))
            out[..., k] = np.sum(f1 * np.conj(f2), axis=-1)
        return out

    def _zonal(self, c):
        """Addition theorem on S^d: dim_l / vol * C_l^lam(c) / C_l^lam(1)."""
        spec = self.model.spec
        d = spec.dim
        ells = np.array([m.labels[0] for m in self.modes], dtype=int)
        L = int(ells.max()) if ells.size else 0
        c = np.asarray(c, dtype=float)
        vals = np.empty(c.shape + (L + 1,))
        if d == 1:
            th = np.arccos(c)
            for ell in range(L + 1):
                vals[..., ell] = 2.0 * np.cos(ell * th) if ell else 1.0
        else:
            lam = (d - 1) / 2.0
            # normalised Gegenbauer G_l = C_l^lam(c)/C_l^lam(1) by the
            # three-term recurrence, stable for |c| <= 1
            g_prev = np.ones_like(c)
            vals[..., 0] = g_prev
            if L >= 1:
                g = c.copy()
                vals[..., 1] = g
                for ell in range(1, L):
                    g_next = ((2 * ell + 2 * lam) * c * g - ell * g_prev) / (ell + 2 * lam)
                    g_prev, g = g, g_next
                    vals[..., ell + 1] = g
            dims = np.array([_sphere_dim_harmonics(d, ell) for ell in range(L + 1)])
            vals = vals * dims
        return vals[..., ells] / spec.volume

    # -- individual eigenfunctions ----------------------------------------

    def basis(self, k: int, y) -> np.ndarray:
        """Orthonormal basis of mode k at points y, shape y.shape[:-1] + (mult,).

        Available for circle/torus (exponentials), S^2 (spherical harmonics)
        and custom spectra.
        """
        spec = self.model.spec
        y = np.asarray(y, dtype=float)
        if spec.kind in ("circle", "torus"):
            lat = self._lattice[self._group == k].astype(float)
            return np.exp(1j * (y @ lat.T)) / math.sqrt(spec.volume)
        if spec.kind == "sphere":
            if spec.dim != 2:
                raise DomainError("individual eigenfunctions are implemented for S^2 only")
            ell = self.modes[k].labels[0]
            theta = np.arccos(np.clip(y[..., 2], -1.0, 1.0))
            phi = np.arctan2(y[..., 1], y[..., 0])
            ms = np.arange(-ell, ell + 1)
            out = special.sph_harm_y(ell, ms, theta[..., None], phi[..., None])
            return out / spec.radii[0]
        mu, mult, eid = self._custom_order[k]
        return np.asarray(_EVALUATORS[eid](y, spec.volume))

    def sup_projector_diag(self) -> np.ndarray:
        """sup_y sum_{phi in mode} |phi(y)|^2 per mode."""
        spec = self.model.spec
        if spec.kind in ("circle", "torus", "sphere"):
            # homogeneous spaces: the diagonal is constant = mult / vol
            return self.multiplicity / spec.volume
        # registered evaluators are assumed homogeneous (constant diagonal)
        return self.multiplicity / spec.volume


def _torus_lattice(radii, bound):
    """Integer vectors m with sum (m_i / sigma_i)^2 <= bound."""
    if bound < 0:
        return np.zeros((0, len(radii)), dtype=int), np.zeros(0)
    ranges = [np.arange(-int(math.floor(s * math.sqrt(bound))), int(math.floor(s * math.sqrt(bound))) + 1)
              for s in radii]
    grids = np.meshgrid(*ranges, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    mu = np.sum((pts / np.asarray(radii)) ** 2, axis=-1)
    keep = mu <= bound * (1 + 1e-12)
    return pts[keep], mu[keep]


def build_spectrum(model: ConeModel, nu_max: float) -> Spectrum:
    """All modes of P with nu_k <= nu_max, ascending in nu, multiplicities aggregated."""
    if not model.p_positive:
        raise HypothesisViolation("hypothesis violated: P not positive")
    if nu_max < model.nu0:
        raise DomainError(f"nu_max={nu_max} is below nu0={model.nu0}")
    spec = model.spec
    shift = model.shift
    bound = nu_max ** 2 - shift - model.a  # on Laplace eigenvalues
    modes: list[SpectralMode] = []
    if spec.kind in ("circle", "torus"):
        pts, lap = _torus_lattice(spec.radii, bound)
        key = np.round(lap, 9)
        uniq, inv = np.unique(key, return_inverse=True)
        # ties in nu are impossible across distinct mu; within a mode the
        # lattice vectors are kept in lexicographic order
        order = np.lexsort(tuple(pts[:, i] for i in range(pts.shape[1] - 1, -1, -1)) + (inv,))
        pts, inv = pts[order], inv[order]
        counts = np.bincount(inv, minlength=uniq.size)
        start = 0
        for k, lap_k in enumerate(uniq):
            mu = float(lap_k) + model.a
            labels = tuple(tuple(int(v) for v in p) for p in pts[start:start + counts[k]])
            modes.append(SpectralMode(k, mu, int(counts[k]), math.sqrt(mu + shift), labels))
            start += counts[k]
        return Spectrum(model, modes, pts, inv)
    if spec.kind == "sphere":
        d, sigma = spec.dim, spec.radii[0]
        ell = 0
        while True:
            lap = ell * (ell + d - 1) / sigma ** 2
            if lap > bound * (1 + 1e-12):
                break
            mu = lap + model.a
            modes.append(SpectralMode(ell, mu, _sphere_dim_harmonics(d, ell), math.sqrt(mu + shift), (ell,)))
            ell += 1
        return Spectrum(model, modes)
    # custom
    entries = sorted(spec.custom_modes, key=lambda e: (e[0], e[2]))
    order = []
    for mu_lap, mult, eid in entries:
        mu = mu_lap + model.a
        if mu + shift <= 0:
            raise HypothesisViolation("hypothesis violated: P not positive")
        nu = math.sqrt(mu + shift)
        if nu <= nu_max:
            modes.append(SpectralMode(len(modes), mu, mult, nu, (eid,)))
            order.append((mu, mult, eid))
    sp = Spectrum(model, modes)
    sp._custom_order = order
    sp.exhaustive = len(order) == len(entries)
    return sp


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def _group_lengths(lengths, mults=None, tol=1e-10):
    lengths = np.sort(np.asarray(lengths, dtype=float))
    out: list[list] = []
    for L in lengths:
        if out and abs(L - out[-1][0]) <= tol * max(1.0, L):
            out[-1][1] += 1
        else:
            out.append([float(L), 1])
    return [(L, m) for L, m in out]


def distance_spectrum(spec: CrossSectionSpec, y1, y2, cutoff: float = math.pi + DEFAULT_EPSILON):
    """Lengths of geodesics joining y2 to y1 below ``cutoff``, with multiplicity.

    Multiplicity is an integer, or ``"degenerate"`` where the connecting
    geodesics of that length form a continuum (spheres: coincident points
    for closed loops, antipodal points).
    """
    if not (0 < cutoff <= math.pi + 1):
        raise DomainError("cutoff must lie in (0, pi + 1]")
    if spec.kind == "custom":
        raise GeometryUnavailable("geometry unavailable for a custom spectrum")
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if spec.kind in ("circle", "torus"):
        radii = np.asarray(spec.radii)
        delta = np.mod(y1 - y2, 2.0 * math.pi)
        delta = np.where(delta > math.pi, delta - 2.0 * math.pi, delta)
        reach = [int(math.ceil(cutoff / (2 * math.pi * s))) + 1 for s in radii]
        shifts = itertools.product(*[range(-m, m + 1) for m in reach])
        lengths = []
        for m in shifts:
            L = math.sqrt(float(np.sum((radii * (delta + 2.0 * math.pi * np.asarray(m))) ** 2)))
            if L < cutoff:
                lengths.append(L)
        return _group_lengths(lengths)
    sigma = spec.radii[0]
    circ = 2.0 * math.pi * sigma
    d = float(spec.geodesic_distance(y1, y2))
    if spec.dim == 1:
        ang = lambda y: np.array([math.atan2(y[1], y[0])])
        return distance_spectrum(CrossSectionSpec.circle(sigma), ang(y1), ang(y2), cutoff)
    coincident = d <= 1e-12 * sigma
    antipodal = abs(d - math.pi * sigma) <= 1e-12 * sigma
    out = []
    m = 0
    while True:
        cands = [d + circ * m, circ - d + circ * m]
        if min(cands) >= cutoff:
            break
        for L in sorted(set(cands)):
            if L >= cutoff:
                continue
            if coincident:
                mult = 1 if L == 0 else DEGENERATE
            elif antipodal:
                mult = DEGENERATE
            else:
                mult = 1
            out.append((float(L), mult))
        m += 1
    out.sort(key=lambda e: e[0])
    merged = []
    for L, mult in out:
        if merged and abs(merged[-1][0] - L) <= 1e-10 * max(1.0, L):
            continue
        merged.append((L, mult))
    return merged


def weyl_slope(modes, count: int | None = None) -> float:
    """Slope of log nu_k^2 against log(1 + k) over the upper half of the list.

    ``modes`` is a sequence of :class:`SpectralMode` (expanded by
    multiplicity) or a plain array of nu values already expanded. ``count``
    limits the expanded list to its first entries.
    """
    if len(modes) and isinstance(modes[0], SpectralMode):
        nus = np.repeat([m.nu for m in modes], [m.multiplicity for m in modes])
    else:
        nus = np.asarray(modes, dtype=float)
    nus = np.sort(nus)
    if count is not None:
        nus = nus[:count]
    if nus.size < 50:
        raise InsufficientData(f"weyl_slope needs >= 50 modes, got {nus.size}")
    k = np.arange(nus.size)
    half = nus.size // 2
    x = np.log1p(k[half:])
    y = np.log(nus[half:] ** 2)
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


# ---------------------------------------------------------------------------
# quadrature on Y
# ---------------------------------------------------------------------------

def y_grid(spec: CrossSectionSpec, m: int = 32):
    """Quadrature nodes and weights on Y; weights sum to vol(Y).

    Circle/torus: periodic trapezoid with ``m`` nodes per angle. S^d: Gauss
    rule in the polar angle (Legendre for d = 2, Gauss-Jacobi otherwise)
    times trapezoid in the azimuth, recursively for d > 2.
    """
    if spec.kind in ("circle", "torus"):
        th = 2.0 * math.pi * np.arange(m) / m
        grids = np.meshgrid(*([th] * spec.dim), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        w = np.full(pts.shape[0], spec.volume / pts.shape[0])
        return pts, w
    if spec.kind == "sphere":
        pts, w = _sphere_grid(spec.dim, m)
        sigma = spec.radii[0]
        return pts, w * sigma ** spec.dim
    raise GeometryUnavailable("no quadrature grid for a custom spectrum")


def _sphere_grid(d, m):
    if d == 1:
        th = 2.0 * math.pi * np.arange(2 * m) / (2 * m)
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(2 * m, math.pi / m)
    # polar cosine c in [-1, 1] with weight (1 - c^2)^{(d-2)/2}
    if d == 2:
        c, wc = np.polynomial.legendre.leggauss(m)
    else:
        e = (d - 2) / 2.0
        c, wc = special.roots_jacobi(m, e, e)
    sub, wsub = _sphere_grid(d - 1, m)
    s = np.sqrt(1.0 - c * c)
    pts = np.concatenate(
        [np.repeat(s, sub.shape[0])[:, None] * np.tile(sub, (m, 1)), np.repeat(c, sub.shape[0])[:, None]],
        axis=-1,
    )
    w = np.repeat(wc, sub.shape[0]) * np.tile(wsub, m)
    return pts, w
