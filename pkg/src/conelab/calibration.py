"""
Calibrated constants for the Bessel envelopes.

The table ``data/envelope_constants.tsv`` is produced by :func:`calibrate`
(run ``python -m conelab.calibration`` to regenerate it) and read once,
lazily, by :func:`envelope_constants`. Rows:

``C_abs``   absolute constant of the small-argument bound (one row, nu = *)
``C_nu``    constant of the order-dependent bound C_nu r^nu (1+r)^(-nu-1/2)
``Cp_nu``   constant of the derivative bound C'_nu r^(nu-1) (1+r)^(-nu+1/2)

Each row carries a hash of the scan grid so stale tables are detectable.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

TABLE_VERSION = 1
NU_STEP = 0.1
NU_MAX = 30.0
R_STEP = 0.02
R_MAX = 150.0
# multiplicative head-room applied to every scanned maximum
MARGIN = 1.02


def scan_grid_hash(nu_step=NU_STEP, nu_max=NU_MAX, r_step=R_STEP, r_max=R_MAX) -> str:
    desc = f"v{TABLE_VERSION};nu=0:{nu_max}:{nu_step};r=0:{r_max}:{r_step};margin={MARGIN}"
    return hashlib.sha256(desc.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class EnvelopeTable:
    c_abs: float
    nu: np.ndarray
    c_nu: np.ndarray
    cp_nu: np.ndarray
    grid_hash: str

    def _lookup(self, table, nu):
        nu = np.asarray(nu, dtype=float)
        pos = nu / NU_STEP
        near = np.rint(pos)
        on_node = np.abs(pos - near) < 1e-7
        lo = np.clip(np.floor(pos).astype(int), 0, self.nu.size - 1)
        hi = np.clip(lo + 1, 0, self.nu.size - 1)
        node = np.clip(near.astype(int), 0, self.nu.size - 1)
        between = np.maximum(table[lo], table[hi]) * MARGIN
        out = np.where(on_node, table[node], between)
        return np.where((nu < 0) | (nu > self.nu[-1] + 1e-9), np.inf, out)

    def c_order(self, nu):
        """C_nu; +inf outside the calibrated order range."""
        return self._lookup(self.c_nu, nu)

    def c_derivative(self, nu):
        return self._lookup(self.cp_nu, nu)


def calibrate(nu_step=NU_STEP, nu_max=NU_MAX, r_step=R_STEP, r_max=R_MAX) -> EnvelopeTable:
    """Scan |J_nu| and |J'_nu| against the envelope shapes and record the maxima."""
    from . import specfun as sf

    nus = np.round(np.arange(0.0, nu_max + 0.5 * nu_step, nu_step), 10)
    r = np.arange(0.0, r_max + 0.5 * r_step, r_step)
    rp = r[1:]
    c_nu = np.empty(nus.size)
    cp_nu = np.empty(nus.size)
    c_abs = 0.0
    for i, nu in enumerate(nus):
        j = np.abs(sf.jv(nu, r))
        with np.errstate(divide="ignore", invalid="ignore"):
            c_nu[i] = np.nanmax(np.where(r > 0, j / sf._order_shape(nu, r), j[0])) * MARGIN
            c_abs = max(c_abs, np.nanmax(j / sf._small_arg_shape(nu, r)))
            dj = np.abs(sf.jvp(nu, rp))
            cp_nu[i] = np.nanmax(dj / sf._derivative_shape(nu, rp)) * MARGIN
    # |J_nu(x)| <= (x/2)^nu / Gamma(nu+1) gives the absolute constant pi/3
    # analytically; keep the larger of that and the scan.
    c_abs = max(c_abs * MARGIN, math.pi / 3.0)
    return EnvelopeTable(c_abs, nus, c_nu, cp_nu, scan_grid_hash(nu_step, nu_max, r_step, r_max))


def write_table(table: EnvelopeTable, path: Path) -> None:
    lines = [f"# conelab envelope constants v{TABLE_VERSION}", "name\tnu\tC_nu\tscan_grid_hash"]
    lines.append(f"C_abs\t*\t{float(table.c_abs)!r}\t{table.grid_hash}")
    for nu, c in zip(table.nu, table.c_nu):
        lines.append(f"C_nu\t{nu:.1f}\t{float(c)!r}\t{table.grid_hash}")
    for nu, c in zip(table.nu, table.cp_nu):
        lines.append(f"Cp_nu\t{nu:.1f}\t{float(c)!r}\t{table.grid_hash}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_table(text: str) -> EnvelopeTable:
    c_abs = None
    rows = {"C_nu": [], "Cp_nu": []}
    hashes = set()
    for line in text.splitlines():
        if not line or line.startswith("#") or line.startswith("name"):
            continue
        name, nu, c, h = line.split("\t")
        hashes.add(h)
        if name == "C_abs":
            c_abs = float(c)
        else:
            rows[name].append((float(nu), float(c)))
    if c_abs is None or len(hashes) != 1:
        raise ValueError("malformed envelope constants table")
    nu = np.array([a for a, _ in rows["C_nu"]])
    return EnvelopeTable(
        c_abs,
        nu,
        np.array([b for _, b in rows["C_nu"]]),
        np.array([b for _, b in rows["Cp_nu"]]),
        hashes.pop(),
    )


@lru_cache(maxsize=1)
def envelope_constants() -> EnvelopeTable:
    text = resources.files("conelab").joinpath("data/envelope_constants.tsv").read_text()
    return read_table(text)


if __name__ == "__main__":
    out = Path(__file__).with_name("data") / "envelope_constants.tsv"
    write_table(calibrate(), out)
    print(f"wrote {out}")
