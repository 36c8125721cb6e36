"""Periodic-box discretization of R^n: grids, fields, FFT contract, multipliers.

Physical arrays are stored in centered order, x_i = -L/2 + i*dx, so the origin
sits at index N/2 on every axis. Spectral coefficients are origin-referenced
(the ``ifftshift`` is folded into the transform) and unitary ("ortho")
normalized; wavenumbers are in numpy FFT order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, DataError, EvaluationError, PreconditionError

Multiplier = Callable[[tuple], np.ndarray]

NSAF_MAGIC = b"NSAF"
NSAF_VERSION = 1


@dataclass(frozen=True)
class Grid:
    n: int
    N: int
    L: float

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ConfigurationError(f"dimension n={self.n} not supported")
        if self.N < 16 or self.N & (self.N - 1):
            raise ConfigurationError(f"N={self.N} must be a power of two >= 16")
        if not self.L > 0:
            raise ConfigurationError(f"box length L={self.L} must be positive")

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**self.n

    @cached_property
    def x1d(self) -> np.ndarray:
        return -self.L / 2 + self.dx * np.arange(self.N)

    @cached_property
    def x(self) -> tuple:
        return tuple(np.meshgrid(*([self.x1d] * self.n), indexing="ij", sparse=True))

    @cached_property
    def r(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.x))

    @cached_property
    def xi1d(self) -> np.ndarray:
        return 2 * np.pi / self.L * sfft.fftfreq(self.N, d=1.0 / self.N)

    @cached_property
    def xi(self) -> tuple:
        return tuple(np.meshgrid(*([self.xi1d] * self.n), indexing="ij", sparse=True))

    @cached_property
    def xi2(self) -> np.ndarray:
        return sum(k**2 for k in self.xi)

    @cached_property
    def rxi(self) -> tuple:
        """Wavenumber meshes for the half (real-input) spectrum."""
        k_last = 2 * np.pi / self.L * np.arange(self.N // 2 + 1)
        axes = [self.xi1d] * (self.n - 1) + [k_last]
        return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))

    @cached_property
    def rxi_odd(self) -> tuple:
        """``rxi`` with the Nyquist wavenumber zeroed, for odd-order derivatives."""
        out = []
        for a, k in enumerate(self.rxi):
            k = k.copy()
            idx = [slice(None)] * self.n
            idx[a] = self.N // 2
            k[tuple(idx)] = 0.0
            out.append(k)
        return tuple(out)

    @cached_property
    def rxi2(self) -> np.ndarray:
        return sum(k**2 for k in self.rxi)

    @property
    def xi_max(self) -> float:
        return np.pi / self.dx


@dataclass(frozen=True, eq=False)
class PhysicalField:
    grid: Grid
    data: np.ndarray
    time_tag: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape != self.grid.shape:
            raise DataError(f"field shape {data.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("field contains non-finite values")
        if self.time_tag < 0:
            raise DataError("time_tag must be nonnegative")
        object.__setattr__(self, "data", data)

    def with_data(self, data) -> "PhysicalField":
        return PhysicalField(self.grid, data, self.time_tag)


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray
    time_tag: float = 0.0

    def hermitian_defect(self) -> float:
        c = self.coeffs
        scale = np.max(np.abs(c)) or 1.0
        return float(np.max(np.abs(c - np.conj(_reflect(c)))) / scale)


def _reflect(c: np.ndarray) -> np.ndarray:
    """c(-xi) in FFT index order."""
    axes = tuple(range(c.ndim))
    return np.roll(np.flip(c, axis=axes), 1, axis=axes)


def _hermitian_project(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + np.conj(_reflect(c)))


def transform(f, direction: str | None = None):
    """Unitary FFT pair between PhysicalField and SpectralField."""
    if direction is None:
        direction = "forward" if isinstance(f, PhysicalField) else "inverse"
    if direction == "forward":
        if not isinstance(f, PhysicalField):
            raise DataError("forward transform needs a PhysicalField")
        coeffs = sfft.fftn(sfft.ifftshift(f.data), norm="ortho")
        return SpectralField(f.grid, coeffs, f.time_tag)
    if direction == "inverse":
        if not isinstance(f, SpectralField):
            raise DataError("inverse transform needs a SpectralField")
        if not np.all(np.isfinite(f.coeffs)):
            raise DataError("spectral coefficients contain non-finite values")
        data = sfft.fftshift(sfft.ifftn(f.coeffs, norm="ortho").real)
        return PhysicalField(f.grid, data, f.time_tag)
    raise ConfigurationError(f"unknown transform direction {direction!r}")


def evaluate_multiplier(m, grid: Grid, *, half: bool = False, zero_mean: bool = False) -> np.ndarray:
    xi = grid.rxi if half else grid.xi
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.asarray(m(xi)) if callable(m) else np.asarray(m)
    shape = tuple(k.shape[i] for i, k in enumerate(xi))
    values = np.broadcast_to(values, shape).astype(complex)
    origin = (0,) * grid.n
    bad = ~np.isfinite(values)
    bad[origin] = False
    if np.any(bad):
        raise EvaluationError(f"multiplier is not finite at {int(bad.sum())} nonzero wavenumbers")
    if not np.isfinite(values[origin]):
        if not zero_mean:
            raise EvaluationError("multiplier singular at xi=0; declare zero_mean input")
        values[origin] = 0.0
    return values


def apply_multiplier(f: SpectralField, m, *, zero_mean: bool = False) -> SpectralField:
    """coeff'(xi) = m(xi) * coeff(xi), projected back onto Hermitian spectra."""
    values = evaluate_multiplier(m, f.grid, zero_mean=zero_mean)
    if zero_mean:
        values = values.astype(complex)
        values[(0,) * f.grid.n] = 0.0
    return SpectralField(f.grid, _hermitian_project(values * f.coeffs), f.time_tag)


# -- symbol library ---------------------------------------------------------


def _safe_abs(xi) -> np.ndarray:
    a = np.sqrt(sum(k**2 for k in xi))
    return np.where(a == 0, np.inf, a)


def derivative_symbol(beta: Sequence[int]) -> Multiplier:
    def m(xi):
        out = 1.0 + 0j
        for k, b in zip(xi, beta):
            if b:
                out = out * (1j * k) ** b
        return out
    return m


def riesz_symbol(k: int) -> Multiplier:
    """R_k = d_k (-Delta)^{-1/2}, i xi_k/|xi|, with m(0) := 0 (1-based index)."""
    return lambda xi: 1j * xi[k - 1] / _safe_abs(xi)


def inv_sqrt_laplacian_symbol(p: int) -> Multiplier:
    """(-Delta)^{-p/2}, with m(0) := 0 for p > 0."""
    if p == 0:
        return lambda xi: np.ones_like(xi[0] * xi[-1], dtype=float)
    return lambda xi: _safe_abs(xi) ** (-float(p))


def heat_symbol(t: float) -> Multiplier:
    return lambda xi: np.exp(-t * sum(k**2 for k in xi))


def leray_symbol(j: int, k: int) -> Multiplier:
    """P_jk = delta_jk + R_j R_k (1-based)."""
    def m(xi):
        a2 = sum(c**2 for c in xi)
        a2 = np.where(a2 == 0, np.inf, a2)
        return float(j == k) - xi[j - 1] * xi[k - 1] / a2
    return m


def compose(*ms: Multiplier) -> Multiplier:
    def m(xi):
        out = 1.0 + 0j
        for f in ms:
            out = out * f(xi)
        return out
    return m


# -- continuous-normalized transforms (internal) -----------------------------


def fourier_c(data: np.ndarray, grid: Grid) -> np.ndarray:
    """Half-spectrum approximation of the continuous transform int f(x) e^{-ix.xi} dx."""
    return sfft.rfftn(sfft.ifftshift(data)) * grid.cell_volume


def inverse_fourier_c(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse of ``fourier_c``: (2 pi)^{-n} int F(xi) e^{ix.xi} d xi, periodized."""
    return sfft.fftshift(sfft.irfftn(coeffs, s=grid.shape)) / grid.cell_volume


def field_from_symbol(symbol: np.ndarray, grid: Grid) -> np.ndarray:
    """Periodized physical kernel with half-spectrum continuous symbol ``symbol``."""
    return inverse_fourier_c(symbol, grid)


# -- vorticity / velocity ----------------------------------------------------


def mean_defect(omega: np.ndarray) -> float:
    l1 = np.sum(np.abs(omega))
    return float(abs(np.sum(omega)) / l1) if l1 > 0 else 0.0


def biot_savart(omega: PhysicalField, *, mean_tol: float = 1e-10):
    """Velocity (u1, u2) of a 2D scalar vorticity omega = d1 u2 - d2 u1.

    u_j = -sum_k d_k (-Delta)^{-1} omega_kj with omega_12 = omega, omega_21 = -omega,
    i.e. u = (d2 psi, -d1 psi) where -Delta psi = omega.
    """
    grid = omega.grid
    if grid.n != 2:
        raise PreconditionError("biot_savart is implemented for n = 2")
    defect = mean_defect(omega.data)
    if defect > mean_tol:
        raise PreconditionError(f"vorticity must have zero mean; |int w|/||w||_1 = {defect:.3e}")
    u1, u2 = velocity_from_vorticity_array(omega.data, grid)
    return PhysicalField(grid, u1, omega.time_tag), PhysicalField(grid, u2, omega.time_tag)


def velocity_from_vorticity_array(omega: np.ndarray, grid: Grid):
    w_hat = sfft.rfftn(omega)
    return velocity_from_vorticity_hat(w_hat, grid)


def velocity_from_vorticity_hat(w_hat: np.ndarray, grid: Grid):
    k1, k2 = grid.rxi_odd
    k2s = grid.rxi2.copy()
    k2s[0, 0] = np.inf
    psi_hat = w_hat / k2s
    u1 = sfft.irfftn(1j * k2 * psi_hat, s=grid.shape)
    u2 = sfft.irfftn(-1j * k1 * psi_hat, s=grid.shape)
    return u1, u2


def curl(u1: PhysicalField, u2: PhysicalField) -> PhysicalField:
    grid = u1.grid
    k1, k2 = grid.rxi_odd
    w = sfft.irfftn(1j * k1 * sfft.rfftn(u2.data) - 1j * k2 * sfft.rfftn(u1.data), s=grid.shape)
    return PhysicalField(grid, w, u1.time_tag)


def spectral_divergence_defect(u1: np.ndarray, u2: np.ndarray, grid: Grid) -> float:
    """max |xi . u_hat| / max |u_hat|."""
    a, b = sfft.rfftn(u1), sfft.rfftn(u2)
    k1, k2 = grid.rxi_odd
    scale = max(np.max(np.abs(a)), np.max(np.abs(b))) or 1.0
    return float(np.max(np.abs(k1 * a + k2 * b)) / scale)


# -- NSAF snapshot format ----------------------------------------------------

_HEADER = struct.Struct("<4sIIIdd")


def write_nsaf(path, f: PhysicalField) -> None:
    g = f.grid
    header = _HEADER.pack(NSAF_MAGIC, NSAF_VERSION, g.n, g.N, float(g.L), float(f.time_tag))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.data, dtype="<f8").tobytes())


def read_nsaf(path) -> PhysicalField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated NSAF header")
    magic, version, n, N, L, t = _HEADER.unpack_from(raw)
    if magic != NSAF_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != NSAF_VERSION:
        raise DataError(f"{path}: unsupported NSAF version {version}")
    grid = Grid(n, N, L)
    count = N**n
    body = raw[_HEADER.size:]
    if len(body) != 8 * count:
        raise DataError(f"{path}: expected {count} samples, found {len(body) // 8}")
    data = np.frombuffer(body, dtype="<f8").reshape(grid.shape).astype(float)
    return PhysicalField(grid, data, t)
