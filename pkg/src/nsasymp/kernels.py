"""Composite heat kernels d_t^l grad^beta R_k1...R_kr (-Delta)^{-p/2} G(t).

Every kernel is evaluated spectrally from its symbol; the Hermite closed form
for pure derivatives of G is kept as an independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import DomainError, ResolutionError, UnsupportedOrderError
from .spectral import Grid, PhysicalField, field_from_symbol

MAX_ORDER = 12


@dataclass(frozen=True)
class KernelSpec:
    l: int = 0
    beta: tuple = (0, 0)
    riesz: tuple = ()
    inv_sqrt_pow: int = 0
    t: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(int(b) for b in self.beta))
        object.__setattr__(self, "riesz", tuple(int(k) for k in self.riesz))
        if self.l < 0 or any(b < 0 for b in self.beta):
            raise ValueError("derivative orders must be nonnegative")
        if self.inv_sqrt_pow not in (0, 1, 2):
            raise ValueError("inv_sqrt_pow must be 0, 1 or 2")
        if any(k < 1 or k > len(self.beta) for k in self.riesz):
            raise ValueError(f"Riesz index out of range in {self.riesz}")
        if not self.t > 0:
            raise ValueError("kernel time must be positive")
        if 2 * self.l + sum(self.beta) > MAX_ORDER:
            raise UnsupportedOrderError(
                f"derivative order 2l+|beta| = {2 * self.l + sum(self.beta)} exceeds {MAX_ORDER}")

    @property
    def order(self) -> int:
        return 2 * self.l + sum(self.beta)

    @property
    def singular(self) -> bool:
        return bool(self.riesz) or self.inv_sqrt_pow > 0


def symbol_values(spec: KernelSpec, xi: tuple) -> np.ndarray:
    """Symbol of ``spec`` on frequency arrays ``xi``; the origin follows the m(0) rule."""
    a2 = sum(k**2 for k in xi)
    out = np.exp(-spec.t * a2).astype(complex)
    if spec.l:
        out = out * (-a2) ** spec.l
    for k, b in zip(xi, spec.beta):
        if b:
            out = out * (1j * k) ** b
    if spec.singular:
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.sqrt(a2)
            for k in spec.riesz:
                out = out * (1j * xi[k - 1] / a)
            if spec.inv_sqrt_pow:
                out = out / a**spec.inv_sqrt_pow
        out[(0,) * len(xi)] = 0.0
    else:
        out[(0,) * len(xi)] = 1.0 if spec.l + sum(spec.beta) == 0 else 0.0
    return out


@lru_cache(maxsize=64)
def kernel_symbol(spec: KernelSpec, grid: Grid) -> np.ndarray:
    """Half-spectrum symbol; lru_cache is internally synchronized."""
    if len(spec.beta) != grid.n:
        raise ValueError("multi-index length does not match grid dimension")
    sym = symbol_values(spec, grid.rxi)
    sym.setflags(write=False)
    return sym


def check_resolution(t: float, grid: Grid) -> None:
    width = math.sqrt(4 * t)
    if width < 3 * grid.dx:
        raise ResolutionError(f"sqrt(4t) = {width:.4g} < 3 dx = {3 * grid.dx:.4g}: t too small for grid")
    if width * grid.xi_max < 6:
        raise ResolutionError(
            f"sqrt(4t) * xi_max = {width * grid.xi_max:.4g} < 6: spectral tail not resolved")


def boundary_ratio(data: np.ndarray) -> float:
    """max |f| on the outer box faces relative to max |f|."""
    peak = np.max(np.abs(data))
    if peak == 0:
        return 0.0
    edge = max(np.max(np.abs(np.take(data, i, axis=a)))
               for a in range(data.ndim) for i in (0, -1))
    return float(edge / peak)


def kernel_field(spec: KernelSpec, grid: Grid, *, check_decay: bool = True,
                 decay_tol: float = 1e-12) -> PhysicalField:
    check_resolution(spec.t, grid)
    data = field_from_symbol(kernel_symbol(spec, grid), grid)
    if check_decay and not spec.singular:
        ratio = boundary_ratio(data)
        if ratio > decay_tol:
            raise ResolutionError(
                f"kernel at t={spec.t} reaches {ratio:.2e} of its max on the box boundary "
                f"(> {decay_tol:g}): t too large for L={grid.L}")
    return PhysicalField(grid, data, spec.t)


def hermite(k: int, z):
    """Physicists' Hermite polynomial via H_{k+1} = 2z H_k - 2k H_{k-1}."""
    z = np.asarray(z, dtype=float)
    h_prev, h = np.ones_like(z), 2 * z
    if k == 0:
        return h_prev
    for j in range(1, k):
        h_prev, h = h, 2 * z * h - 2 * j * h_prev
    return h


def hermite_gauss_derivative(alpha, t: float, x):
    """Closed form of grad^alpha G(t, x); ``x`` is a point or a tuple of coordinate arrays."""
    alpha = tuple(int(a) for a in alpha)
    if sum(alpha) > MAX_ORDER:
        raise UnsupportedOrderError(f"|alpha| = {sum(alpha)} exceeds {MAX_ORDER}")
    if not t > 0:
        raise ValueError("t must be positive")
    n = len(alpha)
    s = math.sqrt(4 * t)
    out = (4 * math.pi * t) ** (-n / 2)
    r2 = 0.0
    for a, xi in zip(alpha, x):
        xi = np.asarray(xi, dtype=float)
        out = out * (-1) ** a * s ** (-a) * hermite(a, xi / s)
        r2 = r2 + xi**2
    return out * np.exp(-r2 / (4 * t))


def scalar_time_weight(l: int, exponent_a: float, t: float, mode: str = "finite_0_to_t") -> float:
    """int_0^t s^l (1+s)^a ds, or int_t^inf s^l ((1+s)^a - s^a) ds in tail mode."""
    if mode == "finite_0_to_t":
        if math.isinf(t) and l + exponent_a >= -1:
            raise DomainError(f"int_0^inf s^{l}(1+s)^{exponent_a} ds diverges")
        if t == 0:
            return 0.0
        f = lambda s: s**l * (1 + s) ** exponent_a
        if math.isinf(t):
            v1, _ = integrate.quad(f, 0, 1, epsabs=0, epsrel=1e-12, limit=200)
            v2, _ = integrate.quad(f, 1, np.inf, epsabs=0, epsrel=1e-12, limit=200)
            return v1 + v2
        v, _ = integrate.quad(f, 0, t, epsabs=0, epsrel=1e-12, limit=200)
        return v
    if mode == "tail_t_to_inf":
        # (1+s)^a - s^a ~ a s^(a-1), so integrability needs l + a < 0
        if l + exponent_a >= 0:
            raise DomainError(f"tail integral with l={l}, a={exponent_a} diverges")
        if not t > 0:
            raise DomainError("tail mode needs t > 0")

        def f(s):
            # s^a ((1+1/s)^a - 1), cancellation-free
            return s ** (l + exponent_a) * math.expm1(exponent_a * math.log1p(1.0 / s))
        v, _ = integrate.quad(f, t, np.inf, epsabs=0, epsrel=1e-12, limit=400)
        return v
    raise ValueError(f"unknown mode {mode!r}")
