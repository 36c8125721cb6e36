"""Expansion profiles Omega, U, U^T, U^S and the corrections K, V, V^T, Vtilde, Vtilde^T, J.

Every profile except J is a finite sum of heat-kernel symbols times scalar moments, so
it is assembled as one half-spectrum symbol and transformed once. J needs an
s-quadrature; it is done on the Fourier side using the self-similar form of I.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DependencyError, QuadratureError, UnsupportedOrderError
from .kernels import KernelSpec, check_resolution, scalar_time_weight, symbol_values
from .moments import (ITensor, MomentEntry, MomentKey, MomentSeries, MomentTable,
                      build_I_tensor, spacetime_moment, spatial_moment_with_error)
from .solver import PAIRS
from .spectral import Grid, PhysicalField, field_from_symbol

log = logging.getLogger(__name__)

N_DIM = 2
OMEGA0_SIGN = {(1, 2): 1.0, (2, 1): -1.0}


class TermKind(str, enum.Enum):
    Omega = "Omega"
    U = "U"
    UT = "UT"
    US = "US"
    K = "K"
    V = "V"
    VT = "VT"
    Vtilde = "Vtilde"
    VtildeT = "VtildeT"
    J = "J"


VELOCITY_KINDS = (TermKind.U, TermKind.UT, TermKind.US)
CORRECTION_KINDS = (TermKind.K, TermKind.V, TermKind.VT, TermKind.Vtilde, TermKind.VtildeT)


@dataclass
class Profile:
    kind: TermKind
    order: int
    component: tuple
    t: float
    field: PhysicalField
    provenance: list = field(default_factory=list)


def graded(d: int):
    """(l, beta) with 2l + |beta| = d in two dimensions."""
    out = []
    for l in range(d // 2 + 1):
        r = d - 2 * l
        for b1 in range(r, -1, -1):
            out.append((l, (b1, r - b1)))
    return out


def multi(d: int):
    return [(b1, d - b1) for b1 in range(d, -1, -1)]


def _fact(l: int, beta) -> float:
    out = math.factorial(l)
    for b in beta:
        out *= math.factorial(b)
    return float(out)


def _monomial(l: int, beta, xi) -> np.ndarray:
    a2 = xi[0] ** 2 + xi[1] ** 2
    out = (1j * xi[0]) ** beta[0] * (1j * xi[1]) ** beta[1]
    return out * (-a2) ** l if l else out


def _prefactor(grid: Grid, t: float, riesz=(), inv: int = 0) -> np.ndarray:
    return symbol_values(KernelSpec(0, (0, 0), riesz, inv, t), grid.rxi)


def _rr(xi, k: int, j: int) -> np.ndarray:
    """Symbol of R_k R_j without the heat factor; zero at the origin."""
    a2 = xi[0] ** 2 + xi[1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -xi[k - 1] * xi[j - 1] / a2
    return np.where(a2 > 0, out, 0.0)


def _panels(t: float, per_side: int, span: int):
    """Geometric panel edges clustering at s = 0 and s = t; returns (edges, s0)."""
    ratios = 2.0 ** (-span * np.arange(per_side + 1) / per_side)
    left = (t / 2) * ratios[::-1]
    right = t - (t / 2) * ratios
    edges = np.concatenate([left, right[1:], [t]])
    return edges, float(left[0])


class Expansion:
    """Profiles for one trajectory: omega_0 moments plus space-time moments of omega u."""

    def __init__(self, omega0: PhysicalField, series: MomentSeries | None = None, *,
                 tensor_grid: Grid | None = None, decade: float = 10.0,
                 tail_fraction_max: float = 0.05, j_per_side: int = 16, j_span: int = 16,
                 j_order: int = 8, j_tol: float = 1e-4, moment_gate: float = 1e-8, source: str = ""):
        if omega0.grid.n != N_DIM:
            raise UnsupportedOrderError("profiles are implemented for n = 2")
        self.n = N_DIM
        self.omega0 = omega0
        self.series = series
        self.tensor_grid = tensor_grid or omega0.grid
        self.decade = decade
        self.tail_fraction_max = tail_fraction_max
        self.moment_gate = moment_gate
        self.j_per_side, self.j_span, self.j_order, self.j_tol = j_per_side, j_span, j_order, j_tol
        self.table = MomentTable(source_trajectory=source)
        self._a = {}
        self._flux = {}
        self._tensors = {}
        self._j_cache = {}
        self.j_convergence = {}
        self.provenance = {}

    # -- coefficients --------------------------------------------------------

    def omega0_moment(self, alpha, k: int, j: int) -> float:
        sign = OMEGA0_SIGN.get((k, j), 0.0)
        if sign == 0.0:
            return 0.0
        alpha = tuple(alpha)
        if alpha not in self._a:
            value, trunc = spatial_moment_with_error(self.omega0, alpha, threshold=self.moment_gate)
            self._a[alpha] = value
            self.table.record(MomentKey(0, alpha, "omega0", 1, 2), MomentEntry(value, 0.0, trunc))
        return sign * self._a[alpha]

    def I_moments(self, m: int) -> dict:
        out = {}
        for p in range(3, m + 3):
            T = self.tensor(p)
            for hk, mom in T.moments.items():
                out[(p, *hk)] = mom
        return out

    def flux(self, l: int, beta, k: int, horizon: float = math.inf, m: int = 0) -> float:
        """sum_h int_0^horizon int (-s)^l (-y)^beta (omega_hk u_h - renormalization) dy ds."""
        beta = tuple(beta)
        ck = (l, beta, k, horizon, m)
        if ck in self._flux:
            return self._flux[ck]
        total = 0.0
        if self.series is not None:
            I_mom = self.I_moments(m) if m else None
            for h, kk in PAIRS:
                if kk != k:
                    continue
                key = MomentKey(l, beta, "omega_u_minus_I" if m else "omega_u", h, k, m)
                res = spacetime_moment(self.series, key, horizon, I_moments=I_mom, decade=self.decade)
                total += res.value
                if math.isinf(horizon):
                    self.table.record(key, MomentEntry(res.value, res.tail_fraction, res.trunc_err))
                    if res.tail_fraction > self.tail_fraction_max and abs(res.value) > 1e-12:
                        log.warning("moment %s: tail fraction %.3f exceeds %.2f", key,
                                    res.tail_fraction, self.tail_fraction_max)
        self._flux[ck] = total
        return total

    def tensor(self, p: int) -> ITensor:
        if p not in self._tensors:
            g = self.tensor_grid
            if p <= 2:
                self._tensors[p] = build_I_tensor(p, {}, {}, g, n=self.n)
            elif self.series is None:
                # no nonlinear flux, nothing to renormalize
                self._tensors[p] = ITensor(p, self.n, g, {}, 6, {})
            else:
                om = {M: {hk: self.omega_field(M, hk, 1.0, g) for hk in PAIRS} for M in range(2, p)}
                vel = {i: {h: self.velocity_field(TermKind.U, i, h, 1.0, g)
                           + self.velocity_field(TermKind.UT, i, h, 1.0, g) for h in (1, 2)}
                       for i in range(1, p - 1)}
                self._tensors[p] = build_I_tensor(p, om, vel, g, n=self.n)
        return self._tensors[p]

    def _B(self, T: ITensor, l: int, beta, k: int) -> float:
        """(-1)^l sum_h int (-y)^beta I_hk(1, y) dy."""
        total = sum(mom[beta[0], beta[1]] for (h, kk), mom in T.moments.items() if kk == k)
        return (-1) ** l * float(total)

    # -- symbols -------------------------------------------------------------

    def omega_symbol(self, M: int, hk, t: float, grid: Grid) -> np.ndarray:
        if not 2 <= M <= self.n + 1:
            raise UnsupportedOrderError(f"Omega order {M} outside 2..{self.n + 1}")
        h, k = hk
        xi = grid.rxi
        poly = np.zeros(grid.rxi2.shape, dtype=complex)
        for alpha in multi(M):
            c = self.omega0_moment(alpha, h, k)
            if c:
                poly += _monomial(0, alpha, xi) * (c / _fact(0, alpha))
        if h != k:
            for l, beta in graded(M - 1):
                ch, ck = self.flux(l, beta, h), self.flux(l, beta, k)
                bk = (beta[0] + (k == 1), beta[1] + (k == 2))
                bh = (beta[0] + (h == 1), beta[1] + (h == 2))
                f = _fact(l, beta)
                if ch:
                    poly += _monomial(l, bk, xi) * (ch / f)
                if ck:
                    poly -= _monomial(l, bh, xi) * (ck / f)
        return _prefactor(grid, t) * poly

    def _flux_poly(self, M: int, k: int, xi, horizon: float, m: int) -> np.ndarray:
        poly = 0.0
        for l, beta in graded(M):
            c = self.flux(l, beta, k, horizon, m)
            if c:
                poly = poly + _monomial(l, beta, xi) * (c / _fact(l, beta))
        return poly

    def velocity_symbol(self, kind: TermKind, M: int, j: int, t: float, grid: Grid) -> np.ndarray:
        kind = TermKind(kind)
        if kind not in VELOCITY_KINDS:
            raise ValueError(f"{kind} is not a velocity kind")
        if not 1 <= M <= 2 * self.n:
            raise UnsupportedOrderError(f"velocity order {M} outside 1..{2 * self.n}")
        m = M - self.n if M > self.n else 0
        xi = grid.rxi
        out = np.zeros(grid.rxi2.shape, dtype=complex)
        if kind is TermKind.U:
            for k in (1, 2):
                poly = 0.0
                for alpha in multi(M + 1):
                    c = self.omega0_moment(alpha, k, j)
                    if c:
                        poly = poly + _monomial(0, alpha, xi) * (c / _fact(0, alpha))
                if not np.isscalar(poly):
                    out -= _prefactor(grid, t, (k,), 1) * poly
            poly = self._flux_poly(M, j, xi, math.inf, m)
            if not np.isscalar(poly):
                out -= _prefactor(grid, t) * poly
            return out
        horizon = math.inf if kind is TermKind.UT else t
        for k in (1, 2):
            poly = self._flux_poly(M, k, xi, horizon, m)
            if not np.isscalar(poly):
                out -= _prefactor(grid, t, (k, j)) * poly
        return out

    def correction_symbol(self, kind: TermKind, m: int, j: int, t: float, grid: Grid) -> np.ndarray:
        kind = TermKind(kind)
        n = self.n
        if not 1 <= m <= n:
            raise UnsupportedOrderError(f"correction index m={m} outside 1..{n}")
        xi = grid.rxi
        out = np.zeros(grid.rxi2.shape, dtype=complex)
        if kind in (TermKind.Vtilde, TermKind.VtildeT):
            T = self.tensor(m)
            if T.is_zero:
                return out
            terms = [(l, b, -scalar_time_weight(l, -n / 2 - m / 2 + sum(b) / 2, t, "tail_t_to_inf"))
                     for l, b in graded(n + m - 2)]
            transposed = kind is TermKind.VtildeT
        else:
            T = self.tensor(m + 2)
            if T.is_zero:
                return out
            if kind is TermKind.K:
                terms = [(l, b, -scalar_time_weight(l, -n / 2 - m / 2 - 1 + sum(b) / 2, t))
                         for l, b in graded(n + m)]
            elif kind in (TermKind.V, TermKind.VT):
                terms = []
                for d in range(1, n + m):
                    assert n + m - d != 0
                    w = 2 * t ** (-n / 2 - m / 2 + d / 2) / (n + m - d)
                    terms += [(l, b, w) for l, b in graded(d)]
            else:
                raise ValueError(f"{kind} is not a correction kind")
            transposed = kind is TermKind.VT
        both = kind is TermKind.K
        E = _prefactor(grid, t)
        for k in ((1, 2) if (transposed or both) else ()):
            poly = sum(_monomial(l, b, xi) * (w * self._B(T, l, b, k) / _fact(l, b)) for l, b, w in terms)
            out += E * _rr(xi, k, j) * poly
        if not transposed:
            poly = sum(_monomial(l, b, xi) * (w * self._B(T, l, b, j) / _fact(l, b)) for l, b, w in terms)
            out += E * poly
        return out

    # -- J ---------------------------------------------------------------------

    def _j_integrals(self, m: int, t: float, grid: Grid, per_side: int):
        """int_0^t [e^{-(t-s)|xi|^2} Vhat_k(s, xi) - Taylor] ds on the retained modes."""
        n, p = self.n, m + 2
        D = n + m
        T = self.tensor(p)
        tg = T.grid
        V = [T.vector(k) for k in (1, 2)]
        peak = max(float(np.max(np.abs(v))) for v in V)
        xi1 = grid.rxi[0][:, 0]
        xi2 = grid.rxi[1][0, :]
        cut = math.sqrt(80.0 / t)
        s1 = np.abs(xi1) <= cut
        s2 = np.abs(xi2) <= cut
        X1, X2 = xi1[s1], xi2[s2]
        shape = (X1.size, X2.size)
        if peak == 0:
            return [np.zeros(shape, complex) for _ in V], (s1, s2), 0.0
        live = np.zeros(tg.N, dtype=bool)
        for v in V:
            big = np.abs(v) > 1e-17 * peak
            live |= big.any(axis=0) | big.any(axis=1)
        idx = np.nonzero(live)[0]
        lo, hi = idx[0], idx[-1] + 1
        xc = tg.x1d[lo:hi]
        Vc = [v[lo:hi, lo:hi] for v in V]
        mom = [sum(M for (h, kk), M in T.moments.items() if kk == k) for k in (1, 2)]
        if any(np.isscalar(M) for M in mom):
            mom = [M if not np.isscalar(M) else np.zeros((T.moment_order + 1,) * 2) for M in mom]

        A1, A2 = np.meshgrid(X1, X2, indexing="ij")
        a2 = A1**2 + A2**2
        xi = (A1, A2)
        taylor = []
        for k in range(2):
            Td = []
            for d in range(D + 3):
                acc = np.zeros(shape, complex)
                for l, b in graded(d):
                    c = mom[k][b[0], b[1]]
                    if c:
                        acc += a2**l / math.factorial(l) * _monomial(0, b, xi) * (c / _fact(0, b))
                Td.append(acc)
            taylor.append(Td)
        heat_t = np.exp(-t * a2)
        edges, s0 = _panels(t, per_side, self.j_span)
        gx, gw = np.polynomial.legendre.leggauss(self.j_order)
        acc = [np.zeros(shape, complex) for _ in V]
        scale = tg.cell_volume
        q = -(n + p) / 2
        for a, b in zip(edges[:-1], edges[1:]):
            for x, w in zip(gx, gw):
                s = 0.5 * (b - a) * x + 0.5 * (a + b)
                ww = 0.5 * (b - a) * w
                rs = math.sqrt(s)
                E1 = np.exp(-1j * rs * np.outer(X1, xc))
                E2 = np.exp(-1j * rs * np.outer(X2, xc))
                heat = np.exp(-(t - s) * a2)
                for k in range(2):
                    vhat = (E1 @ Vc[k] @ E2.T) * (scale * s**q)
                    poly = sum(taylor[k][d] * s ** (d / 2) for d in range(D + 1))
                    acc[k] += ww * (heat * vhat - heat_t * s**q * poly)
        for k in range(2):
            for d in (D + 1, D + 2):
                e = (d - n - p) / 2 + 1
                acc[k] += heat_t * taylor[k][d] * (s0**e / e)
        return acc, (s1, s2), s0

    def J_symbols(self, m: int, t: float, grid: Grid, *, check: bool = True) -> dict:
        """Half-spectrum symbols of J_{j;n+m}(t) for j = 1, 2."""
        n = self.n
        if not 1 <= m <= n:
            raise UnsupportedOrderError(f"J index m={m} outside 1..{n}")
        ck = (m, t, grid)
        if ck in self._j_cache:
            return self._j_cache[ck]

        def assemble(per_side):
            I, (s1, s2), _ = self._j_integrals(m, t, grid, per_side)
            xi = (grid.rxi[0][s1], grid.rxi[1][:, s2])
            out, raw = {}, {}
            for j in (1, 2):
                full = np.zeros(grid.rxi2.shape, dtype=complex)
                sub = -I[j - 1]
                full[np.ix_(s1, s2)] = sub
                raw[j] = full.copy()
                for k in (1, 2):
                    sub = sub - _rr(xi, k, j) * I[k - 1]
                full[np.ix_(s1, s2)] = sub
                out[j] = full
            return out, raw

        sym, raw = assemble(self.j_per_side)
        if check and not self.tensor(m + 2).is_zero:
            fine, _ = assemble(2 * self.j_per_side)
            # the projection can cancel J to round-off (gradient-type tensors), so the
            # scale also includes the unprojected integral
            a = max(max(np.max(np.abs(field_from_symbol(sym[j], grid))),
                        np.max(np.abs(field_from_symbol(raw[j], grid)))) for j in (1, 2))
            b = max(np.max(np.abs(field_from_symbol(fine[j] - sym[j], grid))) for j in (1, 2))
            ratio = b / a if a > 0 else 0.0
            self.j_convergence[(m, t)] = ratio
            if ratio > self.j_tol:
                raise QuadratureError(
                    f"J_{n + m} at t={t:g}: panel doubling changed ||J||_inf by {ratio:.2e} "
                    f"(> {self.j_tol:g})")
            sym = fine
        self._j_cache[ck] = sym
        return sym

    # -- fields and profiles -------------------------------------------------

    def omega_field(self, M, hk, t, grid=None) -> np.ndarray:
        grid = grid or self.omega0.grid
        check_resolution(t, grid)
        return field_from_symbol(self.omega_symbol(M, hk, t, grid), grid)

    def velocity_field(self, kind, M, j, t, grid=None) -> np.ndarray:
        grid = grid or self.omega0.grid
        check_resolution(t, grid)
        return field_from_symbol(self.velocity_symbol(kind, M, j, t, grid), grid)

    def symbol(self, kind, order: int, component, t: float, grid: Grid, *, check_j: bool = True):
        kind = TermKind(kind)
        if kind is TermKind.Omega:
            return self.omega_symbol(order, tuple(component), t, grid)
        (j,) = component if isinstance(component, tuple) else (component,)
        if kind in VELOCITY_KINDS:
            return self.velocity_symbol(kind, order, j, t, grid)
        m = order - self.n
        if kind is TermKind.J:
            return self.J_symbols(m, t, grid, check=check_j)[j]
        return self.correction_symbol(kind, m, j, t, grid)

    def profile(self, kind, order: int, component, t: float, grid: Grid | None = None) -> Profile:
        grid = grid or self.omega0.grid
        check_resolution(t, grid)
        comp = tuple(component) if isinstance(component, (tuple, list)) else (component,)
        data = field_from_symbol(self.symbol(kind, order, comp, t, grid), grid)
        prof = Profile(TermKind(kind), order, comp, t, PhysicalField(grid, data, t),
                       self._provenance(TermKind(kind), order))
        self.provenance[f"{TermKind(kind).value}_{order}_{''.join(map(str, comp))}"] = prof.provenance
        return prof

    def _provenance(self, kind: TermKind, order: int) -> list:
        out = []
        for key, e in self.table.entries.items():
            out.append({"l": key.l, "beta": list(key.beta), "integrand": key.integrand,
                        "h": key.h, "k": key.k, "m": key.m, "value": e.value})
        return out

    def velocity_sum(self, terms, t: float, grid: Grid, *, check_j: bool = True):
        """Physical (u1, u2) of sum over (kind, order) of the velocity profiles."""
        check_resolution(t, grid)
        out = []
        for j in (1, 2):
            total = np.zeros(grid.rxi2.shape, dtype=complex)
            for kind, order in terms:
                total = total + self.symbol(kind, order, (j,), t, grid, check_j=check_j)
            out.append(field_from_symbol(total, grid))
        return out

    def vorticity_sum(self, orders, t: float, grid: Grid) -> np.ndarray:
        """Scalar omega = omega_12 of sum_p Omega_p."""
        check_resolution(t, grid)
        total = np.zeros(grid.rxi2.shape, dtype=complex)
        for M in orders:
            total = total + self.omega_symbol(M, (1, 2), t, grid)
        return field_from_symbol(total, grid)

    def write_manifest(self, path) -> None:
        payload = {
            "moments": [dict(row) for row in self.table.rows()],
            "profiles": sorted(self.provenance),
            "J_convergence": {f"m={m},t={t:g}": r for (m, t), r in sorted(self.j_convergence.items())},
            "I_zero_mean": {str(p): T.zero_mean_defect() for p, T in sorted(self._tensors.items())},
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
