"""Spatial moments, space-time moments of omega u with tail extrapolation, and the
renormalization tensor built from products of lower-order profiles.

Space-time moments are linear in the integrand, so a renormalized integrand
omega u - sum_p I_p(s) - I_{p*}(1+s) is integrated as the numerical moment series
of omega u minus closed-form integrals of the self-similar I moments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DomainError, MomentUnreliableError, TailDivergentError
from .kernels import scalar_time_weight
from .solver import PAIRS, moment_matrix
from .spectral import Grid, PhysicalField

INTEGRANDS = ("omega0", "omega_u", "omega_u_minus_I", "I_at_1")


@dataclass(frozen=True)
class MomentKey:
    l: int
    beta: tuple
    integrand: str
    h: int = 0
    k: int = 0
    m: int = 0  # renormalization order for omega_u_minus_I, tensor index p for I_at_1

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(int(b) for b in self.beta))
        if self.integrand not in INTEGRANDS:
            raise ValueError(f"unknown integrand tag {self.integrand!r}")
        n = len(self.beta)
        if 2 * self.l + sum(self.beta) > 2 * n + 2:
            raise ValueError(f"moment order 2l+|beta| = {2 * self.l + sum(self.beta)} exceeds 2n+2")

    @property
    def order(self) -> int:
        return 2 * self.l + sum(self.beta)


@dataclass
class MomentEntry:
    value: float
    tail_fraction: float = 0.0
    trunc_err: float = 0.0


@dataclass
class MomentTable:
    entries: dict = field(default_factory=dict)
    source_trajectory: str = ""

    def __getitem__(self, key: MomentKey) -> MomentEntry:
        return self.entries[key]

    def __contains__(self, key) -> bool:
        return key in self.entries

    def record(self, key: MomentKey, entry: MomentEntry) -> None:
        self.entries[key] = entry

    def value(self, key: MomentKey) -> float:
        return self.entries[key].value

    def rows(self):
        def sort_key(item):
            k = item[0]
            return (k.integrand, k.m, k.h, k.k, k.order, k.l, tuple(-b for b in k.beta))
        for key, e in sorted(self.entries.items(), key=sort_key):
            yield {"l": key.l, "beta1": key.beta[0], "beta2": key.beta[1],
                   "integrand": key.integrand if key.integrand != "omega_u_minus_I"
                   else f"omega_u_minus_I[m={key.m}]" if key.m else key.integrand,
                   "h": key.h, "k": key.k, "value": repr(float(e.value)),
                   "tail_fraction": repr(float(e.tail_fraction)), "trunc_err": repr(float(e.trunc_err))}

    def write_csv(self, path) -> None:
        cols = ["l", "beta1", "beta2", "integrand", "h", "k", "value", "tail_fraction", "trunc_err"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow(row)


# -- spatial moments ---------------------------------------------------------


def _weight(grid: Grid, alpha) -> np.ndarray:
    out = 1.0
    for c, a in zip(grid.x, alpha):
        if a:
            out = out * (-c) ** a
    return out


def spatial_moment_with_error(f: PhysicalField, alpha, *, threshold: float = 1e-8):
    """(value, truncation estimate) of sum (-y)^alpha f(y) dx^n on centered coordinates."""
    grid = f.grid
    alpha = tuple(int(a) for a in alpha)
    if sum(alpha) > 2 * grid.n + 2:
        raise ValueError(f"|alpha| = {sum(alpha)} exceeds 2n+2")
    wf = _weight(grid, alpha) * f.data
    total = float(np.sum(wf) * grid.cell_volume)
    absolute = float(np.sum(np.abs(wf)) * grid.cell_volume)
    band = np.maximum.reduce([np.abs(c) for c in np.broadcast_arrays(*grid.x)]) > grid.L / 2 - grid.L / 16
    outer = float(np.sum(np.abs(wf[band])) * grid.cell_volume)
    if absolute > 0 and outer > threshold * absolute:
        raise MomentUnreliableError(
            f"moment {alpha}: outer band carries {outer / absolute:.2e} of the weighted mass")
    return total, outer


def spatial_moment(f: PhysicalField, alpha, *, threshold: float = 1e-8) -> float:
    return spatial_moment_with_error(f, alpha, threshold=threshold)[0]


# -- space-time moments ------------------------------------------------------


class MomentSeries:
    """Time series of spatial moments of omega_hk u_h, as recorded by the solver."""

    def __init__(self, times, values: dict, n: int = 2, abs_scale=None):
        self.times = np.asarray(times, dtype=float)
        self.values = values  # (h, k) -> array (steps, order+1, order+1)
        self.n = n
        self.abs_scale = None if abs_scale is None else np.asarray(abs_scale, dtype=float)

    @classmethod
    def from_trajectory(cls, traj) -> "MomentSeries":
        vals = {pair: traj.moment_series[:, i] for i, pair in enumerate(PAIRS)}
        return cls(traj.moment_times, vals, traj.grid.n, traj.moment_scale)

    @classmethod
    def zeros(cls, times, order: int = 4) -> "MomentSeries":
        z = np.zeros((len(times), order + 1, order + 1))
        return cls(times, {pair: z for pair in PAIRS})

    def raw(self, h: int, k: int, beta) -> np.ndarray:
        arr = self.values.get((h, k))
        if arr is None:
            return np.zeros_like(self.times)
        b1, b2 = beta
        if b1 >= arr.shape[1] or b2 >= arr.shape[2]:
            raise DomainError(f"moment order {beta} was not recorded")
        return arr[:, b1, b2]

    def scale(self, l: int, order: int) -> float:
        """max_s s^l int |y|^order |omega u|, or the largest recorded |s^l M_beta| without it."""
        w = self.times**l
        if self.abs_scale is not None and order < self.abs_scale.shape[1]:
            return float(np.max(w * self.abs_scale[:, order], initial=0.0))
        best = 0.0
        for arr in self.values.values():
            for b1 in range(min(order, arr.shape[1] - 1) + 1):
                b2 = order - b1
                if b2 < arr.shape[2]:
                    best = max(best, float(np.max(np.abs(w * arr[:, b1, b2]), initial=0.0)))
        return best


@dataclass
class SpacetimeMoment:
    value: float
    finite: float
    tail: float
    tail_fraction: float
    trunc_err: float
    sigma: float = math.nan


def fit_power_tail(s: np.ndarray, r: np.ndarray, T: float, *, decade: float = 10.0,
                   floor: float = 0.0, l: int = 0):
    """Fit r ~ c s^-sigma on [T/decade, T]; return (tail integral over (T, inf), sigma, err).

    Samples at or below ``floor`` are round-off: the tail is then 0 with a bound.
    """
    sel = (s >= T / decade) & (s <= T) & (s > 0)
    rs, ss = r[sel], s[sel]
    if rs.size < 4 or np.max(np.abs(rs), initial=0.0) <= floor:
        return 0.0, math.nan, float(np.max(np.abs(rs), initial=0.0) * T)
    if np.any(np.sign(rs) != np.sign(rs[-1])) or np.any(rs == 0):
        # no definite sign over the last decade: treat as noise, report a bound
        return 0.0, math.nan, float(np.max(np.abs(rs)) * T)

    def fit(mask):
        A = np.vstack([np.ones(mask.sum()), np.log(ss[mask])]).T
        coef, *_ = np.linalg.lstsq(A, np.log(np.abs(rs[mask])), rcond=None)
        return math.exp(coef[0]), -coef[1]

    c, sigma = fit(np.ones_like(ss, dtype=bool))
    if sigma <= 1.0:
        raise TailDivergentError(
            f"fitted tail decay s^-{sigma:.3f} is not integrable (needs sigma > 1 + l, l={l})")
    sign = math.copysign(1.0, rs[-1])
    tail = sign * c * T ** (1 - sigma) / (sigma - 1)
    half = ss >= T / math.sqrt(decade)
    err = 0.0
    if half.sum() >= 4:
        c2, s2 = fit(half)
        if s2 > 1:
            err = abs(sign * c2 * T ** (1 - s2) / (s2 - 1) - tail)
    return tail, sigma, err


def _simpson_cumulative(s, f):
    if len(s) < 3:
        return np.concatenate([[0.0], integrate.cumulative_trapezoid(f, s)])
    return np.concatenate([[0.0], integrate.cumulative_simpson(f, x=s)])


def _renorm_pieces(key: MomentKey, I_moments, n: int):
    """[(exponent e, shifted, A)] so the subtracted moment is sum A * (s or 1+s)^e."""
    if key.integrand != "omega_u_minus_I" or not I_moments:
        return []
    m = key.m
    b1, b2 = key.beta
    pieces = []
    for p in list(range(3, m + 2)) + [m + 2]:
        mom = I_moments.get((p, key.h, key.k))
        if mom is None or mom[b1, b2] == 0.0:
            continue  # zero tensor entry
        e = (sum(key.beta) - n - p) / 2
        pieces.append((e, p == m + 2, float(mom[b1, b2])))
    return pieces


def _piece_integral(l: int, e: float, shifted: bool, H: float) -> float:
    """int_0^H (-s)^l s^e ds, or with (1+s)^e when shifted."""
    sign = (-1) ** l
    if shifted:
        return sign * scalar_time_weight(l, e, H)
    if l + e <= -1:
        raise DomainError(f"int_0 s^{l + e} ds diverges at s = 0")
    return sign * H ** (l + e + 1) / (l + e + 1)


def spacetime_moment(series: MomentSeries, key: MomentKey, horizon=math.inf, *,
                     I_moments=None, decade: float = 10.0, noise: float = 1e-10) -> SpacetimeMoment:
    """int_0^horizon int (-s)^l (-y)^beta F(s, y) dy ds for F = omega_hk u_h (or renormalized)."""
    if key.integrand not in ("omega_u", "omega_u_minus_I"):
        raise ValueError("space-time moments need an omega_u integrand")
    s = series.times
    T = float(s[-1])
    raw = (-s) ** key.l * series.raw(key.h, key.k, key.beta)
    pieces = _renorm_pieces(key, I_moments, series.n)
    H = min(horizon, T)
    cum = _simpson_cumulative(s, raw)
    finite = float(np.interp(H, s, cum))
    for e, shifted, A in pieces:
        finite -= A * _piece_integral(key.l, e, shifted, H)
    if horizon <= T:
        return SpacetimeMoment(finite, finite, 0.0, 0.0, 0.0)
    r = raw.copy()
    for e, shifted, A in pieces:
        base = (1 + s) if shifted else np.where(s > 0, s, np.inf)
        r -= A * (-s) ** key.l * base**e
    floor = noise * series.scale(key.l, sum(key.beta))
    tail, sigma, err = fit_power_tail(s, r, T, decade=decade, floor=floor, l=key.l)
    value = finite + tail
    eps = 1e-300
    return SpacetimeMoment(value, finite, tail, abs(tail) / (abs(value) + eps), err, sigma)


# -- renormalization tensor --------------------------------------------------


@dataclass(eq=False)
class ITensor:
    p: int
    n: int
    grid: Grid
    values: dict  # (h, k) -> array, evaluated at t = 1
    moment_order: int
    moments: dict = field(default_factory=dict)  # (h, k) -> matrix of int (-x)^beta I(1, x) dx

    def __post_init__(self):
        if not self.moments:
            self.moments = {hk: moment_matrix(v, self.grid, self.moment_order)
                            for hk, v in self.values.items()}

    @property
    def is_zero(self) -> bool:
        return not self.values or all(not np.any(v) for v in self.values.values())

    def vector(self, k: int) -> np.ndarray:
        """sum_h I_hk, the combination every velocity correction uses."""
        out = np.zeros(self.grid.shape)
        for (h, kk), v in self.values.items():
            if kk == k:
                out = out + v
        return out

    def zero_mean_defect(self) -> float:
        worst = 0.0
        for v in self.values.values():
            l1 = np.sum(np.abs(v))
            if l1 > 0:
                worst = max(worst, abs(np.sum(v)) / l1)
        return float(worst)

    def moment_scaling(self, t: float, hk, beta) -> float:
        """int (-x)^beta I(t, x) dx from the t = 1 moment."""
        b1, b2 = beta
        return t ** (-self.n / 2 - self.p / 2 + (b1 + b2) / 2) * self.moments[hk][b1, b2]


def build_I_tensor(p: int, omega_profiles: dict, velocity_profiles: dict, grid: Grid,
                   *, n: int = 2, moment_order: int = 6) -> ITensor:
    """I_{hk;n+p} = sum_{i=1}^{p-2} Omega_{hk;p-i} (U_{h;i} + U^T_{h;i}) at t = 1.

    ``omega_profiles[m][(h, k)]`` and ``velocity_profiles[i][h]`` (U + U^T) are arrays at t = 1.
    """
    if p > n + 2 or p < 1:
        raise ValueError(f"I tensor index p={p} out of range 1..{n + 2}")
    if p <= 2:
        return ITensor(p, n, grid, {}, moment_order, {})
    values = {}
    for h in range(1, n + 1):
        for k in range(1, n + 1):
            acc = np.zeros(grid.shape)
            for i in range(1, p - 1):
                om = omega_profiles[p - i].get((h, k))
                if om is None:
                    continue
                acc = acc + om * velocity_profiles[i][h]
            if np.any(acc):
                values[(h, k)] = acc
    return ITensor(p, n, grid, values, moment_order)
