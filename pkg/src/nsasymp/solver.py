"""Pseudo-spectral 2D vorticity solver.

d_t w + div(u w) = Delta w, u = Biot-Savart(w), unit viscosity. Diffusion is
integrated exactly (Lawson integrating factor); the advective term uses RK4 with
2/3-rule dealiasing in conservative form, so the mean of w is preserved.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import BlowUpError, ConfigurationError, PreconditionError, TailMassError
from .spectral import Grid, PhysicalField, velocity_from_vorticity_hat

log = logging.getLogger(__name__)

INITIAL_KINDS = ("gaussian_curl", "dipole_pair", "seeded_random_localized")

# (h, k) pairs with omega_hk != 0 in 2D; omega_12 = w, omega_21 = -w
PAIRS = ((1, 2), (2, 1))


def geometric_times(t0: float, t_end: float, count: int) -> tuple:
    if count == 1:
        return (float(t_end),)
    return tuple(float(t) for t in np.geomspace(t0, t_end, count))


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid
    dt: float = 0.01
    t_end: float = 64.0
    snapshot_times: tuple = ()
    dealias: float = 2.0 / 3.0
    amplitude: float = 1.0
    kind: str = "gaussian_curl"
    seed: int = 0
    center: tuple = (0.0, 0.0)
    cfl: float = 0.5
    dt_growth: bool = True
    nonlinear: bool = True
    moment_order: int = 4
    tail_gate: float = 1e-8

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if self.t_end < 0:
            raise ConfigurationError("t_end must be nonnegative")
        times = tuple(float(t) for t in self.snapshot_times)
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("snapshot_times must be increasing")
        if times and (times[0] <= 0 or times[-1] > self.t_end + 1e-12):
            raise ConfigurationError("snapshot_times must lie in (0, t_end]")
        object.__setattr__(self, "snapshot_times", times)
        if not 0 < self.dealias <= 1:
            raise ConfigurationError("dealias fraction must be in (0, 1]")
        if self.kind not in INITIAL_KINDS:
            raise ConfigurationError(f"unknown initial data kind {self.kind!r}")


# -- initial data ------------------------------------------------------------


def _gauss_bumps(grid: Grid, centers, widths, weights):
    """psi = sum c_i exp(-|x-x_i|^2/s_i^2) and w = -Delta psi, in closed form."""
    x1, x2 = grid.x
    psi = np.zeros(grid.shape)
    w = np.zeros(grid.shape)
    for (a, b), s, c in zip(centers, widths, weights):
        rho2 = (x1 - a) ** 2 + (x2 - b) ** 2
        e = c * np.exp(-rho2 / s**2)
        psi += e
        w += (4.0 / s**2 - 4.0 * rho2 / s**4) * e
    return psi, w


def make_initial_data(kind: str, amplitude: float, grid: Grid, seed: int = 0, center=(0.0, 0.0)):
    """Return (w0, (a1, a2)) with w0 = -Delta psi for a localized stream function psi.

    ``center`` moves the gaussian_curl bump; off-center data has nonzero odd moments.
    """
    if not amplitude > 0:
        raise PreconditionError("amplitude must be positive")
    if grid.n != 2:
        raise PreconditionError("the solver is two-dimensional")
    if kind == "gaussian_curl":
        psi, w = _gauss_bumps(grid, [tuple(center)], [1.0], [amplitude])
    elif kind == "dipole_pair":
        # wider bumps than gaussian_curl: the nonlinear term is live here, and omega*u
        # must sit inside the 2/3 dealiasing band of the default grid
        psi, w = _gauss_bumps(grid, [(-3.5, 0.0), (3.5, 0.0)], [2.5, 2.5], [amplitude, -amplitude])
    elif kind == "seeded_random_localized":
        rng = np.random.default_rng(seed)
        k = 5
        centers = rng.uniform(-4.0, 4.0, size=(k, 2))
        widths = rng.uniform(2.0, 3.0, size=k)
        weights = amplitude * rng.normal(size=k)
        psi, w = _gauss_bumps(grid, centers, widths, weights)
    else:
        raise ConfigurationError(f"unknown initial data kind {kind!r}")
    l1 = np.sum(np.abs(w))
    outside = np.sum(np.abs(w[grid.r >= grid.L / 4]))
    if outside > 1e-12 * l1:
        raise PreconditionError(
            f"initial vorticity not supported in |x| < L/4 (tail mass {outside / l1:.2e})")
    # analytic velocity (d2 psi, -d1 psi) is only used for reporting; the solver
    # reconstructs u spectrally from w
    w_hat = sfft.rfftn(w)
    a1, a2 = velocity_from_vorticity_hat(w_hat, grid)
    return PhysicalField(grid, w), (PhysicalField(grid, a1), PhysicalField(grid, a2))


# -- time stepping -----------------------------------------------------------


@dataclass
class State:
    w_hat: np.ndarray
    t: float


class Integrator:
    """IF-RK4 stepper bound to one grid; caches integrating factors per step size."""

    def __init__(self, grid: Grid, dealias: float = 2.0 / 3.0, nonlinear: bool = True):
        if grid.n != 2:
            raise PreconditionError("the solver is two-dimensional")
        self.grid = grid
        self.nonlinear = nonlinear
        k1, k2 = grid.rxi
        cut = dealias * grid.xi_max
        self.mask = (np.abs(k1) < cut) & (np.abs(k2) < cut)
        self.ik1 = 1j * k1 * self.mask
        self.ik2 = 1j * k2 * self.mask
        self._factors = {}

    def factors(self, h: float):
        f = self._factors.get(h)
        if f is None:
            e2 = np.exp(-self.grid.rxi2 * (h / 2))
            f = (e2, e2 * e2)
            if len(self._factors) > 64:
                self._factors.clear()
            self._factors[h] = f
        return f

    def physical(self, w_hat):
        g = self.grid
        w = sfft.irfftn(w_hat, s=g.shape)
        u1, u2 = velocity_from_vorticity_hat(w_hat, g)
        return w, u1, u2

    def rhs(self, w_hat, velocity=None):
        if not self.nonlinear and velocity is None:
            return np.zeros_like(w_hat)
        w = sfft.irfftn(w_hat, s=self.grid.shape)
        if velocity is None:
            u1, u2 = velocity_from_vorticity_hat(w_hat, self.grid)
        else:
            u1, u2 = velocity
        return -(self.ik1 * sfft.rfftn(u1 * w) + self.ik2 * sfft.rfftn(u2 * w))

    def step(self, state: State, dt: float, velocity=None, physical=None) -> State:
        """Lawson RK4; ``physical`` = (w, u1, u2) at ``state`` skips three transforms."""
        e2, e1 = self.factors(dt)
        v = state.w_hat
        if physical is not None and self.nonlinear and velocity is None:
            w, u1, u2 = physical
            a = -(self.ik1 * sfft.rfftn(u1 * w) + self.ik2 * sfft.rfftn(u2 * w))
        else:
            a = self.rhs(v, velocity)
        b = self.rhs(e2 * (v + 0.5 * dt * a), velocity)
        c = self.rhs(e2 * v + 0.5 * dt * b, velocity)
        d = self.rhs(e1 * v + dt * (e2 * c), velocity)
        out = e1 * v + (dt / 6.0) * (e1 * a + 2.0 * e2 * (b + c) + d)
        return State(out, state.t + dt)


def step(state: State, dt: float, grid: Grid, *, nonlinear: bool = True, velocity=None,
         dealias: float = 2.0 / 3.0) -> State:
    """One IF-RK4 step; ``velocity`` freezes the advecting field when given."""
    return Integrator(grid, dealias, nonlinear).step(state, dt, velocity)


# -- trajectory --------------------------------------------------------------


def multi_indices(order: int, n: int = 2):
    """All multi-indices with |beta| <= order, graded then lexicographic."""
    out = []
    for d in range(order + 1):
        for b1 in range(d, -1, -1):
            out.append((b1, d - b1))
    return out


def moment_matrix(f: np.ndarray, grid: Grid, order: int) -> np.ndarray:
    """M[b1, b2] = sum (-y1)^b1 (-y2)^b2 f(y) dx^2 for b1, b2 <= order."""
    v = np.vander(-grid.x1d, order + 1, increasing=True)
    return (v.T @ f @ v) * grid.cell_volume


def tail_mass(w: np.ndarray, grid: Grid) -> float:
    """Fraction of ||w||_1 in the outer band max|x_i| > L/2 - L/16."""
    l1 = np.sum(np.abs(w))
    if l1 == 0:
        return 0.0
    x1, x2 = grid.x
    band = np.maximum(np.abs(x1), np.abs(x2)) > grid.L / 2 - grid.L / 16
    return float(np.sum(np.abs(w[band])) / l1)


@dataclass(eq=False)
class Snapshot:
    t: float
    omega: PhysicalField

    @cached_property
    def u(self):
        g = self.omega.grid
        u1, u2 = velocity_from_vorticity_hat(sfft.rfftn(self.omega.data), g)
        return PhysicalField(g, u1, self.t), PhysicalField(g, u2, self.t)


@dataclass(eq=False)
class Trajectory:
    """Snapshots plus densely sampled spatial moments of omega_hk u_h."""

    grid: Grid
    snapshots: list
    diagnostics: list
    moment_times: np.ndarray
    moment_series: np.ndarray  # (steps, len(PAIRS), order+1, order+1)
    moment_order: int
    moment_scale: np.ndarray | None = None  # (steps, order+1): sum_h int |y|^d |omega_hk u_h|
    assmp_constants: dict = field(default_factory=dict)
    run_id: str = ""

    def snapshot_at(self, t: float) -> Snapshot:
        for s in self.snapshots:
            if abs(s.t - t) <= 1e-9 * max(1.0, t):
                return s
        raise KeyError(f"no snapshot at t={t}")

    @property
    def times(self):
        return [s.t for s in self.snapshots]


def _norms(w, u1, u2, grid):
    dv = grid.cell_volume
    speed = np.sqrt(u1**2 + u2**2)
    return {
        "l1_u": float(np.sum(speed) * dv),
        "l2_u": float(math.sqrt(np.sum(speed**2) * dv)),
        "linf_u": float(np.max(speed)),
        "l1_w": float(np.sum(np.abs(w)) * dv),
        "linf_w": float(np.max(np.abs(w))),
        "tail_mass": tail_mass(w, grid),
    }


def run(config: SolverConfig, omega0: PhysicalField | None = None, *, check_tail: bool = True) -> Trajectory:
    grid = config.grid
    if omega0 is None:
        omega0, _ = make_initial_data(config.kind, config.amplitude, grid, config.seed, config.center)
    integ = Integrator(grid, config.dealias, config.nonlinear)
    state = State(sfft.rfftn(omega0.data), 0.0)
    order = config.moment_order

    snapshots, diagnostics = [], []
    m_times, m_vals, m_abs = [], [], []
    radial = [grid.r**d for d in range(order + 1)]

    def record_moments(t, w, u1, u2):
        m_times.append(t)
        m_vals.append(np.stack([moment_matrix(w * u1, grid, order),
                                moment_matrix(-w * u2, grid, order)]))
        a = np.abs(w) * (np.abs(u1) + np.abs(u2))
        m_abs.append([float(np.sum(rd * a)) * grid.cell_volume for rd in radial])

    def take_snapshot(t, w, u1, u2):
        d = {"t": t, **_norms(w, u1, u2, grid)}
        if check_tail and d["tail_mass"] > config.tail_gate:
            raise TailMassError(
                f"tail mass {d['tail_mass']:.2e} at t={t:g} exceeds {config.tail_gate:g}; "
                "use a larger L or a smaller t_end")
        diagnostics.append(d)
        snapshots.append(Snapshot(t, PhysicalField(grid, w, t)))

    _, u1, u2 = integ.physical(state.w_hat)
    # the t = 0 snapshot keeps the configured data as given, without an FFT round trip
    take_snapshot(0.0, np.array(omega0.data, dtype=float), u1, u2)
    targets = list(config.snapshot_times)
    stops = sorted(set(targets) | ({config.t_end} if config.t_end > 0 else set()))

    for stop in stops:
        while state.t < stop - 1e-12 * max(1.0, stop):
            w, u1, u2 = integ.physical(state.w_hat)
            record_moments(state.t, w, u1, u2)
            umax = float(np.max(np.sqrt(u1**2 + u2**2))) if config.nonlinear else 0.0
            dt = config.dt * (1.0 + state.t) if config.dt_growth else config.dt
            limit = config.cfl * grid.dx / umax if umax > 0 else math.inf
            while dt > limit:
                dt *= 0.5
                log.debug("CFL: halving dt to %.3g at t=%.4g", dt, state.t)
            remaining = stop - state.t
            if dt >= remaining * (1 - 1e-9) or remaining - dt < 1e-3 * dt:
                dt = remaining
            new = integ.step(state, dt, physical=(w, u1, u2))
            if not np.all(np.isfinite(new.w_hat)):
                raise BlowUpError(f"non-finite vorticity after t={state.t:g}", last_stable_time=state.t)
            state = new if abs(new.t - stop) > 1e-12 * max(1.0, stop) else State(new.w_hat, stop)
        if stop in targets:
            w, u1, u2 = integ.physical(state.w_hat)
            take_snapshot(stop, w, u1, u2)
    w, u1, u2 = integ.physical(state.w_hat)
    record_moments(state.t, w, u1, u2)

    traj = Trajectory(grid, snapshots, diagnostics, np.array(m_times), np.array(m_vals), order,
                      np.array(m_abs))
    traj.assmp_constants = assmp_constants(diagnostics, grid.n)
    return traj


def assmp_constants(diagnostics, n: int = 2) -> dict:
    """sup_t (1+t)^{(n/2)(1-1/q)+1/2} ||u(t)||_q for q in {2, inf}."""
    out = {}
    for key, q in (("l2_u", 2.0), ("linf_u", math.inf)):
        e = (n / 2) * (1 - 1 / q) + 0.5
        out[key] = max((1 + d["t"]) ** e * d[key] for d in diagnostics)
    return out
