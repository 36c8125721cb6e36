"""Weighted L^q norms, residuals against expansion partial sums, and decay-slope fits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError, NormUnreliableError, WindowError
from .spectral import Grid, PhysicalField

STATEMENTS = ("c-fm", "wasymp-l", "thm-main", "thm-st", "prop-2.1", "prop-2.2", "heat-m")


@dataclass(frozen=True)
class NormSpec:
    q: float = math.inf
    mu: float = 0.0

    def __post_init__(self):
        q = math.inf if self.q in ("inf", "∞") else float(self.q)
        if q not in (1.0, 2.0, math.inf):
            raise ValueError(f"q must be 1, 2 or inf, got {self.q}")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        object.__setattr__(self, "q", q)


def _magnitude(f) -> tuple:
    """(|f| pointwise, grid) for a PhysicalField or a sequence of components."""
    if isinstance(f, (list, tuple)):
        grid = f[0].grid
        mag = np.sqrt(sum(np.asarray(c.data) ** 2 for c in f))
        return mag, grid
    return np.abs(f.data), f.grid


def weighted_norm(f, spec: NormSpec, *, tail_gate: float = 1e-3) -> float:
    """|| |x|^mu f ||_q on centered box coordinates; vectors use the pointwise Euclidean norm.

    ``tail_gate`` bounds the share of the norm carried by the outer band max|x_i| > L/2 - L/16.
    """
    mag, grid = _magnitude(f)
    g = mag * grid.r**spec.mu if spec.mu else mag
    band = _band(grid)
    if spec.q == math.inf:
        value = float(np.max(g))
        outer = float(np.max(g[band]))
    else:
        gq = g**spec.q
        total = float(np.sum(gq))
        value = (total * grid.cell_volume) ** (1 / spec.q)
        outer = float(np.sum(gq[band])) ** (1 / spec.q) * grid.cell_volume ** (1 / spec.q)
    if value > 0 and outer > tail_gate * value:
        raise NormUnreliableError(
            f"outer band carries {outer / value:.2e} of the weighted norm (q={spec.q}, mu={spec.mu})")
    return value


def _band(grid: Grid) -> np.ndarray:
    x1, x2 = grid.x
    return np.maximum(np.abs(x1), np.abs(x2)) > grid.L / 2 - grid.L / 16


def L_m(t, m: int, n: int = 2):
    return np.log(2 + np.asarray(t, dtype=float)) if m >= n else np.ones_like(np.asarray(t, dtype=float))


# -- statements ----------------------------------------------------------------


def velocity_terms(statement: str, m: int = 0, n: int = 2) -> list:
    """(kind, order) pairs subtracted from u by a velocity statement."""
    if statement == "c-fm":
        return [(k, o) for o in range(1, n + 1) for k in ("U", "UT")]
    if statement == "wasymp-l":
        return [(k, o) for o in range(1, n + 1) for k in ("U", "US")]
    if statement == "heat-m":
        return [("U", o) for o in range(1, m + 1)]
    if statement in ("thm-main", "thm-st"):
        if not 1 <= m <= n:
            raise ValueError(f"{statement} needs 1 <= m <= {n}")
        second = "UT" if statement == "thm-main" else "US"
        terms = [(k, o) for o in range(1, n + m + 1) for k in ("U", second)]
        corr = ("K", "V", "VT", "J") if statement == "thm-main" else ("K", "V", "J")
        terms += [(k, n + i) for i in range(1, m + 1) for k in corr]
        tildes = ("Vtilde", "VtildeT") if statement == "thm-main" else ("Vtilde",)
        terms += [(k, n + i) for i in range(3, m + 1) for k in tildes]
        return terms
    raise ValueError(f"unknown velocity statement {statement!r}")


def predicted_exponent(statement: str, q: float, mu: float = 0.0, m: int = 0, n: int = 2) -> float:
    base = -(n / 2) * (1 - 1 / q)
    if statement == "c-fm":
        return base - n / 2 + mu / 2
    if statement == "wasymp-l":
        return base - n / 2 - 0.5 + mu / 2
    if statement in ("thm-main", "thm-st"):
        return base - n / 2 - m / 2 + mu / 2
    if statement == "prop-2.1":
        return base - 1 + mu / 2
    if statement == "prop-2.2":
        return base - m / 2 - 1 + mu / 2
    if statement == "heat-m":
        return base - (m + 1) / 2 + mu / 2
    raise ValueError(f"unknown statement {statement!r}")


def uses_log(statement: str) -> bool:
    """Statements whose rate carries log(2+t) (times L_m for prop-2.2)."""
    return statement in ("wasymp-l", "prop-2.2")


def residual(u, statement: str, expansion=None, t: float = None, *, m: int = 0, grid: Grid = None,
             check_j: bool = True):
    """u minus the statement's partial sum, per component.

    ``u`` is a (u1, u2) pair of arrays (or a vorticity array for prop-2.2 / prop-2.1).
    """
    if statement not in STATEMENTS:
        raise ValueError(f"unknown statement {statement!r}")
    if statement == "prop-2.1":
        return np.array(u, copy=True)
    if statement == "prop-2.2":
        if expansion is None:
            return np.array(u, copy=True)
        return u - expansion.vorticity_sum(range(2, m + 2), t, grid)
    terms = velocity_terms(statement, m)
    if expansion is None or not terms:
        return tuple(np.array(c, copy=True) for c in u)
    s1, s2 = expansion.velocity_sum(terms, t, grid, check_j=check_j)
    return (u[0] - s1, u[1] - s2)


# -- slopes ----------------------------------------------------------------------


def fit_slope(times, norms, window: int = 8, *, compensate=None):
    """Least-squares slope of log norm against log t over the last ``window`` samples.

    ``compensate`` is an array of factors the norms are divided by first (log corrections).
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    if compensate is not None:
        y = y / np.asarray(compensate, dtype=float)
    if window is not None:
        t, y = t[-window:], y[-window:]
    if t.size < 6:
        raise WindowError(f"need at least 6 samples in the fit window, got {t.size}")
    if np.any(y <= 0) or np.any(t <= 0):
        raise DomainError("norms and times must be positive for a log-log fit")
    res = stats.linregress(np.log(t), np.log(y))
    return float(res.slope), float(res.stderr)


@dataclass
class DecayReport:
    statement: str
    q: float
    mu: float
    m: int
    times: list
    norms: list
    slope: float
    stderr: float
    predicted: float
    tolerance: float
    verdict: str
    envelope: float = math.nan
    two_sided: bool = False
    notes: list = field(default_factory=list)
    config_hash: str = ""

    def to_json(self) -> dict:
        d = asdict(self)
        d["q"] = "inf" if self.q == math.inf else self.q
        return d


def decay_report(statement: str, times, norms, *, q: float, mu: float = 0.0, m: int = 0, n: int = 2,
                 window: int = 8, tolerance: float = 0.15, two_sided: bool = False,
                 predicted: float | None = None, config_hash: str = "") -> DecayReport:
    times = [float(t) for t in times]
    norms = [float(v) for v in norms]
    pred = predicted_exponent(statement, q, mu, m, n) if predicted is None else predicted
    comp = None
    if uses_log(statement):
        tt = np.asarray(times)
        comp = np.log(2 + tt) * (L_m(tt, m, n) if statement == "prop-2.2" else 1.0)
    slope, err = fit_slope(times, norms, window, compensate=comp)
    ok = abs(slope - pred) <= tolerance if two_sided else slope <= pred + tolerance
    ok = ok and err < 0.05
    tt = np.asarray(times[-window:])
    env = float(np.max(np.asarray(norms[-window:]) * tt ** (-pred)))
    return DecayReport(statement, q, mu, m, times, norms, slope, err, pred, tolerance,
                       "pass" if ok else "fail", env, two_sided, [], config_hash)


def write_reports_json(reports, path) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_json() for r in reports], fh, indent=2, sort_keys=True)


def write_reports_csv(reports, path) -> None:
    cols = ["statement", "q", "mu", "m", "slope", "stderr", "predicted", "tolerance", "envelope", "verdict"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in reports:
            d = r.to_json()
            w.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in cols])


def write_svg(report: DecayReport, path, width: int = 480, height: int = 360) -> None:
    """Log-log plot of norm against t with a guide line of the predicted slope."""
    t = np.asarray(report.times, dtype=float)
    y = np.asarray(report.norms, dtype=float)
    ok = (t > 0) & (y > 0)
    t, y = t[ok], y[ok]
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    data = "\n".join(f"{a!r},{b!r}" for a, b in zip(t, y))
    lines.append(f"<!-- data: t,norm\n{data}\n-->")
    title = f"{report.statement} q={report.q} mu={report.mu} m={report.m}: slope {report.slope:.3f} " \
            f"(predicted {report.predicted:.3f}) {report.verdict}"
    lines.append(f'<text x="10" y="16" font-size="12">{title}</text>')
    if t.size >= 2:
        lx, ly = np.log10(t), np.log10(y)
        pad = 40
        x0, x1 = lx.min(), lx.max()
        y0, y1 = min(ly.min(), ly[-1] + report.predicted * (x0 - lx[-1])), ly.max()
        sx = lambda v: pad + (v - x0) / max(x1 - x0, 1e-12) * (width - 2 * pad)
        sy = lambda v: height - pad - (v - y0) / max(y1 - y0, 1e-12) * (height - 2 * pad)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(lx, ly))
        lines.append(f'<polyline fill="none" stroke="black" points="{pts}"/>')
        g0 = ly[-1] + report.predicted * (x0 - lx[-1])
        lines.append(f'<line x1="{sx(x0):.2f}" y1="{sy(g0):.2f}" x2="{sx(x1):.2f}" y2="{sy(ly[-1]):.2f}" '
                     'stroke="gray" stroke-dasharray="4,3"/>')
        lines.append(f'<text x="{pad}" y="{height - 8}" font-size="10">log10 t: {x0:.2f} .. {x1:.2f}</text>')
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# -- U^T versus U^S --------------------------------------------------------------


def ts_gap(expansion, m: int, t: float, grid: Grid, q: float = math.inf) -> float:
    """||U_m^T(t) - U_m^S(t)||_q: the two differ by the flux moments beyond time t."""
    a = expansion.velocity_sum([("UT", m)], t, grid)
    b = expansion.velocity_sum([("US", m)], t, grid)
    diff = [PhysicalField(grid, x - y, t) for x, y in zip(a, b)]
    return weighted_norm(diff, NormSpec(q), tail_gate=1.0)


def ts_gap_weight(t, m: int, *, n: int = 2, q: float = math.inf, form: str = "criterion"):
    """Compensating weight for ts_gap.

    ``criterion``: t^(n/2 + m/2) (1+t)^(1/2); ``bound``: t^((n/2)(1-1/q) + n/2) (1+t)^(1/2).
    """
    t = np.asarray(t, dtype=float)
    if form == "criterion":
        e = n / 2 + m / 2
    elif form == "bound":
        e = (n / 2) * (1 - 1 / q) + n / 2
    else:
        raise ValueError(f"unknown weight form {form!r}")
    return t**e * np.sqrt(1 + t)
