"""Run configuration as flat ``key = value`` text.

Lists are comma separated, ``#`` starts a comment, and every key must be one of
``KEYS``. ``dumps(loads(text))`` is canonical: keys in ``KEYS`` order, floats in
``repr`` form, so a dumped config re-parses and re-dumps to the same bytes.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace

from .errors import ConfigurationError
from .metrics import STATEMENTS
from .solver import INITIAL_KINDS, SolverConfig, geometric_times
from .spectral import Grid


@dataclass(frozen=True)
class RunConfig:
    # grid
    N: int = 512
    L: float = 192.0
    # solver
    dt: float = 0.01
    t_end: float = 64.0
    snapshots: int = 64
    snapshot_t0: float = 0.25
    snapshot_times: tuple = ()  # explicit list; overrides snapshots/snapshot_t0 when set
    amplitude: float = 1.0
    kind: str = "gaussian_curl"
    seed: int = 0
    center: tuple = (0.0, 0.0)  # gaussian_curl only
    cfl: float = 0.5
    dt_growth: bool = True
    nonlinear: bool = True
    # analysis
    orders: tuple = (1, 2)
    q: tuple = (1.0, math.inf)
    mu: tuple = (0.0, 1.0, 2.0)
    statements: tuple = ("prop-2.1", "c-fm", "thm-main", "thm-st")
    window: int = 8
    decade: float = 10.0
    # tolerances
    tail_gate: float = 1e-8
    moment_gate: float = 1e-8
    tail_fraction_max: float = 0.05
    norm_tail_gate: float = 1e-3
    slope_tol: float = 0.15
    slope_tol_main: float = 0.2  # thm-main and thm-st
    slope_tol_heat: float = 0.1  # heat-m, two-sided
    j_tol: float = 1e-4
    # output
    output_dir: str = "runs"
    run_id: str = ""

    def __post_init__(self):
        # coerce so that dumps() is canonical however the fields were supplied
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in _LIST_ITEM:
                v = tuple(_COERCE[_LIST_ITEM[f.name]](x) for x in v)
            else:
                v = _COERCE[f.type](v)
            object.__setattr__(self, f.name, v)
        if self.N < 16 or self.N & (self.N - 1):
            raise ConfigurationError("grid.N must be a power of two >= 16")
        if not self.L > 0:
            raise ConfigurationError("grid.L must be positive")
        if self.kind not in INITIAL_KINDS:
            raise ConfigurationError(f"unknown initial data kind {self.kind!r}")
        for s in self.statements:
            if s not in STATEMENTS:
                raise ConfigurationError(f"unknown statement {s!r}")
        for q in self.q:
            if q not in (1.0, 2.0, math.inf):
                raise ConfigurationError(f"q must be 1, 2 or inf, got {q!r}")
        if any(m < 0 for m in self.mu):
            raise ConfigurationError("mu must be nonnegative")
        if len(self.center) != 2:
            raise ConfigurationError("solver.center needs two coordinates")
        if self.window < 6:
            raise ConfigurationError("analysis.window must be at least 6")
        if not self.snapshot_times and not 0 < self.snapshot_t0 <= self.t_end:
            raise ConfigurationError("solver.snapshot_t0 must lie in (0, t_end]")
        self.solver_config()  # remaining checks live in SolverConfig

    @property
    def times(self) -> tuple:
        if self.snapshot_times:
            return tuple(self.snapshot_times)
        return geometric_times(self.snapshot_t0, self.t_end, self.snapshots)

    @property
    def grid(self) -> Grid:
        return Grid(2, self.N, self.L)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(Grid(2, self.N, self.L), dt=self.dt, t_end=self.t_end,
                            snapshot_times=self.times, amplitude=self.amplitude, kind=self.kind,
                            seed=self.seed, center=self.center, cfl=self.cfl, dt_growth=self.dt_growth,
                            nonlinear=self.nonlinear, tail_gate=self.tail_gate)

    def digest(self) -> str:
        """sha256 of the canonical text with output keys excluded."""
        body = dumps(replace(self, output_dir="", run_id=""))
        return hashlib.sha256(body.encode()).hexdigest()

    @property
    def resolved_run_id(self) -> str:
        return self.run_id or self.digest()[:12]


# file key -> field name
KEYS = {
    "grid.N": "N", "grid.L": "L",
    "solver.dt": "dt", "solver.t_end": "t_end", "solver.snapshots": "snapshots",
    "solver.snapshot_t0": "snapshot_t0", "solver.snapshot_times": "snapshot_times",
    "solver.amplitude": "amplitude", "solver.kind": "kind", "solver.seed": "seed", "solver.center": "center",
    "solver.cfl": "cfl", "solver.dt_growth": "dt_growth", "solver.nonlinear": "nonlinear",
    "analysis.orders": "orders", "analysis.q": "q", "analysis.mu": "mu",
    "analysis.statements": "statements", "analysis.window": "window", "analysis.decade": "decade",
    "tolerances.tail_gate": "tail_gate", "tolerances.moment_gate": "moment_gate",
    "tolerances.tail_fraction_max": "tail_fraction_max", "tolerances.norm_tail_gate": "norm_tail_gate",
    "tolerances.slope": "slope_tol",
    "tolerances.slope_main": "slope_tol_main", "tolerances.slope_heat": "slope_tol_heat",
    "tolerances.j_tol": "j_tol",
    "output.dir": "output_dir", "output.run_id": "run_id",
}
_TYPES = {f.name: f.type for f in fields(RunConfig)}
_LIST_ITEM = {"snapshot_times": "float", "center": "float", "orders": "int", "q": "float", "mu": "float",
              "statements": "str"}


_COERCE = {"int": int, "float": float, "bool": bool, "str": str}


def _parse_scalar(kind: str, text: str, key: str):
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return math.inf if text in ("inf", "∞") else float(text)
        if kind == "bool":
            if text.lower() in ("true", "yes", "1"):
                return True
            if text.lower() in ("false", "no", "0"):
                return False
            raise ValueError(text)
        return text
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {text!r} as {kind}") from None


def _format_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if v == math.inf else repr(v)
    return str(v)


def loads(text: str) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        name = KEYS[key]
        if name in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        if name in _LIST_ITEM:
            items = [s.strip() for s in val.split(",") if s.strip()]
            values[name] = tuple(_parse_scalar(_LIST_ITEM[name], s, key) for s in items)
        else:
            values[name] = _parse_scalar(_TYPES[name], val, key)
    return RunConfig(**values)


def dumps(cfg: RunConfig) -> str:
    lines = []
    for key, name in KEYS.items():
        v = getattr(cfg, name)
        text = ", ".join(_format_scalar(x) for x in v) if name in _LIST_ITEM else _format_scalar(v)
        lines.append(f"{key} = {text}".rstrip())
    return "\n".join(lines) + "\n"


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None


def dump(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(cfg))
