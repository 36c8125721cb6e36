"""simulate -> analyze -> report over one run directory.

Layout of ``<output_dir>/<run_id>/``::

    config.txt            canonical config text
    manifest.json         stage status, wall clock, verdict summary (rewritten atomically)
    fields/initial.nsaf   omega at t = 0
    fields/snap_NNN.nsaf  omega at each configured snapshot time
    diagnostics.csv       per-snapshot norms
    moments.npz           dense spatial moments of omega u
    moments.csv           moment table (analyze)
    profiles.json         profile provenance, J convergence, I zero-mean defects (analyze)
    decay_reports.json    one DecayReport per statement/q/mu/m (analyze)
    identities.json       identity battery (analyze, identities)
    plots/*.svg
"""

from __future__ import annotations

import contextlib
import csv
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, dumps, load
from .errors import (BlowUpError, ConfigurationError, DataError, NormUnreliableError, NSAsympError,
                     PreconditionError)
from .expansion import Expansion
from .identities import CASES, run_battery
from .metrics import (STATEMENTS, DecayReport, NormSpec, decay_report, velocity_terms, weighted_norm,
                      write_reports_csv, write_reports_json, write_svg)
from .moments import MomentSeries
from .solver import PAIRS, run
from .spectral import Grid, PhysicalField, read_nsaf, velocity_from_vorticity_array, write_nsaf

log = logging.getLogger(__name__)

ORDERED = ("thm-main", "thm-st", "prop-2.2", "heat-m")
WEIGHTED = ("thm-st", "prop-2.1")
VORTICITY = ("prop-2.1", "prop-2.2")
DIAG_COLUMNS = ("t", "l1_u", "l2_u", "linf_u", "l1_w", "linf_w", "tail_mass")


# -- manifest and lock ---------------------------------------------------------


@dataclass
class RunManifest:
    run_id: str
    config_hash: str
    code_version: str = __version__
    stages: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    @classmethod
    def load(cls, run_dir: Path) -> "RunManifest | None":
        path = run_dir / "manifest.json"
        if not path.exists():
            return None
        with open(path) as fh:
            return cls(**json.load(fh))

    def save(self, run_dir: Path) -> None:
        payload = {"run_id": self.run_id, "config_hash": self.config_hash,
                   "code_version": self.code_version, "stages": self.stages, "verdicts": self.verdicts}
        _atomic_write(run_dir / "manifest.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def complete(self, stage: str) -> bool:
        return self.stages.get(stage, {}).get("status") == "complete"


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


@contextlib.contextmanager
def run_lock(run_dir: Path):
    """One pipeline per run directory; a lock left by a dead process is taken over."""
    path = run_dir / ".lock"
    for _ in range(2):
        try:
            fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            try:
                pid = int(path.read_text().strip() or 0)
            except (OSError, ValueError):
                pid = 0
            if pid and _pid_alive(pid):
                raise DataError(f"{run_dir} is locked by running process {pid}") from None
            with contextlib.suppress(FileNotFoundError):
                path.unlink()
            continue
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        break
    else:
        raise DataError(f"could not acquire {path}")
    try:
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            path.unlink()


# -- simulate ------------------------------------------------------------------


def run_dir_for(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir) / cfg.resolved_run_id


def snapshot_path(run_dir: Path, index: int) -> Path:
    return run_dir / "fields" / f"snap_{index:03d}.nsaf"


def simulate(cfg: RunConfig, *, force: bool = False) -> Path:
    run_dir = run_dir_for(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    digest = cfg.digest()
    with run_lock(run_dir):
        manifest = RunManifest.load(run_dir)
        if manifest is not None and manifest.config_hash != digest and not force:
            raise ConfigurationError(f"{run_dir} holds a run with a different config; pass --force")
        if manifest is not None and manifest.complete("simulate") and not force:
            log.info("simulate: %s already complete", run_dir)
            return run_dir
        manifest = RunManifest(cfg.resolved_run_id, digest)
        (run_dir / "config.txt").write_text(dumps(cfg))
        manifest.stages["simulate"] = {"status": "running"}
        manifest.save(run_dir)
        start = time.perf_counter()
        try:
            traj = run(cfg.solver_config())
        except BlowUpError as exc:
            manifest.stages["simulate"] = {"status": "failed", "error": str(exc),
                                           "last_stable_time": exc.last_stable_time}
            manifest.save(run_dir)
            raise
        except NSAsympError as exc:
            manifest.stages["simulate"] = {"status": "failed", "error": str(exc)}
            manifest.save(run_dir)
            raise
        fields_dir = run_dir / "fields"
        fields_dir.mkdir(exist_ok=True)
        for old in fields_dir.glob("*.nsaf"):
            old.unlink()
        write_nsaf(fields_dir / "initial.nsaf", traj.snapshots[0].omega)
        for i, snap in enumerate(traj.snapshots[1:]):
            write_nsaf(snapshot_path(run_dir, i), snap.omega)
        with open(run_dir / "diagnostics.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DIAG_COLUMNS)
            for d in traj.diagnostics:
                w.writerow([repr(float(d[c])) for c in DIAG_COLUMNS])
        np.savez(run_dir / "moments.npz", times=traj.moment_times, series=traj.moment_series,
                 scale=traj.moment_scale)
        manifest.stages["simulate"] = {
            "status": "complete", "wall_clock": time.perf_counter() - start,
            "snapshots": len(traj.snapshots) - 1, "assmp_constants": traj.assmp_constants}
        manifest.save(run_dir)
    return run_dir


# -- loading -------------------------------------------------------------------


@dataclass
class RunData:
    run_dir: Path
    config: RunConfig
    config_hash: str
    times: tuple

    def snapshot(self, index: int) -> PhysicalField:
        return read_nsaf(snapshot_path(self.run_dir, index))

    def initial(self) -> PhysicalField:
        return read_nsaf(self.run_dir / "fields" / "initial.nsaf")

    def series(self) -> MomentSeries | None:
        """Moments of omega u; None for a linear run, whose expansion has no nonlinear part."""
        if not self.config.nonlinear:
            return None
        with np.load(self.run_dir / "moments.npz") as z:
            times, series, scale = z["times"], z["series"], z["scale"]
        return MomentSeries(times, {p: series[:, i] for i, p in enumerate(PAIRS)}, 2, scale)

    def diagnostics(self) -> list:
        with open(self.run_dir / "diagnostics.csv") as fh:
            return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]

    def expansion(self) -> Expansion:
        cfg = self.config
        return Expansion(self.initial(), self.series(), decade=cfg.decade,
                         tail_fraction_max=cfg.tail_fraction_max, j_tol=cfg.j_tol,
                         moment_gate=cfg.moment_gate, source=self.config_hash)


def load_run(run_dir) -> RunData:
    run_dir = Path(run_dir)
    manifest = RunManifest.load(run_dir)
    if manifest is None or not manifest.complete("simulate"):
        raise PreconditionError(f"{run_dir}: simulate has not completed")
    cfg = load(run_dir / "config.txt")
    if cfg.digest() != manifest.config_hash:
        raise DataError(f"{run_dir}: config.txt does not match the manifest hash")
    return RunData(run_dir, cfg, manifest.config_hash, cfg.times)


# -- statements ----------------------------------------------------------------


@dataclass(frozen=True)
class StatementSpec:
    statement: str
    m: int = 0
    q: float = math.inf
    mu: float = 0.0

    @property
    def label(self) -> str:
        q = "inf" if self.q == math.inf else f"{self.q:g}"
        return f"{self.statement}:m={self.m}:q={q}:mu={self.mu:g}"


def parse_statements(tokens, cfg: RunConfig) -> list:
    """Expand tokens ``name[:m=..][:q=..][:mu=..]``; missing parameters range over the config lists."""
    if isinstance(tokens, str):
        tokens = [t for t in tokens.split(",")]
    out = []
    for token in tokens:
        token = token.strip()
        if not token:
            continue
        name, *params = token.split(":")
        fixed = {}
        for p in params:
            key, _, val = p.partition("=")
            if key not in ("m", "q", "mu") or not val:
                raise ConfigurationError(f"bad statement parameter {p!r} in {token!r}")
            fixed[key] = val
        if name not in STATEMENTS:
            raise ConfigurationError(f"unknown statement {name!r}")
        ms = [int(fixed["m"])] if "m" in fixed else (list(cfg.orders) if name in ORDERED else [0])
        qs = [math.inf if fixed["q"] in ("inf", "∞") else float(fixed["q"])] if "q" in fixed else list(cfg.q)
        mus = [float(fixed["mu"])] if "mu" in fixed else (list(cfg.mu) if name in WEIGHTED else [0.0])
        for m in ms:
            if name in ("thm-main", "thm-st") and not 1 <= m <= 2:
                raise ConfigurationError(f"{name} needs m in 1..2, got {m}")
            if name in ("prop-2.2", "heat-m") and m < 1:
                raise ConfigurationError(f"{name} needs m >= 1, got {m}")
            for q in qs:
                if q not in (1.0, 2.0, math.inf):
                    raise ConfigurationError(f"q must be 1, 2 or inf, got {q}")
                for mu in mus:
                    spec = StatementSpec(name, m, q, mu)
                    if spec not in out:
                        out.append(spec)
    return out


def _tolerance(spec: StatementSpec, cfg: RunConfig):
    if spec.statement == "heat-m":
        return cfg.slope_tol_heat, True
    if spec.statement in ("thm-main", "thm-st"):
        return cfg.slope_tol_main, False
    return cfg.slope_tol, False


def evaluation_indices(times, window: int) -> list:
    """Snapshots inside the fit window plus every snapshot with t >= 10."""
    start = min(10.0, times[-window]) if len(times) >= window else times[0]
    return [i for i, t in enumerate(times) if t >= start - 1e-12]


def residual_norms(data: RunData, specs, expansion: Expansion, indices) -> dict:
    """label -> (times, norms, notes) for every spec over the given snapshot indices."""
    cfg = data.config
    if any(s.statement == "heat-m" for s in specs) and cfg.nonlinear:
        raise ConfigurationError("heat-m needs a run with solver.nonlinear = false")
    out = {s.label: ([], [], []) for s in specs}
    for i in indices:
        t = data.times[i]
        w = data.snapshot(i)
        g = w.grid
        u = velocity_from_vorticity_array(w.data, g)
        terms = {}
        resid = {}

        def term(kt):
            if kt not in terms:
                terms[kt] = expansion.velocity_sum([kt], t, g)
            return terms[kt]

        for s in specs:
            key = (s.statement, s.m)
            if key in resid:
                continue
            if s.statement == "prop-2.1":
                resid[key] = PhysicalField(g, w.data, t)
            elif s.statement == "prop-2.2":
                resid[key] = PhysicalField(g, w.data - expansion.vorticity_sum(range(2, s.m + 2), t, g), t)
            else:
                r1, r2 = u[0].copy(), u[1].copy()
                for kt in velocity_terms(s.statement, s.m):
                    a, b = term(kt)
                    r1 -= a
                    r2 -= b
                resid[key] = [PhysicalField(g, r1, t), PhysicalField(g, r2, t)]
        for s in specs:
            times, norms, notes = out[s.label]
            try:
                value = weighted_norm(resid[(s.statement, s.m)], NormSpec(s.q, s.mu),
                                      tail_gate=cfg.norm_tail_gate)
            except NormUnreliableError as exc:
                value = math.nan
                notes.append(f"t={t!r}: {exc}")
            times.append(t)
            norms.append(value)
    return out


def build_reports(data: RunData, specs, series: dict) -> list:
    cfg = data.config
    reports = {}
    for s in specs:
        times, norms, notes = series[s.label]
        tol, two_sided = _tolerance(s, cfg)
        try:
            if any(math.isnan(v) for v in norms[-cfg.window:]):
                raise NormUnreliableError("weighted norm unreliable inside the fit window")
            rep = decay_report(s.statement, times, norms, q=s.q, mu=s.mu, m=s.m, window=cfg.window,
                               tolerance=tol, two_sided=two_sided, config_hash=data.config_hash)
        except NSAsympError as exc:
            rep = DecayReport(s.statement, s.q, s.mu, s.m, times, norms, math.nan, math.nan,
                              math.nan, tol, "undetermined", math.nan, two_sided, [str(exc)],
                              data.config_hash)
        rep.notes.extend(notes)
        reports[s] = rep
    _main_fallback(reports, cfg)
    return list(reports.values())


def _main_fallback(reports: dict, cfg: RunConfig) -> None:
    """A failing thm-main slope passes on residual <= 0.5 x the c-fm residual in the window (flagged)."""
    for s, rep in reports.items():
        if s.statement != "thm-main" or rep.verdict == "pass":
            continue
        base = reports.get(StatementSpec("c-fm", 0, s.q, 0.0))
        if base is None or base.times[-cfg.window:] != rep.times[-cfg.window:]:
            continue
        ratio = np.asarray(rep.norms[-cfg.window:]) / np.asarray(base.norms[-cfg.window:])
        if np.all(ratio <= 0.5):
            rep.verdict = "pass-fallback"
            rep.notes.append(f"slope gate failed; residual <= 0.5 x c-fm residual in window "
                             f"(max ratio {float(ratio.max()):.3g})")


# -- analyze / identities / report --------------------------------------------


def identity_context(data: RunData, expansion: Expansion) -> dict:
    cfg = data.config
    i1 = int(np.argmin([abs(math.log(t)) for t in data.times]))
    ns = min(cfg.N, 256)
    return {"grid": cfg.grid, "seed": cfg.seed, "omega": data.snapshot(i1), "expansion": expansion,
            "scaling_grid": Grid(2, ns, cfg.L * ns / cfg.N / 1.5)}


def _identities(data: RunData, expansion: Expansion) -> list:
    results = run_battery(identity_context(data, expansion), tuple(CASES))
    for r in results:
        r["config_hash"] = data.config_hash
    with open(data.run_dir / "identities.json", "w") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
    return results


def _stage(run_dir: Path, name: str, key, force: bool, body):
    with run_lock(run_dir):
        manifest = RunManifest.load(run_dir)
        st = manifest.stages.get(name, {})
        if st.get("status") == "complete" and st.get("key") == key and not force:
            log.info("%s: %s already complete", name, run_dir)
            return None
        manifest.stages[name] = {"status": "running", "key": key}
        manifest.save(run_dir)
        start = time.perf_counter()
        try:
            verdicts = body()
        except NSAsympError as exc:
            manifest.stages[name] = {"status": "failed", "key": key, "error": str(exc),
                                     "exit_code": exc.exit_code}
            manifest.save(run_dir)
            raise
        manifest.stages[name] = {"status": "complete", "key": key,
                                 "wall_clock": time.perf_counter() - start}
        manifest.verdicts.update(verdicts)
        manifest.save(run_dir)
        return verdicts


def analyze(run_dir, statements=None, *, force: bool = False):
    data = load_run(run_dir)
    cfg = data.config
    tokens = list(cfg.statements) if statements is None else list(statements)
    specs = parse_statements(tokens, cfg)

    def body():
        ex = data.expansion()
        verdicts = {}
        if specs:
            idx = evaluation_indices(data.times, cfg.window)
            reports = build_reports(data, specs, residual_norms(data, specs, ex, idx))
            ex.table.write_csv(data.run_dir / "moments.csv")
            write_reports_json(reports, data.run_dir / "decay_reports.json")
            plots = data.run_dir / "plots"
            plots.mkdir(exist_ok=True)
            for r in reports:
                write_svg(r, plots / f"{_slug(r)}.svg")
            verdicts["decay"] = {f"{_slug(r)}": r.verdict for r in reports}
        results = _identities(data, ex)
        if specs:
            ex.write_manifest(data.run_dir / "profiles.json")
        verdicts["identities"] = {r["id"]: r["pass"] for r in results}
        return verdicts

    return _stage(data.run_dir, "analyze", [s.label for s in specs], force, body)


def identities(run_dir, *, force: bool = False):
    data = load_run(run_dir)

    def body():
        results = _identities(data, data.expansion())
        return {"identities": {r["id"]: r["pass"] for r in results}}

    return _stage(data.run_dir, "identities", "battery", force, body)


def _slug(r: DecayReport) -> str:
    q = "inf" if r.q == math.inf else f"{r.q:g}"
    return f"{r.statement}_m{r.m}_q{q}_mu{r.mu:g}"


def load_reports(run_dir) -> list:
    path = Path(run_dir) / "decay_reports.json"
    if not path.exists():
        raise PreconditionError(f"{run_dir}: no decay_reports.json; run analyze first")
    with open(path) as fh:
        raw = json.load(fh)
    out = []
    for d in raw:
        d["q"] = math.inf if d["q"] == "inf" else d["q"]
        out.append(DecayReport(**d))
    return out


def report(run_dir, fmt: str) -> Path:
    run_dir = Path(run_dir)
    reports = load_reports(run_dir)
    if fmt == "json":
        return run_dir / "decay_reports.json"
    if fmt == "csv":
        path = run_dir / "report.csv"
        write_reports_csv(reports, path)
        return path
    if fmt == "svg":
        plots = run_dir / "plots"
        plots.mkdir(exist_ok=True)
        for r in reports:
            write_svg(r, plots / f"{_slug(r)}.svg")
        return plots
    raise ConfigurationError(f"unknown report format {fmt!r}")
