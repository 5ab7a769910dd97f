"""Experiment orchestration: configuration, the offline stage (full-order
runs, snapshots, POD), the online stage (benchmark, ensemble-POD and Leray
ensemble-POD), diagnostics and CSV export."""
from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import fem, fom, mesh as meshmod, pod, rom
from .errors import ConfigError, EnsPodError, PhaseError

FORCES = {"rotational": fom.rotational_force, "zero": fom.zero_force}

# desk runs use a coarse mesh and a shorter window; full runs match the
# original experiment's time window
_DESK = {"h_target": 0.1, "t_end": 4.5}
_FULL = {"h_target": 0.05, "t_end": 6.0}


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Flat key=value experiment description.

    ``h_target`` and ``t_end`` default from the ``desk`` flag when unset.
    ``stokes_nu`` is the viscosity of the steady Stokes solve giving each
    realization's initial state; ``None`` means the realization's own
    viscosity.
    """

    r1: float = 1.0
    r2: float = 0.1
    center: tuple = (0.5, 0.0)
    h_target: float | None = None
    mesh_file: str | None = None
    dt: float = 0.01
    t_start: float = 3.0
    t_end: float | None = None
    snapshot_interval: float = 0.04
    viscosities: tuple = (0.0016, 0.002)
    force: str = "rotational"
    stokes_nu: float | None = None
    R: int = 10
    delta: float = 0.025
    deltas: tuple = (0.0, 0.0125, 0.025, 0.05, 0.1)
    output_dir: str = "out"
    desk: bool = True
    seed: int = 0

    def __post_init__(self):
        base = _DESK if self.desk else _FULL
        if self.h_target is None:
            self.h_target = base["h_target"]
        if self.t_end is None:
            self.t_end = base["t_end"]
        self.center = tuple(float(c) for c in self.center)
        self.viscosities = tuple(float(v) for v in self.viscosities)
        self.deltas = tuple(float(d) for d in self.deltas)
        self.validate()

    def validate(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if len(self.center) != 2:
            raise ConfigError("center needs two coordinates")
        if self.R < 1:
            raise ConfigError("R must be at least 1")
        if self.delta < 0 or any(d < 0 for d in self.deltas):
            raise ConfigError("delta must be non-negative")
        if not self.viscosities or any(not v > 0 for v in self.viscosities):
            raise ConfigError("viscosities must be positive")
        if self.stokes_nu is not None and not self.stokes_nu > 0:
            raise ConfigError("stokes_nu must be positive")
        if self.force not in FORCES:
            raise ConfigError(f"unknown force {self.force!r}; choose from {sorted(FORCES)}")
        if not 0 <= self.t_start <= self.t_end:
            raise ConfigError("need 0 <= t_start <= t_end")
        for name, val in (("snapshot_interval", self.snapshot_interval),
                          ("t_start", self.t_start), ("t_end", self.t_end)):
            k = val / self.dt
            if abs(k - round(k)) > 1e-9 * max(1.0, k):
                raise ConfigError(f"{name}={val} is not a multiple of dt={self.dt}")
        if not self.snapshot_interval > 0:
            raise ConfigError("snapshot_interval must be positive")

    @property
    def J(self):
        return len(self.viscosities)

    @property
    def forcing(self):
        return FORCES[self.force]

    def n_steps(self):
        return fom._steps(self.t_start, self.t_end, self.dt)

    def snapshots_per_realization(self):
        return fom.snapshot_count(self.t_start, self.t_end, self.snapshot_interval)

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _convert(name, raw):
    raw = raw.strip()
    try:
        if name in ("center", "viscosities", "deltas"):
            return tuple(float(x) for x in raw.replace(" ", ",").split(",") if x)
        if name in ("R", "seed"):
            return int(raw)
        if name == "desk":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if name in ("mesh_file", "output_dir", "force"):
            return raw
        if name in ("h_target", "t_end", "stokes_nu") and raw.lower() in ("", "none", "auto"):
            return None
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


CONFIG_KEYS = tuple(f.name for f in fields(ExperimentConfig))


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines ('#' starts a comment); keyword overrides
    win over file values."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    for key, val in overrides.items():
        if val is None:
            continue
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _convert(key, val) if isinstance(val, str) else val
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), **overrides)


# --------------------------------------------------------------------------
# diagnostics


def kinetic_energy(u, M=None):
    """1/2 u^T M u, or 1/2 |a|^2 for reduced coordinates (M is None)."""
    u = np.asarray(u.values if isinstance(u, fem.FieldFunction) else u, dtype=np.float64)
    if M is None:
        return 0.5 * float(u @ u)
    return 0.5 * float(u @ (M @ u))


def l2_error(u_ref, a, basis: pod.PODBasis, M=None):
    """||u_ref - Phi a|| in L2."""
    M = basis.M if M is None else M
    u_ref = np.asarray(u_ref.values if isinstance(u_ref, fem.FieldFunction) else u_ref)
    d = u_ref - basis.reconstruct(a)
    return math.sqrt(max(float(d @ (M @ d)), 0.0))


def _fmt(x):
    return repr(float(x))


def write_series_csv(header, columns) -> str:
    """CSV text: header row, then one row per index of the equal-length
    columns, floats in shortest round-trip form."""
    n = len(columns[0])
    if any(len(c) != n for c in columns):
        raise ValueError("columns differ in length")
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(_fmt(c[i]) for c in columns))
    return "\n".join(lines) + "\n"


def export_mode_evolution(times, coeff_trajectory) -> str:
    """Per-mode time series of the ensemble-averaged reduced coefficients.

    ``coeff_trajectory`` has one entry per time; each entry is a list of the
    members' coefficient vectors (or an (n_times, R) array of means).
    """
    arr = np.asarray(coeff_trajectory, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=1)
    R = arr.shape[1]
    header = ["t"] + [f"a{i}" for i in range(1, R + 1)]
    return write_series_csv(header, [np.asarray(times)] + [arr[:, i] for i in range(R)])


def total_variation(series):
    s = np.asarray(series, dtype=np.float64)
    return float(np.sum(np.abs(np.diff(s, axis=0))))


# --------------------------------------------------------------------------
# offline stage


@dataclass
class OfflineResult:
    mesh: meshmod.Mesh
    space: fem.TaylorHoodSpace
    flow: fom.FlowOperators
    snapshots: fom.SnapshotSet
    basis: pod.PODBasis
    reduced: pod.ReducedOperators
    wall: dict = field(default_factory=dict)


@contextmanager
def _phase(name):
    try:
        yield
    except PhaseError:
        raise
    except (EnsPodError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise PhaseError(name, exc) from exc


@contextmanager
def deterministic_threads():
    """Pin BLAS/OpenMP pools to one thread so reductions run in a fixed order."""
    with threadpool_limits(limits=1):
        yield


def build_mesh(config: ExperimentConfig) -> meshmod.Mesh:
    if config.mesh_file:
        m = meshmod.load_mesh(Path(config.mesh_file).read_text())
    else:
        m = meshmod.generate_offset_annulus(
            r1=config.r1, r2=config.r2, center=config.center, h_target=config.h_target
        )
    meshmod.validate(m)
    return m


def _initial_states(config, flow):
    out = []
    for nu in config.viscosities:
        nu0 = config.stokes_nu if config.stokes_nu is not None else nu
        u0, _ = fom.solve_steady_stokes(flow, config.forcing, nu0, t=0.0)
        out.append(u0)
    return out


def run_offline(config: ExperimentConfig, output_dir=None) -> OfflineResult:
    """Full-order backward Euler per realization from a steady Stokes start
    at t = 0 to ``t_end``, snapshots from ``t_start`` every
    ``snapshot_interval``, then the POD basis and reduced operators.

    Errors are re-raised as ``PhaseError`` tagged mesh, fom or pod. Writes
    mesh.txt, snapshots.txt, basis.txt and eigs.csv when ``output_dir`` is
    given.
    """
    wall = {}
    with deterministic_threads():
        t0 = time.perf_counter()
        with _phase("mesh"):
            m = build_mesh(config)
            space = fem.TaylorHoodSpace(m)
        wall["mesh"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        with _phase("fom"):
            flow = fom.FlowOperators(space)
            starts = _initial_states(config, flow)
            trajs = [
                fom.backward_euler_trajectory(flow, u0, nu, config.forcing, config.dt, 0.0, config.t_end)
                for u0, nu in zip(starts, config.viscosities)
            ]
            snaps = fom.record_snapshots(trajs, config.t_start, config.snapshot_interval, config.dt)
        wall["fom"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        with _phase("pod"):
            basis = pod.compute_pod_basis(snaps, flow.M, config.R)
            reduced = pod.build_reduced_operators(basis, flow)
        wall["pod"] = time.perf_counter() - t0

    result = OfflineResult(m, space, flow, snaps, basis, reduced, wall)
    if output_dir is not None:
        save_offline(result, output_dir)
    return result


def save_offline(result: OfflineResult, output_dir):
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mesh.txt").write_text(meshmod.save_mesh(result.mesh))
    (out / "snapshots.txt").write_text(fom.save_snapshots(result.snapshots))
    (out / "basis.txt").write_text(pod.save_basis(result.basis))
    (out / "eigs.csv").write_text(pod.eigenvalue_csv(result.basis))


def load_offline(config: ExperimentConfig, output_dir) -> OfflineResult:
    """Rebuild the offline products from the files written by
    :func:`run_offline`. The basis is recomputed from the stored snapshots
    so the eigenvector coefficients are available."""
    out = Path(output_dir)
    with deterministic_threads():
        with _phase("mesh"):
            m = meshmod.load_mesh((out / "mesh.txt").read_text())
            space = fem.TaylorHoodSpace(m)
        with _phase("pod"):
            flow = fom.FlowOperators(space)
            snaps = fom.load_snapshots((out / "snapshots.txt").read_text())
            if snaps.K != space.n_vel:
                raise ConfigError("snapshot length does not match the mesh")
            basis = pod.compute_pod_basis(snaps, flow.M, config.R)
            reduced = pod.build_reduced_operators(basis, flow)
    return OfflineResult(m, space, flow, snaps, basis, reduced)


# --------------------------------------------------------------------------
# online stage


@dataclass
class RunReport:
    """Time series of one online run; every series has one value per time
    level ``t_start + k dt``."""

    times: np.ndarray
    eigenvalues: np.ndarray
    energy: dict
    errors: dict
    modes_pod: np.ndarray
    modes_leray: np.ndarray
    stability: list
    timing: dict
    wall: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        for name, s in list(self.energy.items()) + list(self.errors.items()):
            if len(s) != n:
                raise ValueError(f"series {name} has {len(s)} values, expected {n}")
            if not np.all(np.isfinite(s)):
                raise FloatingPointError(f"series {name} is not finite")
        if len(self.modes_pod) != n or len(self.modes_leray) != n:
            raise ValueError("mode series length mismatch")

    def time_average(self, series):
        return float(np.mean(series))

    def ke_error(self, method, variant="mean"):
        """Time-averaged |KE(method) - KE(benchmark)|.

        variant "mean" uses the energy of the ensemble-mean field, "avg" the
        average of the members' energies.
        """
        p = "ke" if variant == "mean" else "ke_avg"
        return self.time_average(np.abs(self.energy[f"{p}_{method}"] - self.energy[f"{p}_benchmark"]))

    def l2_error(self, method):
        return self.time_average(self.errors[f"l2_{method}"])

    def factorizations_per_step(self):
        return {k: sorted(set(v["factorize"])) for k, v in self.timing.items()}

    def summary(self):
        return {
            "l2_ensemble_pod": self.l2_error("ensemble_pod"),
            "l2_leray": self.l2_error("leray"),
            "ke_error_ensemble_pod": self.ke_error("ensemble_pod"),
            "ke_error_leray": self.ke_error("leray"),
            "ke_avg_error_ensemble_pod": self.ke_error("ensemble_pod", "avg"),
            "ke_avg_error_leray": self.ke_error("leray", "avg"),
            "tv_modes_pod": total_variation(self.modes_pod),
            "tv_modes_leray": total_variation(self.modes_leray),
        }


def _rom_run(config, offline, start_coeffs, delta, monitor=False):
    red = offline.reduced
    filt = rom.build_filter(red, delta)
    state = rom.ROMEnsembleState(
        t=config.t_start,
        coeffs=[a.copy() for a in start_coeffs],
        viscosities=list(config.viscosities),
        forces=[config.forcing] * config.J,
        reduced=red,
    )
    mon = rom.StabilityMonitor(state, config.dt, filt) if monitor else None
    states = [state]
    for _ in range(config.n_steps()):
        nxt = rom.step_leray_ensemble_pod(state, config.dt, filt)
        if mon is not None:
            mon.observe(state, nxt)
        states.append(nxt)
        state = nxt
    return states, (mon.records if mon is not None else [])


def _benchmark(config, offline, starts):
    """Backward Euler per realization from the t_start states."""
    out = []
    for u0, nu in zip(starts, config.viscosities):
        traj = fom.backward_euler_trajectory(
            offline.flow, u0, nu, config.forcing, config.dt, config.t_start, config.t_end
        )
        out.append([u for _, u in traj])
    return out


def _fom_ensemble(config, offline, starts):
    state = fom.EnsembleState(
        t=config.t_start,
        velocities=[u.copy() for u in starts],
        viscosities=list(config.viscosities),
        forces=[config.forcing] * config.J,
    )
    states = [state]
    for _ in range(config.n_steps()):
        state = fom.step_ensemble(offline.flow, state, config.dt)
        states.append(state)
    return states


def run_online(config: ExperimentConfig, offline: OfflineResult, output_dir=None) -> RunReport:
    """Benchmark (backward Euler per realization), the full-order ensemble
    scheme, ensemble-POD and Leray ensemble-POD over [t_start, t_end], all
    started from the t_start snapshots (projected for the reduced models).
    """
    M = offline.flow.M
    basis = offline.basis
    snaps = offline.snapshots
    if snaps.n_realizations != config.J:
        raise PhaseError("rom", ConfigError("snapshot realizations do not match the viscosities"))
    starts = [snaps.column(j, 0).copy() for j in range(config.J)]
    n = config.n_steps()
    times = np.array([round(config.t_start + k * config.dt, 12) for k in range(n + 1)])
    wall = {}

    with deterministic_threads():
        t0 = time.perf_counter()
        with _phase("fom"):
            bench = _benchmark(config, offline, starts)
        wall["benchmark"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        with _phase("fom"):
            ens = _fom_ensemble(config, offline, starts)
        wall["fom_ensemble"] = time.perf_counter() - t0

        a0 = [pod.project_l2(basis, u) for u in starts]
        t0 = time.perf_counter()
        with _phase("rom"):
            plain, _ = _rom_run(config, offline, a0, 0.0)
        wall["ensemble_pod"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        with _phase("rom"):
            leray, records = _rom_run(config, offline, a0, config.delta, monitor=True)
        wall["leray"] = time.perf_counter() - t0

        bench_mean = [fom.ensemble_mean([b[k] for b in bench]) for k in range(n + 1)]
        ens_mean = [s.mean() for s in ens]
        energy = {
            "ke_benchmark": np.array([kinetic_energy(u, M) for u in bench_mean]),
            "ke_fom_ensemble": np.array([kinetic_energy(u, M) for u in ens_mean]),
            "ke_ensemble_pod": np.array([kinetic_energy(s.mean()) for s in plain]),
            "ke_leray": np.array([kinetic_energy(s.mean()) for s in leray]),
            "ke_avg_benchmark": np.array(
                [np.mean([kinetic_energy(b[k], M) for b in bench]) for k in range(n + 1)]
            ),
            "ke_avg_fom_ensemble": np.array(
                [np.mean([kinetic_energy(u, M) for u in s.velocities]) for s in ens]
            ),
            "ke_avg_ensemble_pod": np.array(
                [np.mean([kinetic_energy(a) for a in s.coeffs]) for s in plain]
            ),
            "ke_avg_leray": np.array(
                [np.mean([kinetic_energy(a) for a in s.coeffs]) for s in leray]
            ),
        }
        errors = {
            "l2_ensemble_pod": np.array([l2_error(bench_mean[k], plain[k].mean(), basis) for k in range(n + 1)]),
            "l2_leray": np.array([l2_error(bench_mean[k], leray[k].mean(), basis) for k in range(n + 1)]),
            "l2_fom_ensemble": np.array(
                [fem.l2_norm(M, bench_mean[k] - ens_mean[k]) for k in range(n + 1)]
            ),
        }
        for j in range(config.J):
            errors[f"l2_ensemble_pod_j{j + 1}"] = np.array(
                [l2_error(bench[j][k], plain[k].coeffs[j], basis) for k in range(n + 1)]
            )
            errors[f"l2_leray_j{j + 1}"] = np.array(
                [l2_error(bench[j][k], leray[k].coeffs[j], basis) for k in range(n + 1)]
            )

    timing = {
        name: {
            "factorize": [s.step_stats.get("factorize", 0) for s in states[1:]],
            "solve": [s.step_stats.get("solve", 0) for s in states[1:]],
        }
        for name, states in (("fom_ensemble", ens), ("ensemble_pod", plain), ("leray", leray))
    }
    report = RunReport(
        times=times,
        eigenvalues=basis.eigenvalues,
        energy=energy,
        errors=errors,
        modes_pod=np.array([s.mean() for s in plain]),
        modes_leray=np.array([s.mean() for s in leray]),
        stability=records,
        timing=timing,
        wall=wall,
    )
    if output_dir is not None:
        write_report(report, output_dir)
    return report


def write_report(report: RunReport, output_dir):
    """energy.csv, error.csv, modes_pod.csv, modes_leray.csv, stability.csv,
    timing.csv (factorisation and solve counts per step) and the
    non-deterministic wall-clock times in timing_wall.json."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t = report.times
    (out / "energy.csv").write_text(
        write_series_csv(["t", *report.energy], [t, *report.energy.values()])
    )
    (out / "error.csv").write_text(
        write_series_csv(["t", *report.errors], [t, *report.errors.values()])
    )
    (out / "modes_pod.csv").write_text(export_mode_evolution(t, report.modes_pod))
    (out / "modes_leray.csv").write_text(export_mode_evolution(t, report.modes_leray))
    (out / "stability.csv").write_text(rom.stability_csv(report.stability))
    header, cols = ["t"], [t[1:]]
    for name, stats in report.timing.items():
        header += [f"{name}_factorizations", f"{name}_solves"]
        cols += [stats["factorize"], stats["solve"]]
    lines = [",".join(header)]
    for i in range(len(t) - 1):
        lines.append(",".join([_fmt(cols[0][i])] + [str(int(c[i])) for c in cols[1:]]))
    (out / "timing.csv").write_text("\n".join(lines) + "\n")
    (out / "timing_wall.json").write_text(json.dumps(report.wall, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# delta sweep


def sweep_delta(config: ExperimentConfig, offline: OfflineResult, deltas=None, output_dir=None):
    """Time-averaged kinetic-energy and L2 errors of the Leray model for each
    filter radius, measured against the backward Euler benchmark. Returns
    rows (delta, ke_error, l2_error) and the delta with the smallest energy
    error."""
    deltas = config.deltas if deltas is None else tuple(deltas)
    snaps = offline.snapshots
    M = offline.flow.M
    starts = [snaps.column(j, 0).copy() for j in range(config.J)]
    rows = []
    with deterministic_threads():
        bench = _benchmark(config, offline, starts)
        n = config.n_steps()
        bmean = [fom.ensemble_mean([b[k] for b in bench]) for k in range(n + 1)]
        ke_b = np.array([kinetic_energy(u, M) for u in bmean])
        a0 = [pod.project_l2(offline.basis, u) for u in starts]
        for d in deltas:
            states, _ = _rom_run(config, offline, a0, d)
            ke = np.array([kinetic_energy(s.mean()) for s in states])
            l2 = np.array([l2_error(bmean[k], states[k].mean(), offline.basis) for k in range(n + 1)])
            rows.append((d, float(np.mean(np.abs(ke - ke_b))), float(np.mean(l2))))
    best = min(rows, key=lambda r: r[1])[0]
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["delta,ke_error,l2_error"] + [",".join(_fmt(x) for x in r) for r in rows]
        (out / "sweep_delta.csv").write_text("\n".join(lines) + "\n")
    return rows, best


# --------------------------------------------------------------------------
# invariant suite


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail}"


def verify(config: ExperimentConfig, offline: OfflineResult, n_samples=100):
    """Run the structural invariant checks on offline products."""
    rng = np.random.default_rng(config.seed)
    flow, basis, red = offline.flow, offline.basis, offline.reduced
    space = offline.space
    out = []

    def check(name, ok, detail):
        out.append(CheckResult(name, bool(ok), detail))

    try:
        meshmod.validate(offline.mesh)
        check("mesh", True, f"{offline.mesh.n_vertices} vertices, {offline.mesh.n_triangles} triangles")
    except EnsPodError as exc:
        check("mesh", False, str(exc))

    G = basis.modes.T @ (flow.M @ basis.modes)
    orth = float(np.max(np.abs(G - np.eye(basis.R))))
    check("orthonormality", orth <= 1e-10, f"max |Phi^T M Phi - I| = {orth:.3e}")
    div = float(np.max(np.abs(flow.B @ basis.modes)))
    check("divergence", div <= 1e-8, f"max |B phi| = {div:.3e}")

    worst = 0.0
    for _ in range(5):
        w = rng.standard_normal(space.n_vel)
        v = rng.standard_normal(space.n_vel)
        N = fem.assemble_convection(space, w)
        scale = float(np.abs(N).sum()) * float(v @ v) or 1.0
        worst = max(worst, abs(float(v @ (N @ v))) / scale)
    check("convection skew", worst <= 1e-12, f"max scaled |v^T N v| = {worst:.3e}")
    tskew = max(float(np.max(np.abs(T + T.T))) for T in red.T) / max(float(np.max(np.abs(red.T))), 1e-300)
    check("tensor skew", tskew <= 1e-12, f"max |T_k + T_k^T| (scaled) = {tskew:.3e}")

    filt = rom.build_filter(red, config.delta)
    res = max(filter_residual_sample(filt, flow, rng) for _ in range(n_samples))
    check("filter equation", res <= 1e-10, f"max scaled weak residual = {res:.3e}")
    try:
        rep = rom.filter_stability_check(
            filt,
            reduced_samples=[rng.standard_normal(basis.R) for _ in range(n_samples)],
            full_samples=[rng.standard_normal(space.n_vel) for _ in range(10)],
        )
        check("filter stability", True, f"{rep.n_samples} samples")
    except EnsPodError as exc:
        check("filter stability", False, str(exc))

    inv_ok = True
    for _ in range(n_samples):
        a = rng.standard_normal(basis.R)
        inv_ok &= float(a @ red.S @ a) <= red.S_norm * float(a @ a) * (1 + 1e-12)
    check("inverse estimate", inv_ok, f"||grad u||^2 <= ||S_R|| ||u||^2 on {n_samples} samples")

    try:
        eps = rom.epsilon(config.viscosities)
        check("epsilon", 0 < eps <= 1, f"eps = {eps!r}")
    except EnsPodError as exc:
        check("epsilon", False, str(exc))
    return out


def filter_residual_sample(filt, flow, rng):
    v = rng.standard_normal(flow.space.n_vel)
    v[flow.space.constrained] = 0.0
    return rom.filter_residual(filt, flow, v)
