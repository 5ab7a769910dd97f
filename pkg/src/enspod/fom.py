"""Full-order solvers: steady Stokes, linearly implicit backward Euler and the
ensemble scheme with maximum-viscosity splitting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem, linsolve
from .errors import ConfigError


def rotational_force(x, y, t=0.0):
    """Counterclockwise body force (-4y(1-x^2-y^2), 4x(1-x^2-y^2))."""
    s = 4.0 * (1.0 - x * x - y * y)
    return -y * s, x * s


def zero_force(x, y, t=0.0):
    z = np.zeros_like(np.asarray(x, dtype=np.float64))
    return z, z


class FlowOperators:
    """Time-independent operators shared by every solve on one space."""

    def __init__(self, space: fem.TaylorHoodSpace):
        self.space = space
        self.M = fem.assemble_mass(space)
        self.A = fem.assemble_stiffness(space)
        self.B = fem.assemble_divergence(space)
        self.mp = fem.pressure_mass_vector(space)
        self._load_cache = {}

    @property
    def n_total(self):
        return self.space.n_vel + self.space.n_pr + 1

    def load(self, f, t):
        key = (f, float(t))
        if key not in self._load_cache:
            if len(self._load_cache) > 64:
                self._load_cache.clear()
            self._load_cache[key] = fem.assemble_load(self.space, f, t)
        return self._load_cache[key]

    def system(self, K):
        return fem.saddle_matrix(self.space, K, self.B, self.mp)

    def pad(self, vel_rhs):
        b = np.zeros(self.n_total)
        b[: self.space.n_vel] = vel_rhs
        b[self.space.constrained] = 0.0
        return b

    def unpack(self, x):
        u = np.array(x[: self.space.n_vel])
        u[self.space.constrained] = 0.0
        p = np.array(x[self.space.n_vel: self.space.n_vel + self.space.n_pr])
        return u, p


def _ops(space_or_ops):
    if isinstance(space_or_ops, FlowOperators):
        return space_or_ops
    return FlowOperators(space_or_ops)


def solve_steady_stokes(space, f, nu, t=0.0):
    """Solve nu (grad u, grad v) - (p, div v) = (f, v), (div u, q) = 0 with
    no-slip walls and zero-mean pressure. ``space`` may be a
    TaylorHoodSpace or prebuilt FlowOperators."""
    ops = _ops(space)
    fact = linsolve.factorize(ops.system(nu * ops.A))
    (x,) = linsolve.solve_many(fact, [ops.pad(ops.load(f, t))])
    return ops.unpack(x)


def step_backward_euler(space, u, nu, f, dt, t_next):
    """One linearly implicit backward Euler step, convecting with the lagged
    velocity. Returns (u_next, p_next)."""
    ops = _ops(space)
    u = np.asarray(u, dtype=np.float64)
    K = ops.M / dt + fem.assemble_convection(ops.space, u) + nu * ops.A
    fact = linsolve.factorize(ops.system(K))
    rhs = (ops.M @ u) / dt + ops.load(f, t_next)
    (x,) = linsolve.solve_many(fact, [ops.pad(rhs)])
    return ops.unpack(x)


@dataclass
class EnsembleState:
    """All realizations at one time level on a shared space."""

    t: float
    velocities: list
    viscosities: list
    forces: list
    pressures: list | None = None
    step_stats: dict = field(default_factory=dict)

    def __post_init__(self):
        J = len(self.velocities)
        if J < 1:
            raise ValueError("an ensemble needs at least one member")
        if len(self.viscosities) != J or len(self.forces) != J:
            raise ValueError("velocities, viscosities and forces must have equal length")
        if any(not (nu > 0) for nu in self.viscosities):
            raise ValueError("viscosities must be positive")

    @property
    def J(self):
        return len(self.velocities)

    @property
    def nu_max(self):
        return max(self.viscosities)

    def mean(self):
        return ensemble_mean(self.velocities)


def ensemble_mean(vectors):
    """Arithmetic mean over realizations, (1/J) sum_j v_j."""
    return np.mean(np.stack([np.asarray(v, dtype=np.float64) for v in vectors]), axis=0)


def step_ensemble(space, state: EnsembleState, dt):
    """Advance every realization with one shared coefficient matrix.

    Matrix: M/dt + N(<u>^n) + nu_max A (plus the saddle blocks), factorised
    once. Member j's right-hand side carries the explicit corrections
    -N(u_j - <u>) u_j - (nu_j - nu_max) A u_j and its load at t + dt.
    """
    ops = _ops(space)
    before = dict(linsolve.counters)
    t_next = state.t + dt
    nu_max = state.nu_max
    mean = state.mean()
    K = ops.M / dt + fem.assemble_convection(ops.space, mean) + nu_max * ops.A
    fact = linsolve.factorize(ops.system(K))
    rhs = []
    for u, nu, f in zip(state.velocities, state.viscosities, state.forces):
        u = np.asarray(u, dtype=np.float64)
        fluct = fem.assemble_convection(ops.space, u - mean)
        b = (ops.M @ u) / dt - fluct @ u - (nu - nu_max) * (ops.A @ u)
        rhs.append(ops.pad(b + ops.load(f, t_next)))
    sols = linsolve.solve_many(fact, rhs)
    vel, pr = zip(*(ops.unpack(x) for x in sols))
    stats = {k: linsolve.counters[k] - before.get(k, 0) for k in ("factorize", "solve")}
    return EnsembleState(
        t=t_next,
        velocities=list(vel),
        viscosities=list(state.viscosities),
        forces=list(state.forces),
        pressures=list(pr),
        step_stats=stats,
    )


def backward_euler_trajectory(space, u0, nu, f, dt, t0, t_end):
    """Yield (t, u) from t0 to t_end inclusive with backward Euler."""
    ops = _ops(space)
    n = _steps(t0, t_end, dt)
    u = np.asarray(u0, dtype=np.float64)
    yield t0, u
    for k in range(1, n + 1):
        t = t0 + k * dt
        u, _ = step_backward_euler(ops, u, nu, f, dt, t)
        yield t, u


def _steps(t0, t1, dt):
    n = (t1 - t0) / dt
    k = int(round(n))
    if abs(n - k) > 1e-9 * max(1.0, abs(n)):
        raise ConfigError(f"interval [{t0}, {t1}] is not a multiple of dt={dt}")
    return k


# --------------------------------------------------------------------------
# snapshots


@dataclass
class SnapshotSet:
    """Snapshot matrix with columns ordered realization-major, time-minor."""

    matrix: np.ndarray
    n_realizations: int
    t0: float
    dt_snap: float
    tags: list = field(default_factory=list)

    @property
    def K(self):
        return self.matrix.shape[0]

    @property
    def per_realization(self):
        return self.matrix.shape[1] // self.n_realizations

    @property
    def count(self):
        return self.matrix.shape[1]

    def column(self, j, m):
        return self.matrix[:, j * self.per_realization + m]


def record_snapshots(trajectories, start_time, interval, dt):
    """Keep the states at ``start_time + m * interval``.

    ``trajectories`` is one iterable of (t, u) pairs per realization (a
    single iterable is accepted for J = 1). Only the retained states are
    stored.

    Raises
    ------
    ConfigError
        If ``interval`` (or ``start_time``) is not a multiple of ``dt``.
    """
    stride = interval / dt
    if abs(stride - round(stride)) > 1e-9 * max(1.0, stride) or round(stride) < 1:
        raise ConfigError(f"snapshot interval {interval} is not a multiple of dt={dt}")
    stride = int(round(stride))
    k0 = start_time / dt
    if abs(k0 - round(k0)) > 1e-9 * max(1.0, k0):
        raise ConfigError(f"snapshot start {start_time} is not a multiple of dt={dt}")
    k0 = int(round(k0))
    if not isinstance(trajectories, (list, tuple)):
        trajectories = [trajectories]
    cols, tags = [], []
    counts = []
    for j, traj in enumerate(trajectories):
        m = 0
        for t, u in traj:
            k = int(round(t / dt))
            if k >= k0 and (k - k0) % stride == 0:
                cols.append(np.array(u, dtype=np.float64))
                tags.append((j, m, k0 * dt + m * interval))
                m += 1
        counts.append(m)
    if len(set(counts)) != 1 or counts[0] == 0:
        raise ConfigError(f"unequal or empty snapshot counts per realization: {counts}")
    return SnapshotSet(
        matrix=np.column_stack(cols),
        n_realizations=len(trajectories),
        t0=float(start_time),
        dt_snap=float(interval),
        tags=tags,
    )


def save_snapshots(snaps: SnapshotSet) -> str:
    lines = [
        f"snapshots {snaps.K} {snaps.n_realizations} {snaps.per_realization} "
        f"{snaps.t0!r} {snaps.dt_snap!r}"
    ]
    for c in range(snaps.count):
        lines.append(" ".join(repr(float(x)) for x in snaps.matrix[:, c]))
    return "\n".join(lines) + "\n"


def load_snapshots(text: str) -> SnapshotSet:
    from .errors import ParseError

    lines = text.splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 6 or head[0] != "snapshots":
        raise ParseError("expected 'snapshots <K> <J_S> <N_S+1> <t0> <dt_snap>'", 1)
    K, J, n = int(head[1]), int(head[2]), int(head[3])
    t0, dts = float(head[4]), float(head[5])
    cols = []
    for i, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        vals = np.array([float(x) for x in ln.split()])
        if len(vals) != K:
            raise ParseError(f"expected {K} values, got {len(vals)}", i)
        cols.append(vals)
    if len(cols) != J * n:
        raise ParseError(f"expected {J * n} columns, got {len(cols)}", len(lines))
    tags = [(j, m, t0 + m * dts) for j in range(J) for m in range(n)]
    return SnapshotSet(np.column_stack(cols), J, t0, dts, tags)


def snapshot_count(start_time, end_time, interval):
    """Snapshots per realization on [start_time, end_time]."""
    n = (end_time - start_time) / interval
    return int(math.floor(n + 1e-9)) + 1
