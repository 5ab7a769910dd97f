"""Reduced-order ensemble steppers, the POD differential filter and the
energy-stability monitor."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem, linsolve
from .errors import DegenerateEpsilon, InvariantViolation, SingularMatrix
from .pod import ReducedOperators


# --------------------------------------------------------------------------
# differential filter


class FilterOperator:
    """Differential filter on the POD space: (delta^2 S_R + I) abar = a.

    With an M-orthonormal basis the reduced mass matrix is the identity, so
    filtering reduced coordinates is a single R x R solve.
    """

    def __init__(self, reduced: ReducedOperators, delta):
        if delta < 0:
            raise ValueError("filter radius must be non-negative")
        self.delta = float(delta)
        self.reduced = reduced
        R = reduced.R
        self.matrix = self.delta ** 2 * reduced.S + np.eye(R)
        self._fact = None if self.delta == 0.0 else linsolve.factorize(self.matrix)

    def __call__(self, a):
        a = np.asarray(a, dtype=np.float64)
        if self._fact is None:
            return a.copy()
        return self._fact.solve(a)

    def apply_full(self, v):
        """Filter a full-order velocity vector; returns reduced coordinates."""
        return self(self.reduced.P @ np.asarray(v, dtype=np.float64))


def build_filter(reduced: ReducedOperators, delta):
    return FilterOperator(reduced, delta)


@dataclass
class FilterReport:
    n_samples: int
    max_l2_ratio: float
    max_grad_ratio: float
    max_grad_bound_ratio: float


def filter_stability_check(filt: FilterOperator, reduced_samples=(), full_samples=(), rtol=1e-12):
    """Check ||ubar|| <= ||u|| for every sample, ||grad ubar|| <= ||grad u|| for
    reduced samples and ||grad ubar|| <= ||S_R||^(1/2) ||u|| for every sample.

    Reduced samples are coordinate vectors; full samples are full-order
    velocity vectors. Raises ``InvariantViolation`` naming the first sample
    that breaks an inequality (beyond a relative round-off allowance).
    """
    red = filt.reduced
    S = red.S
    M = red.basis.M
    sroot = np.sqrt(red.S_norm)
    worst = [0.0, 0.0, 0.0]

    def ratio(x, y):
        return x / y if y > 0 else (0.0 if x == 0 else np.inf)

    n = 0
    for sid, a in enumerate(reduced_samples):
        a = np.asarray(a, dtype=np.float64)
        ab = filt(a)
        nu_, nb = np.sqrt(a @ a), np.sqrt(ab @ ab)
        gu, gb = np.sqrt(max(a @ S @ a, 0)), np.sqrt(max(ab @ S @ ab, 0))
        checks = (
            (nb, nu_, "||ubar|| > ||u||"),
            (gb, gu, "||grad ubar|| > ||grad u||"),
            (gb, sroot * nu_, "||grad ubar|| > ||S_R||^1/2 ||u||"),
        )
        for k, (lhs, rhs, msg) in enumerate(checks):
            worst[k] = max(worst[k], ratio(lhs, rhs))
            if lhs > rhs * (1 + rtol) + 1e-300:
                raise InvariantViolation(msg, sample=sid)
        n += 1
    for sid, v in enumerate(full_samples, start=n):
        v = np.asarray(v, dtype=np.float64)
        ab = filt.apply_full(v)
        nv = np.sqrt(max(v @ (M @ v), 0))
        nb = np.sqrt(ab @ ab)
        gb = np.sqrt(max(ab @ S @ ab, 0))
        for k, (lhs, rhs, msg) in ((0, (nb, nv, "||ubar|| > ||u||")),
                                   (2, (gb, sroot * nv, "||grad ubar|| > ||S_R||^1/2 ||u||"))):
            worst[k] = max(worst[k], ratio(lhs, rhs))
            if lhs > rhs * (1 + rtol) + 1e-300:
                raise InvariantViolation(msg, sample=sid)
        n += 1
    return FilterReport(n, *worst)


def filter_residual(filt: FilterOperator, flow, v):
    """Max weak-form residual |delta^2 (grad ubar, grad phi_i) + (ubar, phi_i)
    - (v, phi_i)| over the modes, evaluated with full-order matrices and
    scaled by max |(v, phi_i)|."""
    Phi = filt.reduced.basis.modes
    ubar = Phi @ filt.apply_full(v)
    lhs = filt.delta ** 2 * (Phi.T @ (flow.A @ ubar)) + Phi.T @ (flow.M @ ubar)
    rhs = Phi.T @ (flow.M @ np.asarray(v, dtype=np.float64))
    scale = max(np.max(np.abs(rhs)), np.finfo(float).tiny)
    return float(np.max(np.abs(lhs - rhs)) / scale)


# --------------------------------------------------------------------------
# steppers


@dataclass
class ROMEnsembleState:
    t: float
    coeffs: list
    viscosities: list
    forces: list
    reduced: ReducedOperators = field(repr=False, default=None)
    step_stats: dict = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        if len(self.coeffs) < 1:
            raise ValueError("an ensemble needs at least one member")
        self.coeffs = [np.asarray(a, dtype=np.float64) for a in self.coeffs]
        if any(not np.all(np.isfinite(a)) for a in self.coeffs):
            raise FloatingPointError("non-finite reduced coefficients")

    @property
    def J(self):
        return len(self.coeffs)

    @property
    def nu_max(self):
        return max(self.viscosities)

    def mean(self):
        return np.mean(np.stack(self.coeffs), axis=0)


def _step(state: ROMEnsembleState, dt, filt=None):
    red = state.reduced
    before = dict(linsolve.counters)
    smooth = filt if filt is not None else (lambda a: a)
    nu_max = state.nu_max
    mean = state.mean()
    t_next = state.t + dt
    R = red.R
    K = np.eye(R) / dt + red.convection(smooth(mean)) + nu_max * red.S
    try:
        fact = linsolve.factorize(K)
    except SingularMatrix as exc:
        raise SingularMatrix(f"reduced system at step {state.step + 1}: {exc}", exc.pivot) from None
    rhs = []
    for a, nu, f in zip(state.coeffs, state.viscosities, state.forces):
        b = (
            a / dt
            - red.convection(smooth(a - mean)) @ a
            - (nu - nu_max) * (red.S @ a)
            + red.force(f, t_next)
        )
        rhs.append(b)
    sols = linsolve.solve_many(fact, rhs)
    stats = {k: linsolve.counters[k] - before.get(k, 0) for k in ("factorize", "solve")}
    return ROMEnsembleState(
        t=t_next,
        coeffs=sols,
        viscosities=list(state.viscosities),
        forces=list(state.forces),
        reduced=red,
        step_stats=stats,
        step=state.step + 1,
    )


def step_ensemble_pod(state: ROMEnsembleState, dt):
    """Ensemble-POD step: one shared R x R matrix
    I/dt + B_R(<a>) + nu_max S_R, explicit fluctuation and viscosity
    corrections on each right-hand side."""
    return _step(state, dt)


def step_leray_ensemble_pod(state: ROMEnsembleState, dt, filt: FilterOperator):
    """Leray ensemble-POD step: as :func:`step_ensemble_pod` with both
    advecting fields (mean and fluctuation) passed through the filter."""
    return _step(state, dt, filt)


# --------------------------------------------------------------------------
# stability monitor


def epsilon(viscosities):
    """1 - max_j |nu_j - nu_max| / nu_max.

    Raises ``DegenerateEpsilon`` when the result is not positive.
    """
    nus = [float(v) for v in viscosities]
    nu_max = max(nus)
    if not nu_max > 0:
        raise DegenerateEpsilon("nu_max must be positive")
    eps = 1.0 - max(abs(v - nu_max) for v in nus) / nu_max
    if not eps > 0:
        raise DegenerateEpsilon(f"epsilon = {eps} (some viscosity is zero)")
    return eps


def discrete_dual_norm_sq(flow, load):
    """||f||_{-1,h}^2 = l^T A^{-1} l over the unconstrained velocity space."""
    if getattr(flow, "_stiff_fact", None) is None:
        Ac, _ = fem.apply_dirichlet(flow.A, None, flow.space.constrained)
        flow._stiff_fact = linsolve.factorize(Ac)
    l = np.array(load, dtype=np.float64)
    l[flow.space.constrained] = 0.0
    x = flow._stiff_fact.solve(l)
    return float(l @ x)


@dataclass
class StabilityRecord:
    step: int
    t: float
    j: int
    eps: float
    condition_lhs: float
    condition_rhs: float
    energy_lhs: float
    c_stab: float

    @property
    def condition_ok(self):
        return self.condition_lhs <= self.condition_rhs

    @property
    def bound_ok(self):
        return self.energy_lhs <= self.c_stab


class StabilityMonitor:
    """Tracks the energy bound of the Leray ensemble-POD scheme.

    For each member j and step n -> n+1 it records the condition factor
    (dt / nu_max) ||S_R||^(1/2) ||grad filt(a_j^n - <a>^n)||^2 (the
    Ladyzhenskaya constant is taken as 1; rescale by its square if known),
    the left side
        1/2 ||u^N||^2 + nu_max dt / 2 ||grad u^N||^2
            + eps nu_max dt / 4 sum_{n<N} ||u^{n+1}||^2
    and the bound
        C_stab = sum_{n<N} dt / (nu_max eps) ||f^{n+1}||_{-1,h}^2
            + 1/2 ||u^0||^2 + nu_max dt / 2 ||grad u^0||^2.
    """

    def __init__(self, state0: ROMEnsembleState, dt, filt: FilterOperator | None):
        self.dt = float(dt)
        self.filt = filt if filt is not None else (lambda a: a)
        self.red = state0.reduced
        self.eps = epsilon(state0.viscosities)
        self.nu_max = state0.nu_max
        S = self.red.S
        self._sum_sq = [0.0] * state0.J
        self._force_sum = [0.0] * state0.J
        self._base = [
            0.5 * float(a @ a) + 0.5 * self.nu_max * self.dt * float(a @ S @ a)
            for a in state0.coeffs
        ]
        self._dual_cache = {}
        self.records: list[StabilityRecord] = []
        self.step = 0

    def _dual(self, f, t):
        key = (f, float(t))
        if key not in self._dual_cache:
            flow = self.red.flow
            self._dual_cache[key] = discrete_dual_norm_sq(flow, flow.load(f, t))
        return self._dual_cache[key]

    def observe(self, state_n: ROMEnsembleState, state_next: ROMEnsembleState):
        S = self.red.S
        mean = state_n.mean()
        sroot = np.sqrt(self.red.S_norm)
        out = []
        for j, (a, b, f) in enumerate(zip(state_n.coeffs, state_next.coeffs, state_n.forces)):
            g = self.filt(a - mean)
            cond = float(self.dt / self.nu_max * sroot * float(g @ S @ g))
            self._sum_sq[j] += float(b @ b)
            self._force_sum[j] += self.dt / (self.nu_max * self.eps) * self._dual(f, state_next.t)
            lhs = (
                0.5 * float(b @ b)
                + 0.5 * self.nu_max * self.dt * float(b @ S @ b)
                + 0.25 * self.eps * self.nu_max * self.dt * self._sum_sq[j]
            )
            rec = StabilityRecord(
                step=self.step + 1,
                t=round(float(state_next.t), 12),
                j=j,
                eps=self.eps,
                condition_lhs=cond,
                condition_rhs=self.eps,
                energy_lhs=lhs,
                c_stab=self._force_sum[j] + self._base[j],
            )
            out.append(rec)
        self.step += 1
        self.records.extend(out)
        return out


def stability_monitor(states, dt, filt=None):
    """Run the monitor over a list of consecutive ROM states."""
    mon = StabilityMonitor(states[0], dt, filt)
    for s0, s1 in zip(states[:-1], states[1:]):
        mon.observe(s0, s1)
    return mon.records


def bound_implication(records, n_members):
    """For each step N, whether the condition held at every step up to N and
    whether the bound holds at N, per member. Returns a list of
    (j, N, condition_held_so_far, bound_ok)."""
    held = [True] * n_members
    out = []
    for rec in records:
        held[rec.j] = held[rec.j] and rec.condition_ok
        out.append((rec.j, rec.step, held[rec.j], rec.bound_ok))
    return out


def stability_csv(records) -> str:
    lines = ["step,t,j,eps,condition_lhs,condition_rhs,energy_lhs,c_stab"]
    for r in records:
        lines.append(
            f"{r.step},{r.t!r},{r.j},{r.eps!r},{r.condition_lhs!r},"
            f"{r.condition_rhs!r},{r.energy_lhs!r},{r.c_stab!r}"
        )
    return "\n".join(lines) + "\n"
