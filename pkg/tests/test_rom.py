import numpy as np
import pytest

from enspod import fom, pod, rom
from enspod.errors import DegenerateEpsilon, InvariantViolation, SingularMatrix

NU = [0.0016, 0.002]


@pytest.fixture(scope="module")
def red(small_offline):
    return small_offline.reduced


def _state(red, coeffs, nus, force=fom.rotational_force):
    return rom.ROMEnsembleState(0.0, [np.array(a, dtype=float) for a in coeffs], list(nus),
                                [force] * len(coeffs), red)


def _run(state, n, dt, filt=None):
    out = [state]
    for _ in range(n):
        state = rom.step_leray_ensemble_pod(state, dt, filt) if filt else rom.step_ensemble_pod(state, dt)
        out.append(state)
    return out


# --- filter ---------------------------------------------------------------


def test_filter_zero_radius_is_identity(red, rng):
    f = rom.build_filter(red, 0.0)
    a = rng.standard_normal(red.R)
    assert np.array_equal(f(a), a)
    assert f(a) is not a


def test_filter_on_eigenvectors(red):
    mu, V = np.linalg.eigh(red.S)
    for delta in (0.025, 0.3):
        f = rom.build_filter(red, delta)
        for i in range(red.R):
            assert np.allclose(f(V[:, i]), V[:, i] / (1 + delta**2 * mu[i]), atol=1e-13)


def test_filter_matrix_spd(red):
    f = rom.build_filter(red, 0.025)
    assert np.array_equal(f.matrix, f.matrix.T)
    assert np.linalg.eigvalsh(f.matrix).min() >= 1.0 - 1e-12


def test_filter_weak_equation(small_offline, rng):
    f = rom.build_filter(small_offline.reduced, 0.025)
    flow = small_offline.flow
    for _ in range(100):
        v = rng.standard_normal(flow.space.n_vel)
        v[flow.space.constrained] = 0.0
        assert rom.filter_residual(f, flow, v) <= 1e-10


def test_filter_rejects_negative_radius(red):
    with pytest.raises(ValueError):
        rom.build_filter(red, -0.1)


@pytest.mark.parametrize("delta", [0.0, 0.025, 10.0])
def test_filter_stability_inequalities(small_offline, rng, delta):
    f = rom.build_filter(small_offline.reduced, delta)
    reduced = [np.zeros(f.reduced.R)] + [rng.standard_normal(f.reduced.R) for _ in range(100)]
    full = [rng.standard_normal(small_offline.space.n_vel) for _ in range(10)]
    rep = rom.filter_stability_check(f, reduced_samples=reduced, full_samples=full)
    assert rep.n_samples == 111
    assert rep.max_l2_ratio <= 1 + 1e-12
    if delta == 10.0:
        assert rep.max_l2_ratio < 0.1


def test_filter_stability_reports_violation(red, rng):
    class Amplifier(rom.FilterOperator):
        def __call__(self, a):
            return 2.0 * np.asarray(a)

    bad = Amplifier(red, 0.025)
    with pytest.raises(InvariantViolation) as err:
        rom.filter_stability_check(bad, reduced_samples=[np.zeros(red.R), rng.standard_normal(red.R)])
    assert err.value.sample == 1


# --- steppers -------------------------------------------------------------


@pytest.mark.parametrize("delta", [None, 0.025])
def test_zero_stays_zero(red, delta):
    filt = rom.build_filter(red, delta) if delta is not None else None
    st = _state(red, [np.zeros(red.R)], [0.002], fom.zero_force)
    for s in _run(st, 5, 0.01, filt):
        assert np.all(s.coeffs[0] == 0)


def test_identical_members(red, rng):
    a = rng.standard_normal(red.R)
    for s in _run(_state(red, [a, a.copy()], [0.002, 0.002]), 5, 0.01):
        assert np.array_equal(s.coeffs[0], s.coeffs[1])


def test_zero_radius_leray_is_plain_bitwise(red, rng):
    st = _state(red, [rng.standard_normal(red.R) for _ in NU], NU)
    plain = _run(st, 10, 0.01)
    leray = _run(st, 10, 0.01, rom.build_filter(red, 0.0))
    for p, q in zip(plain, leray):
        for a, b in zip(p.coeffs, q.coeffs):
            assert np.array_equal(a, b)


@pytest.mark.parametrize("J", [1, 2, 5])
def test_one_factorization_per_step(red, rng, J):
    st = _state(red, [rng.standard_normal(red.R) for _ in range(J)], np.linspace(0.001, 0.002, J))
    filt = rom.build_filter(red, 0.025)
    for s in _run(st, 3, 0.01, filt)[1:]:
        assert s.step_stats == {"factorize": 1, "solve": J}
    assert s.step == 3


def test_reduced_step_uses_filtered_fields(red, rng):
    # the Leray step equals the plain step with both advecting fields filtered
    st = _state(red, [rng.standard_normal(red.R) for _ in NU], NU)
    filt = rom.build_filter(red, 0.05)
    out = rom.step_leray_ensemble_pod(st, 0.01, filt)
    mean = st.mean()
    K = np.eye(red.R) / 0.01 + red.convection(filt(mean)) + 0.002 * red.S
    for j, (a, nu) in enumerate(zip(st.coeffs, NU)):
        b = a / 0.01 - red.convection(filt(a - mean)) @ a - (nu - 0.002) * red.S @ a \
            + red.force(fom.rotational_force, 0.01)
        assert np.allclose(out.coeffs[j], np.linalg.solve(K, b), rtol=1e-12, atol=1e-12)


def test_galerkin_consistency_full_rank(coarse_flow):
    nu, dt = 0.002, 0.01
    u0, _ = fom.solve_steady_stokes(coarse_flow, fom.rotational_force, nu)
    traj = [u for _, u in fom.backward_euler_trajectory(coarse_flow, u0, nu, fom.rotational_force,
                                                         dt, 0.0, 0.12)]
    A = np.column_stack(traj)
    lam = pod.compute_pod_basis(A, coarse_flow.M, 1).eigenvalues
    rank = pod.numerical_rank(lam)
    assert rank == A.shape[1]
    basis = pod.compute_pod_basis(A, coarse_flow.M, rank)
    red = pod.build_reduced_operators(basis, coarse_flow)
    for k in (0, 5):
        st = rom.ROMEnsembleState(k * dt, [pod.project_l2(basis, traj[k])], [nu],
                                  [fom.rotational_force], red)
        out = rom.step_ensemble_pod(st, dt)
        ref = pod.project_l2(basis, traj[k + 1])
        assert np.linalg.norm(out.coeffs[0] - ref) <= 1e-6 * np.linalg.norm(ref)


def test_singular_reduced_system_names_step(red):
    st = _state(red, [np.zeros(red.R)], [0.0], fom.zero_force)
    with pytest.raises(SingularMatrix, match="step 1"):
        rom.step_ensemble_pod(st, np.inf)


def test_state_rejects_nonfinite(red):
    with pytest.raises(FloatingPointError):
        _state(red, [np.full(red.R, np.nan)], [0.002])
    with pytest.raises(ValueError):
        rom.ROMEnsembleState(0.0, [], [], [], red)


# --- stability monitor ----------------------------------------------------


def test_epsilon_values():
    assert rom.epsilon([0.0016, 0.002]) == 0.8
    assert rom.epsilon([0.002, 0.002]) == 1.0
    assert rom.epsilon([0.5]) == 1.0
    with pytest.raises(DegenerateEpsilon):
        rom.epsilon([0.0, 0.002])
    with pytest.raises(DegenerateEpsilon):
        rom.epsilon([0.0, 0.0])


def test_monitor_zero_data(red):
    st = _state(red, [np.zeros(red.R)] * 2, NU, fom.zero_force)
    states = _run(st, 4, 0.01, rom.build_filter(red, 0.025))
    recs = rom.stability_monitor(states, 0.01, rom.build_filter(red, 0.025))
    assert len(recs) == 8
    for r in recs:
        assert r.energy_lhs == 0.0 and r.c_stab == 0.0
        assert r.bound_ok and r.condition_ok
        assert r.eps == 0.8


def test_monitor_records(small_offline, rng):
    red = small_offline.reduced
    filt = rom.build_filter(red, 0.025)
    st = _state(red, [0.1 * rng.standard_normal(red.R) for _ in NU], NU)
    states = _run(st, 6, 0.01, filt)
    recs = rom.stability_monitor(states, 0.01, filt)
    assert [r.step for r in recs] == [1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6]
    assert [r.j for r in recs[:2]] == [0, 1]
    # the bound only grows, the energy side includes the accumulated sum
    for j in (0, 1):
        c = [r.c_stab for r in recs if r.j == j]
        assert np.all(np.diff(c) >= 0)
    impl = rom.bound_implication(recs, 2)
    assert all(b for _, _, held, b in impl if held)
    text = rom.stability_csv(recs).splitlines()
    assert text[0] == "step,t,j,eps,condition_lhs,condition_rhs,energy_lhs,c_stab"
    assert len(text) == 13
    assert "np." not in "".join(text)


def test_discrete_dual_norm(small_offline, rng):
    flow = small_offline.flow
    load = flow.load(fom.rotational_force, 0.0)
    dual = rom.discrete_dual_norm_sq(flow, load)
    free = flow.space.free
    for _ in range(20):
        v = rng.standard_normal(flow.space.n_vel)
        v[~free] = 0.0
        assert (load @ v) ** 2 / (v @ (flow.A @ v)) <= dual * (1 + 1e-10)
    # the supremum is attained at the Riesz representative
    l = load.copy()
    l[~free] = 0.0
    r = flow._stiff_fact.solve(l)
    assert (l @ r) ** 2 / (r @ (flow.A @ r)) == pytest.approx(dual, rel=1e-10)
