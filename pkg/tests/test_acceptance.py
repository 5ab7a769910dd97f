"""Acceptance criteria on the desk-scale configuration.

Each test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary (and immediately, visible with ``-s``).
"""
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from enspod import fem, fom, harness, pod, rom

RESULTS = []


def record(n, name, ok, detail):
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def desk_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("desk")


@pytest.fixture(scope="module")
def desk_config():
    return harness.ExperimentConfig()


@pytest.fixture(scope="module")
def desk_offline(desk_config, desk_dir):
    return harness.run_offline(desk_config, desk_dir)


@pytest.fixture(scope="module")
def desk_report(desk_config, desk_offline, desk_dir):
    return harness.run_online(desk_config, desk_offline, desk_dir)


def _rel(lhs, rhs, floor):
    return abs(lhs - rhs) / max(abs(rhs), floor)


def test_c01_pod_projection_identity(desk_offline):
    snaps, flow = desk_offline.snapshots, desk_offline.flow
    C = pod.correlation_matrix(snaps, flow.M)
    rank = pod.numerical_rank(pod.compute_pod_basis(snaps, flow.M, 1).eigenvalues)
    floor = pod.RANK_TOL * np.trace(C)
    worst_l2 = worst_h1 = 0.0
    for R in (1, 5, 10, rank):
        basis = pod.compute_pod_basis(snaps, flow.M, R)
        l2, r2, h1, rh1 = pod.projection_error_identity(snaps, basis, flow.A)
        worst_l2 = max(worst_l2, _rel(l2, r2, floor))
        worst_h1 = max(worst_h1, _rel(h1, rh1, floor * np.max(np.abs(flow.A.diagonal()))))
    record(1, "POD projection identity", worst_l2 <= 1e-8 and worst_h1 <= 1e-6,
           f"R in (1, 5, 10, {rank}); max rel L2 gap {worst_l2:.2e}, H1 gap {worst_h1:.2e}")


def test_c02_orthonormality_divergence(desk_offline):
    b, flow, red = desk_offline.basis, desk_offline.flow, desk_offline.reduced
    orth = np.max(np.abs(b.modes.T @ (flow.M @ b.modes) - np.eye(b.R)))
    div = max(np.linalg.norm(flow.B @ b.modes[:, i]) for i in range(b.R))
    rng = np.random.default_rng(2)
    inv = True
    for _ in range(100):
        u = b.reconstruct(rng.standard_normal(b.R))
        inv &= u @ (flow.A @ u) <= red.S_norm * (u @ (flow.M @ u)) * (1 + 1e-12)
    record(2, "orthonormality / divergence / inverse estimate",
           b.R == 10 and orth <= 1e-10 and div <= 1e-8 and inv,
           f"R={b.R}, max orth gap {orth:.2e}, max |B phi| {div:.2e}, inverse estimate on 100 samples: {inv}")


def test_c03_filter(desk_offline):
    red, flow = desk_offline.reduced, desk_offline.flow
    rng = np.random.default_rng(3)
    filt = rom.build_filter(red, 0.025)
    res = 0.0
    for _ in range(100):
        v = rng.standard_normal(flow.space.n_vel)
        v[flow.space.constrained] = 0.0
        res = max(res, rom.filter_residual(filt, flow, v))
    rep = rom.filter_stability_check(
        filt,
        reduced_samples=[rng.standard_normal(red.R) for _ in range(100)],
        full_samples=[rng.standard_normal(flow.space.n_vel) for _ in range(100)],
    )
    ident = rom.build_filter(red, 0.0)
    a = rng.standard_normal(red.R)
    ident_ok = np.array_equal(ident(a), a)
    st = rom.ROMEnsembleState(3.0, [rng.standard_normal(red.R) for _ in range(2)], [0.0016, 0.002],
                              [fom.rotational_force] * 2, red)
    p, q = st, st
    same = True
    for _ in range(20):
        p = rom.step_ensemble_pod(p, 0.01)
        q = rom.step_leray_ensemble_pod(q, 0.01, ident)
        same &= all(np.array_equal(x, y) for x, y in zip(p.coeffs, q.coeffs))
    record(3, "filter equation and stability", res <= 1e-10 and ident_ok and same,
           f"max weak residual {res:.2e}; {rep.n_samples} stability samples hold; "
           f"delta=0 identity bitwise: {ident_ok}; delta=0 stepper bitwise: {same}")


def test_c04_skew_symmetry(desk_offline):
    space, red = desk_offline.space, desk_offline.reduced
    rng = np.random.default_rng(4)
    fields = [desk_offline.snapshots.matrix[:, k] for k in (0, 40)] + [rng.standard_normal(space.n_vel)]
    worst = 0.0
    for w in fields:
        N = fem.assemble_convection(space, w)
        assert abs(N + N.T).max() == 0
        for _ in range(10):
            v = rng.standard_normal(space.n_vel)
            worst = max(worst, abs(v @ (N @ v)) / (abs(N).sum() * (v @ v)))
    tskew = max(np.max(np.abs(T + T.T)) for T in red.T) / np.max(np.abs(red.T))
    record(4, "skew-symmetry", worst <= 1e-12 and tskew <= 1e-12,
           f"max scaled |v^T N v| {worst:.2e}; max scaled |T_k + T_k^T| {tskew:.2e}")


def test_c05_ensemble_structure(desk_offline, desk_report):
    flow = desk_offline.flow
    u = desk_offline.snapshots.column(0, 0)
    be, _ = fom.step_backward_euler(flow, u, 0.0016, fom.rotational_force, 0.01, 3.01)
    st = fom.EnsembleState(3.0, [u.copy()], [0.0016], [fom.rotational_force])
    ens = fom.step_ensemble(flow, st, 0.01)
    bitwise = np.array_equal(ens.velocities[0], be)
    facts = desk_report.factorizations_per_step()
    counts_ok = all(v == [1] for v in facts.values())
    # J = 3 at both levels
    us = [desk_offline.snapshots.column(j % 2, j) for j in range(3)]
    nus = [0.0016, 0.0018, 0.002]
    f3 = fom.step_ensemble(flow, fom.EnsembleState(3.0, us, nus, [fom.rotational_force] * 3), 0.01)
    red = desk_offline.reduced
    r3 = rom.step_leray_ensemble_pod(
        rom.ROMEnsembleState(3.0, [pod.project_l2(desk_offline.basis, x) for x in us], nus,
                             [fom.rotational_force] * 3, red), 0.01, rom.build_filter(red, 0.025))
    j3 = f3.step_stats["factorize"] == 1 and r3.step_stats["factorize"] == 1
    record(5, "ensemble structure", bitwise and counts_ok and j3,
           f"J=1 equals backward Euler bitwise: {bitwise}; factorizations per step {facts}; J=3 one each: {j3}")


def test_c06_epsilon(desk_report):
    eps = {r.eps for r in desk_report.stability}
    ok = eps == {0.8} and rom.epsilon([0.002, 0.002]) == 1.0
    record(6, "epsilon arithmetic", ok, f"monitored eps values {sorted(eps)}; equal viscosities give "
                                        f"{rom.epsilon([0.002, 0.002])!r}")


def _common_start_records(config, offline):
    # both members start from the mean of the projected states, so the filtered
    # fluctuation starts at zero and the condition holds over the first steps
    a0 = [pod.project_l2(offline.basis, offline.snapshots.column(j, 0)) for j in range(config.J)]
    mean = sum(a0) / len(a0)
    red = offline.reduced
    filt = rom.build_filter(red, config.delta)
    st = rom.ROMEnsembleState(config.t_start, [mean.copy() for _ in a0], list(config.viscosities),
                              [config.forcing] * config.J, red)
    mon = rom.StabilityMonitor(st, config.dt, filt)
    for _ in range(config.n_steps()):
        nxt = rom.step_leray_ensemble_pod(st, config.dt, filt)
        mon.observe(st, nxt)
        st = nxt
    return mon.records


def test_c07_stability_bound(desk_config, desk_offline, desk_report):
    parts, ok = [], True
    for label, recs in (("desk run", desk_report.stability),
                        ("common start", _common_start_records(desk_config, desk_offline))):
        impl = rom.bound_implication(recs, desk_config.J)
        held = [b for _, _, h, b in impl if h]
        ok &= all(held)
        parts.append(f"{label}: condition held through {len(held)} of {len(impl)} (member, step) pairs, "
                     f"bound held at {sum(held)} of those and at {sum(r.bound_ok for r in recs)} overall")
    record(7, "stability bound implication", ok, "; ".join(parts))


def test_c08_leray_superiority(desk_report):
    s = desk_report.summary()
    per_j = {m: np.mean([desk_report.errors[f"l2_{m}_j{j}"].mean() for j in (1, 2)])
             for m in ("ensemble_pod", "leray")}
    l2_ok = s["l2_leray"] < s["l2_ensemble_pod"]
    ke_ok = s["ke_error_leray"] < s["ke_error_ensemble_pod"]
    record(8, "Leray superiority trend", l2_ok and ke_ok,
           f"time-averaged L2 Leray {s['l2_leray']:.4f} vs ensemble-POD {s['l2_ensemble_pod']:.4f}; "
           f"|KE - KE_benchmark| Leray {s['ke_error_leray']:.4f} vs ensemble-POD {s['ke_error_ensemble_pod']:.4f} "
           f"(per-realization L2, informational: {per_j['leray']:.4f} vs {per_j['ensemble_pod']:.4f})")


def test_c09_eigenvalue_export(desk_offline, desk_dir):
    rows = (desk_dir / "eigs.csv").read_text().splitlines()
    lam = np.array([float(r.split(",")[1]) for r in rows[1:]])
    C = pod.correlation_matrix(desk_offline.snapshots, desk_offline.flow.M)
    trace_gap = abs(lam.sum() - np.trace(C)) / np.trace(C)
    ok = len(lam) >= 40 and np.all(np.diff(lam) <= 0) and np.all(lam >= 0) and trace_gap <= 1e-10
    record(9, "eigenvalue export", ok,
           f"{len(lam)} eigenvalues, nonincreasing and nonnegative: {bool(np.all(np.diff(lam) <= 0) and np.all(lam >= 0))}, "
           f"trace gap {trace_gap:.2e}")


OUTPUTS = ("eigs.csv", "energy.csv", "error.csv", "modes_pod.csv", "modes_leray.csv",
           "stability.csv", "timing.csv", "mesh.txt", "snapshots.txt", "basis.txt")


def _cli_run(out, threads):
    env = dict(os.environ)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        env[var] = str(threads)
    for cmd in ("offline", "online"):
        subprocess.run([sys.executable, "-m", "enspod", cmd, "--output-dir", str(out)],
                       env=env, check=True, capture_output=True)


def test_c10_determinism(desk_report, desk_dir, tmp_path):
    # desk_report has written the in-process outputs; repeat the whole pipeline
    # in fresh processes with one and with several threads
    runs = {"1 thread": tmp_path / "t1", "4 threads": tmp_path / "t4"}
    _cli_run(runs["1 thread"], 1)
    _cli_run(runs["4 threads"], 4)
    diffs = []
    for name in OUTPUTS:
        ref = (Path(desk_dir) / name).read_bytes()
        for label, d in runs.items():
            if (d / name).read_bytes() != ref:
                diffs.append(f"{name} ({label})")
    record(10, "determinism", not diffs,
           f"{len(OUTPUTS)} files compared across 3 runs; differing: {diffs or 'none'}")
