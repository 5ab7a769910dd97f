"""Compare the numba and numpy versions of the hot kernels.

    python3 benchmarks/bench_kernels.py [--h 0.1] [--repeat 5]

Times local convection assembly on the annulus mesh and the Jacobi
eigensolver on snapshot-sized symmetric matrices, and checks that both
paths agree.
"""
import argparse
import time

import numpy as np

from enspod import _kernels, fem
from enspod._accel import HAVE_NUMBA
from enspod.mesh import generate_offset_annulus


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--h", type=float, default=0.1)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", default="76,152")
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed")

    space = fem.TaylorHoodSpace(generate_offset_annulus(h_target=args.h))
    rng = np.random.default_rng(0)
    wnod = space.element_values(rng.standard_normal(space.n_vel))
    kargs = (wnod, space.phi, space.grads, space.wdet)
    _kernels.convection_local_numba(*kargs)  # compile
    t_np, k_np = best_of(lambda: _kernels.convection_local_numpy(*kargs), args.repeat)
    t_nb, k_nb = best_of(lambda: _kernels.convection_local_numba(*kargs), args.repeat)
    print(f"convection_local  elements={space.mesh.n_triangles:6d}  "
          f"numpy {t_np * 1e3:9.3f} ms  numba {t_nb * 1e3:9.3f} ms  "
          f"speedup {t_np / t_nb:6.1f}x  max diff {np.max(np.abs(k_np - k_nb)):.1e}")

    for d in (int(s) for s in args.sizes.split(",")):
        X = rng.standard_normal((d, 3 * d))
        C = X @ X.T
        _kernels.jacobi_eig_numba(C.copy(), 1e-15, 60)
        t_np, (l_np, _, _) = best_of(lambda: _kernels.jacobi_eig_numpy(C.copy(), 1e-15, 60), 1)
        t_nb, (l_nb, _, _) = best_of(lambda: _kernels.jacobi_eig_numba(C.copy(), 1e-15, 60), args.repeat)
        diff = np.max(np.abs(np.sort(l_np) - np.sort(l_nb))) / np.max(np.abs(l_np))
        print(f"jacobi_eig        d={d:14d}  numpy {t_np * 1e3:9.3f} ms  numba {t_nb * 1e3:9.3f} ms  "
              f"speedup {t_np / t_nb:6.1f}x  rel eig diff {diff:.1e}")


if __name__ == "__main__":
    main()
