"""Hot numeric kernels, each with a numba loop version and a numpy version.

The public name (without suffix) is bound at import time according to
``_accel.USE_NUMBA``. Both versions are always importable so tests and the
benchmark can compare them.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


# ---------------------------------------------------------------------------
# skew-symmetric convection, local element matrices
#
#   K[e, a, b] = 1/2 sum_q wq * phi_a(q) * (w(q) . grad phi_b(q))
#   N[e]       = K[e] - K[e]^T


def convection_local_numpy(wnod, phi, grads, wdet):
    """wnod (F, 6, 2), phi (Q, 6), grads (F, Q, 6, 2), wdet (F, Q) -> (F, 6, 6)."""
    wq = np.einsum("qa,fac->fqc", phi, wnod)
    adv = np.einsum("fqc,fqbc->fqb", wq, grads)
    k = 0.5 * np.einsum("fq,qa,fqb->fab", wdet, phi, adv)
    return k - k.transpose(0, 2, 1)


@njit
def convection_local_numba(wnod, phi, grads, wdet):
    nf = wnod.shape[0]
    nq = phi.shape[0]
    out = np.zeros((nf, 6, 6))
    adv = np.empty(6)
    for e in range(nf):
        for q in range(nq):
            w0 = 0.0
            w1 = 0.0
            for a in range(6):
                w0 += phi[q, a] * wnod[e, a, 0]
                w1 += phi[q, a] * wnod[e, a, 1]
            for b in range(6):
                adv[b] = w0 * grads[e, q, b, 0] + w1 * grads[e, q, b, 1]
            s = 0.5 * wdet[e, q]
            for a in range(6):
                c = s * phi[q, a]
                for b in range(6):
                    out[e, a, b] += c * adv[b]
        for a in range(6):
            for b in range(a, 6):
                d = out[e, a, b] - out[e, b, a]
                out[e, a, b] = d
                out[e, b, a] = -d
    return out


# ---------------------------------------------------------------------------
# symmetric Jacobi eigenvalue sweeps


def jacobi_eig_numpy(a, tol, max_sweeps):
    """Cyclic Jacobi rotations on a copy of the symmetric matrix ``a``.

    Returns (diagonal, eigenvector matrix, sweeps used).
    """
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    for sweep in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= tol * np.sqrt(np.sum(a * a)) or off == 0.0:
            return np.diag(a).copy(), v, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v, max_sweeps


@njit
def jacobi_eig_numba(a, tol, max_sweeps):
    a = a.copy()
    n = a.shape[0]
    v = np.eye(n)
    for sweep in range(max_sweeps):
        off = 0.0
        tot = 0.0
        for i in range(n):
            for j in range(n):
                tot += a[i, j] * a[i, j]
                if j > i:
                    off += a[i, j] * a[i, j]
        off = np.sqrt(off)
        if off <= tol * np.sqrt(tot) or off == 0.0:
            return np.diag(a).copy(), v, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta != 0.0:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                else:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return np.diag(a).copy(), v, max_sweeps


if USE_NUMBA:
    convection_local = convection_local_numba
    jacobi_eig = jacobi_eig_numba
else:
    convection_local = convection_local_numpy
    jacobi_eig = jacobi_eig_numpy
