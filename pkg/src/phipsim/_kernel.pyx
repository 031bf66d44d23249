# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping kernels.

``midpoint_evolve`` advances a density matrix through a list of steps with a
state-dependent Hamiltonian

    H_k = Hlin[idx[k]] + sum_j (sum_l M[j, l] m_l) ops[j]

where ``Hlin`` is a table of state-independent step Hamiltonians and ``m``
holds the midpoint expectations of ``ops``. Each step exponentiates
H_k exactly (Hermitian eigendecomposition via LAPACK zheev) and iterates the
midpoint expectations to self-consistency. The pure-numpy twin lives in
``_kernel_py.py`` and must stay numerically equivalent.
"""
import numpy as np
from libc.math cimport cos, sin, fabs
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_lapack cimport zheev


cdef inline void _expect(double complex* rho, double complex* ops, int nops,
                         int n, double* out) noexcept nogil:
    cdef int j, a, b, nn = n * n
    cdef double s
    cdef double complex r, o
    for j in range(nops):
        s = 0.0
        for a in range(n):
            for b in range(n):
                r = rho[a * n + b]
                o = ops[j * nn + b * n + a]
                s += r.real * o.real - r.imag * o.imag
        out[j] = s


cdef int _step(double complex* H, double h, double complex* rho_in,
               double complex* rho_out, int n, double complex* a,
               double* w, double complex* work, int lwork, double* rwork,
               double complex* U, double complex* tmp) noexcept nogil:
    """rho_out = exp(-i H h) rho_in exp(i H h); returns LAPACK info."""
    cdef int i, j, k, info = 0
    cdef char jobz = b'V'
    cdef char uplo = b'L'
    cdef double complex acc, ph, v
    # column-major copy of H for LAPACK
    for i in range(n):
        for j in range(n):
            a[i + j * n] = H[i * n + j]
    zheev(&jobz, &uplo, &n, a, &n, w, work, &lwork, rwork, &info)
    if info != 0:
        return info
    # U = V diag(exp(-i w h)) V^H, V[i, k] = a[i + k n]
    for k in range(n):
        ph = cos(w[k] * h) - 1j * sin(w[k] * h)
        for i in range(n):
            tmp[i + k * n] = a[i + k * n] * ph
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                v = a[j + k * n]
                acc = acc + tmp[i + k * n] * (v.real - 1j * v.imag)
            U[i * n + j] = acc
    # tmp = U rho
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc = acc + U[i * n + k] * rho_in[k * n + j]
            tmp[i * n + j] = acc
    # rho_out = tmp U^H
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                v = U[j * n + k]
                acc = acc + tmp[i * n + k] * (v.real - 1j * v.imag)
            rho_out[i * n + j] = acc
    return 0


def midpoint_evolve(double complex[:, ::1] rho0, double complex[:, :, ::1] Hlin,
                    long[::1] idx, double complex[:, :, ::1] ops,
                    double[::1] dt, double[:, ::1] M, int max_iter, double tol,
                    long[::1] record_steps, double complex[:, :, ::1] obs):
    """Advance ``rho0`` through ``len(dt)`` implicit-midpoint steps.

    Parameters
    ----------
    rho0 : (n, n) complex
    Hlin : (nunique, n, n) complex
        State-independent step Hamiltonians.
    idx : (nsteps,) int64
        Row of ``Hlin`` used by each step.
    ops : (nops, n, n) complex
        Operators carrying the mean-field coefficients.
    dt : (nsteps,) float
    M : (nops, nops) float
        Mean-field coupling; all zeros selects a single exact pass per step.
    max_iter : int
    tol : float
        Fixed-point tolerance on the midpoint expectations.
    record_steps : (nrec,) int64, sorted
        Step counts after which ``obs`` expectations are recorded (0 = start).
    obs : (nobs, n, n) complex

    Returns
    -------
    rho : (n, n) complex
    records : (nrec, nobs) float
    max_residual : float
    """
    cdef int n = rho0.shape[0]
    cdef int nops = ops.shape[0]
    cdef int nobs = obs.shape[0]
    cdef Py_ssize_t nsteps = dt.shape[0]
    cdef Py_ssize_t nrec = record_steps.shape[0]
    cdef int nn = n * n
    cdef bint nonlinear = False
    cdef int i, j, l, it
    cdef Py_ssize_t k, r = 0
    cdef double res, max_res = 0.0, d, ratio

    for j in range(nops):
        for l in range(nops):
            if M[j, l] != 0.0:
                nonlinear = True

    rho_np = np.array(rho0, dtype=np.complex128, order="C")
    out_np = np.empty_like(rho_np)
    records_np = np.zeros((nrec, nobs), dtype=np.float64)
    cdef double complex[:, ::1] rho = rho_np
    cdef double complex[:, ::1] rho_new = out_np
    cdef double[:, ::1] records = records_np
    cdef double complex* Hl = &Hlin[0, 0, 0]
    cdef double complex* opsp = &ops[0, 0, 0]
    cdef double complex* obsp = &obs[0, 0, 0] if nobs > 0 else NULL

    cdef int lwork = 4 * n
    cdef double complex* H = <double complex*> malloc(nn * sizeof(double complex))
    cdef double complex* a = <double complex*> malloc(nn * sizeof(double complex))
    cdef double complex* U = <double complex*> malloc(nn * sizeof(double complex))
    cdef double complex* tmp = <double complex*> malloc(nn * sizeof(double complex))
    cdef double complex* work = <double complex*> malloc(lwork * sizeof(double complex))
    cdef double* w = <double*> malloc(n * sizeof(double))
    cdef double* rwork = <double*> malloc((3 * n) * sizeof(double))
    cdef double* e_cur = <double*> malloc(nops * sizeof(double))
    cdef double* e_prev = <double*> malloc(nops * sizeof(double))
    cdef double* e_next = <double*> malloc(nops * sizeof(double))
    cdef double* e_new = <double*> malloc(nops * sizeof(double))
    cdef double* m = <double*> malloc(nops * sizeof(double))
    cdef double* ob = <double*> malloc((nobs + 1) * sizeof(double))
    cdef int info = 0
    cdef double complex* swap

    try:
        with nogil:
            _expect(&rho[0, 0], opsp, nops, n, e_cur)
            for j in range(nops):
                e_prev[j] = e_cur[j]
            while r < nrec and record_steps[r] == 0:
                _expect(&rho[0, 0], obsp, nobs, n, ob)
                for j in range(nobs):
                    records[r, j] = ob[j]
                r += 1
            for k in range(nsteps):
                if k > 0 and dt[k - 1] > 0:
                    ratio = dt[k] / dt[k - 1]
                else:
                    ratio = 0.0
                for j in range(nops):
                    e_next[j] = e_cur[j] + ratio * (e_cur[j] - e_prev[j])
                it = 0
                while True:
                    for j in range(nops):
                        m[j] = 0.5 * (e_cur[j] + e_next[j])
                    for i in range(nn):
                        H[i] = Hl[idx[k] * nn + i]
                    if nonlinear:
                        for j in range(nops):
                            d = 0.0
                            for l in range(nops):
                                d = d + M[j, l] * m[l]
                            if d != 0.0:
                                for i in range(nn):
                                    H[i] = H[i] + d * opsp[j * nn + i]
                    info = _step(H, dt[k], &rho[0, 0], &rho_new[0, 0], n, a, w,
                                 work, lwork, rwork, U, tmp)
                    if info != 0:
                        break
                    _expect(&rho_new[0, 0], opsp, nops, n, e_new)
                    res = 0.0
                    for j in range(nops):
                        d = fabs(e_new[j] - e_next[j])
                        if d > res:
                            res = d
                        e_next[j] = e_new[j]
                    it += 1
                    if not nonlinear or res < tol or it >= max_iter:
                        break
                if info != 0:
                    break
                if nonlinear and res > max_res:
                    max_res = res
                for j in range(nops):
                    e_prev[j] = e_cur[j]
                    e_cur[j] = e_new[j]
                for i in range(n):
                    for l in range(n):
                        rho[i, l] = rho_new[i, l]
                while r < nrec and record_steps[r] == k + 1:
                    _expect(&rho[0, 0], obsp, nobs, n, ob)
                    for j in range(nobs):
                        records[r, j] = ob[j]
                    r += 1
    finally:
        free(H); free(a); free(U); free(tmp); free(work); free(w); free(rwork)
        free(e_cur); free(e_prev); free(e_next); free(e_new); free(m)
        free(ob)
    if info != 0:
        raise np.linalg.LinAlgError(f"zheev failed with info={info}")
    return rho_np, records_np, max_res
