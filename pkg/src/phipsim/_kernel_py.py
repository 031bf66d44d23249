"""Pure-numpy fallback for the compiled stepping kernel.

Same algorithm and signature as ``_kernel.midpoint_evolve``; used when the
extension is not built or ``PHIPSIM_PURE=1`` is set.
"""
import numpy as np


def _expect(rho, ops):
    # tr(rho O) = sum_ab rho_ab O_ba
    return np.real(np.einsum("ab,jba->j", rho, ops))


def midpoint_evolve(rho0, Hlin, idx, ops, dt, M, max_iter, tol, record_steps, obs):
    rho = np.array(rho0, dtype=complex)
    ops = np.asarray(ops)
    M = np.asarray(M, dtype=float)
    Hlin = np.asarray(Hlin)
    idx = np.asarray(idx)
    dt = np.asarray(dt, dtype=float)
    record_steps = np.asarray(record_steps)
    nonlinear = bool(np.any(M != 0.0))
    records = np.zeros((len(record_steps), len(obs)))
    r = 0
    e_cur = _expect(rho, ops)
    e_prev = e_cur.copy()
    while r < len(record_steps) and record_steps[r] == 0:
        records[r] = _expect(rho, obs) if len(obs) else 0.0
        r += 1
    max_res = 0.0
    for k in range(len(dt)):
        ratio = dt[k] / dt[k - 1] if k > 0 and dt[k - 1] > 0 else 0.0
        e_next = e_cur + ratio * (e_cur - e_prev)
        it = 0
        while True:
            m = 0.5 * (e_cur + e_next)
            H = Hlin[idx[k]]
            if nonlinear:
                H = H + np.tensordot(M @ m, ops, axes=1)
            w, V = np.linalg.eigh(H)
            U = (V * np.exp(-1j * w * dt[k])) @ V.conj().T
            rho_new = U @ rho @ U.conj().T
            e_new = _expect(rho_new, ops)
            res = float(np.max(np.abs(e_new - e_next))) if len(e_new) else 0.0
            e_next = e_new
            it += 1
            if not nonlinear or res < tol or it >= max_iter:
                break
        if nonlinear:
            max_res = max(max_res, res)
        e_prev, e_cur = e_cur, e_new
        rho = rho_new
        while r < len(record_steps) and record_steps[r] == k + 1:
            records[r] = _expect(rho, obs)
            r += 1
    return rho, records, max_res
