"""Time evolution of the three-spin density matrix under a schedule.

Two paths are available:

* linear: exact exponentials of piecewise-constant intervals (fourth-order
  Magnus steps for shaped CW blocks), cached per unique interval, with the
  core propagator reused across repetitions;
* nonlinear: implicit-midpoint stepping with the mean-field expectations
  iterated to self-consistency, executed by the compiled kernel.

Single-channel programs are propagated in the 4-dimensional m_I = 0 subspace,
which every single-channel Hamiltonian of the model leaves invariant.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
from scipy.optimize import least_squares

from . import _backend
from .errors import FitFailure, NonConvergence, PathViolation
from .hamiltonian import (OPS, DipolarFieldModel, control_coefficients,
                          mean_field_matrix, static_hamiltonian)
from .sequence import Interval, Schedule
from .spin import (ErrorParams, Expectations, embed_reduced, initial_state,
                   observable_stack, reduce_operator)

_OBS8 = observable_stack()
_OBS4 = np.array([reduce_operator(o) for o in _OBS8])
_OPS4 = np.array([reduce_operator(o) for o in OPS])
_OBS_NAMES = ("Sx", "Sy", "Sz", "Ix", "Iy", "Iz", "Ix_ps", "Iy_ps", "Iz_ps")
_NONCONVERGENCE_LIMIT = 1e-8


@dataclass(frozen=True)
class EvolveOptions:
    """Integration settings.

    Parameters
    ----------
    dt_max : float
        Step cap (s) on the nonlinear path.
    substeps_per_pulse : int
        Minimum nonlinear steps per pulse.
    midpoint_iterations : int
        Maximum fixed-point iterations per midpoint step.
    tol : float
        Fixed-point tolerance on midpoint expectations.
    n_samples : int
        Uniformly spaced trajectory samples (including t=0 and t_total).
    sample_stride : float, optional
        Sample spacing in s; overrides ``n_samples`` when set.
    path : {"auto", "linear", "nonlinear"}
    nl_phase_step : float
        Cap on dt·max|M| (rad) so strong mean fields are resolved.
    shape_phase_step : float
        Cap on dt·(waveform bandwidth and amplitude) for shaped CW blocks.
    reduce : bool
        Use the 4-dimensional subspace for single-channel programs.
    """

    dt_max: float = 1e-4
    substeps_per_pulse: int = 8
    midpoint_iterations: int = 8
    tol: float = 1e-12
    n_samples: int = 400
    sample_stride: Optional[float] = None
    path: str = "auto"
    nl_phase_step: float = 0.1
    shape_phase_step: float = 0.05
    reduce: bool = True

    def __post_init__(self):
        if not self.dt_max > 0:
            raise ValueError("dt_max must be > 0")
        if self.substeps_per_pulse < 1 or self.midpoint_iterations < 1:
            raise ValueError("substeps and iterations must be >= 1")
        if self.path not in ("auto", "linear", "nonlinear"):
            raise ValueError(f"unknown path {self.path!r}")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")


@dataclass(frozen=True)
class Trajectory:
    """Sampled evolution.

    ``records`` has columns Sx, Sy, Sz, Ix, Iy, Iz (total hydrogen spin) and
    the pseudospin Ix_ps, Iy_ps, Iz_ps.
    """

    times: np.ndarray
    records: np.ndarray
    rho_final: np.ndarray
    path: str
    t_core: tuple = (0.0, 0.0)
    max_residual: float = 0.0
    stats: Dict[str, int] = field(default_factory=dict, compare=False)

    @property
    def p(self) -> np.ndarray:
        """Fractional transfer 2<S_z> per sample."""
        return 2.0 * self.records[:, 2]

    @property
    def p_final(self) -> float:
        return float(2.0 * np.real(np.trace(self.rho_final @ _OBS8[2])))

    @property
    def s_magnitude(self) -> np.ndarray:
        """2|<S>| per sample, invariant under S-channel rotations."""
        return 2.0 * np.linalg.norm(self.records[:, :3], axis=1)

    def column(self, name: str) -> np.ndarray:
        return self.records[:, _OBS_NAMES.index(name)]

    def final_expectations(self) -> Expectations:
        vals = np.real(np.einsum("ij,kji->k", self.rho_final, _OBS8))
        return Expectations(*map(float, vals))

    def to_csv(self, path) -> None:
        """Write columns t_s, Sx, Sy, Sz, Ix_ps, Iy_ps, Iz_ps, p."""
        cols = ("Sx", "Sy", "Sz", "Ix_ps", "Iy_ps", "Iz_ps")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("t_s",) + cols + ("p",))
            for k, t in enumerate(self.times):
                w.writerow([repr(float(t))] + [repr(float(self.column(c)[k])) for c in cols]
                           + [repr(float(self.p[k]))])


# ---------------------------------------------------------------------------
# shared helpers

def _space(sched: Schedule, options: EvolveOptions):
    two = len(sched.program.channels) == 2
    if options.reduce and not two:
        return 4, _OPS4, _OBS4, reduce_operator
    return 8, OPS, _OBS8, (lambda m: m)


def _sample_times(sched: Schedule, options: EvolveOptions) -> np.ndarray:
    T = sched.t_total
    if options.sample_stride:
        n = max(2, int(math.floor(T / options.sample_stride)) + 1)
        ts = np.arange(n) * options.sample_stride
        if ts[-1] < T:
            ts = np.append(ts, T)
        return ts
    return np.linspace(0.0, T, options.n_samples)


def _coef(interval: Interval, t, sched: Schedule, errors: ErrorParams):
    ws, wi = interval.controls(t)
    return control_coefficients(ws, wi, sched.params, errors)


def _eigh_unitary(H: np.ndarray, h: float) -> np.ndarray:
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * w * h)) @ V.conj().T


def _magnus4(H0, ops, interval: Interval, sched, errors, a, b):
    """Fourth-order Magnus propagators over [a, b] (section time).

    ``a`` and ``b`` may be arrays of sub-interval edges; the result then has
    a leading axis over sub-intervals.
    """
    K = _magnus4_exponent(H0, ops, interval, sched, errors, a, b)
    w, V = np.linalg.eigh(K)
    return (V * np.exp(-1j * w)[..., None, :]) @ np.swapaxes(V.conj(), -1, -2)


def _magnus4_exponent(H0, ops, interval: Interval, sched, errors, a, b):
    """Hermitian K with U = exp(-iK) to fourth order over [a, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    h = b - a
    m = 0.5 * (a + b)
    d = h * math.sqrt(3) / 6
    c1 = _coef(interval, m - d, sched, errors)
    c2 = _coef(interval, m + d, sched, errors)
    H1 = H0 + np.tensordot(c1, ops, axes=1)
    H2 = H0 + np.tensordot(c2, ops, axes=1)
    # Omega = -i h/2 (H1+H2) + (sqrt3/12) h^2 [A2, A1] with A = -iH
    comm = H1 @ H2 - H2 @ H1
    hh = h[..., None, None]
    K = 0.5 * hh * (H1 + H2) + 1j * (math.sqrt(3) / 12) * hh * hh * comm
    return 0.5 * (K + np.swapaxes(K.conj(), -1, -2))


def _shape_substeps(interval: Interval, sched, options: EvolveOptions) -> int:
    """Number of substeps resolving a shaped interval."""
    tt = np.linspace(interval.t0, interval.t1, 65)
    ws, wi = interval.controls(tt)
    amp = float(np.max(np.linalg.norm(np.concatenate([ws, wi], axis=-1), axis=-1)))
    dv = float(np.max(np.abs(np.diff(np.concatenate([ws, wi], axis=-1), axis=0))))
    rate = max(interval.bandwidth, dv / max(tt[1] - tt[0], 1e-300) / max(amp, 1e-300), 0.0)
    scale = max(rate, sched.params.J, sched.params.A)
    return max(4, int(math.ceil(interval.duration * scale / options.shape_phase_step)))


# ---------------------------------------------------------------------------
# linear path

class _LinearSection:
    """Cached propagators for one section (core: one period)."""

    def __init__(self, intervals: List[Interval], H0, ops, sched, errors, options, cache):
        self.intervals = intervals
        self.items = []
        self.unique = 0
        dim = H0.shape[0]
        U = np.eye(dim, dtype=complex)
        self.prefix = [U]
        for iv in intervals:
            if iv.constant:
                c = _coef(iv, iv.t0, sched, errors)
                key = (iv.duration, tuple(np.round(c, 15)))
                if key not in cache:
                    H = H0 + np.tensordot(c, ops, axes=1)
                    w, V = np.linalg.eigh(H)
                    cache[key] = (w, V, (V * np.exp(-1j * w * iv.duration)) @ V.conj().T)
                    self.unique += 1
                w, V, Ui = cache[key]
                self.items.append(("const", (w, V)))
            else:
                n = _shape_substeps(iv, sched, options)
                edges = np.linspace(iv.t0, iv.t1, n + 1)
                subs = _magnus4(H0, ops, iv, sched, errors, edges[:-1], edges[1:])
                Ui = np.eye(dim, dtype=complex)
                for s in subs:
                    Ui = s @ Ui
                self.unique += n
                self.items.append(("shaped", (edges, subs, H0, ops, iv)))
            U = Ui @ U
            self.prefix.append(U)
        self.U = U
        self._sched, self._errors = sched, errors

    def partial(self, tl: float) -> np.ndarray:
        """Propagator from section start to local time ``tl``."""
        ivs = self.intervals
        if not ivs or tl <= ivs[0].t0:
            return self.prefix[0]
        if tl >= ivs[-1].t1:
            return self.U
        k = next(i for i, iv in enumerate(ivs) if iv.t0 <= tl < iv.t1)
        iv = ivs[k]
        kind, data = self.items[k]
        if kind == "const":
            w, V = data
            Up = (V * np.exp(-1j * w * (tl - iv.t0))) @ V.conj().T
        else:
            edges, subs, H0, ops, _ = data
            Up = np.eye(H0.shape[0], dtype=complex)
            j = 0
            while j < len(subs) and edges[j + 1] <= tl:
                Up = subs[j] @ Up
                j += 1
            if tl > edges[j]:
                Up = _magnus4(H0, ops, iv, self._sched, self._errors, edges[j], tl) @ Up
        return Up @ self.prefix[k]


def evolve_linear_cached(sched: Schedule, errors: ErrorParams | None = None,
                         options: EvolveOptions | None = None) -> Trajectory:
    """Propagate along the linear path with cached interval propagators.

    Raises
    ------
    PathViolation
        If a dipolar-field or radiation-damping amplitude is nonzero.
    """
    errors = errors or ErrorParams()
    options = options or EvolveOptions()
    if errors.nonlinear:
        raise PathViolation("linear path requires deltaDF = deltaRD = 0")
    dim, ops, obs, red = _space(sched, options)
    H0 = red(static_hamiltonian(sched.params, errors))
    rho0 = red(initial_state().rho)
    cache: Dict = {}
    secs = {name: _LinearSection(sched.intervals(name), H0, ops, sched, errors, options, cache)
            for name in ("pre", "core", "post")}
    ts = _sample_times(sched, options)
    recs = np.empty((len(ts), len(obs)))
    U_pre = secs["pre"].U
    Uc = secs["core"].U
    power = np.eye(dim, dtype=complex)  # U_core^rep
    rep_done = 0
    for k, t in enumerate(ts):
        section, rep, tl = sched.locate(float(t))
        if section == "pre":
            U = secs["pre"].partial(tl)
        else:
            target = rep if section == "core" else sched.reps
            while rep_done < target:
                power = Uc @ power
                rep_done += 1
            base = power @ U_pre
            U = secs[section].partial(tl) @ base
        rho = U @ rho0 @ U.conj().T
        recs[k] = np.real(np.einsum("ij,kji->k", rho, obs))
    while rep_done < sched.reps:
        power = Uc @ power
        rep_done += 1
    U = secs["post"].U @ power @ U_pre
    rho = U @ rho0 @ U.conj().T
    rho8 = embed_reduced(rho) if dim == 4 else rho
    stats = {"unique_propagators": sum(s.unique for s in secs.values()), "dim": dim}
    return Trajectory(ts, recs, rho8, "linear", _core_window(sched), 0.0, stats)


def _core_window(sched: Schedule):
    a = sched.t_pre
    return (a, a + sched.reps * sched.period)


# ---------------------------------------------------------------------------
# nonlinear path

def _section_steps(intervals: List[Interval], H0, ops, sched, errors, options, m_scale):
    """Step lengths, step Hamiltonian table and per-step table rows.

    Constant intervals contribute one table row; shaped ones one row per
    substep holding the fourth-order Magnus generator, so at zero mean field
    each step reproduces the linear path exactly.
    """
    dts, table, idx = [], [], []
    for iv in intervals:
        d = iv.duration
        n = max(1, int(math.ceil(d / options.dt_max * (1 - 1e-12))))
        if iv.has_pulse:
            n = max(n, options.substeps_per_pulse)
        if m_scale > 0:
            n = max(n, int(math.ceil(d * m_scale / options.nl_phase_step)))
        if not iv.constant:
            n = max(n, _shape_substeps(iv, sched, options))
        edges = iv.t0 + d * np.arange(n + 1) / n
        h = np.diff(edges)
        if iv.constant:
            table.append((H0 + np.tensordot(_coef(iv, iv.t0, sched, errors), ops, axes=1))[None])
            idx.append(np.full(n, sum(len(t) for t in table) - 1))
        else:
            K = _magnus4_exponent(H0, ops, iv, sched, errors, edges[:-1], edges[1:])
            start = sum(len(t) for t in table)
            table.append(K / h[:, None, None])
            idx.append(start + np.arange(n))
        dts.append(h)
    dim = H0.shape[0]
    if not dts:
        return np.zeros(0), np.zeros((0, dim, dim), dtype=complex), np.zeros(0, dtype=np.int64)
    return np.concatenate(dts), np.concatenate(table, axis=0), np.concatenate(idx).astype(np.int64)


def evolve(sched: Schedule, errors: ErrorParams | None = None,
           options: EvolveOptions | None = None,
           df_model: DipolarFieldModel | None = None) -> Trajectory:
    """Propagate ``initial_state()`` through ``sched``.

    Parameters
    ----------
    sched : Schedule
    errors : ErrorParams, optional
    options : EvolveOptions, optional
        ``path="auto"`` selects the linear path iff deltaDF = deltaRD = 0.
    df_model : DipolarFieldModel, optional
        Defaults to ``auto`` (dual-species for two-channel programs).

    Raises
    ------
    NonConvergence
        If the midpoint fixed point leaves a residual above 1e-8.
    """
    errors = errors or ErrorParams()
    options = options or EvolveOptions()
    path = options.path
    if path == "auto":
        path = "nonlinear" if errors.nonlinear else "linear"
    if path == "linear":
        return evolve_linear_cached(sched, errors, options)

    two = len(sched.program.channels) == 2
    model = (df_model or DipolarFieldModel()).resolve(two)
    if two and model.mode == "dual-species":
        options = replace(options, reduce=False)
    dim, ops, obs, red = _space(sched, options)
    M = mean_field_matrix(errors, model)
    m_scale = float(np.max(np.abs(M))) if M.any() else 0.0
    H0 = red(static_hamiltonian(sched.params, errors))
    rho0 = red(initial_state().rho)

    parts = {name: _section_steps(sched.intervals(name), H0, ops, sched, errors, options, m_scale)
             for name in ("pre", "core", "post")}
    n_pre, n_core = len(parts["pre"][0]), len(parts["core"][0])
    dt = np.concatenate([parts["pre"][0], np.tile(parts["core"][0], sched.reps), parts["post"][0]])
    offs = np.cumsum([0, len(parts["pre"][1]), len(parts["core"][1])])
    table = np.concatenate([parts[k][1] for k in ("pre", "core", "post")], axis=0)
    rows = np.concatenate([parts["pre"][2], np.tile(parts["core"][2] + offs[1], sched.reps),
                           parts["post"][2] + offs[2]])
    bounds = np.concatenate([[0.0], np.cumsum(dt)])
    # absolute time of each step boundary, rebuilt per section to avoid drift
    bounds = _section_bounds(sched, parts, bounds)

    ts_req = _sample_times(sched, options)
    idx = np.searchsorted(bounds, ts_req)
    idx = np.clip(idx, 0, len(bounds) - 1)
    left = np.clip(idx - 1, 0, len(bounds) - 1)
    pick = np.where(np.abs(bounds[left] - ts_req) <= np.abs(bounds[idx] - ts_req), left, idx)
    pick = np.unique(pick).astype(np.int64)

    rho, recs, max_res = _backend.midpoint_evolve(
        np.ascontiguousarray(rho0, dtype=complex), np.ascontiguousarray(table, dtype=complex),
        np.ascontiguousarray(rows, dtype=np.int64), np.ascontiguousarray(ops, dtype=complex),
        np.ascontiguousarray(dt, dtype=float), np.ascontiguousarray(M, dtype=float),
        int(options.midpoint_iterations), float(options.tol), pick,
        np.ascontiguousarray(obs, dtype=complex))
    if max_res > _NONCONVERGENCE_LIMIT:
        raise NonConvergence(max_res, _NONCONVERGENCE_LIMIT)
    rho8 = embed_reduced(rho) if dim == 4 else rho
    stats = {"steps": int(len(dt)), "dim": dim, "core_steps": n_core, "pre_steps": n_pre}
    return Trajectory(bounds[pick], np.asarray(recs), rho8, "nonlinear",
                      _core_window(sched), float(max_res), stats)


def _section_bounds(sched, parts, fallback):
    out = [np.zeros(1)]
    for name, reps in (("pre", 1), ("core", sched.reps), ("post", 1)):
        h = parts[name][0]
        if len(h) == 0:
            continue
        local = np.cumsum(h)
        for r in range(reps):
            start = sched.section_start(name, r)
            out.append(start + local)
    b = np.concatenate(out)
    return b if len(b) == len(fallback) else fallback


# ---------------------------------------------------------------------------
# transfer-rate extraction

def transfer_curve_fit(traj: Trajectory, method: str = "fit") -> float:
    """Measured effective coupling A* (rad/s).

    Parameters
    ----------
    method : {"fit", "end"}
        ``fit``: least squares of 2|<S>|(t) to sin²(A t/4) over the core
        window, t measured from the core start. ``end``: transfer assumed
        complete at the end of the core, A = 2π/t_core (needs p_final ≥ 0.9).

    Raises
    ------
    FitFailure
        If the transfer never exceeds 0.25 (``end``: if p_final < 0.9).
    """
    a, b = traj.t_core
    if method == "end":
        if traj.p_final < 0.9:
            raise FitFailure(f"p_final={traj.p_final:.3f} < 0.9; end-time fit undefined")
        return 2 * math.pi / (b - a)
    if method != "fit":
        raise ValueError(f"unknown method {method!r}")
    sel = (traj.times >= a - 1e-12) & (traj.times <= b + 1e-12)
    t = traj.times[sel] - a
    y = traj.s_magnitude[sel]
    if len(t) < 3 or y.max() <= 0.25:
        raise FitFailure("transfer never exceeds 0.25")
    # restrict to the rising part up to the first maximum
    k_max = int(np.argmax(y))
    t, y = t[: k_max + 1], y[: k_max + 1]
    k_half = int(np.argmax(y >= min(0.5, 0.5 * y.max())))
    guess = math.pi / max(t[k_half], 1e-12)

    def resid(x):
        return np.sin(x[0] * t / 4) ** 2 - y

    sol = least_squares(resid, [guess], bounds=([guess * 0.25], [min(guess * 4, 2 * math.pi / max(t[-1], 1e-12) * 1.999)]))
    if not sol.success:
        raise FitFailure(sol.message)
    return float(sol.x[0])
