"""Average-Hamiltonian diagnostics in the toggling frame.

The S-channel control alone defines the frame. With R(t) the rotation it
applies to the S Bloch vector, S_z^rot(t) = f(t)·S where f is the third row
of R(t). Dual-channel programs multiply f by the hydrogen filter f^I(t), the
z-z element of the analogous I-channel rotation, which flips the sign of the
terms linear in I1z - I2z.

Pulses are either finite (scheduled timing, absorbed waits) or ideal
(instantaneous rotations, nominal waits). All integrals over a trace use
Gauss-Legendre quadrature between control breakpoints, so results for
piecewise-constant controls are exact to rounding.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.spatial.transform import Rotation

from . import catalog
from .errors import ConfigError, PrecessionFormError
from .sequence import SequenceProgram, filling_factor, schedule, segment_control
from .spin import ERROR_KINDS, ErrorParams, MoleculeParams, to_hz

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_QUAD_NAMES = ("xx", "yy", "zz", "xy", "xz", "yz")
_QUAD_IDX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def _rot(w) -> np.ndarray:
    """Rotation matrices for rotation vectors ``w`` of shape (..., 3)."""
    w = np.asarray(w, dtype=float)
    m = Rotation.from_rotvec(w.reshape(-1, 3)).as_matrix()
    return m.reshape(w.shape[:-1] + (3, 3))


def _magnus_vec(fn, t0, h):
    """Fourth-order Magnus rotation vector for dR/dt = [v(t)]x R over [t0, t0+h]."""
    h = np.asarray(h, dtype=float)
    c = math.sqrt(3) / 6
    v1 = fn(t0 + h * (0.5 - c))
    v2 = fn(t0 + h * (0.5 + c))
    hh = h[..., None]
    return 0.5 * hh * (v1 + v2) + (math.sqrt(3) / 12) * hh ** 2 * np.cross(v2, v1)


class _Channel:
    """Piecewise rotation history of one channel.

    ``events`` holds (t0, t1, kind, data) with kind ``const`` (control vector),
    ``shaped`` (vectorised control function of absolute time) or ``kick``
    (instantaneous rotation matrix, t0 == t1).
    """

    def __init__(self, events, phase_step=0.02):
        events = sorted(events, key=lambda e: (e[0], e[1]))
        self.t0 = np.array([e[0] for e in events]) if events else np.zeros(0)
        self.items = []
        R = np.eye(3)
        for t0, t1, kind, data in events:
            R0 = R
            if kind == "kick":
                R = data @ R
                self.items.append((t0, t1, kind, data, R0, R, 0.0))
            elif kind == "const":
                v = np.asarray(data, dtype=float)
                R = _rot(v * (t1 - t0)) @ R
                self.items.append((t0, t1, kind, v, R0, R, float(np.linalg.norm(v))))
            else:
                probe = data(np.linspace(t0, t1, 257))
                rate = float(np.max(np.linalg.norm(probe, axis=-1)))
                dv = float(np.max(np.linalg.norm(np.diff(probe, axis=0), axis=-1)))
                rate = max(rate, dv / max(rate, 1e-300) / ((t1 - t0) / 256))
                n = max(8, int(math.ceil((t1 - t0) * rate / phase_step)))
                tn = np.linspace(t0, t1, n + 1)
                steps = _rot(_magnus_vec(data, tn[:-1], np.diff(tn)))
                Rn = np.empty((n + 1, 3, 3))
                Rn[0] = R
                for k in range(n):
                    Rn[k + 1] = steps[k] @ Rn[k]
                R = Rn[-1]
                self.items.append((t0, t1, kind, (data, tn, Rn), R0, R, rate))
        self.R_end = R

    @property
    def breakpoints(self) -> List[float]:
        out = []
        for t0, t1, *_ in self.items:
            out += [t0, t1]
        return out

    def kicks(self) -> List[float]:
        return [it[0] for it in self.items if it[2] == "kick"]

    def rate_at(self, t: float) -> float:
        k = int(np.searchsorted(self.t0, t, side="right")) - 1
        if k < 0:
            return 0.0
        t0, t1, kind, *_, rate = self.items[k]
        return rate if t < t1 else 0.0

    def R_at(self, ts, left: bool = False) -> np.ndarray:
        """Rotations at times ``ts``; ``left`` takes limits from below at kicks."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.broadcast_to(np.eye(3), ts.shape + (3, 3)).copy()
        if not self.items:
            return out
        idx = np.searchsorted(self.t0, ts, side="left" if left else "right") - 1
        for k in np.unique(idx):
            if k < 0:
                continue
            sel = idx == k
            t = ts[sel]
            t0, t1, kind, data, R0, R1, _ = self.items[k]
            res = np.broadcast_to(R1, t.shape + (3, 3)).copy()
            inside = t < t1
            if kind == "const" and inside.any():
                res[inside] = _rot(data[None, :] * (t[inside] - t0)[:, None]) @ R0
            elif kind == "shaped" and inside.any():
                fn, tn, Rn = data
                j = np.clip(np.searchsorted(tn, t[inside], side="right") - 1, 0, len(tn) - 2)
                h = t[inside] - tn[j]
                res[inside] = _rot(_magnus_vec(fn, tn[j], h)) @ Rn[j]
            out[sel] = res
        return out

    def sample_times(self, a: float, b: float, per_pulse: int) -> np.ndarray:
        pts = [a, b]
        for t0, t1, kind, data, *_, rate in self.items:
            if t1 < a or t0 > b:
                continue
            if kind == "kick":
                pts.append(t0)
                continue
            n = max(per_pulse, int(math.ceil(rate * (t1 - t0) / (2 * math.pi / 64))))
            pts.extend(np.linspace(max(t0, a), min(t1, b), n + 1))
        return np.unique(np.clip(pts, a, b))


# ---------------------------------------------------------------------------
# event construction

def _events_finite(sched, channel, sections):
    ev = []
    for section, reps in sections:
        for r in range(reps):
            base = sched.section_start(section, r)
            for p in sched.pieces[section].get(channel, ()):
                if p.kind == "wait":
                    continue
                if p.fn is None:
                    ev.append((base + p.t0, base + p.t1, "const", p.vec))
                else:
                    ev.append((base + p.t0, base + p.t1, "shaped",
                               (lambda t, fn=p.fn, s=base + p.t0: fn(np.asarray(t) - s))))
    return ev


def _section_ideal(segs, channel, params):
    """Events (relative times) and length of one section with ideal pulses."""
    ev, t = [], 0.0
    for s in segs:
        if s.channel != channel:
            continue
        if s.kind == "wait":
            t += s.tau.evaluate(params)
            continue
        dur, vec, fn, _ = segment_control(s, params)
        if s.kind == "pulse":
            n = np.asarray(vec, dtype=float)
            ev.append((t, t, "kick", _rot(n / np.linalg.norm(n) * s.angle)))
            continue
        if fn is None:
            ev.append((t, t + dur, "const", vec))
        else:
            ev.append((t, t + dur, "shaped", (fn, t)))
        t += dur
    return ev, t


def _events_ideal(program, params, sections):
    chans = program.channels
    per = {}
    lengths = {}
    for section in ("pre", "core", "post"):
        for ch in chans:
            per[section, ch], lengths[section, ch] = _section_ideal(getattr(program, section), ch, params)
    if len(chans) == 2:
        a, b = lengths["core", "S"], lengths["core", "I"]
        if abs(a - b) > 1e-9 * max(a, b, 1e-30):
            raise ConfigError(f"ideal-pulse core durations differ: S {a!r} s, I {b!r} s")
    dur = {sec: max(lengths[sec, ch] for ch in chans) for sec in ("pre", "core", "post")}
    starts = {"pre": lambda r: 0.0, "core": lambda r: dur["pre"] + r * dur["core"]}
    out = {ch: [] for ch in chans}
    for section, reps in sections:
        for ch in chans:
            shift = dur["pre"] - lengths["pre", ch] if section == "pre" else 0.0
            for r in range(reps):
                if section == "post":
                    base = dur["pre"] + reps_core(sections) * dur["core"]
                else:
                    base = starts[section](r) + shift
                for t0, t1, kind, data in per[section, ch]:
                    if kind == "shaped":
                        fn, s0 = data
                        data = (lambda t, fn=fn, s=base + s0: fn(np.asarray(t) - s))
                    out[ch].append((base + t0, base + t1, kind, data))
    return out, dur


def reps_core(sections) -> int:
    return next((r for s, r in sections if s == "core"), 0)


# ---------------------------------------------------------------------------
# trace

@dataclass
class TogglingTrace:
    """Sampled toggling-frame vector.

    Attributes
    ----------
    times : ndarray
        Sample times (s) from the program start.
    f : ndarray, shape (n, 3)
        S_z^rot(t) = f·S, including the hydrogen filter for two channels.
    period : float
        Core period T (s).
    alpha : float or None
        Net z rotation per period (rad); None if the core rotation is not a
        pure z rotation within ``alpha_tol``.
    t_core : float
        Start of the first core period (s).
    window : float
        Suppression window T̃ (s) recorded in the program metadata.
    """

    times: np.ndarray
    f: np.ndarray
    period: float
    alpha: Optional[float]
    t_core: float
    window: float
    ideal: bool
    name: str = ""
    filter_sign: Optional[float] = 1.0
    alpha_offaxis: float = 0.0
    core_rotation: np.ndarray = field(default_factory=lambda: np.eye(3), repr=False)
    reps: int = 1
    _s: _Channel = field(default=None, repr=False, compare=False)
    _i: Optional[_Channel] = field(default=None, repr=False, compare=False)

    @property
    def quad(self) -> np.ndarray:
        """The six products f_x², f_y², f_z², f_x f_y, f_x f_z, f_y f_z."""
        return np.stack([self.f[:, i] * self.f[:, j] for i, j in _QUAD_IDX], axis=1)

    def f_at(self, ts, left: bool = False) -> np.ndarray:
        f = self._s.R_at(ts, left)[:, 2, :]
        if self._i is not None:
            f = f * self._i.R_at(ts, left)[:, 2, 2][:, None]
        return f

    def filter_at(self, ts) -> np.ndarray:
        ts = np.atleast_1d(ts)
        if self._i is None:
            return np.ones(len(ts))
        return self._i.R_at(ts)[:, 2, 2]

    def integrate(self, func, a: float, b: float, freq: float = 0.0):
        """∫_a^b func(t, f(t)) dt; ``freq`` bounds extra oscillation in func."""
        cuts = {a, b}
        for ch in (self._s, self._i):
            if ch is not None:
                cuts.update(x for x in ch.breakpoints if a < x < b)
        cuts = sorted(cuts)
        total = 0.0
        for u, v in zip(cuts[:-1], cuts[1:]):
            if v - u <= 0:
                continue
            mid = 0.5 * (u + v)
            rate = max(self._s.rate_at(mid), self._i.rate_at(mid) if self._i else 0.0) + abs(freq)
            n = max(1, int(math.ceil((v - u) * rate / 1.0)))
            edges = np.linspace(u, v, n + 1)
            half = 0.5 * np.diff(edges)
            nodes = (0.5 * (edges[:-1] + edges[1:]))[:, None] + half[:, None] * _GL_X[None, :]
            w = (half[:, None] * _GL_W[None, :]).ravel()
            t = nodes.ravel()
            vals = np.asarray(func(t, self.f_at(t)))
            total = total + np.tensordot(w, vals, axes=(0, 0))
        return total

    def to_csv(self, path, panel: str = "b") -> None:
        """Panel exports: ``b`` writes f components, ``c`` the six products."""
        if panel == "b":
            head, data = ("fx", "fy", "fz"), self.f
        elif panel == "c":
            head, data = tuple("f" + n for n in _QUAD_NAMES), self.quad
        else:
            raise ValueError(f"unknown panel {panel!r}")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("t_s",) + head)
            for t, row in zip(self.times, data):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def toggling_trace(program: SequenceProgram, params: MoleculeParams, ideal: bool = False,
                   periods: Optional[int] = None, samples_per_pulse: int = 50,
                   include_post: bool = False, alpha_tol: float = 1e-6) -> TogglingTrace:
    """Toggling-frame vector f(t) of ``program`` from its start.

    Parameters
    ----------
    ideal : bool
        Instantaneous pulses and nominal waits instead of the schedule.
        Windowless programs (S pulses filling the whole core) keep their
        finite pulses, since they have no ideal-pulse limit.
    periods : int, optional
        Core periods covered; defaults to enough for the stored window.
    """
    params = program.effective_params(params)
    meta = program.meta
    if ideal and _windowless(program, params):
        ideal = False
    if ideal:
        probe, dur = _events_ideal(program, params, [("core", 1)])
        T, t_pre = dur["core"], dur["pre"]
    else:
        sched = schedule(program, params)
        T, t_pre = sched.period, sched.t_pre
    window = float(meta.get("window_s", T))
    if periods is None:
        periods = max(1, int(math.ceil(window / T - 1e-9)))
    periods = max(1, int(periods))
    sections = [("pre", 1), ("core", periods)] + ([("post", 1)] if include_post else [])
    if ideal:
        events, dur = _events_ideal(program, params, sections)
    else:
        if periods > sched.reps:
            sched = schedule(program.with_reps(periods), params)
        events = {ch: _events_finite(sched, ch, sections) for ch in program.channels}
    ch_s = _Channel(events.get("S", []))
    ch_i = _Channel(events["I"]) if "I" in program.channels else None
    t_end = t_pre + periods * T
    if include_post:
        t_end += dur["post"] if ideal else sched.durations["post"]

    ts = ch_s.sample_times(0.0, t_end, samples_per_pulse)
    if ch_i is not None:
        ts = np.union1d(ts, ch_i.sample_times(0.0, t_end, samples_per_pulse))
    kicks = sorted(set(ch_s.kicks() + (ch_i.kicks() if ch_i else [])))
    trace = TogglingTrace(ts, np.zeros((len(ts), 3)), T, None, t_pre, window, ideal,
                          program.name, _s=ch_s, _i=ch_i)
    f = trace.f_at(ts)
    if kicks:
        # show both sides of instantaneous rotations
        kt = np.array([k for k in kicks if 0.0 <= k <= t_end])
        fl = trace.f_at(kt, left=True)
        ts = np.concatenate([ts, kt])
        f = np.concatenate([f, fl])
        order = np.lexsort((np.concatenate([np.ones(len(trace.times)), np.zeros(len(kt))]), ts))
        ts, f = ts[order], f[order]
    trace.times, trace.f = ts, f

    # one-period rotations from separate histories, so kicks on period
    # boundaries are attributed unambiguously
    for ch in program.channels:
        if ideal:
            pre_ev = _events_ideal(program, params, [("pre", 1)])[0][ch]
            core_ev = _events_ideal(program, params, [("core", 1)])[0][ch]
        else:
            pre_ev = _events_finite(sched, ch, [("pre", 1)])
            core_ev = _events_finite(sched, ch, [("core", 1)])
        R0 = _Channel(pre_ev).R_end
        Q = R0.T @ _Channel(core_ev).R_end @ R0
        if ch == "S":
            trace.core_rotation = Q
            off = float(max(abs(Q[2, 0]), abs(Q[2, 1]), abs(Q[0, 2]), abs(Q[1, 2]), abs(Q[2, 2] - 1)))
            trace.alpha_offaxis = off
            if off <= alpha_tol:
                trace.alpha = float(math.atan2(Q[1, 0], Q[0, 0]))
        else:
            closed = abs(abs(Q[2, 2]) - 1) <= alpha_tol
            trace.filter_sign = (1.0 if Q[2, 2] > 0 else -1.0) if closed else None
    trace.reps = program.reps
    return trace


def _windowless(program, params) -> bool:
    core = [x for x in program.core if x.channel == "S"]
    if not any(x.kind == "pulse" for x in core):
        return False
    return filling_factor(program, params) >= 1 - 1e-9


def trace_for(name: str, params: MoleculeParams, ideal: bool = True, certificate: bool = False,
              **kw) -> TogglingTrace:
    """Trace of a catalog sequence; ``certificate`` uses its bare decoupling block."""
    options = {"decoupling_block": True} if certificate else {}
    options.update(kw.pop("options", {}))
    prog = catalog.build(name, params, **options)
    return toggling_trace(prog, params, ideal=ideal, **kw)


# ---------------------------------------------------------------------------
# diagnostics

def alpha(trace: TogglingTrace) -> float:
    """Net z rotation per core period (rad, in (-π, π]).

    Raises
    ------
    PrecessionFormError
        If the core rotation is not a pure z rotation.
    """
    if trace.alpha is None:
        raise PrecessionFormError(trace.alpha_offaxis)
    return trace.alpha


@dataclass(frozen=True)
class EffectiveCoupling:
    """Result of :func:`effective_coupling`.

    ``branch`` is the sign s in e^{i s J t} of the resonant pseudospin term
    and ``mismatch`` the per-period phase error of that branch (rad).
    """

    Astar: float
    Astar_over_A: float
    branch: int
    mismatch: float
    axis_phase: float
    resonant: bool


def _wrap(x):
    return (x + math.pi) % (2 * math.pi) - math.pi


def effective_coupling(trace: TogglingTrace, params: MoleculeParams, tol: float = 1e-3) -> EffectiveCoupling:
    """First-order transfer rate A* from one core period of ``trace``.

    With F_s = (1/T)∫ f(t) e^{i s J t} dt over the first period and
    g = x + i y, a core that closes as a z rotation α gives
    A* = A |g(F_s)| on the branch s whose phase advance per period,
    -α + sJT (plus π when the hydrogen filter flips sign), vanishes modulo
    2π; off resonance the long-time average is zero and ``resonant`` is
    False. Cores that do not close (modulated or unrolled programs) are
    averaged exactly over the program's K repetitions instead, using
    f(t + nT) = f(t) Qⁿ.
    """
    T, t0, J = trace.period, trace.t_core, params.J
    if trace.filter_sign is None:
        raise PrecessionFormError(1.0)
    F = {}
    for s in (1, -1):
        F[s] = trace.integrate(lambda t, f, s=s: f * np.exp(1j * s * J * (t - t0))[:, None],
                               t0, t0 + T, freq=J) / T
    best = None
    if trace.alpha is not None:
        shift = 0.0 if trace.filter_sign > 0 else math.pi
        for s in (1, -1):
            c = F[s][0] + 1j * F[s][1]
            mis = _wrap(-trace.alpha + s * J * T + shift)
            cand = (abs(mis) <= tol, abs(c), s, mis, c)
            if best is None or cand[:2] > best[:2]:
                best = cand
    else:
        K = max(1, trace.reps)
        Q = trace.core_rotation * trace.filter_sign
        for s in (1, -1):
            acc = np.zeros(3, dtype=complex)
            v = F[s].copy()
            ph = np.exp(1j * s * J * T)
            for n in range(K):
                acc += v
                v = (v @ Q) * ph
            acc /= K
            c = acc[0] + 1j * acc[1]
            cand = (True, abs(c), s, float("nan"), c)
            if best is None or cand[:2] > best[:2]:
                best = cand
    ok, mag, s, mis, c = best
    val = params.A * mag if ok else 0.0
    return EffectiveCoupling(val, val / params.A if params.A else 0.0, s, mis,
                             float(np.angle(c)), ok)


@dataclass(frozen=True)
class DipolarAverage:
    """Window average M_ij = (1/T̃)∫ f_i f_j dt and ‖3M - tr(M)·1‖_F."""

    M: np.ndarray
    residual: float
    window: float
    start: float

    @property
    def suppressing(self) -> bool:
        return self.residual <= 1e-6


def dipolar_average_tensor(trace: TogglingTrace, window: Optional[float] = None,
                           start: Optional[float] = None) -> DipolarAverage:
    """First-order average of the dipolar-field structure over ``window``.

    Defaults to the trace's stored window starting at the first core period.
    """
    T = trace.window if window is None else float(window)
    a = trace.t_core if start is None else float(start)
    if T <= 0:
        raise ValueError("window must be > 0")
    if a + T > trace.times[-1] * (1 + 1e-12) + 1e-15:
        raise ValueError("trace shorter than the requested window")
    M = trace.integrate(lambda t, f: f[:, :, None] * f[:, None, :], a, a + T) / T
    M = 0.5 * (M + M.T)
    res = float(np.linalg.norm(3 * M - np.trace(M) * np.eye(3)))
    return DipolarAverage(M, res, T, a)


def first_order_average(trace: TogglingTrace, window: Optional[float] = None) -> np.ndarray:
    """(1/T̃)∫ f dt; zero certifies first-order suppression of Δ_0 S_z."""
    T = trace.window if window is None else float(window)
    a = trace.t_core
    return trace.integrate(lambda t, f: f, a, a + T) / T


def filter_average(trace: TogglingTrace, window: Optional[float] = None) -> float:
    """(1/T̃)∫ f^I dt; zero certifies first-order suppression of Δ_CS."""
    T = trace.window if window is None else float(window)
    if trace._i is None:
        return 1.0
    a = trace.t_core
    ch = trace._i
    return float(trace.integrate(lambda t, f: ch.R_at(t)[:, 2, 2], a, a + T) / T)


def safe_bound(astar: float, window: Optional[float] = None) -> float:
    """Error strength (rad/s) at which the transfer is predicted to degrade.

    Unsuppressed (``window`` None): ‖H_err‖ ≈ A*. Suppressed to first order
    on T̃ = ``window``: ‖H_err‖² ≈ 2A*/T̃.
    """
    if window is None:
        return astar
    return math.sqrt(2 * astar / window)


def error_budget(name: str, params: MoleculeParams, errors: Optional[ErrorParams] = None,
                 cert_tol: float = 1e-6) -> Dict[str, dict]:
    """Order-of-magnitude safe error strengths per error kind.

    An error suppressed to first order on the window T̃ is bounded by
    ‖H_err‖² ≈ 2A*/T̃; otherwise by ‖H_err‖ ≈ A*. Suppression is certified
    numerically from the ideal-pulse trace: the dipolar tensor residual for
    Δ_DF, |⟨f⟩| for Δ_0 and |⟨f^I⟩| for Δ_CS. Δ_1 and Δ_RD are never
    certified. The returned bounds are predictors, not guarantees.
    """
    spec = catalog.get_spec(name)
    trace = trace_for(spec.name, params, ideal=True)
    try:
        astar = effective_coupling(trace, params).Astar
    except PrecessionFormError:
        astar = catalog.build(spec.name, params).meta["astar_nominal"] * params.A
    cert_trace = trace_for(spec.name, params, ideal=True, certificate=True)
    window = cert_trace.window
    certs = {
        "dDF": dipolar_average_tensor(cert_trace).residual,
        "d0": float(np.linalg.norm(first_order_average(trace))),
        "dCS": abs(filter_average(trace)),
        "d1": None,
        "dRD": None,
    }
    out = {}
    for kind in ERROR_KINDS:
        c = certs[kind]
        sup = c is not None and c <= cert_tol
        bound = safe_bound(astar, window if sup else None)
        row = {"suppressed": bool(sup), "certificate": c, "window_s": window,
               "Astar": astar, "bound_rad_s": bound, "bound_hz": to_hz(bound)}
        if errors is not None:
            given = abs(errors.get_kind(kind))
            row["given_hz"] = to_hz(given)
            row["ratio"] = given / bound if bound > 0 else math.inf
        out[kind] = row
    return out
