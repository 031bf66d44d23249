"""Constructors for the 17 transfer sequences of the overview table.

Each entry is a :class:`SequenceSpec` holding default options, a builder, the
closed-form effective coupling (when one exists) and the resonance rule.
Names are the table row labels; :data:`ALIASES` adds shell-friendly forms.

Options understood by :func:`build` (unused ones are ignored):

``phi``          polarising phase φ (rad)
``J_tau``        J·τ (rad) for PulsePol-like spacings
``phi_I``        I-channel π-pulse phase (rad)
``eta``          filling factor (MREVpol, BLEWpol, altMREVpol+XY, PP+XY)
``m``            MREV repetitions per free period (MREV-PulsePol)
``design_dDF_hz``  dipolar field the adjusted/enabled sequences are built for
``lg_modulation``  LG-SLIC modulation scale (1 as printed, 0 for the bare LG drive)
``decoupling_block``  bare decoupling block: φ = 0 for BLEW/MREV families and no
                 LG modulation; resonance checks are skipped (AHT certificates)
``reps``         override the number of core repetitions
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Tuple

from .errors import ConfigError, DegenerateResonance, NoFormula, ResonanceViolation, UnknownSequence
from .sequence import (MAX, SequenceProgram, TimeSpec, WaveSpec, cw, pulse, wait)
from .spin import PYRUVATE, MoleculeParams, hz

PI = math.pi
X, Y, XB, YB = 0.0, PI / 2, PI, 3 * PI / 2
ALPHA_MA = math.acos(math.sqrt(1.0 / 3.0))
_ALPHA_MA_PI = ALPHA_MA / PI

CATEGORIES = ("DF-unadjusted", "DF-adjusted", "DF-enabled", "DF-suppressing (1)",
              "DF-suppressing (2)", "dual channel")


@dataclass(frozen=True)
class SequenceSpec:
    """Catalog entry.

    Attributes
    ----------
    family : str
        Resonance family: ``cw``, ``pulsepol``, ``xy``, ``blew``, ``mrev``.
    tracks_dDF : bool
        The sequence is built for a known dipolar field; dDF sweeps rebuild it
        with ``design_dDF_hz`` equal to the applied value.
    astar_nominal : float
        A*/A used only to pick N when no closed form exists.
    """

    name: str
    category: str
    family: str
    defaults: Dict[str, float]
    builder: Callable
    astar: Optional[Callable] = None
    tracks_dDF: bool = False
    astar_nominal: Optional[float] = None
    baseline_dDF_hz: float = 0.0
    aliases: Tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# closed forms (all return A*/A)

def _pp_factor(J_tau):
    x = J_tau / 8
    return math.sin(x) ** 2 / x


def _xy_factor(J_tau):
    x = J_tau / 4
    return math.sin(x) / x


def _mrev_factor(eta):
    r2 = math.sqrt(2)
    return r2 / 3 + eta * (r2 / PI - r2 / 4)


# ---------------------------------------------------------------------------
# building blocks

def _q(J_tau):
    """τ/4 as a duration spec, with τ = J_tau / J."""
    return TimeSpec("per_J", J_tau / 4)


def _half(a_pi, phase, J_tau, group=None, pi_phase=None, ch="S"):
    """One PulsePol half-block a(X+ph) τ/4 π(Y+ph) τ/4 a(X+ph)."""
    pp = phase + Y if pi_phase is None else pi_phase
    return [pulse(a_pi, phase, ch, group), wait(_q(J_tau), ch, group),
            pulse(1, pp, ch, group), wait(_q(J_tau), ch, group), pulse(a_pi, phase, ch, group)]


def _bare_pi(phase, J_tau, group=None):
    """τ/4 π(Y+ph) τ/4 with the π/2 pulses removed."""
    return [wait(_q(J_tau), "S", group), pulse(1, phase + Y, "S", group), wait(_q(J_tau), "S", group)]


def _n_reps(astar_over_A, period, params, opts):
    if opts.get("reps"):
        return int(opts["reps"])
    if astar_over_A <= 0 or params.A <= 0:
        return 1
    return max(1, int(round(2 * PI / (astar_over_A * params.A) / period)))


def _meta(spec_name, opts, period, alpha, astar, window, window_kind, n_periods_window=1, **extra):
    meta = {
        "period_s": period, "alpha_rad": alpha,
        "astar_over_A": astar, "window_s": window, "window_kind": window_kind,
        "window_periods": n_periods_window, "options": dict(opts),
    }
    meta.update(extra)
    return meta


def _alpha_cycle(alpha, max_k=64):
    """Smallest k with k·alpha ≡ 0 (mod 2π)."""
    for k in range(1, max_k + 1):
        r = (k * alpha / (2 * PI)) % 1.0
        if min(r, 1 - r) < 1e-9:
            return k
    return 1


# ---------------------------------------------------------------------------
# builders; each returns (pre, core, post, period_s, alpha, astar/A or None, extra meta)

def _b_slic(params, o):
    pre = [pulse(0.5, YB)]
    core = [cw(WaveSpec.make("J", scale=1.0), X, angle_pi=2.0)]
    post = [pulse(0.5, Y)]
    T = 2 * PI / params.J
    return pre, core, post, T, 0.0, 1.0, {"window_s": T, "window_kind": "J period"}


def _b_slic_star(params, o):
    d = o["design_dDF_hz"]
    pre = [pulse(0.5, YB)]
    core = [cw(WaveSpec.make("slic_star", design_dDF_hz=d, astar_over_A=1.0), X,
               tau=TimeSpec("per_A", 2 * PI))]
    post = [pulse(0.5, Y)]
    return pre, core, post, 2 * PI / params.A, 0.0, 1.0, {"window_s": 2 * PI / params.J,
                                                          "window_kind": "J period", "single_core": True}


def _b_amp_sweep(params, o):
    d = o["design_dDF_hz"]
    pre = [pulse(0.5, YB)]
    core = [cw(WaveSpec.make("amp_sweep", design_dDF_hz=d, astar_over_A=1.0 / 3.0), X,
               tau=TimeSpec("per_A", 6 * PI))]
    post = [pulse(0.5, Y)]
    return pre, core, post, 6 * PI / params.A, 0.0, 1.0 / 3.0, {"window_s": 2 * PI / params.J,
                                                                "window_kind": "J period", "single_core": True}


def _pulsepol_core(a_pi, phi, J_tau, grouped):
    g1, g2 = ("h1", "h2") if grouped else (None, None)
    return _half(a_pi, X, J_tau, g1) + _half(a_pi, X + phi, J_tau, g2)


def _b_pulsepol(params, o, a_pi=0.5, factor=1.0):
    phi, Jt = o["phi"], o["J_tau"]
    core = _pulsepol_core(a_pi, phi, Jt, grouped=False)
    T = Jt / params.J
    alpha = 2 * phi
    k = _alpha_cycle(alpha)
    return [], core, [], T, alpha, factor * _pp_factor(Jt), {"window_s": k * T, "window_kind": "alpha cycle",
                                                             "window_periods": k}


def _b_ma_pulsepol(params, o):
    return _b_pulsepol(params, o, a_pi=_ALPHA_MA_PI, factor=math.sqrt(2 / 3) * 1.0)


def _b_pulsepol_star(params, o):
    phi, Jt = o["phi"], o["J_tau"]
    d = hz(o["design_dDF_hz"])
    T = Jt / params.J
    a = _pp_factor(Jt) * params.A
    N = _n_reps(_pp_factor(Jt), T, params, o)

    def ph(t):
        return -(d / 2) * (t / 2 - math.sin(a * t / 2) / a)

    core = []
    for n in range(1, N + 1):
        pn = ph(n * T)
        # H = Ω⃗·S makes a phase shift +θ a frame rotation exp(-iθ S_z), so the
        # compensating shift is +φ_n in this convention
        core += _half(0.5, X + pn, Jt) + _half(0.5, X + phi + pn, Jt)
    # each τ block is its own wait group so absorption matches PulsePol
    core = [_regroup(s, f"b{i // 10}") for i, s in enumerate(core)]
    alpha = 2 * phi
    k = _alpha_cycle(alpha)
    return [], core, [], N * T, alpha, _pp_factor(Jt), {
        "window_s": k * T, "window_kind": "alpha cycle", "window_periods": k,
        "single_core": True, "block_period_s": T, "blocks": N}


def _regroup(seg, group):
    return replace(seg, wait_group=group)


def _b_ma_slic(params, o):
    amp = WaveSpec.make("J", scale=math.sqrt(2 / 3))
    det = WaveSpec.make("J", scale=-math.sqrt(1 / 3))
    pre = [pulse(_ALPHA_MA_PI, YB)]
    core = [cw(amp, X, detuning=det, angle_pi=2.0)]
    post = [pulse(_ALPHA_MA_PI, Y)]
    T = 2 * PI / params.J
    return pre, core, post, T, 0.0, math.sqrt(2 / 3), {"window_s": T, "window_kind": "J period"}


def _b_df_pulsepol(params, o):
    phi, Jt = o["phi"], o["J_tau"]
    core = (_half(0.5, X, Jt, "a1") + _half(0.5, X + phi, Jt, "a2")
            + _bare_pi(X, Jt, "b1") + _half(0.5, X + phi, Jt, "b2")
            + _half(0.5, X, Jt, "c1") + _bare_pi(X + phi, Jt, "c2"))
    T = 3 * Jt / params.J
    alpha = 6 * phi
    k = _alpha_cycle(alpha)
    return [], core, [], T, alpha, (2 / 3) * _pp_factor(Jt), {"window_s": k * T, "window_kind": "alpha cycle",
                                                             "window_periods": k}


def _b_m2a_pulsepol(params, o):
    phi, Jt = o["phi"], o["J_tau"]
    q = 0.25
    core = (_half(q, X, Jt, "a1") + _half(0.5, X + phi, Jt, "a2")
            + _half(q, X, Jt, "b1") + _half(q, X + phi, Jt, "b2")
            + _half(0.5, X, Jt, "c1") + _half(q, X + phi, Jt, "c2"))
    T = 3 * Jt / params.J
    alpha = 6 * phi
    k = _alpha_cycle(alpha)
    return [], core, [], T, alpha, (1 + 2 * math.sqrt(0.5)) / 3 * _pp_factor(Jt), {
        "window_s": k * T, "window_kind": "alpha cycle", "window_periods": k}


def _b_lg_slic(params, o):
    w_lg = params.Omega * math.sqrt(1.5)
    mod = o.get("lg_modulation", 1.0)
    core = [cw(MAX, X, detuning=WaveSpec.make("max", scale=1 / math.sqrt(2)),
               quad=WaveSpec.make("lg_mod", scale=2.0 * mod),
               tau=TimeSpec("per_Omega", 2 * PI / math.sqrt(1.5)))]
    T = 2 * PI / w_lg
    return [pulse(0.5, X)], core, [pulse(0.5, XB)], T, 0.0, None, {"window_s": T, "window_kind": "LG rotation"}


_BLEW_PHASES = (X, Y, XB, Y, X, Y, YB, XB, YB, X, YB, XB)


def _b_blewpol(params, o):
    eta = o["eta"]
    tau = PI / (2 * params.Omega * eta)
    phi = o.get("phi")
    if phi is None:
        phi = 6 * params.J * tau
    ts = TimeSpec("s", tau)
    core = [wait(ts.scaled(0.5))]
    for k, p in enumerate(_BLEW_PHASES):
        core.append(pulse(0.5, p + (phi if k >= 6 else 0.0)))
        core.append(wait(ts.scaled(0.5 if k == 11 else 1.0)))
    T = 12 * tau
    return [], core, [], T, 2 * phi, 4 / (3 * PI), {"window_s": T, "window_kind": "BLEW cycle",
                                                    "phi": phi, "tau_s": tau}


def _centred(segs, spread=None):
    """Centred pulse accounting on the S channel.

    Every wait gets its own group and each pulse charges half of its duration
    to the wait before and half to the wait after it (cyclically), so pulse
    centres sit at their ideal-pulse times. Pulses with angle >= π and a
    ``spread`` are charged equally to the ``spread`` waits on either side.
    """
    idx = [i for i, s in enumerate(segs) if s.channel == "S"]
    waits = [i for i in idx if segs[i].kind == "wait"]
    gid = {i: f"w{k}" for k, i in enumerate(waits)}
    nw = len(waits)
    out = list(segs)
    for i in idx:
        s = segs[i]
        if s.kind == "wait":
            out[i] = replace(s, wait_group=gid[i])
            continue
        if s.kind != "pulse":
            continue
        k = sum(1 for j in waits if j < i)  # index of the next wait
        width = spread if (spread and s.angle_pi >= 1.0) else 1
        around = [waits[(k - 1 - r) % nw] for r in range(width)] + [waits[(k + r) % nw] for r in range(width)]
        out[i] = replace(s, wait_group="|".join(gid[j] for j in around))
    return out


def _mrev_segments(phases, tau: TimeSpec):
    """Pulses at the starts of waits 2τ, τ, 2τ, τ (repeating)."""
    segs = []
    for k, p in enumerate(phases):
        segs.append(pulse(0.5, p))
        segs.append(wait(tau.scaled(2.0 if k % 2 == 0 else 1.0)))
    return segs


def _b_mrevpol(params, o, alternating=False):
    eta = o["eta"]
    tau = PI / (3 * params.Omega * eta)
    phi = o.get("phi")
    if phi is None:
        phi = 6 * params.J * tau
    ts = TimeSpec("s", tau)
    lines = [(X, X, Y, YB), (XB + phi, XB + phi, Y, YB)]
    if alternating:
        lines += [(XB, XB, YB, Y), (X + phi, X + phi, YB, Y)]
    phases = [p for line in lines for p in line]
    core = _centred(_mrev_segments(phases, ts))
    T = 6 * tau * len(lines)
    extra = {"window_s": 12 * tau, "window_kind": "MREV cycle", "phi": phi, "tau_s": tau}
    alpha = 2 * phi * (len(lines) // 2)
    return [], core, [], T, alpha, _mrev_factor(eta), extra


_MREV_CYCLE = ((X, 6), (X, 12), (Y, 6), (YB, 12), (XB, 6), (XB, 12), (Y, 6), (YB, 12))


def _mrev_block(shift, m, tau_free: TimeSpec, reverse=False):
    segs = []
    for _ in range(m):
        for p, div in _MREV_CYCLE:
            segs.append(pulse(0.5, p + shift))
            segs.append(wait(tau_free.scaled(1.0 / (div * m))))
    return segs[::-1] if reverse else segs


def _b_mrev_pulsepol(params, o):
    phi, Jt, m = o["phi"], o["J_tau"], int(o["m"])
    if m < 1:
        raise ConfigError("m must be >= 1")
    tf = _q(Jt)
    s = 3 * PI / 4
    core = (_mrev_block(s, m, tf) + [pulse(1, Y)] + _mrev_block(s, m, tf, reverse=True)
            + _mrev_block(s + phi, m, tf) + [pulse(1, Y + phi)] + _mrev_block(s + phi, m, tf, reverse=True))
    core = _centred(core, spread=8 * m)
    T = Jt / params.J
    eta_mrev = 16 * m * PI / (params.Omega * T) if params.Omega > 0 else 0.0
    alpha = 2 * phi
    k = _alpha_cycle(alpha)
    return [], core, [], T, alpha, _pp_factor(Jt) * _mrev_factor(eta_mrev), {
        "window_s": T / (4 * m), "window_kind": "MREV cycle", "window_periods": 1,
        "alpha_cycle_periods": k, "eta_mrev": eta_mrev}


def _i_block(phi_I, J_tau, tag):
    """PP+XY I-channel block, half-block wait groups."""
    return (_half(0.5, X, J_tau, f"{tag}a", pi_phase=phi_I, ch="I")
            + _half(0.5, X, J_tau, f"{tag}b", pi_phase=phi_I, ch="I"))


def _b_pp_xy(params, o):
    eta = o["eta"]
    tau = 4 * PI / (params.Omega * eta)
    Jt = params.J * tau if o.get("J_tau") is None else o["J_tau"]
    phi = Jt / 2 if o.get("phi") is None else o["phi"]
    core = (_half(0.5, X, Jt, "h1") + _half(0.5, X + phi, Jt, "h2") + _i_block(o["phi_I"], Jt, "i"))
    pre = [pulse(0.5, X, "I")]
    post = [pulse(0.5, X, "I")]
    T = Jt / params.J
    return pre, core, post, T, 2 * phi, _xy_factor(Jt), {"window_s": T, "window_kind": "J period",
                                                        "phi": phi, "J_tau": Jt}


def _b_m2a_pp_xy(params, o):
    phi, Jt = o["phi"], o["J_tau"]
    q = 0.25
    s = (_half(q, X, Jt, "a1") + _half(0.5, X + phi, Jt, "a2")
         + _half(q, X, Jt, "b1") + _half(q, X + phi, Jt, "b2")
         + _half(0.5, X, Jt, "c1") + _half(q, X + phi, Jt, "c2"))
    i = sum((_i_block(o["phi_I"], Jt, f"i{k}") for k in range(3)), [])
    T = 3 * Jt / params.J
    alpha = 6 * phi
    k = _alpha_cycle(alpha)
    return [pulse(0.5, X, "I")], s + i, [pulse(0.5, X, "I")], T, alpha, \
        (1 + 2 * math.sqrt(0.5)) / 3 * _xy_factor(Jt), {"window_s": k * T, "window_kind": "alpha cycle",
                                                        "window_periods": k}


def _b_df_pp_xy(params, o):
    phi, Jt = o["phi"], o["J_tau"]
    s = (_half(0.5, X, Jt, "a1") + _half(0.5, X + phi, Jt, "a2")
         + _bare_pi(X, Jt, "b1") + _half(0.5, X + phi, Jt, "b2")
         + _half(0.5, X, Jt, "c1") + _half(1.0, X + phi, Jt, "c2"))
    i = sum((_i_block(o["phi_I"], Jt, f"i{k}") for k in range(3)), [])
    T = 3 * Jt / params.J
    alpha = 6 * phi
    k = _alpha_cycle(alpha)
    return [pulse(0.5, X, "I")], s + i, [pulse(0.5, X, "I")], T, alpha, (2 / 3) * _xy_factor(Jt), {
        "window_s": k * T, "window_kind": "alpha cycle", "window_periods": k}


def _b_alt_mrevpol_xy(params, o):
    pre, core, post, T, alpha, astar, extra = _b_mrevpol(params, o, alternating=True)
    half = TimeSpec("s", T / 2)
    phi_I = o["phi_I"]
    i = [pulse(0.5, X, "I", "iw"), wait(half, "I", "iw"), pulse(1, phi_I, "I", "iw"),
         wait(half, "I", "iw"), pulse(0.5, X, "I", "iw")]
    return [pulse(0.5, X, "I")], core + i, [pulse(0.5, X, "I")], T, alpha, astar, extra


# ---------------------------------------------------------------------------
# registry

def _spec(name, category, family, defaults, builder, **kw):
    return SequenceSpec(name, category, family, defaults, builder, **kw)


SPECS: Dict[str, SequenceSpec] = {s.name: s for s in [
    _spec("SLIC", "DF-unadjusted", "cw", {}, _b_slic),
    _spec("PulsePol", "DF-unadjusted", "pulsepol", {"phi": PI / 4, "J_tau": 3.5 * PI}, _b_pulsepol),
    _spec("SLIC*", "DF-adjusted", "cw", {"design_dDF_hz": 0.0}, _b_slic_star, tracks_dDF=True,
          aliases=("SLIC-star",)),
    _spec("PulsePol*", "DF-adjusted", "pulsepol", {"phi": PI / 4, "J_tau": 3.5 * PI, "design_dDF_hz": 0.0},
          _b_pulsepol_star, tracks_dDF=True, aliases=("PulsePol-star",)),
    _spec("amp swept SLIC", "DF-enabled", "cw", {"design_dDF_hz": 3.0}, _b_amp_sweep, tracks_dDF=True,
          baseline_dDF_hz=3.0, aliases=("amp-swept-SLIC", "amp_swept_SLIC")),
    _spec("MA-SLIC", "DF-suppressing (1)", "cw", {}, _b_ma_slic),
    _spec("MA-PulsePol", "DF-suppressing (1)", "pulsepol", {"phi": PI / 4, "J_tau": 3.5 * PI}, _b_ma_pulsepol),
    _spec("M2A-PulsePol", "DF-suppressing (1)", "pulsepol", {"phi": 0.6 * PI, "J_tau": 2.8 * PI},
          _b_m2a_pulsepol),
    _spec("DF-PulsePol", "DF-suppressing (1)", "pulsepol", {"phi": 0.75 * PI, "J_tau": 2.5 * PI},
          _b_df_pulsepol),
    _spec("LG-SLIC", "DF-suppressing (2)", "cw", {}, _b_lg_slic, astar_nominal=0.6),
    _spec("BLEWpol", "DF-suppressing (2)", "blew", {"eta": 1.0}, _b_blewpol),
    _spec("MREVpol", "DF-suppressing (2)", "mrev", {"eta": 0.5}, _b_mrevpol),
    _spec("MREV-PulsePol", "DF-suppressing (2)", "pulsepol", {"phi": 0.4 * PI, "J_tau": 3.2 * PI, "m": 5},
          _b_mrev_pulsepol),
    _spec("PP+XY", "dual channel", "xy", {"eta": 0.2, "phi_I": 0.75 * PI}, _b_pp_xy, aliases=("PulsePol+XY",)),
    _spec("M2A-PP+XY", "dual channel", "xy", {"phi": 0.4 * PI, "J_tau": 0.8 * PI, "phi_I": 0.75 * PI},
          _b_m2a_pp_xy),
    _spec("DF-PP+XY", "dual channel", "xy", {"phi": 0.4 * PI, "J_tau": 0.8 * PI, "phi_I": 0.75 * PI},
          _b_df_pp_xy),
    _spec("altMREVpol+XY", "dual channel", "mrev", {"eta": 2 / 3, "phi_I": 0.9 * PI}, _b_alt_mrevpol_xy,
          aliases=("altMREVpol",)),
]}

NAMES: Tuple[str, ...] = tuple(SPECS)
ALIASES: Dict[str, str] = {}
for _s in SPECS.values():
    for _a in _s.aliases:
        ALIASES[_a] = _s.name


def resolve_name(name: str) -> str:
    """Canonical table label for ``name`` (case-insensitive, aliases allowed)."""
    if name in SPECS:
        return name
    if name in ALIASES:
        return ALIASES[name]
    low = {k.lower(): k for k in list(SPECS) + list(ALIASES)}
    key = low.get(name.lower())
    if key is None:
        raise UnknownSequence(f"unknown sequence {name!r}; known: {', '.join(NAMES)}")
    return ALIASES.get(key, key)


def get_spec(name: str) -> SequenceSpec:
    return SPECS[resolve_name(name)]


# ---------------------------------------------------------------------------
# resonance rules

def resonance_solve(name: str, phi: float, J: float, n: Optional[int] = None,
                    branch: str = "-", params: MoleculeParams = PYRUVATE) -> float:
    """Pulse spacing τ (s) meeting the resonance of sequence ``name``.

    PulsePol family: Jτ = 4πn ∓ 2φ (default n=1, "-").
    +XY family: Jτ = 4πn ± 2φ (sign flipped, default n=0).
    BLEWpol: 12τ = 2φ/J. MREVpol family: 12Jτ = 2φ.

    Raises
    ------
    DegenerateResonance
        For φ ∈ {0, π} in the PulsePol family.
    NoFormula
        For continuous-wave sequences (their resonance is an amplitude).
    """
    spec = get_spec(name)
    if J <= 0:
        raise ConfigError("J must be > 0")
    if spec.family in ("pulsepol", "xy"):
        r = phi % (2 * PI)
        if spec.family == "pulsepol" and min(abs(r), abs(r - PI), abs(r - 2 * PI)) < 1e-12:
            raise DegenerateResonance(f"phi={phi} gives no transfer for {spec.name}", "phi in {0, pi}")
        if branch not in ("-", "+"):
            raise ConfigError("branch must be '+' or '-'")
        s = -1 if branch == "-" else 1
        if spec.family == "xy":
            s = -s
            n = 0 if n is None else n
        else:
            n = 1 if n is None else n
        Jt = 4 * PI * n + s * 2 * phi
        if Jt <= 0:
            raise ResonanceViolation(f"branch n={n}{branch} gives J*tau={Jt} <= 0", "J*tau > 0")
        return Jt / J
    if spec.family == "blew":
        return phi / (6 * J)
    if spec.family == "mrev":
        return 2 * phi / (12 * J)
    raise NoFormula(f"{spec.name} has an amplitude resonance (Omega = J), no spacing rule")


def _check_pulsepol(name, phi, Jt, family):
    r = phi % (2 * PI)
    if family == "pulsepol" and min(abs(r), abs(r - PI), abs(r - 2 * PI)) < 1e-12:
        raise DegenerateResonance(f"phi={phi} gives no transfer for {name}", "phi in {0, pi}")
    sgn = (-1, 1) if family == "pulsepol" else (1, -1)
    for s in sgn:
        n = (Jt - s * 2 * phi) / (4 * PI)
        if abs(n - round(n)) < 1e-9:
            return
    rule = "J*tau = 4*pi*n -/+ 2*phi" if family == "pulsepol" else "J*tau = 4*pi*n +/- 2*phi"
    raise ResonanceViolation(f"{name}: J*tau={Jt:.6g}, phi={phi:.6g} violates {rule}", rule)


def _resolve_options(spec: SequenceSpec, params: MoleculeParams, options: dict) -> dict:
    o = dict(spec.defaults)
    o.update({k: v for k, v in options.items() if v is not None})
    if o.pop("decoupling_block", False):
        if spec.family in ("blew", "mrev"):
            o["phi"] = 0.0
        if spec.name == "LG-SLIC":
            o["lg_modulation"] = 0.0
        return o
    if spec.family == "pulsepol":
        if "phi" in options and "J_tau" not in options:
            o["J_tau"] = resonance_solve(spec.name, o["phi"], 1.0)
        elif "J_tau" in options and "phi" not in options:
            o["phi"] = (4 * PI - o["J_tau"]) / 2
        _check_pulsepol(spec.name, o["phi"], o["J_tau"], "pulsepol")
    elif spec.name in ("M2A-PP+XY", "DF-PP+XY"):
        if "phi" in options and "J_tau" not in options:
            o["J_tau"] = 2 * o["phi"]
        elif "J_tau" in options and "phi" not in options:
            o["phi"] = o["J_tau"] / 2
        _check_pulsepol(spec.name, o["phi"], o["J_tau"], "xy")
    elif spec.name == "PP+XY":
        if "phi" in options and "J_tau" not in options:
            o["J_tau"] = 2 * o["phi"]
        if o.get("J_tau") is not None and o.get("phi") is not None:
            _check_pulsepol(spec.name, o["phi"], o["J_tau"], "xy")
    elif spec.family in ("blew", "mrev"):
        if o.get("phi") is not None:
            eta = o["eta"]
            tau = PI / (2 * params.Omega * eta) if spec.family == "blew" else PI / (3 * params.Omega * eta)
            want = resonance_solve(spec.name, o["phi"], params.J)
            if abs(want - tau) > 1e-9 * tau:
                raise ResonanceViolation(
                    f"{spec.name}: tau={tau:.6g} s from eta differs from resonance tau={want:.6g} s",
                    "12*J*tau = 2*phi")
    for key in ("eta",):
        if key in o and not 0 < o[key]:
            raise ConfigError(f"{key} must be > 0")
    return o


# ---------------------------------------------------------------------------
# public API

def build(name: str, params: MoleculeParams = PYRUVATE, **options) -> SequenceProgram:
    """Instantiate sequence ``name`` at ``params``.

    N is the nearest whole number of core periods to 2π/A*; pre and post
    alignment pulses are not counted.

    Raises
    ------
    UnknownSequence, ResonanceViolation, DegenerateResonance
    """
    spec = get_spec(name)
    o = _resolve_options(spec, params, options)
    pre, core, post, T, alpha, astar, extra = spec.builder(params, o)
    ratio = astar if astar is not None else spec.astar_nominal
    if extra.pop("single_core", False):
        reps = 1
    else:
        reps = _n_reps(ratio, T, params, o)
    window = extra.pop("window_s", T)
    wkind = extra.pop("window_kind", "period")
    wper = extra.pop("window_periods", 1)
    meta = _meta(spec.name, o, T, alpha, astar, window, wkind, wper,
                 category=spec.category, astar_nominal=ratio, **extra)
    return SequenceProgram(spec.name, tuple(pre), tuple(core), reps, tuple(post), meta)


def analytic_Astar(name: str, params: MoleculeParams = PYRUVATE, **options) -> float:
    """Closed-form effective coupling A* (rad/s) at reference or given options.

    Raises
    ------
    NoFormula
        For LG-SLIC, whose value is only known numerically.
    """
    spec = get_spec(name)
    o = _resolve_options(spec, params, options)
    astar = spec.builder(params, o)[5]
    if astar is None:
        raise NoFormula(f"{spec.name} has no closed-form A*")
    return astar * params.A


def categories() -> Dict[str, List[str]]:
    out: Dict[str, List[str]] = {c: [] for c in CATEGORIES}
    for s in SPECS.values():
        out[s.category].append(s.name)
    return out
