"""Two-channel pulse programs and their scheduling onto a time axis.

A :class:`SequenceProgram` is a declarative description (pre, core, reps, post)
whose waveforms and durations are symbolic in the molecule parameters.
:func:`schedule` resolves it into a :class:`Schedule` with absolute times.

Wait accounting
---------------
Every wait belongs to a ``wait_group`` and every pulse charges its duration
to one or more groups (split equally). Within a group, all waits are
shortened by the same fraction so that ``t_wait / tau_wait`` is constant.
Unlabelled waits and pulses share the section-wide group ``"default"``; a
section without waits simply adds its pulse durations.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, InfeasibleSchedule, OutOfRange
from .spin import MoleculeParams, hz

PHASES = {"X": 0.0, "Y": math.pi / 2, "Xbar": math.pi, "Ybar": 3 * math.pi / 2}
DEFAULT_GROUP = "default"
_TOL = 1e-12


# ---------------------------------------------------------------------------
# declarative waveform and duration specs

@dataclass(frozen=True)
class WaveSpec:
    """Symbolic waveform: ``kind`` plus named numeric arguments.

    Kinds
    -----
    zero
    const        {hz}: constant (2π)·hz
    max          {scale}: scale · channel Rabi limit
    J            {scale}: scale · J
    slic_star    {design_dDF_hz, astar_over_A}: J - (Δ/2) sin²(A* t / 4)
    amp_sweep    {design_dDF_hz, astar_over_A}: linear sweep across J
    lg_mod       {scale}: scale · J · cos(ω_LG t), ω_LG = Ω sqrt(3/2)
    """

    kind: str = "zero"
    args: Tuple[Tuple[str, float], ...] = ()

    @staticmethod
    def make(kind: str, **args) -> "WaveSpec":
        return WaveSpec(kind, tuple(sorted((k, float(v)) for k, v in args.items())))

    def arg(self, name: str, default=None):
        for k, v in self.args:
            if k == name:
                return v
        if default is None:
            raise ConfigError(f"waveform {self.kind!r} needs argument {name!r}")
        return default

    @property
    def constant(self) -> bool:
        return self.kind in ("zero", "const", "max", "J")

    def evaluate(self, params: MoleculeParams, channel: str = "S"):
        """Return a float for constant kinds, else a vectorised f(t_local)."""
        k = self.kind
        if k == "zero":
            return 0.0
        if k == "const":
            return hz(self.arg("hz"))
        if k == "max":
            limit = params.Omega if channel == "S" else params.Omega_I
            return self.arg("scale", 1.0) * limit
        if k == "J":
            return self.arg("scale", 1.0) * params.J
        if k == "slic_star":
            d = hz(self.arg("design_dDF_hz"))
            astar = self.arg("astar_over_A", 1.0) * params.A
            J = params.J
            return lambda t: J - 0.5 * d * np.sin(astar * np.asarray(t) / 4) ** 2
        if k == "amp_sweep":
            d = hz(self.arg("design_dDF_hz"))
            astar = self.arg("astar_over_A", 1.0 / 3.0) * params.A
            A, J = params.A, params.J
            sgn = 1.0 if d >= 0 else -1.0
            t_end = 2 * math.pi / astar
            return lambda t: J - sgn * (-A + (abs(d) / 2 + 3 * A) * np.asarray(t) / t_end)
        if k == "lg_mod":
            w_lg = params.Omega * math.sqrt(1.5)
            s = self.arg("scale", 2.0) * params.J
            return lambda t: s * np.cos(w_lg * np.asarray(t))
        raise ConfigError(f"unknown waveform kind {k!r}")

    def bandwidth(self, params: MoleculeParams) -> float:
        """Angular frequency scale of the time dependence (0 if slow)."""
        if self.kind == "lg_mod":
            return params.Omega * math.sqrt(1.5)
        return 0.0

    def to_json(self):
        return {"kind": self.kind, **dict(self.args)}

    @staticmethod
    def from_json(obj) -> "WaveSpec":
        if obj is None:
            return ZERO
        if isinstance(obj, (int, float)):
            return WaveSpec.make("const", hz=obj)
        obj = dict(obj)
        kind = obj.pop("kind")
        return WaveSpec.make(kind, **obj)


ZERO = WaveSpec("zero")
MAX = WaveSpec.make("max", scale=1.0)


@dataclass(frozen=True)
class TimeSpec:
    """Symbolic duration.

    Kinds: ``s`` {value}, ``per_J`` {rad}, ``per_A`` {rad}, ``per_Omega`` {rad},
    ``per_Omega_I`` {rad}; e.g. per_J with rad=3.5π means 3.5π/J.
    """

    kind: str = "s"
    value: float = 0.0

    def evaluate(self, params: MoleculeParams) -> float:
        div = {"s": 1.0, "per_J": params.J, "per_A": params.A,
               "per_Omega": params.Omega, "per_Omega_I": params.Omega_I}
        if self.kind not in div:
            raise ConfigError(f"unknown duration kind {self.kind!r}")
        if self.kind == "s":
            return self.value
        if div[self.kind] == 0:
            return math.inf
        return self.value / div[self.kind]

    def scaled(self, f: float) -> "TimeSpec":
        return TimeSpec(self.kind, self.value * f)

    def to_json(self):
        key = "value" if self.kind == "s" else "rad"
        return {"kind": self.kind, key: self.value}

    @staticmethod
    def from_json(obj) -> Optional["TimeSpec"]:
        if obj is None:
            return None
        if isinstance(obj, (int, float)):
            return TimeSpec("s", float(obj))
        obj = dict(obj)
        kind = obj.get("kind", "s")
        val = obj.get("value", obj.get("rad"))
        if val is None:
            raise ConfigError(f"duration spec {obj} lacks a value")
        return TimeSpec(kind, float(val))


# ---------------------------------------------------------------------------
# segments and programs

@dataclass(frozen=True)
class Segment:
    """One pulse, wait or continuous-wave block on a channel.

    The control vector is amp·(cosφ, sinφ, 0) + quad·(-sinφ, cosφ, 0)
    + (0, 0, detuning). Pulse duration is angle/|Ω⃗|.
    """

    kind: str
    channel: str = "S"
    angle_pi: float = 0.0
    phase: float = 0.0
    amp: WaveSpec = MAX
    detuning: WaveSpec = ZERO
    quad: WaveSpec = ZERO
    tau: Optional[TimeSpec] = None
    wait_group: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("pulse", "wait", "cw"):
            raise ConfigError(f"unknown segment kind {self.kind!r}")
        if self.channel not in ("S", "I"):
            raise ConfigError(f"unknown channel {self.channel!r}")
        if self.kind == "wait" and self.tau is None:
            raise ConfigError("wait needs a tau spec")

    @property
    def angle(self) -> float:
        return math.pi * self.angle_pi

    def groups(self) -> List[str]:
        g = self.wait_group or DEFAULT_GROUP
        return [x for x in g.split("|") if x]

    def to_json(self) -> dict:
        out = {"kind": self.kind, "channel": self.channel}
        if self.kind != "wait":
            out["angle_pi_units"] = self.angle_pi
            out["phase_rad"] = self.phase
            out["amp_spec"] = self.amp.to_json()
            out["detuning_spec"] = self.detuning.to_json()
            if self.quad != ZERO:
                out["quad_spec"] = self.quad.to_json()
        if self.tau is not None:
            out["tau_spec"] = self.tau.to_json()
        if self.wait_group is not None:
            out["wait_group"] = self.wait_group
        return out

    @staticmethod
    def from_json(obj: dict) -> "Segment":
        obj = dict(obj)
        known = {"kind", "channel", "angle_pi_units", "phase_rad", "phase_name",
                 "amp_spec", "detuning_spec", "quad_spec", "tau_spec", "wait_group"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown segment keys {sorted(extra)}")
        if "phase_name" in obj:
            name = obj["phase_name"]
            if name not in PHASES:
                raise ConfigError(f"unknown phase name {name!r}")
            phase = PHASES[name]
        else:
            phase = float(obj.get("phase_rad", 0.0))
        return Segment(
            kind=obj["kind"], channel=obj.get("channel", "S"),
            angle_pi=float(obj.get("angle_pi_units", 0.0)), phase=phase,
            amp=WaveSpec.from_json(obj.get("amp_spec", MAX.to_json())),
            detuning=WaveSpec.from_json(obj.get("detuning_spec")),
            quad=WaveSpec.from_json(obj.get("quad_spec")),
            tau=TimeSpec.from_json(obj.get("tau_spec")),
            wait_group=obj.get("wait_group"),
        )


def pulse(angle_pi, phase=0.0, channel="S", group=None, amp=MAX, detuning=ZERO):
    """Rectangular pulse of angle ``angle_pi``·π at phase ``phase`` (rad)."""
    return Segment("pulse", channel, float(angle_pi), float(phase) % (2 * math.pi),
                   amp, detuning, wait_group=group)


def wait(tau: TimeSpec, channel="S", group=None):
    return Segment("wait", channel, tau=tau, wait_group=group)


def cw(amp: WaveSpec, phase=0.0, channel="S", detuning=ZERO, quad=ZERO,
       angle_pi=0.0, tau: Optional[TimeSpec] = None):
    """Continuous-wave block; duration from ``tau`` or angle/|Ω⃗| if constant."""
    return Segment("cw", channel, float(angle_pi), float(phase) % (2 * math.pi),
                   amp, detuning, quad, tau=tau)


@dataclass(frozen=True)
class SequenceProgram:
    """Pre, repeated core, post; each a list of segments on channels S and I.

    ``meta`` carries catalog annotations: period, alpha, analytic A*,
    category, suppression window and similar (JSON-serialisable values).
    """

    name: str
    pre: Tuple[Segment, ...] = ()
    core: Tuple[Segment, ...] = ()
    reps: int = 1
    post: Tuple[Segment, ...] = ()
    meta: Dict[str, object] = field(default_factory=dict, compare=False, hash=False)
    params_overrides: Dict[str, float] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "pre", tuple(self.pre))
        object.__setattr__(self, "core", tuple(self.core))
        object.__setattr__(self, "post", tuple(self.post))
        if int(self.reps) < 1:
            raise ConfigError("reps must be >= 1")
        object.__setattr__(self, "reps", int(self.reps))

    @property
    def channels(self) -> Tuple[str, ...]:
        used = {s.channel for s in self.pre + self.core + self.post if s.kind != "wait"}
        return ("S", "I") if "I" in used else ("S",)

    def with_reps(self, n: int) -> "SequenceProgram":
        return replace(self, reps=int(n))

    def effective_params(self, params: MoleculeParams) -> MoleculeParams:
        if not self.params_overrides:
            return params
        kw = {k[:-3] if k.endswith("_hz") else k: hz(v) for k, v in self.params_overrides.items()}
        return replace(params, **kw)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "channels": list(self.channels),
            "pre": [s.to_json() for s in self.pre],
            "core": [s.to_json() for s in self.core],
            "reps": self.reps,
            "post": [s.to_json() for s in self.post],
            "params_overrides": dict(self.params_overrides),
            "meta": _jsonable(self.meta),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    @staticmethod
    def from_json(obj: dict) -> "SequenceProgram":
        known = {"name", "channels", "pre", "core", "reps", "post", "params_overrides", "meta"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown program keys {sorted(extra)}")
        if "name" not in obj or "core" not in obj:
            raise ConfigError("program needs 'name' and 'core'")
        prog = SequenceProgram(
            name=obj["name"],
            pre=tuple(Segment.from_json(s) for s in obj.get("pre", [])),
            core=tuple(Segment.from_json(s) for s in obj["core"]),
            reps=obj.get("reps", 1),
            post=tuple(Segment.from_json(s) for s in obj.get("post", [])),
            meta=dict(obj.get("meta", {})),
            params_overrides=dict(obj.get("params_overrides", {})),
        )
        declared = obj.get("channels")
        if declared is not None and tuple(declared) != prog.channels:
            raise ConfigError(f"declared channels {declared} do not match segments {prog.channels}")
        return prog

    @staticmethod
    def loads(text: str) -> "SequenceProgram":
        return SequenceProgram.from_json(json.loads(text))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# schedules

@dataclass(frozen=True)
class Piece:
    """A scheduled segment occurrence, times relative to its section start."""

    t0: float
    t1: float
    channel: str
    kind: str
    vec: Optional[Tuple[float, float, float]]
    fn: Optional[Callable] = field(default=None, compare=False)
    bandwidth: float = 0.0
    index: int = -1

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    def control(self, t_local):
        """Control vector(s) at local time(s) since the piece start."""
        if self.fn is None:
            v = np.array(self.vec if self.vec is not None else (0.0, 0.0, 0.0))
            t = np.asarray(t_local)
            return np.broadcast_to(v, t.shape + (3,)).copy() if t.ndim else v
        return self.fn(t_local)


@dataclass(frozen=True)
class Interval:
    """Time span where each channel sits inside a single piece."""

    t0: float
    t1: float
    s: Optional[Piece]
    i: Optional[Piece]

    @property
    def duration(self) -> float:
        return self.t1 - self.t0

    @property
    def constant(self) -> bool:
        return all(p is None or p.fn is None for p in (self.s, self.i))

    @property
    def bandwidth(self) -> float:
        return max([p.bandwidth for p in (self.s, self.i) if p is not None] + [0.0])

    def controls(self, t):
        """(Ω⃗_S, Ω⃗_I) at absolute section time(s) ``t``."""
        out = []
        for p in (self.s, self.i):
            if p is None:
                out.append(np.zeros(np.shape(t) + (3,)))
            else:
                out.append(p.control(np.asarray(t) - p.t0))
        return out

    @property
    def has_pulse(self) -> bool:
        return any(p is not None and p.kind == "pulse" for p in (self.s, self.i))


@dataclass(frozen=True)
class Schedule:
    """Resolved timing of a program for one parameter set."""

    program: SequenceProgram
    params: MoleculeParams
    pieces: Dict[str, Dict[str, Tuple[Piece, ...]]]
    durations: Dict[str, float]
    reps: int

    @property
    def t_pre(self) -> float:
        return self.durations["pre"]

    @property
    def period(self) -> float:
        return self.durations["core"]

    @property
    def t_total(self) -> float:
        d = self.durations
        return d["pre"] + self.reps * d["core"] + d["post"]

    def section_start(self, section: str, rep: int = 0) -> float:
        d = self.durations
        if section == "pre":
            return 0.0
        if section == "core":
            return d["pre"] + rep * d["core"]
        return d["pre"] + self.reps * d["core"]

    def intervals(self, section: str) -> List[Interval]:
        """Merged S/I timeline of a section (one period for ``core``)."""
        chans = self.pieces[section]
        s_list = list(chans.get("S", ()))
        i_list = list(chans.get("I", ()))
        cuts = {0.0, self.durations[section]}
        for p in s_list + i_list:
            cuts.add(p.t0)
            cuts.add(p.t1)
        cuts = sorted(cuts)
        merged = [cuts[0]]
        for c in cuts[1:]:
            if c - merged[-1] > 1e-15 * max(1.0, abs(c)):
                merged.append(c)
        out = []
        for a, b in zip(merged[:-1], merged[1:]):
            mid = 0.5 * (a + b)
            out.append(Interval(a, b, _find(s_list, mid), _find(i_list, mid)))
        return out

    def iter_pieces(self, channel: str = "S"):
        """Yield absolute-time pieces of ``channel`` covering [0, t_total]."""
        for section in ("pre", "core", "post"):
            reps = self.reps if section == "core" else 1
            for r in range(reps):
                t0 = self.section_start(section, r)
                for p in self.pieces[section].get(channel, ()):
                    yield replace(p, t0=p.t0 + t0, t1=p.t1 + t0)

    def locate(self, t: float):
        """Return (section, rep, local time) for absolute time ``t``."""
        if t < -_TOL or t > self.t_total * (1 + 1e-12) + _TOL:
            raise OutOfRange(f"t={t} outside [0, {self.t_total}]")
        d = self.durations
        if t < d["pre"]:
            return "pre", 0, t
        tc = t - d["pre"]
        if d["core"] > 0 and tc < self.reps * d["core"]:
            r = min(int(tc // d["core"]), self.reps - 1)
            return "core", r, tc - r * d["core"]
        return "post", 0, min(tc - self.reps * d["core"], d["post"])


def _find(pieces, t):
    for p in pieces:
        if p.t0 <= t < p.t1:
            return p
    return None


def segment_control(s: Segment, params: MoleculeParams):
    """Duration, constant control vector (or None), waveform and bandwidth of a
    pulse or CW segment; the waveform is None for constant segments."""
    channel = s.channel
    amp = s.amp.evaluate(params, channel)
    det = s.detuning.evaluate(params, channel)
    quad = s.quad.evaluate(params, channel)
    c, si = math.cos(s.phase), math.sin(s.phase)
    if all(not callable(x) for x in (amp, det, quad)):
        vec = (amp * c - quad * si, amp * si + quad * c, det)
        fn = None
    else:
        vec = None
        fa = amp if callable(amp) else (lambda t, v=amp: np.full(np.shape(t), v))
        fd = det if callable(det) else (lambda t, v=det: np.full(np.shape(t), v))
        fq = quad if callable(quad) else (lambda t, v=quad: np.full(np.shape(t), v))

        def fn(t, fa=fa, fd=fd, fq=fq, c=c, si=si):
            a, d, q = fa(t), fd(t), fq(t)
            return np.stack([a * c - q * si, a * si + q * c, d], axis=-1)
    bw = max(s.amp.bandwidth(params), s.detuning.bandwidth(params), s.quad.bandwidth(params))
    if s.tau is not None:
        dur = s.tau.evaluate(params)
    elif vec is not None:
        mag = math.sqrt(vec[0] ** 2 + vec[1] ** 2 + vec[2] ** 2)
        if mag <= 0:
            raise ConfigError(f"{s.kind} with zero amplitude needs a tau spec")
        dur = s.angle / mag
    else:
        raise ConfigError("time-dependent segment needs a tau spec")
    return dur, vec, fn, bw


def _resolve_section(segs: Sequence[Segment], channel: str, params: MoleculeParams,
                     section: str) -> Tuple[List[Piece], float]:
    limit = params.Omega if channel == "S" else params.Omega_I
    mine = [(k, s) for k, s in enumerate(segs) if s.channel == channel]
    base = []  # (index, segment, fixed duration or None, vec, fn, bandwidth)
    charges: Dict[str, float] = {}
    tau_sum: Dict[str, float] = {}
    for k, s in mine:
        if s.kind == "wait":
            tau = s.tau.evaluate(params)
            if tau < 0:
                raise ConfigError(f"negative wait in {section}")
            for g in s.groups()[:1]:
                tau_sum[g] = tau_sum.get(g, 0.0) + tau
            base.append((k, s, None, None, None, 0.0))
            continue
        dur, vec, fn, bw = segment_control(s, params)
        if s.kind == "pulse" and limit > 0 and vec is not None and math.hypot(vec[0], vec[1]) > limit * (1 + 1e-9):
            raise ConfigError(f"pulse amplitude exceeds the {channel} Rabi limit")
        if s.kind == "pulse":
            gs = s.groups()
            for g in gs:
                charges[g] = charges.get(g, 0.0) + dur / len(gs)
        base.append((k, s, dur, vec, fn, bw))
    # absorption factors per group
    factor = {}
    for g, tsum in tau_sum.items():
        p = charges.get(g, 0.0)
        if p > tsum * (1 + 1e-12) + 1e-15:
            raise InfeasibleSchedule(f"{section}:{channel}:{g}", p - tsum)
        factor[g] = 0.0 if tsum == 0 else max(0.0, 1.0 - p / tsum)
    unabsorbed = set(charges) - set(tau_sum)
    if unabsorbed - {DEFAULT_GROUP}:
        raise ConfigError(f"pulses charged to unknown wait groups {sorted(unabsorbed)}")
    pieces, t = [], 0.0
    for k, s, dur, vec, fn, bw in base:
        if s.kind == "wait":
            dur = s.tau.evaluate(params) * factor[s.groups()[0]]
            if dur <= 1e-15:
                continue
            pieces.append(Piece(t, t + dur, channel, "wait", (0.0, 0.0, 0.0), None, 0.0, k))
        else:
            pieces.append(Piece(t, t + dur, channel, s.kind, vec, fn, bw, k))
        t += dur
    return pieces, t


def schedule(program: SequenceProgram, params: MoleculeParams) -> Schedule:
    """Resolve a program into absolute timing.

    Raises
    ------
    InfeasibleSchedule
        When the pulses charged to a wait group exceed its nominal wait time.
    """
    params = program.effective_params(params)
    chans = program.channels
    pieces: Dict[str, Dict[str, Tuple[Piece, ...]]] = {}
    durations: Dict[str, float] = {}
    for section in ("pre", "core", "post"):
        segs = getattr(program, section)
        per = {}
        lens = {}
        for ch in chans:
            per[ch], lens[ch] = _resolve_section(segs, ch, params, section)
        total = max(lens.values()) if lens else 0.0
        if section == "core" and len(chans) == 2:
            a, b = lens["S"], lens["I"]
            if abs(a - b) > 1e-9 * max(a, b, 1e-30):
                raise ConfigError(f"core durations differ between channels: S {a!r} s, I {b!r} s")
        for ch in chans:
            shift = total - lens[ch] if section == "pre" else 0.0
            if shift:
                per[ch] = [replace(p, t0=p.t0 + shift, t1=p.t1 + shift) for p in per[ch]]
            per[ch] = tuple(per[ch])
        pieces[section] = per
        durations[section] = total
    if durations["core"] <= 0:
        raise ConfigError("core has zero duration")
    return Schedule(program, params, pieces, durations, program.reps)


def waveform(sched: Schedule, t: float):
    """Control vectors (Ω⃗_S(t), Ω⃗_I(t)); zero during waits and idle time."""
    section, _, tl = sched.locate(t)
    out = []
    for ch in ("S", "I"):
        plist = sched.pieces[section].get(ch, ())
        p = _find(plist, tl)
        if p is None and plist and abs(tl - plist[-1].t1) <= 1e-12:
            p = plist[-1]
        out.append(np.zeros(3) if p is None else np.asarray(p.control(tl - p.t0), dtype=float))
    return tuple(out)


def filling_factor(program: SequenceProgram, params: MoleculeParams) -> float:
    """Fraction of a core period occupied by S-channel pulses.

    Continuous-wave programs (no pulses in the core) return 1.
    """
    sched = schedule(program, params)
    core = sched.pieces["core"].get("S", ())
    if not any(p.kind == "pulse" for p in core):
        return 1.0
    t_pulse = sum(p.duration for p in core if p.kind == "pulse")
    return t_pulse / sched.period


def rotation_angle(program: SequenceProgram, params: MoleculeParams, channel="S") -> float:
    """∫|Ω⃗(t)| dt over one core period of ``channel`` (numerical for shaped CW)."""
    sched = schedule(program, params)
    total = 0.0
    for p in sched.pieces["core"].get(channel, ()):
        if p.kind == "wait":
            continue
        if p.fn is None:
            total += np.linalg.norm(p.vec) * p.duration
        else:
            n = 2001
            tt = np.linspace(0, p.duration, n)
            total += np.trapezoid(np.linalg.norm(p.control(tt), axis=-1), tt)
    return float(total)
