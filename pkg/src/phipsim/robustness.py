"""Single-error robustness sweeps and the overview table.

A sweep applies one error term at a time on a log grid and records the final
signed transfer p. Thresholds are relative to the sequence's own error-free
transfer p(0): ``threshold90`` is the largest grid value with
p/p(0) >= 0.9. Sequences built for a known dipolar field (``tracks_dDF`` in
the catalog) are rebuilt for every Δ_DF grid value; the amplitude-swept SLIC
runs its other error lines on top of its baseline dipolar field.

All frequencies are rad/s internally; exports use plain Hz.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import catalog
from .errors import FitFailure, NonConvergence, PhipsimError, ResonanceViolation
from .propagator import EvolveOptions, evolve, transfer_curve_fit
from .sequence import schedule
from .spin import ERROR_KINDS, PYRUVATE, ErrorParams, MoleculeParams, hz, to_hz

log = logging.getLogger(__name__)

TABLE_COLUMNS = ("name", "category", "Astar_over_A", "dDF_Hz", "d0_Hz", "d1_Hz", "dCS_Hz", "dRD_Hz",
                 "grid_spacing")

_SWEEP_OPTIONS = EvolveOptions(n_samples=2)


@dataclass(frozen=True)
class SweepSpec:
    """One error line of one sequence.

    Parameters
    ----------
    sequence : str
        Catalog name or alias.
    kind : {"dDF", "d0", "d1", "dCS", "dRD"}
    options : dict
        Build options passed to :func:`catalog.build`.
    points_per_decade : int
    grid_min, grid_max : float, optional
        Grid limits in rad/s; default A/10 and 2Ω (Δ_CS capped at J).
    baseline_dDF : float, optional
        Δ_DF (rad/s) present during the non-Δ_DF lines; defaults to the
        catalog baseline (3 Hz for the amplitude-swept SLIC, else 0).
    stop_after : int, optional
        Stop after this many consecutive failing points. ``None`` evaluates
        the whole grid.
    refine : int, optional
        Coarse stride: evaluate every ``refine``-th point first, then the full
        grid only inside the brackets of the 90% and 80% crossings. Exact for
        monotone curves; non-monotonicity is only seen at the coarse level.
    """

    sequence: str
    kind: str
    options: Dict = field(default_factory=dict)
    params: MoleculeParams = PYRUVATE
    points_per_decade: int = 24
    grid_min: Optional[float] = None
    grid_max: Optional[float] = None
    baseline_dDF: Optional[float] = None
    stop_after: Optional[int] = None
    refine: Optional[int] = None
    evolve_options: EvolveOptions = _SWEEP_OPTIONS

    def __post_init__(self):
        if self.kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {self.kind!r}; expected one of {ERROR_KINDS}")
        if self.points_per_decade < 1:
            raise ValueError("points_per_decade must be >= 1")
        if self.refine is not None and self.refine < 1:
            raise ValueError("refine must be >= 1")
        object.__setattr__(self, "sequence", catalog.resolve_name(self.sequence))

    @property
    def step_ratio(self) -> float:
        return 10.0 ** (1.0 / self.points_per_decade)

    def grid(self) -> np.ndarray:
        """Strictly increasing positive values a·r^k (rad/s) up to the cap."""
        p = self.params
        lo = self.grid_min if self.grid_min is not None else p.A / 10
        hi = self.grid_max if self.grid_max is not None else 2 * p.Omega
        if self.kind == "dCS" and self.grid_max is None:
            hi = min(hi, p.J)
        if not 0 < lo <= hi:
            raise ValueError(f"bad grid limits [{lo}, {hi}]")
        n = int(math.floor(math.log10(hi / lo) * self.points_per_decade + 1e-9))
        return lo * self.step_ratio ** np.arange(n + 1)

    def baseline(self) -> float:
        if self.baseline_dDF is not None:
            return self.baseline_dDF
        return hz(catalog.get_spec(self.sequence).baseline_dDF_hz)

    def point(self, value: float) -> Tuple[Dict, ErrorParams]:
        """Build options and error set for one grid value (rad/s)."""
        spec = catalog.get_spec(self.sequence)
        opts = dict(self.options)
        if self.kind == "dDF":
            if spec.tracks_dDF:
                opts["design_dDF_hz"] = to_hz(value)
            return opts, ErrorParams(deltaDF=float(value))
        return opts, ErrorParams(deltaDF=self.baseline()).with_kind(self.kind, value)


@dataclass(frozen=True)
class Threshold:
    """Largest passing grid value (rad/s) with its grid uncertainty."""

    value: Optional[float]
    uncertainty: Optional[float]
    saturated: bool = False
    non_monotone: bool = False

    @property
    def hz(self) -> Optional[float]:
        return None if self.value is None else to_hz(self.value)


@dataclass(frozen=True)
class SweepResult:
    """Final transfer per grid value.

    ``p`` holds NaN where the point failed (NonConvergence); such points count
    as failing. ``evaluated`` is False beyond an early stop.
    """

    spec: SweepSpec
    errors: np.ndarray
    p: np.ndarray
    p0: float
    evaluated: np.ndarray
    failures: Tuple[str, ...] = ()

    @property
    def ratio(self) -> np.ndarray:
        return self.p / self.p0

    def threshold(self, level: float) -> Threshold:
        ok = self.evaluated & np.isfinite(self.p) & (self.ratio >= level)
        if not ok.any():
            return Threshold(None, float(self.errors[0]))
        k = int(np.flatnonzero(ok)[-1])
        non_mono = bool((~ok[:k] & self.evaluated[:k]).any())
        if k == len(self.errors) - 1:
            return Threshold(float(self.errors[k]), None, True, non_mono)
        return Threshold(float(self.errors[k]), float(self.errors[k + 1] - self.errors[k]), False, non_mono)

    @property
    def threshold90(self) -> Threshold:
        return self.threshold(0.9)

    @property
    def threshold80(self) -> Threshold:
        return self.threshold(0.8)

    def to_csv(self, path=None) -> str:
        """CSV with columns error_Hz, p_final (evaluated points only)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(("error_Hz", "p_final"))
        for e, p, ev in zip(self.errors, self.p, self.evaluated):
            if ev:
                w.writerow((repr(to_hz(float(e))), repr(float(p))))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def summary(self) -> Dict:
        def th(t: Threshold):
            return {"value_Hz": t.hz, "uncertainty_Hz": None if t.uncertainty is None else to_hz(t.uncertainty),
                    "saturated": t.saturated, "non_monotone": t.non_monotone}
        return {
            "sequence": self.spec.sequence, "error": self.spec.kind, "options": _plain(self.spec.options),
            "p0": self.p0, "baseline_dDF_Hz": to_hz(self.spec.baseline()) if self.spec.kind != "dDF" else 0.0,
            "points_per_decade": self.spec.points_per_decade,
            "threshold90": th(self.threshold90), "threshold80": th(self.threshold80),
            "failures": list(self.failures),
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def dumps(obj) -> str:
    """Deterministic JSON (sorted keys, UTF-8 text)."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=True) + "\n"


# ---------------------------------------------------------------------------
# evaluation

def run_point(name: str, params: MoleculeParams, options: Dict, errors: ErrorParams,
              evolve_options: EvolveOptions = _SWEEP_OPTIONS) -> float:
    """Signed final transfer 2<S_z> for one configuration."""
    prog = catalog.build(name, params, **options)
    return evolve(schedule(prog, params), errors, evolve_options).p_final


def _work(task):
    idx, name, params, options, errors, eopts = task
    try:
        return idx, run_point(name, params, options, errors, eopts), None
    except NonConvergence as exc:
        return idx, float("nan"), str(exc)


def _map(tasks, workers: int):
    """Run tasks serially or on a process pool; results ordered by index."""
    if workers <= 1 or len(tasks) <= 1:
        out = [_work(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_work, tasks, chunksize=1))
    return sorted(out, key=lambda r: r[0])


def reference_transfer(spec: SweepSpec) -> float:
    """Error-free p(0) for the line (baseline Δ_DF included, design at zero for Δ_DF lines)."""
    opts, errs = spec.point(0.0)
    return run_point(spec.sequence, spec.params, opts, errs, spec.evolve_options)


def sweep(spec: SweepSpec, workers: int = 1, p0: Optional[float] = None) -> SweepResult:
    """Evaluate the grid of ``spec``.

    With ``stop_after`` the grid is processed in chunks of ``workers`` points
    and evaluation ends once that many consecutive points fail at the 80%
    level; later points are marked unevaluated.
    """
    grid = spec.grid()
    if p0 is None:
        p0 = reference_transfer(spec)
    if not abs(p0) > 0:
        raise FitFailure(f"{spec.sequence}: error-free transfer is zero")
    p = np.full(len(grid), np.nan)
    done = np.zeros(len(grid), dtype=bool)
    failures: List[str] = []

    def run(indices):
        tasks = []
        for i in indices:
            opts, errs = spec.point(float(grid[i]))
            tasks.append((i, spec.sequence, spec.params, opts, errs, spec.evolve_options))
        for i, val, msg in _map(tasks, workers):
            p[i] = val
            done[i] = True
            if msg:
                failures.append(f"{to_hz(float(grid[i])):.6g} Hz: {msg}")

    def passes(i, level=0.8):
        return bool(np.isfinite(p[i]) and p[i] / p0 >= level)

    stride = spec.refine or 1
    coarse = list(range(0, len(grid), stride))
    if coarse[-1] != len(grid) - 1:
        coarse.append(len(grid) - 1)
    chunk = len(coarse) if spec.stop_after is None else max(1, workers)
    run_fail = 0
    for k in range(0, len(coarse), chunk):
        part = coarse[k:k + chunk]
        run(part)
        for i in part:
            run_fail = 0 if passes(i) else run_fail + 1
        if spec.stop_after is not None and run_fail >= spec.stop_after:
            break
    if stride > 1:
        fine = set()
        for level in (0.9, 0.8):
            ok = [i for i in coarse if done[i] and passes(i, level)]
            if not ok:
                fine.update(range(0, coarse[0]))
                continue
            last = ok[-1]
            nxt = next((i for i in coarse if i > last), None)
            if nxt is not None:
                fine.update(range(last + 1, nxt))
        run(sorted(i for i in fine if not done[i]))
    return SweepResult(spec, grid, p, float(p0), done, tuple(failures))


# ---------------------------------------------------------------------------
# parameter scans

@dataclass(frozen=True)
class ScanPoint:
    value: float
    omega_factor: float
    threshold90: Optional[Threshold]
    threshold80: Optional[Threshold]
    skipped: Optional[str] = None


def parameter_scan(name: str, parameter: str, values: Sequence[float],
                   omega_factors: Sequence[float] = (1.0,), kind: str = "dDF",
                   params: MoleculeParams = PYRUVATE, workers: int = 1,
                   **sweep_kw) -> List[ScanPoint]:
    """Δ_DF (or other) thresholds over a grid of ``phi`` or ``eta`` values.

    ``phi`` scans let the catalog place τ on the resonance (Jτ = 4π − 2φ
    for the PulsePol family, Jτ = 2φ for the +XY family). Points that
    violate a resonance rule are kept with ``skipped`` set.
    """
    out = []
    for f in omega_factors:
        pf = params.scaled_controls(f)
        for v in values:
            try:
                catalog.build(name, pf, **{parameter: v})
                res = sweep(SweepSpec(name, kind, {parameter: v}, pf, **sweep_kw), workers=workers)
            except ResonanceViolation as exc:
                out.append(ScanPoint(float(v), float(f), None, None, str(exc)))
                continue
            out.append(ScanPoint(float(v), float(f), res.threshold90, res.threshold80))
    return out


# ---------------------------------------------------------------------------
# overview table

@dataclass
class TableRow:
    name: str
    category: str
    astar_over_A: Optional[float]
    thresholds: Dict[str, Optional[Threshold]]
    grid_spacing: float
    notes: List[str] = field(default_factory=list)

    def as_record(self) -> Dict:
        """Row with the export columns, values rounded to 0.1 (Hz)."""
        rec = {"name": self.name, "category": self.category,
               "Astar_over_A": None if self.astar_over_A is None else round(self.astar_over_A, 1),
               "grid_spacing": round(self.grid_spacing, 4)}
        for kind in ERROR_KINDS:
            t = self.thresholds.get(kind)
            rec[f"{kind}_Hz"] = None if t is None or t.value is None else round(t.hz, 1)
        return rec


def fit_ratio(name: str, params: MoleculeParams = PYRUVATE, options: Optional[Dict] = None) -> float:
    """A*/A from the simulated transfer curve (baseline Δ_DF included)."""
    spec = catalog.get_spec(name)
    prog = catalog.build(spec.name, params, **(options or {}))
    errs = ErrorParams(deltaDF=hz(spec.baseline_dDF_hz))
    traj = evolve(schedule(prog, params), errs, EvolveOptions(n_samples=800))
    # the single sweep has no periodic rise to fit
    method = "end" if spec.category == "DF-enabled" else "fit"
    return transfer_curve_fit(traj, method) / params.A


def overview_table(names: Optional[Sequence[str]] = None, kinds: Sequence[str] = ERROR_KINDS,
                   params: MoleculeParams = PYRUVATE, points_per_decade: int = 24,
                   stop_after: Optional[int] = 4, refine: Optional[int] = 6,
                   workers: int = 1) -> List[TableRow]:
    """Rows {name, A*/A, thresholds} for ``names`` (default: all 17).

    Failures are recorded per row in ``notes``; the table is always returned.
    """
    names = [catalog.resolve_name(n) for n in (names or catalog.NAMES)]
    rows = []
    for name in names:
        spec = catalog.get_spec(name)
        row = TableRow(name, spec.category, None, {}, 10 ** (1 / points_per_decade) - 1)
        try:
            row.astar_over_A = fit_ratio(name, params)
        except PhipsimError as exc:
            row.notes.append(f"A*: {exc}")
        for kind in kinds:
            try:
                res = sweep(SweepSpec(name, kind, {}, params, points_per_decade, stop_after=stop_after,
                                      refine=refine), workers=workers)
            except PhipsimError as exc:
                row.thresholds[kind] = None
                row.notes.append(f"{kind}: {exc}")
                continue
            t = res.threshold90
            row.thresholds[kind] = t
            if t.saturated:
                row.notes.append(f"{kind}: passes the whole grid")
            if t.non_monotone:
                row.notes.append(f"{kind}: non-monotone")
            row.notes.extend(f"{kind}: {m}" for m in res.failures)
        log.info("table row %s done", name)
        rows.append(row)
    return rows


def table_csv(rows: Sequence[TableRow], path=None) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\r\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if v is None else v) for k, v in r.as_record().items()})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    return text


def table_json(rows: Sequence[TableRow], path=None) -> str:
    text = dumps([r.as_record() for r in rows])
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def table_manifest(rows: Sequence[TableRow]) -> Dict:
    """Failure and flag notes per row, plus raw (unrounded) values."""
    out = {}
    for r in rows:
        out[r.name] = {
            "Astar_over_A": r.astar_over_A,
            "thresholds_Hz": {k: (None if t is None else t.hz) for k, t in r.thresholds.items()},
            "notes": list(r.notes),
        }
    return out
