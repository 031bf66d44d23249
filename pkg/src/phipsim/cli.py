"""``phipsim`` command line.

Frequencies at the command line and in config files are plain Hz; they are
multiplied by 2π internally. Exit codes: 0 success, 1 simulation failure,
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence

from . import __version__, _backend, aht, catalog, plot, robustness
from .errors import ConfigError, FitFailure, PhipsimError, ResonanceViolation, UnknownSequence
from .propagator import EvolveOptions, evolve, transfer_curve_fit
from .sequence import SequenceProgram, schedule
from .spin import ERROR_KINDS, PRESETS, ErrorParams, MoleculeParams, hz, to_hz

log = logging.getLogger("phipsim")

_MOLECULE_KEYS = ("A_hz", "A_sigma_hz", "J_hz", "Omega_hz", "Omega_I_hz")
_FORMATS = ("csv", "json", "svg")


@dataclass
class RunConfig:
    """Everything a command needs; all frequencies in Hz.

    Molecule fields left as ``None`` come from ``preset``.
    """

    preset: str = "pyruvate"
    A_hz: Optional[float] = None
    A_sigma_hz: Optional[float] = None
    J_hz: Optional[float] = None
    Omega_hz: Optional[float] = None
    Omega_I_hz: Optional[float] = None
    sequence: Optional[str] = None
    program_file: Optional[str] = None
    options: Dict = field(default_factory=dict)
    dDF_hz: float = 0.0
    d0_hz: float = 0.0
    d1_hz: float = 0.0
    dCS_hz: float = 0.0
    dRD_hz: float = 0.0
    path: str = "auto"
    n_samples: int = 400
    dt_max: float = 1e-4
    out_dir: str = "."
    formats: List[str] = field(default_factory=lambda: list(_FORMATS))
    workers: int = 1
    points_per_decade: int = 24

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        bad = sorted(set(d) - names)
        if bad:
            raise ConfigError(f"unknown config key(s): {', '.join(bad)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; known: {', '.join(PRESETS)}")
        if not isinstance(self.options, dict):
            raise ConfigError("options must be an object")
        bad = [f for f in self.formats if f not in _FORMATS]
        if bad:
            raise ConfigError(f"unknown format(s) {bad}; choose from {_FORMATS}")
        if self.path not in ("auto", "linear", "nonlinear"):
            raise ConfigError(f"path must be auto, linear or nonlinear, got {self.path!r}")
        for k in _MOLECULE_KEYS + tuple(f"{e}_hz" for e in ERROR_KINDS):
            v = getattr(self, k)
            if v is not None and not isinstance(v, (int, float)):
                raise ConfigError(f"{k} must be a number, got {v!r}")

    def molecule(self) -> MoleculeParams:
        base = PRESETS[self.preset].to_hz()
        for k in _MOLECULE_KEYS:
            v = getattr(self, k)
            if v is not None:
                base[k[:-3]] = float(v)
        try:
            return MoleculeParams.from_hz(**base)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def errors(self) -> ErrorParams:
        e = ErrorParams()
        for kind in ERROR_KINDS:
            e = e.with_kind(kind, hz(getattr(self, f"{kind}_hz")))
        return e

    def evolve_options(self) -> EvolveOptions:
        return EvolveOptions(dt_max=self.dt_max, n_samples=self.n_samples, path=self.path)

    def program(self, params: MoleculeParams) -> SequenceProgram:
        if self.program_file:
            try:
                with open(self.program_file, encoding="utf-8") as fh:
                    return SequenceProgram.loads(fh.read())
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"cannot read program {self.program_file!r}: {exc}") from None
        if not self.sequence:
            raise ConfigError("no sequence given (use --seq NAME or --program FILE)")
        return catalog.build(self.sequence, params, **self.options)


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, items: Sequence[str]) -> dict:
    """Apply ``key=value`` strings; ``options.NAME=value`` sets a build option."""
    out = dict(cfg)
    out["options"] = dict(out.get("options", {}))
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip()
        if k.startswith("options."):
            out["options"][k[8:]] = _coerce(v)
        else:
            out[k] = _coerce(v)
    return out


def load_config(path: Optional[str], overrides: Sequence[str], cli: dict) -> RunConfig:
    d: dict = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
    d.update({k: v for k, v in cli.items() if v is not None})
    return RunConfig.from_dict(apply_overrides(d, overrides))


def slug(name: str) -> str:
    s = name.replace("*", "_star").replace("+", "_")
    return re.sub(r"[^0-9a-zA-Z]+", "_", s).strip("_").lower()


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    log.info("wrote %s", path)


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig) -> dict:
    params = cfg.molecule()
    prog = cfg.program(params)
    sched = schedule(prog, params)
    traj = evolve(sched, cfg.errors(), cfg.evolve_options())
    base = os.path.join(cfg.out_dir, slug(prog.name) + "_traj")
    summary = {"sequence": prog.name, "reps": prog.reps, "t_total_s": sched.t_total,
               "p_final": traj.p_final, "path": traj.path, "backend": _backend.BACKEND,
               "errors_Hz": {k: getattr(cfg, f"{k}_hz") for k in ERROR_KINDS}}
    try:
        summary["Astar_over_A_fit"] = transfer_curve_fit(traj) / params.A
    except FitFailure as exc:
        summary["Astar_over_A_fit"] = None
        summary["fit_note"] = str(exc)
    if "csv" in cfg.formats or "svg" in cfg.formats:
        traj.to_csv(base + ".csv")
    if "svg" in cfg.formats:
        plot.trajectory_svg(base + ".csv", base + ".svg", prog.name)
    if "json" in cfg.formats:
        _write(base + ".json", robustness.dumps(summary))
    return summary


def cmd_sweep(cfg: RunConfig, kind: str, stop_after: Optional[int] = None,
              refine: Optional[int] = None) -> dict:
    if not cfg.sequence:
        raise ConfigError("sweep needs --seq NAME")
    params = cfg.molecule()
    spec = robustness.SweepSpec(cfg.sequence, kind, dict(cfg.options), params, cfg.points_per_decade,
                                stop_after=stop_after, refine=refine)
    res = robustness.sweep(spec, workers=cfg.workers)
    summary = res.summary()
    base = os.path.join(cfg.out_dir, f"{slug(spec.sequence)}_{kind}_sweep")
    if "csv" in cfg.formats or "svg" in cfg.formats:
        res.to_csv(base + ".csv")
    if "svg" in cfg.formats:
        refs = [("A", to_hz(params.A)), ("J", to_hz(params.J)), ("Ω", to_hz(params.Omega))]
        plot.sweep_svg(base + ".csv", base + ".svg", res.p0, res.threshold90.hz,
                       f"{spec.sequence}: {kind}", refs)
    if "json" in cfg.formats:
        _write(base + ".json", robustness.dumps(summary))
    return summary


def cmd_table(cfg: RunConfig, rows: str, kinds: Sequence[str], stop_after: Optional[int] = 4,
              refine: Optional[int] = 6) -> dict:
    names = None if rows.strip().lower() == "all" else [r.strip() for r in rows.split(",") if r.strip()]
    if names is not None:
        names = [catalog.resolve_name(n) for n in names]
    table = robustness.overview_table(names, kinds, cfg.molecule(), cfg.points_per_decade,
                                      stop_after=stop_after, refine=refine, workers=cfg.workers)
    base = os.path.join(cfg.out_dir, "table")
    if "csv" in cfg.formats:
        robustness.table_csv(table, base + ".csv")
    if "json" in cfg.formats:
        robustness.table_json(table, base + ".json")
    manifest = robustness.table_manifest(table)
    _write(base + "_manifest.json", robustness.dumps(manifest))
    return {"rows": [r.as_record() for r in table], "manifest": manifest}


def cmd_aht(cfg: RunConfig, ideal: bool = True) -> dict:
    params = cfg.molecule()
    prog = cfg.program(params)
    trace = aht.toggling_trace(prog, params, ideal=ideal)
    out = {"sequence": prog.name, "ideal": ideal, "period_s": trace.period, "alpha_rad": trace.alpha}
    try:
        ec = aht.effective_coupling(trace, params)
        out.update(Astar_over_A=ec.Astar_over_A, resonant=ec.resonant, branch=ec.branch)
    except PhipsimError as exc:
        out.update(Astar_over_A=None, note=str(exc))
    if prog.name in catalog.SPECS and not cfg.program_file:
        cert = aht.trace_for(prog.name, params, ideal=True, certificate=True, **cfg.options)
    else:
        cert = trace
    dip = aht.dipolar_average_tensor(cert)
    out.update(window_s=dip.window, residual=dip.residual,
               suppression="suppressing" if dip.suppressing else "not suppressing",
               M=dip.M.tolist())
    base = os.path.join(cfg.out_dir, slug(prog.name) + "_aht")
    if "csv" in cfg.formats or "svg" in cfg.formats:
        trace.to_csv(base + "_b.csv", "b")
        trace.to_csv(base + "_c.csv", "c")
    if "svg" in cfg.formats:
        plot.aht_svg(base + "_b.csv", base + "_b.svg", f"{prog.name}: f(t)")
        plot.aht_svg(base + "_c.csv", base + "_c.svg", f"{prog.name}: quadratic products")
    if "json" in cfg.formats:
        _write(base + ".json", robustness.dumps(out))
    return out


# ---------------------------------------------------------------------------
# argument parsing

_UNITS = "Frequencies are plain Hz (converted to rad/s by 2π internally)."


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key; options.NAME=VALUE sets a build option")
    p.add_argument("--preset", help="molecule preset (default pyruvate)")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--formats", help="comma list of csv,json,svg")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phipsim", description=f"PHIP transfer-sequence simulator. {_UNITS}")
    ap.add_argument("--version", action="version", version=f"phipsim {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("simulate", help="propagate one sequence", description=_UNITS)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--seq", dest="sequence", help="catalog name, e.g. SLIC")
    g.add_argument("--program", dest="program_file", help="sequence JSON file")
    _common(p)

    p = sub.add_parser("sweep", help="single-error robustness sweep", description=_UNITS)
    p.add_argument("--seq", dest="sequence", required=True)
    p.add_argument("--error", required=True, choices=ERROR_KINDS)
    p.add_argument("--stop-after", type=int, default=None,
                   help="stop after N consecutive failing grid points")
    p.add_argument("--refine", type=int, default=None,
                   help="coarse stride; refine only around the threshold crossings")
    _common(p)

    p = sub.add_parser("table", help="overview table", description=_UNITS)
    p.add_argument("--rows", default="all", help="'all' or a comma list of names")
    p.add_argument("--errors", default=",".join(ERROR_KINDS))
    p.add_argument("--stop-after", type=int, default=4)
    p.add_argument("--refine", type=int, default=6)
    _common(p)

    p = sub.add_parser("aht", help="toggling-frame diagnostics", description=_UNITS)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--seq", dest="sequence")
    g.add_argument("--program", dest="program_file")
    p.add_argument("--finite", action="store_true", help="use the finite-pulse schedule")
    p.add_argument("--report", choices=("alpha",))
    _common(p)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cli = {k: getattr(args, k, None) for k in ("sequence", "program_file", "preset", "out_dir", "workers")}
    if getattr(args, "formats", None):
        cli["formats"] = [f.strip() for f in args.formats.split(",") if f.strip()]
    try:
        cfg = load_config(args.config, args.set, cli)
        os.makedirs(cfg.out_dir, exist_ok=True)
        if args.cmd == "simulate":
            res = cmd_simulate(cfg)
        elif args.cmd == "sweep":
            res = cmd_sweep(cfg, args.error, args.stop_after, args.refine)
        elif args.cmd == "table":
            kinds = [k.strip() for k in args.errors.split(",") if k.strip()]
            bad = [k for k in kinds if k not in ERROR_KINDS]
            if bad:
                raise ConfigError(f"unknown error kind(s) {bad}")
            res = cmd_table(cfg, args.rows, kinds, args.stop_after, args.refine)
        else:
            res = cmd_aht(cfg, ideal=not args.finite)
            if args.report == "alpha":
                print(f"alpha = {res['alpha_rad']!r} rad")
                return 0
    except (ConfigError, UnknownSequence, ResonanceViolation, TypeError) as exc:
        print(f"phipsim: error: {exc}", file=sys.stderr)
        return 2
    except PhipsimError as exc:
        print(f"phipsim: simulation failed: {exc}", file=sys.stderr)
        return 1
    print(robustness.dumps(res), end="")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
