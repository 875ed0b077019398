"""Command-line front end: ``npcloak <command> CONFIG [options]``.

Exit codes: 0 success, 2 configuration error, 3 tolerance failure,
4 exact resonance, 5 no bracket for the critical radius.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import scipy
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import calr, np_spectrum, oracle, solver2d
from .common import ResonanceError, UnsupportedRegime
from .sources import (
    SourceError,
    SourceSpec,
    default_n_max,
    exterior_coefficients,
    gap_property_check,
)
from .structure import ConfigError, StructureConfig

EXIT_CONFIG, EXIT_TOLERANCE, EXIT_RESONANCE, EXIT_BRACKET = 2, 3, 4, 5


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class StructureModel(_Strict):
    dimension: Literal[2, 3]
    r_i: float
    r_e: float
    eps_c: float
    eps_s: float
    delta: float = 0.0


class ChargeModel(_Strict):
    position: list[float]
    weight: float


class DipoleModel(_Strict):
    r0: float
    direction: Optional[list[float]] = None
    h_factor: float = 1e-3


class CoefficientModel(_Strict):
    n: int
    m: int = 0
    re: float
    im: float = 0.0


class SourceModel(_Strict):
    charges: Optional[list[ChargeModel]] = None
    dipole: Optional[DipoleModel] = None
    coefficients: Optional[list[CoefficientModel]] = None

    @model_validator(mode="after")
    def _one_kind(self):
        given = [k for k in ("charges", "dipole", "coefficients") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError(f"source needs exactly one of charges/dipole/coefficients, got {given}")
        return self


class SolverModel(_Strict):
    n_max: Optional[int] = Field(default=None, ge=1)
    tol: float = 1e-12
    cap: int = Field(default=2000, ge=1)
    residual_tol: float = 1e-6


class SweepModel(_Strict):
    delta_max: float = 1e-2
    delta_min: float = 1e-10
    points: int = Field(default=33, ge=2)
    probe_factors: list[float] = [1.05, 1.1, 1.5, 2.0]
    probe_angles: int = Field(default=8, ge=1)
    slope_threshold: float = 0.5
    flat_threshold: float = 0.05
    resonant_threshold: float = 0.0


class CriticalModel(_Strict):
    interval: Optional[tuple[float, float]] = None
    rel_tol: float = 0.01


class OutputModel(_Strict):
    directory: str = "out"
    formats: list[Literal["csv", "json"]] = ["csv", "json"]


class RunConfig(_Strict):
    """Strict schema of a run document; unknown keys are rejected."""

    structure: StructureModel
    source: Optional[SourceModel] = None
    solver: SolverModel = SolverModel()
    sweep: SweepModel = SweepModel()
    critical: CriticalModel = CriticalModel()
    output: OutputModel = OutputModel()

    def structure_config(self, **override) -> StructureConfig:
        return StructureConfig(**{**self.structure.model_dump(), **override})

    def source_spec(self, dimension: int) -> SourceSpec:
        s = self.source
        if s is None:
            raise ConfigError("this command needs a 'source' section")
        if s.charges is not None:
            return SourceSpec(dimension, [c.position for c in s.charges], [c.weight for c in s.charges])
        if s.dipole is not None:
            return SourceSpec.dipole(dimension, s.dipole.r0, s.dipole.direction, s.dipole.h_factor)
        if dimension == 2:
            return SourceSpec.from_coefficients(2, {c.n: complex(c.re, c.im) for c in s.coefficients})
        return SourceSpec.from_coefficients(3, {(c.n, c.m): complex(c.re, c.im) for c in s.coefficients})


def load_config(path: Union[str, Path]) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    cfg.structure_config()
    if cfg.source is not None:
        cfg.source_spec(cfg.structure.dimension).check_outside(cfg.structure_config())
    return cfg


def _fmt(v: float) -> str:
    return f"{v:.16e}"


def _rows_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(float(obj)) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


class _Run:
    def __init__(self, command: str, config_path: Optional[str], config: Optional[RunConfig], out: Optional[str]):
        self.command = command
        self.config = config
        directory = out or (config.output.directory if config else "out")
        self.out = Path(directory)
        self.out.mkdir(parents=True, exist_ok=True)
        self.t0 = time.perf_counter()
        self.config_path = config_path

    def wants(self, fmt: str) -> bool:
        return self.config is None or fmt in self.config.output.formats

    def csv(self, name: str, text: str) -> None:
        if self.wants("csv"):
            (self.out / name).write_text(text)

    def summary(self, data: dict) -> None:
        if not self.wants("json"):
            return
        (self.out / f"{self.command}_summary.json").write_text(
            json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n")

    def manifest(self, status: int) -> None:
        blob = json.dumps(self.config.model_dump(mode="json"), sort_keys=True) if self.config else ""
        versions = {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}
        try:
            versions["npcloak"] = metadata.version("npcloak")
        except metadata.PackageNotFoundError:
            versions["npcloak"] = "unknown"
        doc = {
            "command": self.command,
            "config_path": self.config_path,
            "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
            "versions": versions,
            "seeds": None,
            "exit_code": status,
            "elapsed_seconds": time.perf_counter() - self.t0,
        }
        (self.out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_spectrum(args, run: _Run) -> int:
    cfg = run.config.structure_config(**({"dimension": args.dim} if args.dim else {}))
    n_max = args.modes
    if cfg.dimension == 2:
        pairs = np_spectrum.np_eigenpairs_2d(cfg, n_max)
    else:
        pairs = np_spectrum.np_eigenpairs_3d(cfg, n_max)
        # one row per degree and sign: the 2n+1 orders share the eigenpair
        pairs = [p for p in pairs if p.m == 0]
    run.csv("spectrum.csv", np_spectrum.eigenpairs_to_csv(pairs))
    info = {"dimension": cfg.dimension, "modes": n_max, "rows": len(pairs)}
    status = 0
    if args.oracle:
        if cfg.dimension == 2:
            tol = 1e-8
            ana = []
            for p in pairs:
                ana += [p.eigenvalue] * p.multiplicity
            ana = np.array(sorted(ana, key=lambda v: (-round(abs(v), 12), -v)))
            sysm = oracle.build_np_matrix_2d(cfg, args.nodes)
            num = oracle.np_matrix_spectrum(sysm, len(ana))
            # eigenvalues the discretization cannot resolve count as failures
            num = np.concatenate([num, np.full(len(ana) - len(num), np.nan)])
            labels = list(range(len(ana)))
        else:
            tol = 1e-10
            ana, num, labels = [], [], []
            for n in range(n_max + 1):
                ev = np.sort(np.linalg.eigvals(oracle.projected_mode_matrix_3d(cfg, n)).real)
                for s, v in zip((-1, 1), ev):
                    ana.append(np_spectrum.np_eigenvalue_3d(cfg.rho, n, s))
                    num.append(v)
                    labels.append(n)
            ana, num = np.array(ana), np.array(num)
        dev = np.where(np.isnan(num), np.inf, np.abs(ana - num))
        run.csv("spectrum_oracle.csv", _rows_csv(["index", "analytic", "oracle", "deviation"],
                    [(lab, float(a), float(b), float(d)) for lab, a, b, d in zip(labels, ana, num, dev)]))
        info.update(max_deviation=float(dev.max()), tolerance=tol)
        if not dev.max() <= tol:
            status = EXIT_TOLERANCE
    run.summary(info)
    return status


def _field_grid(cfg: StructureConfig, n: int, half_width: float) -> np.ndarray:
    t = np.linspace(-half_width, half_width, n)
    A, B = np.meshgrid(t, t, indexing="ij")
    if cfg.dimension == 2:
        return np.stack([A, B], axis=-1).reshape(-1, 2)
    return np.stack([A, np.zeros_like(A), B], axis=-1).reshape(-1, 3)


def cmd_solve(args, run: _Run) -> int:
    rc = run.config
    cfg = rc.structure_config(**({"delta": args.delta} if args.delta is not None else {}))
    src = rc.source_spec(cfg.dimension)
    kw = {"n_max": rc.solver.n_max, "tol": rc.solver.tol, "cap": rc.solver.cap}
    dens = calr.solve(cfg, src, **kw)
    E = calr.energy(cfg, dens, tol=rc.solver.tol)
    est = calr.energy_estimate(cfg, dens.coeffs) if 0 < cfg.delta <= 1e-2 else None
    ident = None
    if src.has_charges:
        ident = solver2d.energy_via_source_identity(cfg, src, dens)
    rel = abs(E.E_delta - ident) / E.E_delta if ident is not None and E.E_delta > 0 else None

    pts = _field_grid(cfg, args.grid, args.half_width or 1.5 * cfg.r_e)
    vals = np.full(len(pts), np.nan + 0j)
    if src.has_charges:
        near = np.min(np.linalg.norm(pts[:, None, :] - src.positions[None], axis=-1), axis=1) < 1e-9
    else:
        near = np.linalg.norm(pts, axis=1) > cfg.r_e
    ok = ~near
    vals[ok] = calr.potential(cfg, src, dens, pts[ok])
    names = ["x", "y"] if cfg.dimension == 2 else ["x", "z"]
    coords = pts if cfg.dimension == 2 else pts[:, [0, 2]]
    run.csv("field.csv", _rows_csv(names + ["re_V", "im_V"],
                [(float(a), float(b), float(v.real), float(v.imag)) for (a, b), v in zip(coords, vals)]))

    residuals = {}
    if src.has_charges:
        ev = lambda p: calr.potential(cfg, src, dens, p)  # noqa: E731
        for bd in ("inner", "outer"):
            residuals[bd] = oracle.transmission_residual(cfg, ev, bd)
    status = 0
    if any(r > rc.solver.residual_tol for r in residuals.values()):
        status = EXIT_TOLERANCE
    run.summary({
        "structure": cfg.to_dict(),
        "n_max": dens.n_max,
        "limit_not_asymptotic": dens.limit,
        "energy": {"exact": E.E_delta, "estimate": est, "source_identity": ident,
                   "relative_difference_exact_vs_identity": rel},
        "transmission_residual": residuals,
        "residual_tolerance": rc.solver.residual_tol,
    })
    return status


def _sweep_args(rc: RunConfig, cfg: StructureConfig):
    s = rc.sweep
    grid = np.geomspace(s.delta_max, s.delta_min, s.points)
    probes = calr.default_probes(cfg, tuple(s.probe_factors), s.probe_angles)
    return grid, probes


def cmd_sweep(args, run: _Run) -> int:
    rc = run.config
    cfg = rc.structure_config()
    src = rc.source_spec(cfg.dimension)
    grid, probes = _sweep_args(rc, cfg)
    rep = calr.sweep(cfg, src, grid, probes, rc.sweep.slope_threshold, rc.sweep.flat_threshold,
                     rc.sweep.resonant_threshold, threads=args.threads, cap=rc.solver.cap)
    run.csv("sweep.csv", rep.to_csv())
    run.summary(rep.summary())
    return 0


def cmd_critical(args, run: _Run) -> int:
    rc = run.config
    cfg = rc.structure_config()
    interval = args.interval or rc.critical.interval
    if interval is None:
        raise ConfigError("critical needs --interval or critical.interval")
    grid, _ = _sweep_args(rc, cfg)
    dip = rc.source.dipole if rc.source is not None else None
    family = None
    if dip is not None:
        family = lambda r0: SourceSpec.dipole(2, r0, dip.direction, dip.h_factor)  # noqa: E731
    res = calr.estimate_critical_radius(cfg, tuple(interval), family, grid, rc.critical.rel_tol,
                                        threads=args.threads)
    run.csv("critical.csv", _rows_csv(["lo", "hi", "radius", "classification"],
                [(float(a), float(b), float(c), d) for a, b, c, d in res.trace]))
    run.summary({"estimate": res.estimate, "bracket": list(res.bracket)})
    return 0


def cmd_coeffs(args, run: _Run) -> int:
    rc = run.config
    cfg = rc.structure_config()
    src = rc.source_spec(cfg.dimension)
    n_max = args.n_max or rc.solver.n_max or default_n_max(src, cfg, cap=rc.solver.cap)
    coeffs = exterior_coefficients(src, cfg, n_max)
    run.csv("coeffs.csv", coeffs.to_csv())
    run.summary({"n_max": coeffs.n_max, "modes": len(coeffs.n)})
    return 0


def cmd_gapcheck(args, run: _Run) -> int:
    rc = run.config
    cfg = rc.structure_config()
    if cfg.dimension != 2:
        raise ConfigError("gapcheck applies to 2D structures")
    src = rc.source_spec(2)
    n_max = args.n_max or rc.solver.n_max or default_n_max(src, cfg, cap=rc.solver.cap)
    coeffs = exterior_coefficients(src, cfg, n_max)
    rows, verdicts = [], {}
    for variant in ("GP", "GP2"):
        v = gap_property_check(coeffs, cfg, variant)
        verdicts[variant] = v.verdict
        rows += [(variant, int(n), float(q)) for n, q in zip(v.n, v.log_quotient)]
    run.csv("gapcheck.csv", _rows_csv(["variant", "n", "log_quotient"], rows))
    summary = {"verdicts": verdicts, "n_max": n_max}
    if not src.has_charges:
        summary["note"] = "coefficient source: harmonic-extension condition not verified"
    run.summary(summary)
    return 0


COMMANDS = {
    "spectrum": cmd_spectrum,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "critical": cmd_critical,
    "coeffs": cmd_coeffs,
    "gapcheck": cmd_gapcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="npcloak", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--threads", type=int, default=1)
        return p

    p = add("spectrum", "closed-form NP eigenpairs, optionally checked against a discretization")
    p.add_argument("--dim", type=int, choices=(2, 3))
    p.add_argument("--modes", type=int, default=10)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--nodes", type=int, default=256, help="Nystrom nodes per circle")
    p = add("solve", "solve at one loss value and sample the potential")
    p.add_argument("--delta", type=float)
    p.add_argument("--grid", type=int, default=64, help="samples per side of the field grid")
    p.add_argument("--half-width", type=float)
    add("sweep", "loss sweep with blow-up classification")
    p = add("critical", "bisect the critical source radius")
    p.add_argument("--interval", type=float, nargs=2)
    p = add("coeffs", "dump source multipole coefficients")
    p.add_argument("--n-max", type=int)
    p = add("gapcheck", "finite-window gap-property verdicts")
    p.add_argument("--n-max", type=int)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    run = None
    try:
        config = load_config(args.config)
        run = _Run(args.command, args.config, config, args.out)
        status = COMMANDS[args.command](args, run)
    except (ConfigError, SourceError, UnsupportedRegime) as exc:
        print(f"npcloak: configuration error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    except ResonanceError as exc:
        print(f"npcloak: resonance: {exc}", file=sys.stderr)
        status = EXIT_RESONANCE
    except calr.BracketError as exc:
        print(f"npcloak: bracket error: {exc}", file=sys.stderr)
        status = EXIT_BRACKET
    if run is not None:
        run.manifest(status)
    return status


if __name__ == "__main__":
    sys.exit(main())
