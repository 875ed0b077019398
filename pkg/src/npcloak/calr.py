"""Loss sweeps, blow-up classification and critical-radius bisection.

A sweep solves the transmission problem over a decreasing grid of loss
parameters and fits the slope ``s`` of ``log E`` against ``log(1/delta)``
over the final decade.  Because weak resonance shows only along
particular losses, every 2D sweep also evaluates the energy at the
resonant losses ``delta_k = rho**(p n_k)`` attached to the dominant source
modes (``p = 2`` for a core that differs from the matrix, ``p = 1``
otherwise).
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import solver2d, solver3d
from .common import EnergyResult, LayerDensities, TruncationError, UnsupportedRegime
from .sources import ModeCoefficients, SourceSpec, default_n_max, exterior_coefficients
from .structure import StructureConfig, bounded_safe_radius, is_plasmonic_match


class BracketError(RuntimeError):
    """Classification does not change sign over the search interval."""


DEFAULT_GRID = np.geomspace(1e-2, 1e-10, 33)


def solve(cfg: StructureConfig, src: SourceSpec, **kw) -> LayerDensities:
    """Layer densities for either dimension."""
    src.check_outside(cfg)
    if cfg.dimension == 2:
        return solver2d.solve_2d(cfg, src, **kw)
    return solver3d.solve_3d(cfg, src, **kw)


def energy(cfg: StructureConfig, dens: LayerDensities, **kw) -> EnergyResult:
    if cfg.dimension == 2:
        return solver2d.energy_2d_exact(cfg, dens, **kw)
    return solver3d.energy_3d(cfg, dens, **kw)


def potential(cfg: StructureConfig, src: Optional[SourceSpec], dens: LayerDensities, x, **kw):
    if cfg.dimension == 2:
        return solver2d.potential_2d(cfg, src, dens, x, **kw)
    return solver3d.potential_3d(cfg, src, dens, x, **kw)


def energy_estimate(cfg: StructureConfig, coeffs: ModeCoefficients) -> Optional[float]:
    """Small-loss surrogate where one is available (2D only), else ``None``."""
    if cfg.dimension != 2:
        return None
    try:
        return solver2d.energy_2d_estimate(cfg, coeffs).E_delta
    except UnsupportedRegime:
        return None


def fit_slope(deltas: Sequence[float], energies: Sequence[float]) -> float:
    """Least-squares slope of ``log E`` against ``log(1/delta)``."""
    x = -np.log(np.asarray(deltas, dtype=float))
    y = np.log(np.asarray(energies, dtype=float))
    if len(x) < 2:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def _final_decade(deltas: np.ndarray) -> np.ndarray:
    return deltas <= 10.0 * deltas.min() * (1 + 1e-12)


def classify(deltas: Sequence[float], energies: Sequence[float],
             slope_threshold: float = 0.5, flat_threshold: float = 0.05) -> tuple[str, float, str]:
    """Classify a sweep from its final decade; returns ``(label, slope, diagnostic)``.

    ``"blow-up"`` needs slope ``>= slope_threshold`` and energies strictly
    increasing as the loss decreases; ``"bounded"`` needs slope
    ``<= flat_threshold`` (energies that fall with the loss are bounded
    too).  Anything else, or a grid spanning under two decades, is
    ``"indeterminate"``.
    """
    d = np.asarray(deltas, dtype=float)
    e = np.asarray(energies, dtype=float)
    if len(d) < 2 or math.log10(d.max() / d.min()) < 2 - 1e-9:
        return "indeterminate", math.nan, "delta grid spans fewer than two decades"
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        return "indeterminate", math.nan, "non-positive or non-finite energies"
    order = np.argsort(-d)
    d, e = d[order], e[order]
    win = _final_decade(d)
    s = fit_slope(d[win], e[win])
    monotone = bool(np.all(np.diff(e[win]) > 0))
    if s >= slope_threshold and monotone:
        return "blow-up", s, f"slope {s:.3f} >= {slope_threshold} with increasing energies"
    if s <= flat_threshold:
        return "bounded", s, f"slope {s:.3f} <= {flat_threshold}"
    why = "energies not monotone" if s >= slope_threshold else "slope between thresholds"
    return "indeterminate", s, f"slope {s:.3f}: {why}"


def resonance_power(cfg: StructureConfig) -> int:
    """Exponent ``p`` in the resonant losses ``rho**(p n)``."""
    return 1 if cfg.eps_c == 1.0 else 2


def resonant_subsequence(coeffs: ModeCoefficients, rho: float, power: int = 2) -> list[tuple[int, float]]:
    """Modes where ``|g_e^n|**2 / (|n| rho**(p|n|))`` reaches a new running maximum.

    ``|g|**2`` combines the ``+n`` and ``-n`` coefficients.  Returns pairs
    ``(n_k, rho**(p n_k))`` in increasing ``n``.
    """
    if coeffs.dimension != 2:
        raise ValueError("resonant subsequence is defined for 2D coefficients")
    k = np.abs(coeffs.n)
    if len(k) == 0:
        raise ValueError("empty coefficient set")
    top = int(k.max())
    mag2 = np.zeros(top + 1)
    np.add.at(mag2, k, np.abs(coeffs.g_e) ** 2)
    ns = np.arange(1, top + 1)
    g2 = mag2[1:]
    if not np.any(g2 > 0):
        raise ValueError("all coefficients vanish")
    with np.errstate(divide="ignore"):
        logq = np.log(g2) - np.log(ns) - power * ns * math.log(rho)
    out = []
    best = -math.inf
    for n, q in zip(ns, logq):
        if q > best:
            best = q
            out.append((int(n), float(rho ** (power * n))))
    return out


def default_probes(cfg: StructureConfig, factors=(1.05, 1.1, 1.5, 2.0), n_angles: int = 8) -> np.ndarray:
    """Probe points beyond ``r_e**3 / r_i**2`` (great circle in the x-z plane in 3D)."""
    base = bounded_safe_radius(cfg) or cfg.r_e**3 / cfg.r_i**2
    t = 2 * np.pi * (np.arange(n_angles) + 0.5) / n_angles
    pts = []
    for f in factors:
        r = f * base
        if cfg.dimension == 2:
            pts.append(np.stack([r * np.cos(t), r * np.sin(t)], axis=1))
        else:
            pts.append(np.stack([r * np.sin(t), np.zeros_like(t), r * np.cos(t)], axis=1))
    return np.concatenate(pts)


@dataclass(frozen=True)
class SweepPoint:
    delta: float
    E_exact: float
    E_estimate: Optional[float]
    probe_ratio: np.ndarray
    n_max: int
    resonant_mode: Optional[int] = None


@dataclass(frozen=True, eq=False)
class SweepReport:
    """Outcome of a loss sweep.

    ``points`` holds the plain grid, ``resonant`` the resonant losses that
    fall inside the grid's range.  ``classification`` is ``"blow-up"``
    when either path blows up, else the plain-grid label.
    """

    dimension: int
    points: list[SweepPoint]
    resonant: list[SweepPoint]
    probes: np.ndarray
    slope: float
    classification: str
    plain_classification: str
    resonant_slope: float
    resonant_classification: str
    slope_threshold: float
    flat_threshold: float
    resonant_threshold: float
    diagnostics: list[str] = field(default_factory=list)

    @property
    def delta_grid(self) -> np.ndarray:
        return np.array([p.delta for p in self.points])

    @property
    def energies(self) -> np.ndarray:
        return np.array([p.E_exact for p in self.points])

    @property
    def outside_samples(self) -> np.ndarray:
        return np.array([p.probe_ratio for p in self.points])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n_probe = len(self.probes)
        w.writerow(["kind", "delta", "E_exact", "E_estimate", "slope_window", "n_max", "resonant_n"]
                   + [f"probe_{j}" for j in range(n_probe)])
        rows = [("grid", p) for p in self.points] + [("resonant", p) for p in self.resonant]
        grid = self.delta_grid
        win = _final_decade(grid) if len(grid) else np.zeros(0, bool)
        in_window = {float(d) for d in grid[win]}
        for kind, p in rows:
            flag = 1 if kind == "grid" and p.delta in in_window else 0
            est = "" if p.E_estimate is None else f"{p.E_estimate:.16e}"
            w.writerow([kind, f"{p.delta:.16e}", f"{p.E_exact:.16e}", est, flag, p.n_max,
                        "" if p.resonant_mode is None else p.resonant_mode]
                       + [f"{v:.16e}" for v in p.probe_ratio])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "classification": self.classification,
            "plain_classification": self.plain_classification,
            "slope": self.slope,
            "resonant_classification": self.resonant_classification,
            "resonant_slope": self.resonant_slope,
            "thresholds": {"slope": self.slope_threshold, "flat": self.flat_threshold,
                           "resonant": self.resonant_threshold},
            "diagnostics": list(self.diagnostics),
        }


class _Solver:
    """Per-delta solves sharing one set of source coefficients."""

    def __init__(self, cfg: StructureConfig, src: SourceSpec, cap: int):
        self.cfg, self.src, self.cap = cfg, src, cap
        self.N = default_n_max(src, cfg, cap=cap)
        self.coeffs = exterior_coefficients(src, cfg, self.N)

    def __call__(self, delta: float):
        cfg = self.cfg.with_delta(delta)
        coeffs = self.coeffs
        while True:
            dens = solve(cfg, self.src, coeffs=coeffs)
            try:
                return cfg, dens, energy(cfg, dens)
            except TruncationError:
                if coeffs.n_max >= self.cap:
                    raise
                coeffs = exterior_coefficients(self.src, cfg, min(2 * coeffs.n_max, self.cap))


def _point(solver: _Solver, probes: np.ndarray, delta: float, mode: Optional[int] = None) -> SweepPoint:
    cfg, dens, E = solver(delta)
    est = energy_estimate(cfg, dens.coeffs) if delta <= 1e-2 else None
    v = potential(cfg, solver.src, dens, probes) if len(probes) else np.zeros(0)
    ratio = np.abs(v) / math.sqrt(E.E_delta) if E.E_delta > 0 else np.full(len(probes), math.inf)
    return SweepPoint(float(delta), E.E_delta, est, np.asarray(ratio, dtype=float), dens.n_max, mode)


def _classify_resonant(points: list[SweepPoint], delta_min: float, threshold: float) -> tuple[str, float, str]:
    if len(points) < 2:
        return "indeterminate", math.nan, "fewer than two resonant losses inside the grid"
    d = np.array([p.delta for p in points])
    e = np.array([p.E_exact for p in points])
    if d.min() > 10.0 * delta_min:
        return "bounded", math.nan, "resonant losses stop before the final decade"
    win = d <= 10.0 * delta_min
    if win.sum() < 2:
        win[np.argsort(d)[:2]] = True
    s = fit_slope(d[win], e[win])
    idx = np.argsort(-d[win])
    monotone = bool(np.all(np.diff(e[win][idx]) > 0))
    if s > threshold and monotone:
        return "blow-up", s, f"resonant slope {s:.3f} > {threshold} with increasing energies"
    return "bounded", s, f"resonant slope {s:.3f} (threshold {threshold}), monotone={monotone}"


def sweep(cfg: StructureConfig, src: SourceSpec, delta_grid: Optional[Sequence[float]] = None,
          probes: Optional[np.ndarray] = None, slope_threshold: float = 0.5,
          flat_threshold: float = 0.05, resonant_threshold: float = 0.0,
          resonant: bool = True, threads: int = 1, cap: int = 2000) -> SweepReport:
    """Energies, probe ratios ``|V|/sqrt(E)`` and classification over a loss grid."""
    grid = np.asarray(DEFAULT_GRID if delta_grid is None else delta_grid, dtype=float)
    if len(grid) == 0 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
        raise ValueError("delta grid must be strictly decreasing and positive")
    src.check_outside(cfg)
    probes = default_probes(cfg) if probes is None else np.asarray(probes, dtype=float)
    solver = _Solver(cfg, src, cap if cfg.dimension == 2 else min(cap, 200))
    diagnostics = []

    tasks: list[tuple[float, Optional[int]]] = [(float(d), None) for d in grid]
    res_modes = []
    if resonant and cfg.dimension == 2:
        seq = resonant_subsequence(solver.coeffs, cfg.rho, resonance_power(cfg))
        res_modes = [(d, n) for n, d in seq if grid.min() * (1 - 1e-12) <= d <= grid.max() * (1 + 1e-12)]
        tasks += res_modes
        if not src.has_charges:
            diagnostics.append("coefficient source: harmonic-extension condition not verified")
    if cfg.dimension == 2 and not is_plasmonic_match(cfg):
        diagnostics.append("shell permittivity differs from -1: no resonant subsequence expected")

    run = lambda t: _point(solver, probes, t[0], t[1])  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            pts = list(ex.map(run, tasks))
    else:
        pts = [run(t) for t in tasks]
    plain, res = pts[:len(grid)], pts[len(grid):]

    label, s, why = classify(grid, [p.E_exact for p in plain], slope_threshold, flat_threshold)
    diagnostics.append(f"grid: {why}")
    if cfg.dimension == 2 and resonant:
        r_label, r_s, r_why = _classify_resonant(res, grid.min(), resonant_threshold)
        diagnostics.append(f"resonant: {r_why}")
    else:
        r_label, r_s = "indeterminate", math.nan
    overall = "blow-up" if "blow-up" in (label, r_label) else label
    return SweepReport(cfg.dimension, plain, res, probes, s, overall, label, r_s, r_label,
                       slope_threshold, flat_threshold, resonant_threshold, diagnostics)


@dataclass(frozen=True)
class CriticalRadiusResult:
    estimate: float
    bracket: tuple[float, float]
    trace: list[tuple[float, float, float, str]]


def estimate_critical_radius(cfg: StructureConfig, interval: tuple[float, float],
                             family: Optional[Callable[[float], SourceSpec]] = None,
                             delta_grid: Optional[Sequence[float]] = None,
                             rel_tol: float = 0.01, threads: int = 1) -> CriticalRadiusResult:
    """Bisect the source radius between blow-up (inside) and no blow-up (outside).

    ``family(r0)`` builds the source; the default is a radial dipole pair.
    Stops when the bracket width is at most ``rel_tol`` times its midpoint.
    """
    if cfg.dimension != 2:
        raise UnsupportedRegime("critical radius is defined for 2D structures")
    family = family or (lambda r0: SourceSpec.dipole(2, r0))
    lo, hi = map(float, interval)
    if not lo < hi:
        raise ValueError("interval must satisfy lo < hi")

    def blows_up(r0):
        rep = sweep(cfg, family(r0), delta_grid, probes=np.zeros((0, 2)), threads=threads)
        return rep.classification == "blow-up", rep.classification

    trace = []
    b_lo, c_lo = blows_up(lo)
    b_hi, c_hi = blows_up(hi)
    trace += [(lo, hi, lo, c_lo), (lo, hi, hi, c_hi)]
    if not b_lo or b_hi:
        raise BracketError(f"no classification change over [{lo}, {hi}]: "
                           f"inside is {c_lo}, outside is {c_hi}")
    while hi - lo > rel_tol * 0.5 * (lo + hi):
        mid = 0.5 * (lo + hi)
        b, c = blows_up(mid)
        trace.append((lo, hi, mid, c))
        if b:
            lo = mid
        else:
            hi = mid
    return CriticalRadiusResult(0.5 * (lo + hi), (lo, hi), trace)
