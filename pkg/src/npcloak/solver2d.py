"""Mode-by-mode solution of the 2D core-shell transmission problem.

Each Fourier mode ``n != 0`` decouples into the 2x2 system

    z_i phi_i + rho**(|n|-1)/2 phi_e = g_i
    rho**(|n|+1)/2 phi_i + z_e phi_e = g_e

whose determinant is ``(4 z_i z_e - rho**(2|n|)) / 4``.  Fields are
rebuilt from the single-layer mode multipliers and the Newtonian
potential of the source; the dissipated energy is integrated in closed
form per mode.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable, Optional

import numpy as np

from ._series import safe_pow
from .common import (
    AccuracyWarning,
    EnergyResult,
    LayerDensities,
    ResonanceError,
    TruncationError,
    UnsupportedRegime,
)
from .sources import (
    ModeCoefficients,
    SourceError,
    SourceSpec,
    default_n_max,
    exterior_coefficients_2d,
    newtonian_gradient,
    newtonian_potential,
)
from .structure import ContrastPair, StructureConfig, contrast_parameters, is_plasmonic_match

_CHUNK = 1 << 18


def _check_denominator(den, z: ContrastPair, rho_2n, n) -> None:
    scale = np.abs(4 * z.z_i * z.z_e) + rho_2n
    bad = np.abs(den) <= 1e-15 * scale
    if np.any(bad):
        raise ResonanceError(int(np.asarray(n).ravel()[np.argmax(np.ravel(bad))]))


def solve_mode_2d(z: ContrastPair, rho: float, n, g_i, g_e):
    """Solve one (or an array of) Fourier-mode systems; returns ``(phi_i, phi_e)``."""
    k = np.abs(np.asarray(n))
    if np.any(k == 0):
        raise ValueError("mode n = 0 is excluded (densities have zero mean)")
    r2n = safe_pow(rho, 2 * k)
    den = 4 * z.z_i * z.z_e - r2n
    _check_denominator(den, z, r2n, n)
    phi_i = 2 * (2 * z.z_e * g_i - safe_pow(rho, k - 1) * g_e) / den
    phi_e = 2 * (2 * z.z_i * g_e - safe_pow(rho, k + 1) * g_i) / den
    if np.ndim(phi_i) == 0:
        return complex(phi_i), complex(phi_e)
    return phi_i, phi_e


def _is_limit(cfg: StructureConfig) -> bool:
    return cfg.delta == 0.0 and is_plasmonic_match(cfg)


def densities_from_exterior_source(coeffs: ModeCoefficients, z: ContrastPair, rho: float,
                                   limit: bool = False) -> LayerDensities:
    """Densities for a source outside the shell, written in terms of ``g_e`` only."""
    k = np.abs(coeffs.n)
    r2n = safe_pow(rho, 2 * k)
    den = 4 * z.z_i * z.z_e - r2n
    _check_denominator(den, z, r2n, coeffs.n)
    phi_i = -2 * (2 * z.z_e + 1) * safe_pow(rho, k - 1) * coeffs.g_e / den
    phi_e = 2 * (2 * z.z_i + r2n) * coeffs.g_e / den
    return LayerDensities(2, coeffs.n, coeffs.m, phi_i, phi_e, coeffs, z, limit)


def _per_mode_energy(cfg: StructureConfig, dens: LayerDensities) -> np.ndarray:
    k = np.abs(dens.n)
    shell = 1.0 - safe_pow(cfg.rho, 2 * k)
    inner = cfg.r_i**2 * np.abs(dens.phi_i) ** 2
    outer = cfg.r_e**2 * np.abs(dens.phi_e + 2 * dens.coeffs.g_e) ** 2
    return cfg.delta * np.pi * shell * (inner + outer) / (2 * k)


def _tail_fraction(per_mode: np.ndarray, n: np.ndarray) -> float:
    total = math.fsum(per_mode)
    if total == 0.0:
        return 0.0
    k = np.abs(n)
    return math.fsum(per_mode[k > 0.75 * k.max()]) / total


def solve_2d(cfg: StructureConfig, src: SourceSpec, n_max: Optional[int] = None,
             tol: float = 1e-12, cap: int = 2000,
             coeffs: Optional[ModeCoefficients] = None) -> LayerDensities:
    """Solve for the layer densities, choosing the truncation adaptively.

    Without ``n_max`` the truncation starts where the source multipoles
    have decayed to 1e-17 and doubles until the top quarter of modes
    carries less than ``tol`` of the dissipated energy (hard cap ``cap``).
    """
    if cfg.dimension != 2:
        raise ValueError("solve_2d needs a 2D structure")
    z = contrast_parameters(cfg)
    limit = _is_limit(cfg)
    if coeffs is not None:
        return densities_from_exterior_source(coeffs, z, cfg.rho, limit)
    fixed = n_max is not None or not src.has_charges
    N = n_max if n_max is not None else default_n_max(src, cfg, cap=cap)
    while True:
        coeffs = exterior_coefficients_2d(src, cfg, N)
        dens = densities_from_exterior_source(coeffs, z, cfg.rho, limit)
        if fixed or _tail_fraction(_per_mode_energy(cfg, dens), dens.n) <= tol:
            return dens
        if N >= cap:
            raise TruncationError(f"energy tail above {tol:g} at the cap n_max={cap}")
        N = min(2 * N, cap)


def _polar(x: np.ndarray):
    r = np.hypot(x[:, 0], x[:, 1])
    return r, np.arctan2(x[:, 1], x[:, 0])


def _layer_terms(r, theta, k, n, r0, amp, side):
    """Sum of ``amp_n * t**|n| * exp(i n theta)`` and its polar derivatives.

    ``t = r/r0`` in the inner region, ``r0/r`` in the outer one.
    """
    inner = (r < r0) | ((r == r0) & (side == "inner"))
    t = np.where(inner, r / r0, r0 / np.maximum(r, 1e-300))
    pw = safe_pow(t[:, None], k[None, :])
    terms = pw * amp[None, :] * np.exp(1j * np.outer(theta, n))
    val = terms.sum(axis=1)
    rr = np.maximum(r, 1e-300)
    sgn = np.where(inner, 1.0, -1.0)
    d_r = sgn * (terms * (k / 1.0)[None, :]).sum(axis=1) / rr
    d_t = (terms * (1j * n)[None, :]).sum(axis=1) / rr
    tail = np.abs(terms[:, k > 0.9 * k.max()]).sum(axis=1)
    return val, d_r, d_t, tail, np.abs(terms).sum(axis=1)


def _scattered(cfg: StructureConfig, dens: LayerDensities, x: np.ndarray, side: str):
    """S_i[phi_i] + S_e[phi_e] and, optionally, F's series inside the outer circle."""
    r, theta = _polar(x)
    k = np.abs(dens.n).astype(float)
    amp_i = -(cfg.r_i / (2 * k)) * dens.phi_i
    amp_e = -(cfg.r_e / (2 * k)) * dens.phi_e
    vi = _layer_terms(r, theta, k, dens.n, cfg.r_i, amp_i, side)
    ve = _layer_terms(r, theta, k, dens.n, cfg.r_e, amp_e, side)
    return tuple(a + b for a, b in zip(vi, ve))


def _source_series(cfg, dens, x, side):
    r, theta = _polar(x)
    if np.any(r > cfg.r_e * (1 + 1e-14)):
        raise SourceError("coefficient-only sources have no Newtonian potential outside the shell")
    k = np.abs(dens.n).astype(float)
    amp = -(cfg.r_e / k) * dens.coeffs.g_e
    return _layer_terms(r, theta, k, dens.n, cfg.r_e, amp, "inner")


def _chunks(x: np.ndarray, n_modes: int):
    step = max(1, _CHUNK // max(n_modes, 1))
    for s in range(0, len(x), step):
        yield x[s:s + step]


def _field(cfg, src, dens, x, side, include_source, want_grad, tol):
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 2)
    vals, grads = [], []
    worst = 0.0
    for part in _chunks(pts, len(dens.n)):
        v, dr, dt, tail, size = _scattered(cfg, dens, part, side)
        if include_source and src is not None and not src.has_charges:
            sv = _source_series(cfg, dens, part, side)
            v, dr, dt, tail, size = v + sv[0], dr + sv[1], dt + sv[2], tail + sv[3], size + sv[4]
        worst = max(worst, float(np.max(tail / np.maximum(size, 1e-300), initial=0.0)))
        if want_grad:
            _, theta = _polar(part)
            c, s = np.cos(theta), np.sin(theta)
            g = np.stack([c * dr - s * dt, s * dr + c * dt], axis=1)
            if include_source and src is not None and src.has_charges:
                g = g + newtonian_gradient(src, part)
            grads.append(g)
        if include_source and src is not None and src.has_charges:
            v = v + newtonian_potential(src, part)
        vals.append(v)
    # coefficient sources are finite sums: nothing is truncated
    if worst > tol and dens.coeffs.source_radius < math.inf:
        warnings.warn(f"series truncation tail is {worst:.2e} of the term mass (tolerance {tol:g})",
                      AccuracyWarning, stacklevel=3)
    shape = x.shape[:-1]
    val = np.concatenate(vals).reshape(shape)
    if not want_grad:
        return val
    return val, np.concatenate(grads).reshape(*shape, 2)


def potential_2d(cfg: StructureConfig, src: Optional[SourceSpec], dens: LayerDensities, x,
                 side: str = "inner", tol: float = 1e-10):
    """``V = F + S_i[phi_i] + S_e[phi_e]`` at points ``x`` (shape ``(..., 2)``).

    Points exactly on an interface use the region selected by ``side``
    (``"inner"`` or ``"outer"``); the potential itself is continuous.
    """
    return _field(cfg, src, dens, x, side, True, False, tol)


def scattered_potential_2d(cfg: StructureConfig, dens: LayerDensities, x, side: str = "inner"):
    """``S_i[phi_i] + S_e[phi_e]`` only."""
    return _field(cfg, None, dens, x, side, False, False, np.inf)


def gradient_2d(cfg: StructureConfig, src: Optional[SourceSpec], dens: LayerDensities, x,
                side: str = "inner", tol: float = 1e-10):
    """Complex gradient of ``V``; returns ``(V, grad)`` with ``grad`` of shape ``(..., 2)``."""
    return _field(cfg, src, dens, x, side, True, True, tol)


def energy_2d_exact(cfg: StructureConfig, dens: LayerDensities, tol: float = 1e-12) -> EnergyResult:
    """``delta * int_shell |grad V|**2`` summed mode by mode in closed form.

    In the shell the mode-``n`` field is ``A r**-|n| + B r**|n|``; the two
    pieces are pointwise orthogonal in the gradient inner product, giving
    ``pi (1 - rho**(2|n|)) (r_i**2 |phi_i|**2 + r_e**2 |phi_e + 2 g_e|**2) / (2|n|)``
    per mode.
    """
    per_mode = _per_mode_energy(cfg, dens)
    tail = _tail_fraction(per_mode, dens.n)
    if tail > tol and dens.coeffs.source_radius < math.inf:
        raise TruncationError(f"energy tail fraction {tail:.2e} exceeds {tol:g}; raise n_max")
    return EnergyResult(math.fsum(per_mode), per_mode, "series-exact", dens.n, dens.m)


def energy_via_source_identity(cfg: StructureConfig, src: SourceSpec,
                               evaluator: Optional[Callable] | LayerDensities = None) -> float:
    """Dissipation from the source side: ``-Im sum_k w_k conj(V(p_k))``.

    ``F`` is real for real charges, so only the scattered part
    ``S_i[phi_i] + S_e[phi_e]`` contributes.  ``evaluator`` maps points to
    that scattered potential; passing densities uses the series.
    """
    if not src.has_charges:
        raise UnsupportedRegime("source identity needs point charges, not coefficients")
    if isinstance(evaluator, LayerDensities):
        dens = evaluator
        if dens.dimension == 3:
            from .solver3d import scattered_potential_3d as scattered
        else:
            scattered = scattered_potential_2d
        evaluator = lambda p: scattered(cfg, dens, p, side="outer")  # noqa: E731
    vs = np.asarray(evaluator(src.positions))
    return float(-np.imag(np.sum(src.weights * np.conj(vs))))


def estimate_regime(cfg: StructureConfig) -> str:
    """``"plasmonic-shell"`` (eps_s = -1, eps_c != 1) or ``"matched"`` (eps_c = -eps_s != 1)."""
    if is_plasmonic_match(cfg) and cfg.eps_c != 1.0:
        return "plasmonic-shell"
    if cfg.eps_c == -cfg.eps_s and not is_plasmonic_match(cfg):
        return "matched"
    raise UnsupportedRegime(
        f"no small-loss estimate for eps_c={cfg.eps_c}, eps_s={cfg.eps_s}"
    )


def energy_2d_estimate(cfg: StructureConfig, coeffs: ModeCoefficients,
                       delta0: float = 1e-2) -> EnergyResult:
    """Small-loss surrogate for the dissipated energy, up to regime constants.

    plasmonic-shell: ``sum delta |g_e|**2 / (|n| (delta**2 + rho**(4|n|)))``
    matched:         ``sum delta rho**(2|n|) |g_e|**2 / (|n| (delta**2 + rho**(4|n|)))``
    """
    regime = estimate_regime(cfg)
    if cfg.delta > delta0:
        raise UnsupportedRegime(f"estimate only valid for delta <= {delta0:g}")
    k = np.abs(coeffs.n)
    d = cfg.delta
    r4 = safe_pow(cfg.rho, 4 * k)
    num = d * np.abs(coeffs.g_e) ** 2
    if regime == "matched":
        num = num * safe_pow(cfg.rho, 2 * k)
    with np.errstate(invalid="ignore"):
        per_mode = np.where(num == 0.0, 0.0, num / (k * (d * d + r4)))
    return EnergyResult(math.fsum(per_mode), per_mode, "estimate", coeffs.n, coeffs.m)
