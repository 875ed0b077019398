"""Degree-by-degree solution of the 3D transmission problem on concentric spheres.

For degree ``n`` write ``a = 1/(2(2n+1))``.  The block operator acts on
``Y_n^m`` through

    [[-a, n rho**(n-1)/(2n+1)], [(n+1) rho**(n+2)/(2n+1), a]]

so the per-degree system has determinant
``(z_i - a)(z_e + a) - n(n+1) rho**(2n+1)/(2n+1)**2``.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ._series import cart_to_sph, safe_pow, ylm
from .common import EnergyResult, LayerDensities, ResonanceError, TruncationError
from .sources import (
    ModeCoefficients,
    SourceError,
    SourceSpec,
    default_n_max,
    exterior_coefficients_3d,
    newtonian_potential,
)
from .structure import ContrastPair, StructureConfig, contrast_parameters, is_plasmonic_match

_CHUNK = 1 << 18


def delta_n(z: ContrastPair, rho: float, n):
    """Per-degree determinant (scalar or array ``n``)."""
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("degree must be >= 0")
    a = 1.0 / (2 * (2 * n + 1))
    coupling = n * (n + 1) * safe_pow(rho, 2 * n + 1) / (2 * n + 1) ** 2
    val = np.asarray((z.z_i - a) * (z.z_e + a) - coupling)
    return complex(val) if val.ndim == 0 else val


def _check(det, z, n):
    a = 1.0 / (2 * (2 * np.asarray(n) + 1))
    scale = np.abs(z.z_i - a) * np.abs(z.z_e + a) + a * a
    bad = np.abs(det) <= 1e-15 * scale
    if np.any(bad):
        raise ResonanceError(int(np.ravel(n)[np.argmax(np.ravel(bad))]))


def solve_mode_3d(z: ContrastPair, rho: float, n, m, g_e):
    """Densities of degree ``n`` for exterior data ``g_e`` (interior data implied).

    ``m`` only labels the mode: the system does not depend on it.
    """
    n = np.asarray(n)
    det = delta_n(z, rho, n)
    _check(det, z, n)
    a = 1.0 / (2 * (2 * n + 1))
    g_e = np.asarray(g_e, dtype=complex)
    phi_i = np.asarray(-safe_pow(rho, np.maximum(n - 1, 0)) * (z.z_e + 0.5) * g_e / det)
    phi_e = np.asarray((z.z_i - a + (n + 1) * safe_pow(rho, 2 * n + 1) / (2 * n + 1)) * g_e / det)
    if phi_i.ndim == 0:
        return complex(phi_i), complex(phi_e)
    return phi_i, phi_e


def densities_from_exterior_source(coeffs: ModeCoefficients, z: ContrastPair, rho: float,
                                   limit: bool = False) -> LayerDensities:
    phi_i, phi_e = solve_mode_3d(z, rho, coeffs.n, coeffs.m, coeffs.g_e)
    return LayerDensities(3, coeffs.n, coeffs.m, np.atleast_1d(phi_i), np.atleast_1d(phi_e),
                          coeffs, z, limit)


def _per_mode_energy(cfg: StructureConfig, dens: LayerDensities) -> np.ndarray:
    # shell field of degree n: A r**-(n+1) + B r**n with
    # A = -r_i**(n+2) phi_i / (2n+1), B = -r_e**(1-n) (phi_e/(2n+1) + g_e/n)
    n = dens.n.astype(float)
    shell = 1.0 - safe_pow(cfg.rho, 2 * n + 1)
    inner = (n + 1) * cfg.r_i**3 * np.abs(dens.phi_i) ** 2 / (2 * n + 1) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(n > 0, dens.phi_e / (2 * n + 1) + dens.coeffs.g_e / np.maximum(n, 1), 0.0)
    outer = n * cfg.r_e**3 * np.abs(b) ** 2
    return cfg.delta * shell * (inner + outer)


def _tail_fraction(per_mode, n) -> float:
    total = math.fsum(per_mode)
    if total == 0.0:
        return 0.0
    return math.fsum(per_mode[n > 0.75 * n.max()]) / total


def solve_3d(cfg: StructureConfig, src: SourceSpec, n_max: Optional[int] = None,
             tol: float = 1e-12, cap: int = 200,
             coeffs: Optional[ModeCoefficients] = None, method: str = "quadrature") -> LayerDensities:
    """Solve all degrees up to an adaptively chosen truncation (see ``solve_2d``)."""
    if cfg.dimension != 3:
        raise ValueError("solve_3d needs a 3D structure")
    z = contrast_parameters(cfg)
    limit = cfg.delta == 0.0 and is_plasmonic_match(cfg)
    if coeffs is not None:
        return densities_from_exterior_source(coeffs, z, cfg.rho, limit)
    fixed = n_max is not None or not src.has_charges
    N = n_max if n_max is not None else default_n_max(src, cfg, cap=cap)
    while True:
        coeffs = exterior_coefficients_3d(src, cfg, N, method=method)
        dens = densities_from_exterior_source(coeffs, z, cfg.rho, limit)
        if fixed or _tail_fraction(_per_mode_energy(cfg, dens), dens.n) <= tol:
            return dens
        if N >= cap:
            raise TruncationError(f"energy tail above {tol:g} at the cap n_max={cap}")
        N = min(2 * N, cap)


def _layer_amp(r, n, r0, amp, side):
    inner = (r < r0) | ((r == r0) & (side == "inner"))
    t = np.where(inner, r / r0, r0 / np.maximum(r, 1e-300))
    expo = np.where(inner[:, None], n[None, :], n[None, :] + 1)
    return safe_pow(t[:, None], expo) * amp[None, :]


def _series(cfg, src, dens, pts, side, include_source):
    r, theta, phi = cart_to_sph(pts)
    n = dens.n
    c = 1.0 / (2 * n + 1)
    w = _layer_amp(r, n, cfg.r_i, -c * cfg.r_i * dens.phi_i, side)
    w = w + _layer_amp(r, n, cfg.r_e, -c * cfg.r_e * dens.phi_e, side)
    if include_source and not src.has_charges:
        if np.any(r > cfg.r_e * (1 + 1e-14)):
            raise SourceError("coefficient-only sources have no Newtonian potential outside the shell")
        with np.errstate(divide="ignore", invalid="ignore"):
            amp = np.where(n > 0, -dens.coeffs.g_e * cfg.r_e / np.maximum(n, 1), 0.0)
        w = w + safe_pow((r / cfg.r_e)[:, None], n[None, :]) * amp[None, :]
    y = ylm(n, dens.m, theta, phi)
    val = np.einsum("pk,kp->p", w, y)
    if include_source and src.has_charges:
        val = val + newtonian_potential(src, pts)
    return val


def potential_3d(cfg: StructureConfig, src: Optional[SourceSpec], dens: LayerDensities, x,
                 side: str = "inner"):
    """``V = F + S_i[phi_i] + S_e[phi_e]`` at points ``x`` (shape ``(..., 3)``)."""
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, 3)
    step = max(1, _CHUNK // max(len(dens.n), 1))
    out = [_series(cfg, src, dens, pts[s:s + step], side, src is not None)
           for s in range(0, len(pts), step)]
    val = np.concatenate(out).reshape(x.shape[:-1])
    return complex(val) if x.ndim == 1 else val


def scattered_potential_3d(cfg: StructureConfig, dens: LayerDensities, x, side: str = "inner"):
    return potential_3d(cfg, None, dens, x, side)


def energy_3d(cfg: StructureConfig, dens: LayerDensities, tol: float = 1e-12) -> EnergyResult:
    """``delta * int_shell |grad V|**2`` from per-degree radial integrals.

    With ``V = (A r**-(n+1) + B r**n) Y_n^m`` in the shell and
    ``int |grad_S Y|**2 = n(n+1)`` on the unit sphere, the cross terms
    cancel and each mode gives
    ``(n+1)|A|**2 (r_i**-(2n+1) - r_e**-(2n+1)) + n|B|**2 (r_e**(2n+1) - r_i**(2n+1))``.
    """
    per_mode = _per_mode_energy(cfg, dens)
    tail = _tail_fraction(per_mode, dens.n)
    if tail > tol and dens.coeffs.source_radius < math.inf:
        raise TruncationError(f"energy tail fraction {tail:.2e} exceeds {tol:g}; raise n_max")
    return EnergyResult(math.fsum(per_mode), per_mode, "series-exact", dens.n, dens.m)


def density_norms_3d(cfg: StructureConfig, dens: LayerDensities) -> tuple[float, float]:
    """``(delta ||phi_i||**2, delta ||phi_e||**2)`` in ``L2`` of the two spheres."""
    d = cfg.delta
    ni = d * cfg.r_i**2 * math.fsum(np.abs(dens.phi_i) ** 2)
    ne = d * cfg.r_e**2 * math.fsum(np.abs(dens.phi_e) ** 2)
    return ni, ne


def energy_3d_surrogate(cfg: StructureConfig, dens: LayerDensities) -> float:
    """Upper-bound surrogate ``delta (||phi_i||**2 + ||phi_e||**2)``."""
    return sum(density_norms_3d(cfg, dens))
