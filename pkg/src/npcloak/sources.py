"""Point-charge sources, their Newtonian potential and multipole data.

The exterior data ``g_e`` are the Fourier (2D) or spherical-harmonic (3D)
coefficients of ``-dF/dr`` on the outer interface, where ``F`` is the
Newtonian potential of the source.  The interior data ``g_i`` are the
coefficients of ``dF/dr`` on the core boundary, which for sources outside
the shell are fixed by ``g_i = -g_e * rho**(|n|-1)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Optional

import numpy as np
from scipy.special import roots_legendre

from ._series import cart_to_sph, modes_2d, modes_3d, safe_pow, ylm
from .structure import StructureConfig


class SourceError(ValueError):
    """Invalid source data or a source placed where the analysis does not apply."""


class SingularityError(SourceError):
    """Kernel evaluated on top of a charge."""


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Finite set of weighted point charges with zero net charge.

    Alternatively ``coeff_override`` gives the exterior coefficients
    directly: keys are ``n`` (2D, nonzero) or ``(n, m)`` (3D).  Such a
    source has no pointwise charge density, so operations needing it
    (source identity for the energy, ``F`` outside the shell) refuse it.
    """

    dimension: int
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    coeff_override: Optional[Mapping] = None

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise SourceError(f"dimension must be 2 or 3, got {self.dimension}")
        pos = np.asarray(self.positions, dtype=float).reshape(-1, self.dimension)
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)
        if self.coeff_override is not None:
            if len(w):
                raise SourceError("give either charges or coeff_override, not both")
            return
        if len(w) != len(pos):
            raise SourceError(f"{len(pos)} positions but {len(w)} weights")
        if len(w) == 0:
            raise SourceError("source has no charges")
        if abs(w.sum()) > 1e-12 * np.abs(w).sum():
            raise SourceError(f"total charge must vanish, got {w.sum():.3e}")

    @classmethod
    def point_charges(cls, positions, weights) -> "SourceSpec":
        pos = np.atleast_2d(np.asarray(positions, dtype=float))
        return cls(pos.shape[1], pos, weights)

    @classmethod
    def dipole(cls, dimension: int, r0: float, direction=None, h_factor: float = 1e-3) -> "SourceSpec":
        """Close pair ``+1/h, -1/h`` centred at distance ``r0`` along ``direction``.

        The pair is oriented radially and separated by ``h = h_factor * r0``;
        the default direction is the x axis in 2D and the z axis in 3D.
        """
        if direction is None:
            direction = [1.0, 0.0] if dimension == 2 else [0.0, 0.0, 1.0]
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
        h = h_factor * r0
        pos = np.stack([(r0 - h / 2) * u, (r0 + h / 2) * u])
        return cls(dimension, pos, np.array([1.0 / h, -1.0 / h]))

    @classmethod
    def from_coefficients(cls, dimension: int, coeffs: Mapping) -> "SourceSpec":
        return cls(dimension, np.zeros((0, dimension)), np.zeros(0), dict(coeffs))

    @property
    def has_charges(self) -> bool:
        return self.coeff_override is None

    def min_radius(self) -> float:
        if not self.has_charges:
            return math.inf
        return float(np.linalg.norm(self.positions, axis=1).min())

    def scaled(self, factor: float) -> "SourceSpec":
        if self.has_charges:
            return SourceSpec(self.dimension, self.positions, self.weights * factor)
        return SourceSpec.from_coefficients(
            self.dimension, {k: v * factor for k, v in self.coeff_override.items()}
        )

    def check_outside(self, cfg: StructureConfig) -> None:
        if self.dimension != cfg.dimension:
            raise SourceError(f"{self.dimension}D source used with {cfg.dimension}D structure")
        if self.has_charges and not self.min_radius() > cfg.r_e:
            raise SourceError(
                f"charges must lie outside the shell (|x| > {cfg.r_e}), "
                f"closest is at {self.min_radius():.6g}"
            )

    def to_dict(self) -> dict:
        if self.has_charges:
            return {
                "charges": [
                    {"position": p.tolist(), "weight": float(w)}
                    for p, w in zip(self.positions, self.weights)
                ]
            }
        rows = []
        for key, val in self.coeff_override.items():
            n, m = (key, 0) if self.dimension == 2 else key
            rows.append({"n": int(n), "m": int(m), "re": float(np.real(val)), "im": float(np.imag(val))})
        return {"coefficients": rows}


def newtonian_potential(src: SourceSpec, x) -> np.ndarray | float:
    """``F(x) = sum_k w_k G(x - p_k)`` for one point or an array of points."""
    if not src.has_charges:
        raise SourceError("Newtonian potential needs point charges, not coefficients")
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, src.dimension)
    dist = np.linalg.norm(pts[:, None, :] - src.positions[None, :, :], axis=-1)
    if np.any(dist == 0.0):
        raise SingularityError("potential evaluated at a charge position")
    # zero net charge: measure every kernel against the first charge so that
    # close opposite pairs do not cancel catastrophically
    ref = src.positions[0]
    d0 = dist[:, :1]
    # |x-p|**2 - |x-p0|**2 = (p0 - p) . (2x - p - p0), free of cancellation
    gap = np.einsum("kd,pkd->pk", ref[None, :] - src.positions,
                    2 * pts[:, None, :] - src.positions[None, :, :] - ref)
    if src.dimension == 2:
        rel = 0.5 * np.log1p(gap / d0**2) / (2 * np.pi)
    else:
        rel = gap / (dist * d0 * (dist + d0)) / (4 * np.pi)
    val = rel @ src.weights
    return float(val[0]) if x.ndim == 1 else val.reshape(x.shape[:-1])


def newtonian_gradient(src: SourceSpec, x) -> np.ndarray:
    """Gradient of ``F``; shape ``(..., d)``."""
    if not src.has_charges:
        raise SourceError("Newtonian potential needs point charges, not coefficients")
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, src.dimension)
    diff = pts[:, None, :] - src.positions[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    if np.any(dist == 0.0):
        raise SingularityError("gradient evaluated at a charge position")
    if src.dimension == 2:
        scale = 1.0 / (2 * np.pi * dist**2)
    else:
        scale = 1.0 / (4 * np.pi * dist**3)
    grad = np.einsum("pk,pkd,k->pd", scale, diff, src.weights)
    return grad.reshape(x.shape)


@dataclass(frozen=True, eq=False)
class ModeCoefficients:
    """Exterior and interior multipole data, one entry per mode.

    In 2D ``n`` holds signed Fourier indices ordered 1, -1, 2, -2, ... and
    ``m`` is all zeros.  In 3D ``(n, m)`` run over degrees ``0..n_max``
    with orders ``-n..n``.
    """

    dimension: int
    n: np.ndarray
    m: np.ndarray
    g_e: np.ndarray
    g_i: np.ndarray
    rho: float
    r_e: float
    # closest charge radius, used for truncation-tail bounds
    source_radius: float = math.inf

    @property
    def n_max(self) -> int:
        return int(np.abs(self.n).max()) if len(self.n) else 0

    def scaled(self, factor: complex) -> "ModeCoefficients":
        return ModeCoefficients(
            self.dimension, self.n, self.m, self.g_e * factor, self.g_i * factor,
            self.rho, self.r_e, self.source_radius,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "m", "re_g_e", "im_g_e", "re_g_i", "im_g_i"])
        for n, m, ge, gi in zip(self.n, self.m, self.g_e, self.g_i):
            w.writerow([int(n), int(m), f"{ge.real:.16e}", f"{ge.imag:.16e}",
                        f"{gi.real:.16e}", f"{gi.imag:.16e}"])
        return buf.getvalue()


def interior_from_exterior(g_e: np.ndarray, n: np.ndarray, rho: float) -> np.ndarray:
    """``g_i = -g_e rho**(|n|-1)``, valid for sources outside the shell."""
    k = np.abs(n)
    # rho**(-1) for the 3D monopole; its g_e vanishes anyway
    factor = np.where(k >= 1, safe_pow(rho, np.maximum(k - 1, 0)), 1.0 / rho)
    return -np.asarray(g_e, dtype=complex) * factor


def exterior_coefficients_2d(
    src: SourceSpec,
    cfg: StructureConfig,
    n_max: int,
    method: Literal["analytic", "fft"] = "analytic",
    n_samples: int = 4096,
) -> ModeCoefficients:
    """Fourier data of ``-dF/dr`` on the outer circle, ``0 < |n| <= n_max``.

    A unit charge at polar position ``(r0, t0)`` contributes
    ``(1 / (4 pi r_e)) (r_e / r0)**|n| exp(-i n t0)``, which is what the
    default ``"analytic"`` path sums.  ``"fft"`` samples the radial
    derivative at ``n_samples`` points and takes a discrete transform.
    """
    if cfg.dimension != 2:
        raise SourceError("exterior_coefficients_2d needs a 2D structure")
    src.check_outside(cfg)
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    rho = cfg.rho

    if not src.has_charges:
        keys = [int(k) for k in src.coeff_override]
        if any(k == 0 for k in keys):
            raise SourceError("2D coefficient override must not contain n = 0")
        top = max(abs(k) for k in keys)
        n = modes_2d(top)
        g_e = np.array([complex(src.coeff_override.get(int(k), 0.0)) for k in n])
        return ModeCoefficients(2, n, np.zeros_like(n), g_e,
                                interior_from_exterior(g_e, n, rho), rho, cfg.r_e)

    n = modes_2d(n_max)
    if method == "analytic":
        r0 = np.linalg.norm(src.positions, axis=1)
        t0 = np.arctan2(src.positions[:, 1], src.positions[:, 0])
        decay = safe_pow((cfg.r_e / r0)[None, :], np.abs(n)[:, None])
        phase = np.exp(-1j * n[:, None] * t0[None, :])
        g_e = (decay * phase) @ src.weights / (4 * np.pi * cfg.r_e)
    elif method == "fft":
        if n_samples <= 2 * n_max:
            raise ValueError("n_samples must exceed 2*n_max")
        t = 2 * np.pi * np.arange(n_samples) / n_samples
        nodes = cfg.r_e * np.stack([np.cos(t), np.sin(t)], axis=1)
        dFdr = np.einsum("pd,pd->p", newtonian_gradient(src, nodes), nodes) / cfg.r_e
        spec = np.fft.fft(dFdr) / n_samples
        g_e = -spec[n % n_samples]
    else:
        raise ValueError(f"unknown method {method!r}")
    return ModeCoefficients(2, n, np.zeros_like(n), g_e,
                            interior_from_exterior(g_e, n, rho), rho, cfg.r_e, src.min_radius())


def exterior_coefficients_3d(
    src: SourceSpec,
    cfg: StructureConfig,
    n_max: int,
    method: Literal["quadrature", "analytic"] = "quadrature",
    n_theta: Optional[int] = None,
    n_phi: Optional[int] = None,
) -> ModeCoefficients:
    """Spherical-harmonic data of ``-dF/dr`` on the outer sphere, ``n <= n_max``.

    The default projects sampled ``dF/dr`` with Gauss-Legendre nodes in
    ``cos(theta)`` and a uniform azimuthal grid (FFT over azimuth).  The
    ``"analytic"`` path uses the addition theorem for ``1/|x - p|``.
    """
    if cfg.dimension != 3:
        raise SourceError("exterior_coefficients_3d needs a 3D structure")
    src.check_outside(cfg)
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    rho = cfg.rho

    if not src.has_charges:
        keys = [tuple(int(v) for v in k) for k in src.coeff_override]
        top = max(k[0] for k in keys)
        n, m = modes_3d(top)
        lookup = {tuple(int(v) for v in k): complex(v) for k, v in src.coeff_override.items()}
        g_e = np.array([lookup.get((int(a), int(b)), 0.0) for a, b in zip(n, m)], dtype=complex)
        return ModeCoefficients(3, n, m, g_e, interior_from_exterior(g_e, n, rho), rho, cfg.r_e)

    n, m = modes_3d(n_max)
    if method == "analytic":
        r0, th0, ph0 = cart_to_sph(src.positions)
        decay = safe_pow((cfg.r_e / r0)[None, :], (n + 1)[:, None])
        y = np.conj(ylm(n, m, th0, ph0))
        g_e = (n / ((2 * n + 1) * cfg.r_e**2)) * ((decay * y) @ src.weights)
    elif method == "quadrature":
        # harmonic content of dF/dr decays like q**l; resolve it to 1e-17
        q = cfg.r_e / src.min_radius()
        L = int(math.ceil(math.log(1e-17) / math.log(q)))
        n_theta = n_theta or max(2 * (n_max + 1), n_max + L // 2 + 2)
        n_phi = n_phi or max(2 * (2 * n_max + 2), n_max + L + 2)
        if n_phi <= 2 * n_max:
            raise ValueError("n_phi must exceed 2*n_max")
        x, wx = roots_legendre(n_theta)
        theta = np.arccos(x)
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        st = np.sin(theta)[:, None]
        nodes = cfg.r_e * np.stack(
            [st * np.cos(phi)[None, :], st * np.sin(phi)[None, :],
             np.broadcast_to(x[:, None], (n_theta, n_phi))],
            axis=-1,
        )
        dFdr = np.einsum("abd,abd->ab", newtonian_gradient(src, nodes), nodes) / cfg.r_e
        # azimuthal transform: sum_j f(theta, phi_j) exp(-i m phi_j)
        fm = np.fft.fft(dFdr, axis=1) * (2 * np.pi / n_phi)
        legendre = ylm(n, m, theta, np.zeros_like(theta)).real
        g_e = -np.einsum("ka,a,ka->k", fm[:, m % n_phi].T, wx, legendre)
    else:
        raise ValueError(f"unknown method {method!r}")
    return ModeCoefficients(3, n, m, g_e, interior_from_exterior(g_e, n, rho), rho, cfg.r_e,
                            src.min_radius())


def exterior_coefficients(src: SourceSpec, cfg: StructureConfig, n_max: int, **kw) -> ModeCoefficients:
    if cfg.dimension == 2:
        return exterior_coefficients_2d(src, cfg, n_max, **kw)
    return exterior_coefficients_3d(src, cfg, n_max, **kw)


def default_n_max(src: SourceSpec, cfg: StructureConfig, tol: float = 1e-17, cap: int = 2000) -> int:
    """Smallest ``n`` with ``(r_e / r0_min)**n <= tol`` (at least 8, at most ``cap``)."""
    if not src.has_charges:
        keys = src.coeff_override.keys()
        return max(abs(int(k)) if cfg.dimension == 2 else int(k[0]) for k in keys)
    q = cfg.r_e / src.min_radius()
    if q >= 1.0:
        return cap
    return int(min(cap, max(8, math.ceil(math.log(tol) / math.log(q)))))


@dataclass(frozen=True)
class GapVerdict:
    verdict: Literal["holds-up-to-n_max", "fails", "inconclusive"]
    n: np.ndarray
    log_quotient: np.ndarray
    variant: str
    n_max: int


def gap_property_check(
    coeffs: ModeCoefficients,
    cfg: StructureConfig,
    variant: Literal["GP", "GP2"] = "GP2",
    n_max: Optional[int] = None,
    zero_floor: float = 1e-15,
) -> GapVerdict:
    """Finite-window check of the gap growth conditions.

    Evaluates ``log(rho**(c*(|n_{k+1}| - |n_k|)) |g_e^{n_k}|**2 / (|n_k| rho**(c*|n_k|)))``
    with ``c = 1`` for ``GP`` and ``c = 2`` for ``GP2`` over the modes whose
    coefficients are nonzero (``|g| > zero_floor * max|g|``).  The verdict
    only describes the computed window: growth over its second half gives
    ``"holds-up-to-n_max"``, a sequence that terminates early or decays
    over the second half gives ``"fails"``.
    """
    if coeffs.dimension != 2:
        raise SourceError("gap properties are defined for 2D coefficients")
    if variant not in ("GP", "GP2"):
        raise ValueError(f"unknown variant {variant!r}")
    c = 1 if variant == "GP" else 2
    top = coeffs.n_max if n_max is None else min(n_max, coeffs.n_max)
    k = np.arange(1, top + 1)
    mag = np.zeros(top)
    idx = {int(v): i for i, v in enumerate(coeffs.n)}
    for sign in (1, -1):
        vals = np.array([abs(coeffs.g_e[idx[int(sign * j)]]) if int(sign * j) in idx else 0.0 for j in k])
        mag = np.maximum(mag, vals)
    if not np.any(mag > 0):
        return GapVerdict("fails", np.zeros(0, int), np.zeros(0), variant, top)
    keep = mag > zero_floor * mag.max()
    nk, gk = k[keep], mag[keep]
    if len(nk) < 3:
        return GapVerdict("fails", nk, np.zeros(0), variant, top)
    log_rho = math.log(coeffs.rho)
    logq = c * np.diff(nk) * log_rho + 2 * np.log(gk[:-1]) - np.log(nk[:-1]) - c * nk[:-1] * log_rho
    tail = logq[len(logq) // 2:]
    if len(tail) >= 2 and np.all(np.diff(tail) > 0):
        verdict = "holds-up-to-n_max"
    elif nk[-1] < 0.5 * top or (len(tail) >= 2 and np.all(np.diff(tail) < 0)):
        verdict = "fails"
    else:
        verdict = "inconclusive"
    return GapVerdict(verdict, nk[:-1], logq, variant, top)
