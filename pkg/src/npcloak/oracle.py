"""Brute-force verifiers that use no per-mode closed forms.

* a Nystrom discretization of the two-circle block operator (trapezoid rule
  on uniform nodes) with dense eigen- and linear solves,
* Funk-Hecke projections of the sphere-sphere kernels onto Legendre
  polynomials, giving the 3D per-degree matrices by quadrature,
* tensor-product quadrature of the shell energy with finite-difference
  gradients, and finite-difference checks of the transmission conditions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy.special import eval_legendre, roots_jacobi, roots_legendre

from ._series import ylm
from .common import AccuracyWarning
from .sources import SourceSpec, newtonian_gradient, newtonian_potential
from .structure import StructureConfig, contrast_parameters

Evaluator = Callable[[np.ndarray], np.ndarray]


class OracleAccuracyError(ValueError):
    """Discretization too coarse to be trusted."""


class ResolutionError(RuntimeError):
    """Two quadrature resolutions disagree beyond the tolerance."""


@dataclass(frozen=True, eq=False)
class NystromSystem:
    """Uniform nodes on both circles and the dense block-operator matrix.

    ``K`` is the discretized block operator (core nodes first); the full
    system matrix at loss ``cfg.delta`` is ``diag(z_i, ..., z_e, ...) + K``.
    """

    cfg: StructureConfig
    n_nodes: int
    nodes_i: np.ndarray
    nodes_e: np.ndarray
    weights_i: np.ndarray
    weights_e: np.ndarray
    K: np.ndarray

    def system_matrix(self, cfg: StructureConfig | None = None) -> np.ndarray:
        z = contrast_parameters(cfg or self.cfg)
        diag = np.concatenate([np.full(self.n_nodes, z.z_i), np.full(self.n_nodes, z.z_e)])
        return np.diag(diag) + self.K


def _circle(r0: float, n: int):
    t = 2 * np.pi * np.arange(n) / n
    return r0 * np.stack([np.cos(t), np.sin(t)], axis=1), np.full(n, 2 * np.pi * r0 / n)


def _normal_kernel(x: np.ndarray, y: np.ndarray, wy: np.ndarray) -> np.ndarray:
    """``d/dnu_x G(x - y) * w_y`` for outward radial normals at ``x``."""
    diff = x[:, None, :] - y[None, :, :]
    nu = x / np.linalg.norm(x, axis=1, keepdims=True)
    num = np.einsum("xyd,xd->xy", diff, nu)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = num / (2 * np.pi * np.einsum("xyd,xyd->xy", diff, diff))
    return k * wy[None, :]


def build_np_matrix_2d(cfg: StructureConfig, nodes_per_circle: int = 256) -> NystromSystem:
    """Dense Nystrom matrix of the block operator on two concentric circles.

    The self-interaction diagonal uses the circle limit of the kernel,
    ``1/(4 pi r0)`` (the kernel is constant on a circle).
    """
    N = int(nodes_per_circle)
    if cfg.dimension != 2:
        raise ValueError("build_np_matrix_2d needs a 2D structure")
    if N < 64 or N & (N - 1):
        raise OracleAccuracyError(f"nodes_per_circle must be a power of two >= 64, got {N}")
    xi, wi = _circle(cfg.r_i, N)
    xe, we = _circle(cfg.r_e, N)
    blocks = {}
    for name, x, y, wy, r0 in (("ii", xi, xi, wi, cfg.r_i), ("ee", xe, xe, we, cfg.r_e)):
        k = _normal_kernel(x, y, wy)
        np.fill_diagonal(k, wy[0] / (4 * np.pi * r0))
        blocks[name] = k
    blocks["ie"] = _normal_kernel(xi, xe, we)
    blocks["ei"] = _normal_kernel(xe, xi, wi)
    K = np.block([[-blocks["ii"], -blocks["ie"]], [blocks["ei"], blocks["ee"]]])
    return NystromSystem(cfg, N, xi, xe, wi, we, K)


def np_matrix_spectrum(sys: NystromSystem, k: int, ghost_band: float = 0.25,
                       ghost_fraction: float = 0.5) -> np.ndarray:
    """The ``k`` largest-magnitude eigenvalues of the discretized block operator.

    Eigenvectors whose Fourier content on the two circles puts more than
    ``ghost_fraction`` of the energy at frequencies above ``ghost_band * N``
    are discretization ghosts and are dropped.  Ties in magnitude are
    ordered by value.
    """
    vals, vecs = np.linalg.eig(sys.K)
    N = sys.n_nodes
    freq = np.abs(np.fft.fftfreq(N, 1.0 / N))
    high = freq > ghost_band * N
    spec = np.abs(np.fft.fft(vecs[:N], axis=0)) ** 2 + np.abs(np.fft.fft(vecs[N:], axis=0)) ** 2
    frac = spec[high].sum(axis=0) / spec.sum(axis=0)
    keep = frac <= ghost_fraction
    lam = np.real_if_close(vals[keep], tol=1e6)
    lam = np.real(lam)
    order = np.lexsort((-lam, -np.round(np.abs(lam), 12)))
    return lam[order][:k]


@dataclass(frozen=True, eq=False)
class BruteForceSolution:
    sys: NystromSystem
    cfg: StructureConfig
    src: SourceSpec
    phi_i: np.ndarray
    phi_e: np.ndarray
    condition: float

    def scattered(self, x) -> np.ndarray:
        """Trapezoid-rule single-layer potentials (accurate away from the circles)."""
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1, 2)
        out = np.zeros(len(pts), dtype=complex)
        for y, w, phi in ((self.sys.nodes_i, self.sys.weights_i, self.phi_i),
                          (self.sys.nodes_e, self.sys.weights_e, self.phi_e)):
            d = np.linalg.norm(pts[:, None, :] - y[None, :, :], axis=-1)
            out += (np.log(d) / (2 * np.pi)) @ (w * phi)
        return out.reshape(x.shape[:-1])

    def potential(self, x) -> np.ndarray:
        return self.scattered(x) + newtonian_potential(self.src, np.asarray(x, dtype=float))


def brute_force_solve_2d(cfg: StructureConfig, src: SourceSpec, sys: NystromSystem) -> BruteForceSolution:
    """Dense solve of the discretized integral equations at ``cfg.delta``.

    Data are normal derivatives of the Newtonian potential sampled at the
    nodes.  A condition-number estimate above 1e12 is reported with an
    ``AccuracyWarning``.
    """
    if cfg.delta <= 0:
        raise ValueError("brute-force solve needs delta > 0")
    src.check_outside(cfg)
    N = sys.n_nodes
    gi = np.einsum("pd,pd->p", newtonian_gradient(src, sys.nodes_i), sys.nodes_i) / cfg.r_i
    ge = -np.einsum("pd,pd->p", newtonian_gradient(src, sys.nodes_e), sys.nodes_e) / cfg.r_e
    A = sys.system_matrix(cfg)
    cond = float(np.linalg.cond(A))
    if cond > 1e12:
        warnings.warn(f"Nystrom system condition number {cond:.2e} > 1e12; "
                      "oracle results are not trustworthy", AccuracyWarning, stacklevel=2)
    phi = np.linalg.solve(A, np.concatenate([gi, ge]).astype(complex))
    return BruteForceSolution(sys, cfg, src, phi[:N], phi[N:], cond)


def _kernel_3d(a: float, b: float, t: np.ndarray) -> np.ndarray:
    # d/dnu_x G(x - y), |x| = a, |y| = b, cos(angle) = t
    return (a - b * t) / (4 * np.pi * (a * a + b * b - 2 * a * b * t) ** 1.5)


def projected_mode_matrix_3d(cfg: StructureConfig, n: int, n_quad: int = 200) -> np.ndarray:
    """Per-degree 2x2 block-operator matrix from Funk-Hecke quadrature.

    A zonal kernel ``k(x . y)`` maps ``Y_n^m`` on a sphere of radius ``b``
    to ``b**2 2 pi int k(t) P_n(t) dt Y_n^m``.  The same-sphere integrals
    carry a ``(1 - t)**-1/2`` singularity handled by Gauss-Jacobi nodes.
    """
    if cfg.dimension != 3:
        raise ValueError("projected_mode_matrix_3d needs a 3D structure")
    tj, wj = roots_jacobi(n_quad, -0.5, 0.0)
    tl, wl = roots_legendre(n_quad)

    def same(r0):
        smooth = (1 - tj) ** 0.5 * _kernel_3d(r0, r0, tj)
        return r0 * r0 * 2 * np.pi * np.sum(wj * smooth * eval_legendre(n, tj))

    def cross(a, b):
        return b * b * 2 * np.pi * np.sum(wl * _kernel_3d(a, b, tl) * eval_legendre(n, tl))

    r_i, r_e = cfg.r_i, cfg.r_e
    return np.array([[-same(r_i), -cross(r_i, r_e)], [cross(r_e, r_i), same(r_e)]])


def sphere_projection_entry(cfg: StructureConfig, n: int, m: int,
                            block: Literal["ie", "ei"], n_theta: int = 48) -> complex:
    """Off-diagonal operator entry from a full two-sphere product quadrature.

    Applies the cross-sphere kernel to ``Y_n^m`` sampled on one sphere and
    projects the result onto ``Y_n^m`` on the other, both with
    Gauss-Legendre x uniform-azimuth grids.  Independent of ``m`` when the
    operator is rotation invariant.
    """
    a, b = (cfg.r_i, cfg.r_e) if block == "ie" else (cfg.r_e, cfg.r_i)
    x, wx = roots_legendre(n_theta)
    n_phi = 2 * n_theta
    theta = np.arccos(x)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    T, P = np.meshgrid(theta, phi, indexing="ij")
    w = np.outer(wx, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
    u = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1).reshape(-1, 3)
    y = ylm(np.array([n]), np.array([m]), T, P)[0].ravel()
    t = np.clip(u @ u.T, -1.0, 1.0)
    applied = (_kernel_3d(a, b, t) * (b * b * w)[None, :]) @ y
    return complex(np.sum(w * np.conj(y) * applied))


def _fd_gradient(evaluator: Evaluator, pts: np.ndarray, h: float) -> np.ndarray:
    d = pts.shape[-1]
    grads = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        grads.append((evaluator(pts + e) - evaluator(pts - e)) / (2 * h))
    return np.stack(grads, axis=-1)


def _shell_energy_once(cfg, evaluator, n_r, n_ang, h):
    x, wx = roots_legendre(n_r)
    r = 0.5 * (cfg.r_e - cfg.r_i) * x + 0.5 * (cfg.r_e + cfg.r_i)
    wr = 0.5 * (cfg.r_e - cfg.r_i) * wx
    if cfg.dimension == 2:
        t = 2 * np.pi * np.arange(n_ang) / n_ang
        R, T = np.meshgrid(r, t, indexing="ij")
        pts = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
        w = (np.outer(wr * r, np.full(n_ang, 2 * np.pi / n_ang))).ravel()
    else:
        c, wc = roots_legendre(n_ang)
        n_phi = 2 * n_ang
        p = 2 * np.pi * np.arange(n_phi) / n_phi
        R, C, P = np.meshgrid(r, c, p, indexing="ij")
        S = np.sqrt(1 - C * C)
        pts = np.stack([R * S * np.cos(P), R * S * np.sin(P), R * C], axis=-1).reshape(-1, 3)
        w = (wr * r * r)[:, None, None] * wc[None, :, None] * np.full(n_phi, 2 * np.pi / n_phi)
        w = w.ravel()
    g = _fd_gradient(evaluator, pts, h)
    return cfg.delta * float(np.sum(w * np.sum(np.abs(g) ** 2, axis=-1)))


def quadrature_energy(cfg: StructureConfig, evaluator: Evaluator, radial_nodes: int = 32,
                      angular_nodes: int = 128, rtol: float = 1e-6, h: float | None = None) -> float:
    """``delta * int_shell |grad V|**2`` by Gauss-Legendre x trapezoid/Gauss quadrature.

    Gradients are central differences with step ``1e-6 r_i``.  The integral
    is repeated with both node counts doubled; a relative change above
    ``rtol`` raises ``ResolutionError``.  Returns the finer value.
    """
    h = 1e-6 * cfg.r_i if h is None else h
    coarse = _shell_energy_once(cfg, evaluator, radial_nodes, angular_nodes, h)
    fine = _shell_energy_once(cfg, evaluator, 2 * radial_nodes, 2 * angular_nodes, h)
    scale = max(abs(fine), 1e-300)
    if abs(fine - coarse) > rtol * scale and fine != 0.0:
        raise ResolutionError(f"quadrature energy changed by {abs(fine - coarse) / scale:.2e} "
                              f"on refinement (tolerance {rtol:g})")
    return fine


def boundary_directions(dimension: int, n_samples: int) -> np.ndarray:
    """Uniform angles on the circle, or a Fibonacci lattice on the sphere."""
    k = np.arange(n_samples)
    if dimension == 2:
        t = 2 * np.pi * (k + 0.5) / n_samples
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    z = 1 - (2 * k + 1) / n_samples
    ang = k * np.pi * (3 - np.sqrt(5))
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(ang), s * np.sin(ang), z], axis=1)


# fourth-order one-sided first-derivative stencil
_STENCIL = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


def _one_sided(evaluator, pts, u, h, direction):
    vals = [evaluator(pts + direction * j * h * u) for j in range(5)]
    return direction * sum(c * v for c, v in zip(_STENCIL, vals)) / h


def transmission_residual(cfg: StructureConfig, evaluator: Evaluator,
                          boundary: Literal["inner", "outer"], n_samples: int = 128,
                          h: float | None = None, floor: float = 1e-3) -> float:
    """Largest relative mismatch of the flux condition across one interface.

    Normal derivatives come from one-sided fourth-order differences with
    step ``h`` (default ``1e-4 r_i``).  Each sample's mismatch is divided
    by ``|lhs| + |rhs| + floor * max_samples(|lhs| + |rhs|)`` so that
    points where the flux nearly vanishes do not dominate.
    """
    h = 1e-4 * cfg.r_i if h is None else h
    u = boundary_directions(cfg.dimension, n_samples)
    eps_s = cfg.eps_s + 1j * cfg.delta
    if boundary == "inner":
        r0, eps_in, eps_out = cfg.r_i, cfg.eps_c, eps_s
    elif boundary == "outer":
        r0, eps_in, eps_out = cfg.r_e, eps_s, 1.0
    else:
        raise ValueError(f"boundary must be 'inner' or 'outer', got {boundary!r}")
    pts = r0 * u
    lhs = eps_in * _one_sided(evaluator, pts, u, h, -1.0)
    rhs = eps_out * _one_sided(evaluator, pts, u, h, 1.0)
    size = np.abs(lhs) + np.abs(rhs)
    return float(np.max(np.abs(lhs - rhs) / (size + floor * size.max() + 1e-300)))


def value_jump(cfg: StructureConfig, evaluator: Evaluator, boundary: Literal["inner", "outer"],
               n_samples: int = 128, h: float | None = None) -> float:
    """Largest relative jump of ``V`` across an interface, from one-sided extrapolation."""
    h = 1e-4 * cfg.r_i if h is None else h
    u = boundary_directions(cfg.dimension, n_samples)
    r0 = cfg.r_i if boundary == "inner" else cfg.r_e
    # cubic extrapolation to the interface from each side
    coef = np.array([4.0, -6.0, 4.0, -1.0])
    sides = []
    for direction in (-1.0, 1.0):
        vals = [evaluator(r0 * u + direction * j * h * u) for j in range(1, 5)]
        sides.append(sum(c * v for c, v in zip(coef, vals)))
    scale = np.max(np.abs(sides[0])) + 1e-300
    return float(np.max(np.abs(sides[0] - sides[1])) / scale)
