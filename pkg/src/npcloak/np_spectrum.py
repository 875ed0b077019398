"""Closed-form spectra of the two-interface Neumann-Poincare operator.

For concentric circles or spheres every Fourier mode / spherical harmonic
is invariant under the block operator, which then reduces to a 2x2 matrix
per mode.  The matrices are assembled here from the single-layer mode
multipliers, so the eigen-equation residual checks exercise both.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from ._series import safe_pow
from .structure import StructureConfig


class JumpAmbiguityError(ValueError):
    """Normal derivative requested on the layer itself without choosing a side."""


Side = Optional[Literal["inner", "outer"]]


def _region(r: float, r0: float, side: Side, derivative: bool) -> str:
    if r < r0:
        return "inner"
    if r > r0:
        return "outer"
    if side is not None:
        return side
    if derivative:
        raise JumpAmbiguityError("derivative on the layer needs side='inner' or 'outer'")
    return "inner"


def single_layer_mode_2d(r0: float, n: int, r: float, derivative: bool = False, side: Side = None) -> float:
    """Multiplier of ``exp(i n theta)`` in ``S[exp(i n theta)]`` on a circle of radius ``r0``.

    With ``derivative=True`` the radial derivative is returned instead.
    Arc length is the layer measure, so the constant density gives
    ``r0 * log(max(r, r0))``.
    """
    if r0 <= 0 or r <= 0:
        raise ValueError("radii must be positive")
    where = _region(r, r0, side, derivative)
    k = abs(n)
    if k == 0:
        if where == "inner":
            return 0.0 if derivative else r0 * math.log(r0)
        return r0 / r if derivative else r0 * math.log(r)
    if where == "inner":
        t = float(safe_pow(r / r0, k - 1))
        return -0.5 * t if derivative else -(r0 / (2 * k)) * t * (r / r0)
    t = float(safe_pow(r0 / r, k + 1))
    return 0.5 * t if derivative else -(r0 / (2 * k)) * t * (r / r0)


def single_layer_mode_3d(r0: float, n: int, r: float, derivative: bool = False, side: Side = None) -> float:
    """Multiplier of ``Y_n^m`` in ``S[Y_n^m]`` on a sphere of radius ``r0``."""
    if n < 0:
        raise ValueError("degree must be >= 0")
    if r0 <= 0 or r <= 0:
        raise ValueError("radii must be positive")
    where = _region(r, r0, side, derivative)
    c = 1.0 / (2 * n + 1)
    if where == "inner":
        if derivative:
            return -c * n * float(safe_pow(r / r0, max(n - 1, 0))) if n else 0.0
        return -c * r0 * float(safe_pow(r / r0, n))
    if derivative:
        return c * (n + 1) * float(safe_pow(r0 / r, n + 2))
    return -c * r0 * float(safe_pow(r0 / r, n + 1))


def _np_self(single_layer, r0: float, n: int) -> float:
    # jump relation: K*[phi] = dS/dnu|_- + phi/2
    return single_layer(r0, n, r0, derivative=True, side="inner") + 0.5


def np_mode_matrix(cfg: StructureConfig, n: int) -> np.ndarray:
    """2x2 action of the block NP operator on mode ``n`` (Fourier index or degree).

    Rows/columns are (core interface, outer interface).
    """
    sl = single_layer_mode_2d if cfg.dimension == 2 else single_layer_mode_3d
    r_i, r_e = cfg.r_i, cfg.r_e
    return np.array([
        [-_np_self(sl, r_i, n), -sl(r_e, n, r_i, derivative=True)],
        [sl(r_i, n, r_e, derivative=True), _np_self(sl, r_e, n)],
    ])


@dataclass(frozen=True)
class EigenPair2D:
    """Eigenpair of mode ``n``; for ``n >= 1`` it holds for both ``exp(+-i n theta)``."""

    n: int
    sign: int
    eigenvalue: float
    eigvec: tuple[float, float]

    @property
    def multiplicity(self) -> int:
        return 1 if self.n == 0 else 2


@dataclass(frozen=True)
class EigenPair3D:
    n: int
    m: int
    sign: int
    eigenvalue: float
    eigvec: tuple[float, float]


def np_eigenpairs_2d(cfg: StructureConfig, n_max: int) -> list[EigenPair2D]:
    """Eigenvalues -1/2, 1/2 and +-rho**n/2 for ``1 <= n <= n_max``.

    The static pairs are ``-1/2 -> (1, -rho)`` and ``1/2 -> (0, 1)``.  For
    ``n >= 1`` the eigenvalue ``s * rho**n / 2`` has eigenfunction
    ``(1, s * rho)`` times ``exp(+-i n theta)``.
    """
    if cfg.dimension != 2:
        raise ValueError("np_eigenpairs_2d needs a 2D structure")
    rho = cfg.rho
    pairs = [EigenPair2D(0, -1, -0.5, (1.0, -rho)), EigenPair2D(0, 1, 0.5, (0.0, 1.0))]
    for n in range(1, n_max + 1):
        lam = 0.5 * float(safe_pow(rho, n))
        for s in (1, -1):
            pairs.append(EigenPair2D(n, s, s * lam, (1.0, s * rho)))
    return pairs


def _sphere_radicand_excess(rho: float, n: int) -> float:
    # 4 n (n+1) rho**(2n+1)
    return 4.0 * n * (n + 1) * float(safe_pow(rho, 2 * n + 1))


def np_eigenvalue_3d(rho: float, n: int, sign: int = 1) -> float:
    x = _sphere_radicand_excess(rho, n)
    return sign * math.sqrt(1.0 + x) / (2 * (2 * n + 1))


def np_eigenpairs_3d(cfg: StructureConfig, n_max: int) -> list[EigenPair3D]:
    """Eigenvalues ``+-sqrt(1 + 4n(n+1) rho**(2n+1)) / (2(2n+1))``, each ``2n+1`` times.

    Eigenvectors follow ``(s*sqrt(1+x) - 1, 2(n+1) rho**(n+2))``.  When the
    second entry underflows, the ``s = +1`` vector is rescaled to unit
    second entry so it stays nonzero.
    """
    if cfg.dimension != 3:
        raise ValueError("np_eigenpairs_3d needs a 3D structure")
    rho = cfg.rho
    pairs = []
    for n in range(n_max + 1):
        x = _sphere_radicand_excess(rho, n)
        root = math.sqrt(1.0 + x)
        b = 2 * (n + 1) * float(safe_pow(rho, n + 2))
        for s in (1, -1):
            if s == 1:
                # sqrt(1+x) - 1 without cancellation
                a = x / (root + 1.0)
                if b == 0.0:
                    a, b = n * float(safe_pow(rho, max(n - 1, 0))) / (root + 1.0), 1.0
            else:
                a = -root - 1.0
            lam = s * root / (2 * (2 * n + 1))
            for m in range(-n, n + 1):
                pairs.append(EigenPair3D(n, m, s, lam, (a, b)))
    return pairs


def eigenpairs_to_csv(pairs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dim", "n", "m", "sign", "eigenvalue", "eigvec_i", "eigvec_e"])
    for p in pairs:
        dim, m = (2, 0) if isinstance(p, EigenPair2D) else (3, p.m)
        w.writerow([dim, p.n, m, p.sign, f"{p.eigenvalue:.16e}",
                    f"{p.eigvec[0]:.16e}", f"{p.eigvec[1]:.16e}"])
    return buf.getvalue()


@dataclass(frozen=True)
class GapAsymptotics:
    n: np.ndarray
    single_surface: np.ndarray
    two_surface: np.ndarray
    quotient: np.ndarray
    constant: float
    bounded: bool


def spectral_gap_asymptotics(cfg: StructureConfig, n_max: int) -> GapAsymptotics:
    """Compare the two-interface eigenvalues with single-interface ones.

    Returns ``|mu_n - lambda_n| / rho**n`` for the positive branch, where
    ``lambda_n`` is ``1/(2(2n+1))`` on a sphere and 0 on a circle
    (``n >= 1``).  ``constant`` is the largest quotient; ``bounded`` is
    False if the quotient is still growing at the end of the window.
    """
    if n_max < 5:
        raise ValueError("n_max must be >= 5")
    rho = cfg.rho
    n = np.arange(1, n_max + 1)
    if cfg.dimension == 2:
        lam = np.zeros(n_max)
        mu = 0.5 * safe_pow(rho, n)
        # the quotient is identically 1/2; avoid 0/0 after underflow
        q = np.full(n_max, 0.5)
    else:
        lam = 1.0 / (2 * (2 * n + 1))
        x = 4.0 * n * (n + 1) * safe_pow(rho, 2 * n + 1)
        excess = lam * x / (np.sqrt(1.0 + x) + 1.0)
        mu = lam + excess
        # excess / rho**n = lam * 4n(n+1) rho**(n+1) / (sqrt(1+x) + 1)
        q = lam * 4.0 * n * (n + 1) * safe_pow(rho, n + 1) / (np.sqrt(1.0 + x) + 1.0)
    tail = q[len(q) // 2:]
    bounded = bool(np.all(np.isfinite(q)) and (len(tail) < 2 or tail[-1] <= tail.max() * (1 + 1e-12)
                                               and tail[-1] <= tail[0] * (1 + 1e-12)))
    return GapAsymptotics(n, lam, mu, q, float(q.max()), bounded)
