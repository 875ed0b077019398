"""Shared numerical helpers: underflow-safe powers, mode layouts, spherical harmonics."""

from __future__ import annotations

import numpy as np
from scipy.special import sph_legendre_p_all

# below this a power is flushed to exact zero
TINY = 1e-300
_LOG_TINY = np.log(TINY)


def safe_pow(base, k):
    """``base**k`` for ``0 <= base`` evaluated in log space.

    Results smaller than 1e-300 are returned as exact zeros so that long
    mode sums never pick up denormal noise.  ``base**0`` is 1.
    """
    base = np.asarray(base, dtype=float)
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore"):
        logs = k * np.log(base)
    logs = np.where(k == 0, 0.0, logs)
    out = np.exp(np.minimum(logs, 700.0))
    return np.where(logs < _LOG_TINY, 0.0, out)


def modes_2d(n_max: int) -> np.ndarray:
    """Signed Fourier indices in ascending ``|n|`` order: 1, -1, 2, -2, ..."""
    k = np.arange(1, n_max + 1)
    return np.stack([k, -k], axis=1).ravel()


def modes_3d(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Degree/order pairs ordered by degree, then order from -n to n."""
    n = np.concatenate([np.full(2 * d + 1, d) for d in range(n_max + 1)])
    m = np.concatenate([np.arange(-d, d + 1) for d in range(n_max + 1)])
    return n, m


def cart_to_sph(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return radius, polar angle and azimuth of points ``x`` (shape (..., 3))."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    safe_r = np.where(r > 0, r, 1.0)
    theta = np.arccos(np.clip(x[..., 2] / safe_r, -1.0, 1.0))
    phi = np.arctan2(x[..., 1], x[..., 0])
    return r, theta, phi


def ylm(n: np.ndarray, m: np.ndarray, theta, phi) -> np.ndarray:
    """Orthonormal complex harmonics with Condon-Shortley phase.

    Returns an array of shape ``(len(n), *theta.shape)``.  All needed
    associated Legendre functions come from one recurrence call.
    """
    n = np.asarray(n).ravel()
    m = np.asarray(m).ravel()
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    top = int(n.max()) if len(n) else 0
    # shape (top+1, 2*top+1, *theta.shape); negative orders wrap around
    P = sph_legendre_p_all(top, top, theta)[0]
    extra = (1,) * theta.ndim
    return P[n, m] * np.exp(1j * m.reshape(-1, *extra) * phi[None])
