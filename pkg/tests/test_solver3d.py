import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from npcloak.common import ResonanceError
from npcloak.np_spectrum import np_mode_matrix
from npcloak.oracle import quadrature_energy, transmission_residual, value_jump
from npcloak.solver2d import energy_via_source_identity
from npcloak.solver3d import (
    delta_n,
    density_norms_3d,
    energy_3d,
    energy_3d_surrogate,
    potential_3d,
    solve_3d,
    solve_mode_3d,
)
from npcloak.sources import SourceSpec
from npcloak.structure import ContrastPair, StructureConfig, contrast_parameters


def _system(cfg, n):
    z = contrast_parameters(cfg)
    return np.diag([z.z_i, z.z_e]) + np_mode_matrix(cfg, n)


def test_delta_degree_zero():
    z = ContrastPair(0.1 + 0.2j, -0.3 + 0.05j)
    assert_allclose(delta_n(z, 0.5, 0), (z.z_i - 0.5) * (z.z_e + 0.5), rtol=1e-15)


def test_delta_small_rho_limit():
    z = ContrastPair(0.1 + 0.2j, -0.3 + 0.05j)
    for n in range(1, 8):
        a = 1 / (2 * (2 * n + 1))
        assert delta_n(z, 1e-200, n) == (z.z_i - a) * (z.z_e + a)


def test_delta_is_determinant_of_mode_system():
    cfg = StructureConfig(3, 1.0, 2.0, 2.0, -0.7, 1e-2)
    z = contrast_parameters(cfg)
    for n in range(0, 12):
        assert_allclose(delta_n(z, cfg.rho, n), np.linalg.det(_system(cfg, n)), rtol=1e-12)


def test_delta_size_with_fitted_constant():
    n = np.arange(1, 51)
    ratios = []
    for delta in (1e-2, 1e-4):
        z = contrast_parameters(StructureConfig(3, 1.0, 2.0, 1.0, -1.0, delta))
        ratios.append(np.abs(delta_n(z, 0.5, n)) / (delta**2 + n**-2.0))
    ratios = np.concatenate(ratios)
    kappa = math.exp(np.mean(np.log(ratios)))
    assert np.all(ratios / kappa <= 4) and np.all(ratios / kappa >= 0.25)
    # leading behaviour (delta^2 + n^-2)/16
    assert_allclose(kappa, 1 / 16, rtol=0.2)


def test_mode_solve_zero_data():
    z = ContrastPair(0.1j, 0.1j)
    assert solve_mode_3d(z, 0.5, 3, 1, 0.0) == (0, 0)


def test_mode_solve_back_substitution(rng):
    for delta in (1e-1, 1e-3, 1e-8):
        cfg = StructureConfig(3, 1.0, 2.0, 1.5, -1.2, delta)
        z = contrast_parameters(cfg)
        for n in range(1, 15):
            g = complex(*rng.normal(size=2))
            phi = np.array(solve_mode_3d(z, cfg.rho, n, 0, g))
            rhs = np.array([-g * cfg.rho ** (n - 1), g])
            A = _system(cfg, n)
            assert np.linalg.norm(A @ phi - rhs) <= 1e-13 * np.linalg.norm(A) * np.linalg.norm(phi)


def test_mode_solve_matches_dense_solve(rng):
    for _ in range(40):
        cfg = StructureConfig(3, rng.uniform(0.1, 0.9), 1.0, rng.uniform(0.2, 3), -rng.uniform(0.2, 3),
                              rng.uniform(1e-6, 1))
        n = int(rng.integers(1, 25))
        g = complex(*rng.normal(size=2))
        phi = solve_mode_3d(contrast_parameters(cfg), cfg.rho, n, 0, g)
        ref = np.linalg.solve(_system(cfg, n), [-g * cfg.rho ** (n - 1), g])
        assert_allclose(phi, ref, rtol=1e-13, atol=1e-13 * np.abs(ref).max())


def test_mode_solve_singular_raises():
    n, rho = 2, 0.5
    a = 1 / 10
    coupling = n * (n + 1) * rho ** 5 / 25
    z = ContrastPair(a + 0.5, -a + coupling / 0.5)
    with pytest.raises(ResonanceError):
        solve_mode_3d(z, rho, n, 0, 1.0)


def test_transmission_conditions(cfg3, dipole3):
    d = solve_3d(cfg3, dipole3)
    ev = lambda p: potential_3d(cfg3, dipole3, d, p)  # noqa: E731
    for bd in ("inner", "outer"):
        assert transmission_residual(cfg3, ev, bd, n_samples=128) <= 1e-8
        assert value_jump(cfg3, ev, bd) <= 1e-10


def test_far_field_decay(cfg3, charges3):
    d = solve_3d(cfg3, charges3)
    u = np.array([0.2, -0.5, 0.8])
    v = [abs(potential_3d(cfg3, charges3, d, r * u)) for r in (1e2, 1e3)]
    assert v[1] < 0.2 * v[0]


def test_axisymmetric_field(cfg3, dipole3):
    d = solve_3d(cfg3, dipole3)
    phi = 2 * np.pi * np.arange(16) / 16
    for r in (0.7, 1.5, 2.6):
        th = 1.1
        x = r * np.stack([np.sin(th) * np.cos(phi), np.sin(th) * np.sin(phi), np.full(16, np.cos(th))], axis=1)
        v = potential_3d(cfg3, dipole3, d, x)
        assert np.ptp(v.real) <= 1e-12 * np.abs(v).max() + 1e-15
        assert np.ptp(v.imag) <= 1e-12 * np.abs(v).max() + 1e-15


@pytest.mark.parametrize("eps", [(1.0, -1.0), (2.0, -1.0), (3.0, -0.5)])
def test_energy_identity(eps, charges3):
    cfg = StructureConfig(3, 1.0, 2.0, eps[0], eps[1], 1e-3)
    d = solve_3d(cfg, charges3)
    assert_allclose(energy_via_source_identity(cfg, charges3, d), energy_3d(cfg, d).E_delta, rtol=1e-8)


def test_energy_matches_quadrature():
    cfg = StructureConfig(3, 1.0, 2.0, 1.0, -1.0, 1e-3)
    src = SourceSpec.dipole(3, 8.0, direction=[0.3, 0.1, 1.0])
    d = solve_3d(cfg, src, n_max=14)
    E = energy_3d(cfg, d, tol=1e-7).E_delta
    Eq = quadrature_energy(cfg, lambda p: potential_3d(cfg, src, d, p), 12, 20)
    assert_allclose(Eq, E, rtol=1e-6)


def test_zero_source():
    cfg = StructureConfig(3, 1.0, 2.0, 1.0, -1.0, 1e-3)
    d = solve_3d(cfg, SourceSpec.from_coefficients(3, {(1, 0): 0.0}))
    assert energy_3d(cfg, d).E_delta == 0.0


def test_quadratic_scaling(cfg3, charges3):
    E1 = energy_3d(cfg3, solve_3d(cfg3, charges3)).E_delta
    E3 = energy_3d(cfg3, solve_3d(cfg3, charges3.scaled(3.0))).E_delta
    assert_allclose(E3, 9 * E1, rtol=1e-12)


def test_density_norms_and_surrogate(cfg3, dipole3):
    d = solve_3d(cfg3, dipole3)
    ni, ne = density_norms_3d(cfg3, d)
    assert ni > 0 and ne > 0
    assert_allclose(energy_3d_surrogate(cfg3, d), ni + ne)


def test_norms_follow_parseval(cfg3, dipole3):
    # ||sum phi_nm Y_nm||^2 on a sphere of radius R is R^2 sum |phi_nm|^2
    d = solve_3d(cfg3, dipole3, n_max=10)
    from scipy.special import roots_legendre

    from npcloak._series import ylm
    x, w = roots_legendre(24)
    ph = 2 * np.pi * np.arange(48) / 48
    T, P = np.meshgrid(np.arccos(x), ph, indexing="ij")
    f = np.einsum("k,kab->ab", d.phi_i, ylm(d.n, d.m, T, P))
    quad = cfg3.r_i**2 * np.sum(np.abs(f) ** 2 * w[:, None]) * 2 * np.pi / 48
    assert_allclose(cfg3.delta * quad, density_norms_3d(cfg3, d)[0], rtol=1e-12)
