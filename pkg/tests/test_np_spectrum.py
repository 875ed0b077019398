import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from npcloak.np_spectrum import (
    JumpAmbiguityError,
    eigenpairs_to_csv,
    np_eigenpairs_2d,
    np_eigenpairs_3d,
    np_eigenvalue_3d,
    np_mode_matrix,
    single_layer_mode_2d,
    single_layer_mode_3d,
    spectral_gap_asymptotics,
)
from npcloak.structure import StructureConfig

CFG2 = StructureConfig(2, 1.0, 2.0, 1.0, -1.0)
CFG3 = StructureConfig(3, 1.0, 2.0, 1.0, -1.0)


def test_single_layer_2d_values():
    assert single_layer_mode_2d(2.0, 1, 1.0) == -0.5
    assert single_layer_mode_2d(2.0, -1, 1.0) == -0.5
    assert_allclose(single_layer_mode_2d(2.0, 3, 4.0), -1 / 24, rtol=1e-15)
    # arc-length measure: the constant density carries the circumference factor r0
    assert_allclose(single_layer_mode_2d(2.0, 0, 1.0), 2.0 * math.log(2.0), rtol=1e-15)
    assert_allclose(single_layer_mode_2d(2.0, 0, 3.0), 2.0 * math.log(3.0), rtol=1e-15)
    assert single_layer_mode_2d(2.0, 0, 1.0, derivative=True) == 0.0
    assert_allclose(single_layer_mode_2d(2.0, 0, 4.0, derivative=True), 0.5)


def test_single_layer_2d_matches_quadrature():
    r0, N = 1.3, 2048
    t = 2 * np.pi * np.arange(N) / N
    y = r0 * np.stack([np.cos(t), np.sin(t)], axis=1)
    for n in (0, 1, 4, -3):
        for r in (0.6, 2.1):
            x = np.array([r * np.cos(0.4), r * np.sin(0.4)])
            val = np.sum(np.log(np.linalg.norm(x - y, axis=1)) / (2 * np.pi) * np.exp(1j * n * t)) * 2 * np.pi * r0 / N
            assert_allclose(val, single_layer_mode_2d(r0, n, r) * np.exp(1j * n * 0.4), atol=1e-13)


def test_single_layer_derivative_needs_side():
    with pytest.raises(JumpAmbiguityError):
        single_layer_mode_2d(2.0, 0, 2.0, derivative=True)
    with pytest.raises(JumpAmbiguityError):
        single_layer_mode_3d(2.0, 3, 2.0, derivative=True)
    jump = (single_layer_mode_2d(2.0, 4, 2.0, True, "outer")
            - single_layer_mode_2d(2.0, 4, 2.0, True, "inner"))
    assert jump == 1.0


def test_single_layer_3d_values():
    assert single_layer_mode_3d(1.0, 0, 1.0) == -1.0
    assert_allclose(single_layer_mode_3d(2.0, 1, 4.0), -1 / 6, rtol=1e-15)
    for r0 in (0.5, 2.0):
        for n in range(6):
            assert_allclose(-single_layer_mode_3d(r0, n, r0) / (2 * r0), 1 / (2 * (2 * n + 1)), rtol=1e-15)


def test_eigenvalues_2d():
    pairs = np_eigenpairs_2d(CFG2, 3)
    vals = sorted(p.eigenvalue for p in pairs if p.n == 1)
    assert vals == [-0.25, 0.25]
    static = {p.sign: p for p in pairs if p.n == 0}
    assert static[-1].eigenvalue == -0.5 and static[-1].eigvec == (1.0, -0.5)
    assert static[1].eigenvalue == 0.5 and static[1].eigvec == (0.0, 1.0)


def test_eigenvalues_3d_closed_form():
    assert_allclose(np_eigenvalue_3d(0.5, 1), math.sqrt(2) / 6, rtol=1e-15)
    pairs = np_eigenpairs_3d(CFG3, 2)
    assert [p.eigenvalue for p in pairs if p.n == 0] == [0.5, -0.5]


@pytest.mark.parametrize("cfg", [CFG2, StructureConfig(2, 0.3, 2.0, 1.0, -1.0)])
def test_eigen_equation_residual_2d(cfg):
    for p in np_eigenpairs_2d(cfg, 25):
        M = np_mode_matrix(cfg, p.n)
        v = np.array(p.eigvec)
        assert np.linalg.norm(M @ v - p.eigenvalue * v) <= 1e-12 * np.linalg.norm(v)


@pytest.mark.parametrize("rho", [0.5, 0.9, 0.1])
def test_eigen_equation_residual_3d(rho):
    cfg = StructureConfig(3, rho, 1.0, 1.0, -1.0)
    for p in np_eigenpairs_3d(cfg, 20):
        if p.m != 0:
            continue
        M = np_mode_matrix(cfg, p.n)
        v = np.array(p.eigvec)
        assert np.linalg.norm(M @ v - p.eigenvalue * v) <= 1e-12 * np.linalg.norm(v)


def test_eigenvector_normalisation_3d():
    for p in np_eigenpairs_3d(CFG3, 6):
        root = math.sqrt(1 + 4 * p.n * (p.n + 1) * 0.5 ** (2 * p.n + 1))
        assert_allclose(p.eigvec, (p.sign * root - 1, 2 * (p.n + 1) * 0.5 ** (p.n + 2)), rtol=1e-12, atol=1e-300)


def test_multiplicity_3d():
    pairs = np_eigenpairs_3d(CFG3, 7)
    for n in range(8):
        for s in (1, -1):
            assert sum(1 for p in pairs if p.n == n and p.sign == s) == 2 * n + 1


def test_containment_and_monotone_decay():
    for pairs in (np_eigenpairs_2d(CFG2, 40), np_eigenpairs_3d(CFG3, 40)):
        lam = np.array([p.eigenvalue for p in pairs])
        assert np.all(np.abs(lam) <= 0.5)
        pos = {}
        for p in pairs:
            if p.sign == 1:
                pos[p.n] = p.eigenvalue
        seq = [pos[n] for n in sorted(pos) if n >= 1]
        assert all(b < a for a, b in zip(seq, seq[1:]))


def test_3d_equality_only_at_degree_zero():
    lam = [p.eigenvalue for p in np_eigenpairs_3d(CFG3, 10) if p.n > 0]
    assert max(abs(v) for v in lam) < 0.5


def test_3d_tail_approaches_single_sphere_values():
    for n in range(5, 40):
        excess = np_eigenvalue_3d(0.5, n) - 1 / (2 * (2 * n + 1))
        # the subtraction itself carries ~1e-17 of rounding
        assert 0 <= excess <= n * (n + 1) * 0.5 ** (2 * n + 1) / (2 * n + 1) + 1e-16
        assert excess <= n * 0.5 ** (2 * n) + 1e-16


def test_underflow_falls_back_to_single_surface():
    cfg = StructureConfig(3, 0.1, 1.0, 1.0, -1.0)
    pairs = [p for p in np_eigenpairs_3d(cfg, 400) if p.n == 400 and p.m == 0]
    assert pairs[0].eigenvalue == 1 / (2 * 801)
    assert pairs[0].eigvec[1] != 0.0
    p2 = [p for p in np_eigenpairs_2d(StructureConfig(2, 0.1, 1.0, 1.0, -1.0), 400) if p.n == 400]
    assert p2[0].eigenvalue == 0.0


def test_gap_asymptotics():
    g2 = spectral_gap_asymptotics(CFG2, 30)
    assert np.all(g2.quotient == 0.5)
    g3 = spectral_gap_asymptotics(CFG3, 30)
    assert g3.bounded and np.isfinite(g3.constant)
    tail = g3.quotient[g3.n >= 10]
    assert np.all(np.diff(tail) <= 0)
    with pytest.raises(ValueError):
        spectral_gap_asymptotics(CFG3, 4)


def test_small_rho_limit():
    for n in range(1, 6):
        assert np_eigenvalue_3d(1e-200, n) == 1 / (2 * (2 * n + 1))


def test_csv_export():
    text = eigenpairs_to_csv(np_eigenpairs_3d(CFG3, 0))
    lines = text.splitlines()
    assert lines[0] == "dim,n,m,sign,eigenvalue,eigvec_i,eigvec_e"
    assert len(lines) == 3
    assert float(lines[1].split(",")[4]) == 0.5
