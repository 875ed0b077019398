import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from npcloak.np_spectrum import np_eigenpairs_2d, np_eigenpairs_3d, np_mode_matrix
from npcloak.solver2d import energy_2d_exact, solve_2d
from npcloak.solver3d import energy_3d, solve_3d
from npcloak.sources import SourceSpec, exterior_coefficients, newtonian_gradient
from npcloak.structure import StructureConfig

SETTINGS = settings(max_examples=40, deadline=None)

rhos = st.floats(0.05, 0.95)
eps_s = st.floats(-3.0, -0.2)
eps_c = st.floats(0.2, 3.0)
deltas = st.floats(1e-8, 1.0)


@st.composite
def neutral_charges(draw, dim):
    k = draw(st.integers(2, 4))
    radius = draw(st.lists(st.floats(2.3, 6.0), min_size=k, max_size=k))
    dirs = draw(st.lists(st.lists(st.floats(-1, 1), min_size=dim, max_size=dim), min_size=k, max_size=k))
    w = np.array(draw(st.lists(st.floats(0.1, 2) | st.floats(-2, -0.1), min_size=k - 1, max_size=k - 1)))
    pos = []
    for r, d in zip(radius, dirs):
        d = np.asarray(d)
        nrm = np.linalg.norm(d)
        d = d / nrm if nrm > 1e-3 else np.eye(dim)[0]
        pos.append(r * d)
    pos = np.array(pos)
    gaps = np.linalg.norm(pos[:, None] - pos[None], axis=-1) + 10 * np.eye(k)
    assume(gaps.min() >= 0.2 and abs(w.sum()) >= 0.1)
    return SourceSpec.point_charges(pos, np.append(w, -w.sum()))


@SETTINGS
@given(rho=rhos)
def test_spectrum_contained(rho):
    for dim, pairs in ((2, np_eigenpairs_2d), (3, np_eigenpairs_3d)):
        cfg = StructureConfig(dim, rho, 1.0, 1.0, -1.0)
        lam = np.array([p.eigenvalue for p in pairs(cfg, 30)])
        assert np.all(np.abs(lam) <= 0.5)


@SETTINGS
@given(rho=rhos, n=st.integers(0, 40))
def test_eigen_residuals(rho, n):
    for dim, pairs in ((2, np_eigenpairs_2d), (3, np_eigenpairs_3d)):
        cfg = StructureConfig(dim, rho, 1.0, 1.0, -1.0)
        M = np_mode_matrix(cfg, n)
        for p in pairs(cfg, n):
            if p.n != n:
                continue
            v = np.asarray(p.eigvec)
            assert np.linalg.norm(M @ v - p.eigenvalue * v) <= 1e-12 * np.linalg.norm(v)


@SETTINGS
@given(rho=rhos, a=eps_c, b=eps_s, delta=deltas, s1=neutral_charges(2), s2=neutral_charges(2),
       c=st.floats(-3, 3))
def test_linearity_2d(rho, a, b, delta, s1, s2, c):
    cfg = StructureConfig(2, rho, 1.0, a, b, delta)
    n_max = 40
    d1, d2 = solve_2d(cfg, s1, n_max=n_max), solve_2d(cfg, s2, n_max=n_max)
    both = SourceSpec.point_charges(np.vstack([s1.positions, s2.positions]),
                                    np.concatenate([s1.weights, c * s2.weights]))
    d = solve_2d(cfg, both, n_max=n_max)
    scale = np.abs(d1.phi_e).max() + abs(c) * np.abs(d2.phi_e).max()
    assert_allclose(d.phi_e, d1.phi_e + c * d2.phi_e, atol=1e-12 * scale)
    assert_allclose(d.phi_i, d1.phi_i + c * d2.phi_i, atol=1e-12 * scale)


@SETTINGS
@given(rho=rhos, a=eps_c, b=eps_s, delta=deltas, src=neutral_charges(2), c=st.floats(0.1, 10))
def test_quadratic_scaling_2d(rho, a, b, delta, src, c):
    cfg = StructureConfig(2, rho, 1.0, a, b, delta)
    E1 = energy_2d_exact(cfg, solve_2d(cfg, src, n_max=60), tol=1.0).E_delta
    Ec = energy_2d_exact(cfg, solve_2d(cfg, src.scaled(c), n_max=60), tol=1.0).E_delta
    assert_allclose(Ec, c * c * E1, rtol=1e-12)


@settings(max_examples=15, deadline=None)
@given(rho=rhos, delta=deltas, src=neutral_charges(3), c=st.floats(0.1, 10))
def test_quadratic_scaling_3d(rho, delta, src, c):
    cfg = StructureConfig(3, rho, 1.0, 1.0, -1.0, delta)
    E1 = energy_3d(cfg, solve_3d(cfg, src, n_max=12), tol=1.0).E_delta
    Ec = energy_3d(cfg, solve_3d(cfg, src.scaled(c), n_max=12), tol=1.0).E_delta
    assert_allclose(Ec, c * c * E1, rtol=1e-12)


@SETTINGS
@given(rho=rhos, src=neutral_charges(2))
def test_interior_data_exact(rho, src):
    # interior data from the Newtonian field sampled on the inner circle
    cfg = StructureConfig(2, rho, 1.0, 1.0, -1.0)
    N, n_max = 1024, 30
    c = exterior_coefficients(src, cfg, n_max)
    t = 2 * np.pi * np.arange(N) / N
    nodes = cfg.r_i * np.stack([np.cos(t), np.sin(t)], axis=1)
    dFdr = np.einsum("pd,pd->p", newtonian_gradient(src, nodes), nodes) / cfg.r_i
    spec = np.fft.fft(dFdr) / N
    ref = spec[c.n % N]
    assert_allclose(c.g_i, ref, atol=1e-12 * np.abs(ref).max())


@SETTINGS
@given(src=neutral_charges(2))
def test_hermitian_symmetry_2d(src):
    cfg = StructureConfig(2, 0.5, 1.0, 1.0, -1.0)
    c = exterior_coefficients(src, cfg, 20)
    lut = dict(zip(c.n.tolist(), c.g_e))
    for n in range(1, 21):
        assert lut[-n] == np.conj(lut[n])


@settings(max_examples=15, deadline=None)
@given(src=neutral_charges(3))
def test_hermitian_symmetry_3d(src):
    cfg = StructureConfig(3, 0.5, 1.0, 1.0, -1.0)
    c = exterior_coefficients(src, cfg, 8)
    lut = {(int(n), int(m)): g for n, m, g in zip(c.n, c.m, c.g_e)}
    scale = np.abs(c.g_e).max()
    for (n, m), g in lut.items():
        assert abs(lut[(n, -m)] - (-1) ** m * np.conj(g)) <= 1e-12 * scale
