import numpy as np
import pytest
from math import comb

from heisenlab.errors import QuadratureOverflow
from heisenlab.fock import (
    FockSpace,
    coeff1d_gh,
    coeff1d_laguerre,
    dxi_matrix,
    h_lambda,
    hermite_functions,
    homomorphism_residual,
    ladder,
    level_mask,
    pi_matrix,
    pi_of_generator,
    spectral_projector,
    xi_matrix,
)
from heisenlab.group import GroupPoint, adapted_basis, group_inv, group_mul, heisenberg

H1 = heisenberg(1)
CF1 = adapted_basis(H1, [1.0])


def test_space_dim_and_ordering():
    for d, N in [(1, 6), (2, 5), (3, 4)]:
        sp = FockSpace(d, N)
        assert sp.dim == comb(N + d, d)
        # bijection
        assert len({tuple(a) for a in sp.indices}) == sp.dim
        for r, a in enumerate(sp.indices):
            assert sp.rank(a) == r
        # graded
        assert np.all(np.diff(sp.levels) >= 0)


def test_pi_matrix_identity_and_central():
    sp = FockSpace(1, 8)
    M = pi_matrix(CF1, H1.identity(), sp).entries
    assert np.max(np.abs(M - np.eye(sp.dim))) < 1e-12
    xc = H1.point(0.0, 0.0, 0.7)
    M = pi_matrix(CF1, xc, sp).entries
    assert np.max(np.abs(M - np.exp(0.7j) * np.eye(sp.dim))) < 1e-12


def dense_projection_oracle(cf, x, space, nmax, ngrid=6001, half=14.0):
    """Expand xi -> pi_x h_0 on the first Hermite functions by trapezoid."""
    from heisenlab.group import coords_pqz

    pc, qc, z = coords_pqz(cf, x)
    xi = np.linspace(-half, half, ngrid)
    rt = np.sqrt(cf.norm)
    f = (np.exp(1j * (cf.lam_of_z(z) + 0.5 * cf.norm * pc[0] * qc[0]
                      + rt * xi * qc[0]))
         * hermite_functions(0, xi + rt * pc[0])[:, 0])
    hb = hermite_functions(nmax, xi)
    return np.trapezoid(f[:, None] * hb, xi, axis=0)


def test_pi_matrix_column_against_dense_grid_oracle():
    sp = FockSpace(1, 6)
    x = H1.point(1.0, 0.0, 0.0)  # Exp(P_1), lambda = 1
    M = pi_matrix(CF1, x, sp).entries
    col = dense_projection_oracle(CF1, x, sp, sp.N)
    assert np.max(np.abs(M[:, 0] - col)) < 1e-8
    # also a generic point with all phases active
    y = H1.point(0.6, -0.8, 0.3)
    M = pi_matrix(CF1, y, sp).entries
    col = dense_projection_oracle(CF1, y, sp, sp.N)
    assert np.max(np.abs(M[:, 0] - col)) < 1e-8


def test_gh_and_laguerre_engines_agree():
    rng = np.random.default_rng(10)
    s = rng.uniform(-2.0, 2.0, size=8)
    th = rng.uniform(-2.0, 2.0, size=8)
    a = coeff1d_gh(s, th, 10, 2 * 11 + 20)
    b = coeff1d_laguerre(s, th, 10)
    assert np.max(np.abs(a - b)) < 1e-11


def test_laguerre_engine_large_arguments_decay():
    m = coeff1d_laguerre(np.array([30.0]), np.array([12.0]), 6)
    assert np.all(np.isfinite(m))
    assert np.max(np.abs(m)) < 1e-40
    m = coeff1d_laguerre(np.array([60.0]), np.array([0.0]), 6)
    assert np.max(np.abs(m)) == 0.0


def test_quadrature_envelope_guard():
    sp = FockSpace(1, 6)
    with pytest.raises(QuadratureOverflow):
        pi_matrix(CF1, H1.point(40.0, 0.0, 0.0), sp)


def test_unitarity_on_interior_block():
    sp = FockSpace(1, 12)
    rng = np.random.default_rng(11)
    blk = level_mask(sp, sp.N - 4)
    for _ in range(5):
        x = GroupPoint(0.35 * rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 1))
        M = pi_matrix(CF1, x, sp).entries
        v = rng.standard_normal(sp.dim) + 1j * rng.standard_normal(sp.dim)
        v[~blk] = 0.0
        assert abs(np.linalg.norm(M @ v) / np.linalg.norm(v) - 1.0) < 1e-6


def test_unitarity_defect_small_x_tight_block():
    # |zeta|^2 small: M*M - I below 1e-8 on |alpha| <= N-2
    sp = FockSpace(1, 12)
    x = H1.point(0.015, 0.012, 0.2)
    M = pi_matrix(CF1, x, sp).entries
    blk = level_mask(sp, sp.N - 2)
    D = (M.conj().T @ M - np.eye(sp.dim))[np.ix_(blk, blk)]
    assert np.linalg.norm(D, 2) < 1e-8


def test_inverse_is_adjoint_on_interior():
    sp = FockSpace(1, 12)
    x = H1.point(0.3, -0.2, 0.5)
    M = pi_matrix(CF1, x, sp).entries
    Minv = pi_matrix(CF1, group_inv(H1, x), sp).entries
    blk = level_mask(sp, sp.N - 4)
    D = (Minv - M.conj().T)[np.ix_(blk, blk)]
    assert np.linalg.norm(D, 2) < 1e-6


def test_homomorphism_residual():
    sp = FockSpace(1, 10)
    assert homomorphism_residual(CF1, H1.point(0.4, 0.1, 0.0), H1.identity(), sp) < 1e-12
    a = H1.point(0.0, 0.0, 0.3)
    b = H1.point(0.0, 0.0, -0.8)
    assert homomorphism_residual(CF1, a, b, sp) < 1e-12
    rng = np.random.default_rng(12)
    x = GroupPoint(0.4 * rng.standard_normal(2), 0.3 * rng.standard_normal(1))
    y = GroupPoint(0.4 * rng.standard_normal(2), 0.3 * rng.standard_normal(1))
    r8 = homomorphism_residual(CF1, x, y, FockSpace(1, 8), block_level=4)
    r16 = homomorphism_residual(CF1, x, y, FockSpace(1, 16), block_level=4)
    assert r16 < r8


def test_covariance_relation():
    sp = FockSpace(1, 14)
    p, q = 0.3, 0.25
    cf = adapted_basis(H1, [1.7])
    ep = GroupPoint(p * cf.P_basis[:, 0], np.zeros(1))
    eq = GroupPoint(q * cf.Q_basis[:, 0], np.zeros(1))
    Mp = pi_matrix(cf, ep, sp).entries
    Mq = pi_matrix(cf, eq, sp).entries
    Mpi = pi_matrix(cf, group_inv(H1, ep), sp).entries
    Mqi = pi_matrix(cf, group_inv(H1, eq), sp).entries
    # the 4-fold product leaks deeper than a single matrix: use margin 6
    blk = level_mask(sp, sp.N - 6)
    C = (Mp @ Mq @ Mpi @ Mqi)[np.ix_(blk, blk)]
    target = np.exp(1j * cf.norm * p * q) * np.eye(sp.dim)[np.ix_(blk, blk)]
    assert np.linalg.norm(C - target, 2) < 1e-6


def test_h_lambda_spectrum():
    sp = FockSpace(1, 2)
    cf = adapted_basis(H1, [2.0])
    H = h_lambda(cf, sp).entries
    assert np.allclose(np.diag(H).real, [2.0, 6.0, 10.0])
    # d=2 multiplicities at lambda = 1
    g2 = heisenberg(2)
    cf2 = adapted_basis(g2, [1.0])
    sp2 = FockSpace(2, 3)
    evals = np.diag(h_lambda(cf2, sp2).entries).real
    assert np.sum(np.isclose(evals, 2.0)) == 1
    assert np.sum(np.isclose(evals, 4.0)) == 2


def test_h_lambda_commutes_with_central_pi():
    sp = FockSpace(1, 8)
    H = h_lambda(CF1, sp).entries
    M = pi_matrix(CF1, H1.point(0.0, 0.0, 1.1), sp).entries
    assert np.max(np.abs(H @ M - M @ H)) == 0.0


def test_ladder_and_generators():
    sp = FockSpace(1, 10)
    cf = adapted_basis(H1, [1.3])
    R = ladder(sp, 1, "lower", cf).entries
    e0 = np.zeros(sp.dim)
    e0[0] = 1.0
    assert np.max(np.abs(R @ e0)) == 0.0
    # recursions against the closed form
    assert R[sp.rank([2]), sp.rank([3])] == pytest.approx(np.sqrt(cf.norm) / 2 * np.sqrt(6))
    Rb = ladder(sp, 1, "raise", cf).entries
    assert Rb[sp.rank([4]), sp.rank([3])] == pytest.approx(-np.sqrt(cf.norm) / 2 * np.sqrt(8))
    # commutator [pi(P), pi(Q)] = i |lambda| Id on the interior
    P = pi_of_generator(cf, sp, "P").entries
    Q = pi_of_generator(cf, sp, "Q").entries
    blk = level_mask(sp, sp.N - 2)
    comm = (P @ Q - Q @ P)[np.ix_(blk, blk)]
    tgt = 1j * cf.norm * np.eye(sp.dim)[np.ix_(blk, blk)]
    assert np.max(np.abs(comm - tgt)) < 1e-10
    # H(lambda) = -sum(pi(P)^2 + pi(Q)^2) on |alpha| <= N-2
    H = h_lambda(cf, sp).entries
    recon = -(P @ P + Q @ Q)
    D = (H - recon)[np.ix_(blk, blk)]
    assert np.max(np.abs(D)) < 1e-10
    # R, Rbar consistent with P, Q
    assert np.max(np.abs((P - 1j * Q) / 2 - R)) < 1e-12
    assert np.max(np.abs((P + 1j * Q) / 2 - Rb)) < 1e-12
    Z = pi_of_generator(cf, sp, "Z", 1).entries
    assert np.max(np.abs(Z - 1j * 1.3 * np.eye(sp.dim))) < 1e-12


def test_spectral_projectors():
    sp = FockSpace(2, 4)
    P0 = spectral_projector(sp, 0).entries
    assert np.allclose(P0, np.outer(np.eye(sp.dim)[0], np.eye(sp.dim)[0]))
    total = sum(spectral_projector(sp, n).entries for n in range(sp.N + 1))
    assert np.allclose(total, np.eye(sp.dim))
    P1 = spectral_projector(sp, 1).entries
    P2 = spectral_projector(sp, 2).entries
    assert np.max(np.abs(P1 @ P2)) == 0.0
    assert np.allclose(P1 @ P1, P1)
    cf2 = adapted_basis(heisenberg(2), [1.0])
    H = h_lambda(cf2, sp).entries
    assert np.allclose(P1 @ H, (1.0 * (2 * 1 + 2)) * P1)


def test_moment_identities():
    # sqrt|l| q_j M = [M, i dxi],  sqrt|l| p_j M = [M, xi]  on interior block
    sp = FockSpace(1, 14)
    cf = adapted_basis(H1, [1.4])
    x = H1.point(0.3, -0.4, 0.2)
    from heisenlab.group import coords_pqz

    pc, qc, _ = coords_pqz(cf, x)
    M = pi_matrix(cf, x, sp).entries
    D = 1j * dxi_matrix(sp, 1)
    X = xi_matrix(sp, 1)
    blk = level_mask(sp, sp.N - 4)
    rt = np.sqrt(cf.norm)
    lhs_q = rt * qc[0] * M
    rhs_q = M @ D - D @ M
    assert np.linalg.norm((lhs_q - rhs_q)[np.ix_(blk, blk)], 2) < 1e-6
    lhs_p = rt * pc[0] * M
    rhs_p = M @ X - X @ M
    assert np.linalg.norm((lhs_p - rhs_p)[np.ix_(blk, blk)], 2) < 1e-6


def test_pi_matrix_heisenberg_negative_lambda_oracle():
    sp = FockSpace(1, 6)
    cf = adapted_basis(H1, [-1.5])
    x = H1.point(0.5, 0.4, -0.1)
    M = pi_matrix(cf, x, sp).entries
    col = dense_projection_oracle(cf, x, sp, sp.N)
    assert np.max(np.abs(M[:, 0] - col)) < 1e-8
