import numpy as np
import pytest

from heisenlab.errors import BoundaryMass
from heisenlab.fields import box_field, sample_on_grid
from heisenlab.fock import FockSpace, coeff1d_laguerre, level_mask, pi_of_generator
from heisenlab.gft import (
    apply_multiplier,
    calibrate_c0,
    forward,
    inverse_at,
    inverse_on_grid,
    load_family,
    packet_grid,
    plancherel_residual,
    plancherel_sum,
    reference_gaussian,
    save_family,
    shell_grid,
)
from heisenlab.group import GroupPoint, heisenberg

H1 = heisenberg(1)
SPACE = FockSpace(1, 12)
REF_GRID = shell_grid(H1, 0.3, 6.0, 32)  # 64 nodes with both signs


def ref_field(n=(36, 36, 56), ext=(3.6, 3.6), extz=6.5, **kw):
    return reference_gaussian(box_field(H1, ext, extz, (n[0], n[1], n[2])), **kw)


@pytest.fixture(scope="module")
def gaussian():
    return ref_field()


@pytest.fixture(scope="module")
def family(gaussian):
    return forward(gaussian, REF_GRID, SPACE, boundary_tol=None)


def test_lambda_grid_invariants():
    g = REF_GRID
    assert np.all(np.linalg.norm(g.nodes, axis=1) > 0)
    assert np.all(g.weights > 0)
    # symmetric under lambda -> -lambda for p = 1
    lams = np.sort(g.nodes[:, 0])
    assert np.allclose(lams, -lams[::-1])


def test_forward_zero_field():
    f = box_field(H1, 2.0, 2.0, 8)
    F = forward(f, shell_grid(H1, 0.5, 2.0, 4), FockSpace(1, 4), boundary_tol=None)
    assert np.max(np.abs(F.ops)) == 0.0


def test_forward_l1_bound(gaussian, family):
    l1 = float(np.sum(np.abs(gaussian.values)) * gaussian.cell_volume)
    for op in family.ops:
        assert np.linalg.norm(op, 2) <= l1 * (1 + 1e-12)


def test_forward_boundary_mass_guard():
    f = box_field(H1, 2.0, 2.0, 16)
    f = sample_on_grid(f, lambda v, z: np.exp(-np.sum((v - 1.8) ** 2, -1) - np.sum(z ** 2, -1)))
    with pytest.raises(BoundaryMass):
        forward(f, shell_grid(H1, 0.5, 2.0, 4), FockSpace(1, 4))


def test_plancherel_reference_resolution(gaussian):
    res = plancherel_residual(gaussian, REF_GRID, SPACE)
    assert res < 1e-3
    # other family members
    for wv, wz, mu in [(0.7, 1.6, 3.2), (1.0, 2.0, 2.2)]:
        f = ref_field(v_width=wv, z_width=wz, z_carrier=mu)
        assert plancherel_residual(f, REF_GRID, SPACE) < 1e-3


def test_plancherel_residual_decreases_under_refinement():
    coarse = reference_gaussian(box_field(H1, 3.2, 5.8, (20, 20, 28)))
    res = [
        plancherel_residual(coarse, shell_grid(H1, 0.6, 4.6, 12), FockSpace(1, 6)),
        plancherel_residual(ref_field((28, 28, 40), (3.4, 3.4), 6.2),
                            shell_grid(H1, 0.4, 5.5, 20), FockSpace(1, 9)),
        plancherel_residual(ref_field(), REF_GRID, SPACE),
    ]
    assert res[0] > res[1] > res[2]


def test_roundtrip_pointwise(gaussian, family):
    back = inverse_on_grid(family, gaussian)
    err = np.abs(back.values - gaussian.values)
    nv, nz = 36, 56
    interior = err[int(0.15 * nv):int(0.85 * nv),
                   int(0.15 * nv):int(0.85 * nv),
                   int(0.15 * nz):int(0.85 * nz)]
    assert np.max(interior) < 1e-4
    # peak height within 1%
    peak = np.unravel_index(np.argmax(np.abs(gaussian.values)), err.shape)
    assert err[peak] / np.abs(gaussian.values[peak]) < 0.01


def test_inverse_linearity_and_zero(family):
    zero = family.ops * 0.0
    from dataclasses import replace

    Fz = replace(family, ops=zero)
    x = GroupPoint(np.array([0.2, -0.1]), np.array([0.3]))
    assert inverse_at(Fz, x) == 0
    v1 = inverse_at(family, x)
    F2 = replace(family, ops=2.0 * family.ops)
    assert abs(inverse_at(F2, x) - 2.0 * v1) < 1e-12
    Fsum = family + family
    assert abs(inverse_at(Fsum, x) - 2.0 * v1) < 1e-12


def test_multiplier_identity_and_unimodular(family):
    F1 = apply_multiplier(family, lambda lam, n: np.ones_like(n, dtype=float))
    assert np.array_equal(F1.ops, family.ops)
    Fu = apply_multiplier(family, lambda lam, n: np.exp(
        -0.7j * np.linalg.norm(lam) * (2 * n + 1)))
    assert abs(plancherel_sum(Fu) - plancherel_sum(family)) < 1e-12 * plancherel_sum(family)


def _left_invariant_derivative(fn, x, direction, h=1e-4):
    """(V f)(x) = d/dt f(x Exp(t V)) by central differences."""
    from heisenlab.group import group_mul

    step = GroupPoint(h * direction, np.zeros(H1.p))
    stepm = GroupPoint(-h * direction, np.zeros(H1.p))
    xp = group_mul(H1, x, step)
    xm = group_mul(H1, x, stepm)
    return (fn(xp) - fn(xm)) / (2 * h)


def _gauss_fn(wv=0.86, wz=1.8, mu=2.6):
    def fn(x):
        return np.exp(-np.dot(x.v, x.v) / (2 * wv ** 2)
                      - np.dot(x.z, x.z) / (2 * wz ** 2) + 1j * mu * x.z[0])
    return fn


def test_forward_intertwines_left_derivatives(gaussian, family):
    # F(P_j f)(lambda) = pi(P_j) F f(lambda), weighted across the shell
    from heisenlab.gft import direction_basis, replace_lam

    f = gaussian
    mesh = np.meshgrid(*(f.v_axes + f.z_axes), indexing="ij")
    Pdir = np.array([1.0, 0.0])  # P_1 direction for every lambda sign
    # analytic left-invariant derivative of the Gaussian along P_1:
    # X f = (Pdir . grad_v + twist(v, Pdir) . grad_z) f
    V = np.stack(mesh[:2], axis=-1)
    Z = mesh[2][..., None]
    gx = -V[..., 0] / 0.86 ** 2
    gy = -V[..., 1] / 0.86 ** 2
    gz = -Z[..., 0] / 1.8 ** 2 + 2.6j
    dirgrad = gx * Pdir[0] + gy * Pdir[1] + gz * H1.twist(V, Pdir)[..., 0]
    Pf = f.with_values(dirgrad * f.values)
    lhs = forward(Pf, REF_GRID, SPACE, boundary_tol=None)
    blk = level_mask(SPACE, SPACE.N - 2)
    num = den = 0.0
    for i in range(len(REF_GRID)):
        lam_i = REF_GRID.nodes[i]
        cf_i = replace_lam(direction_basis(H1, lam_i), lam_i)
        piP = pi_of_generator(cf_i, SPACE, "P", 1).entries
        want = (piP @ family.ops[i])[np.ix_(blk, blk)]
        got = lhs.ops[i][np.ix_(blk, blk)]
        num += REF_GRID.weights[i] * np.linalg.norm(got - want) ** 2
        den += REF_GRID.weights[i] * np.linalg.norm(want) ** 2
    assert np.sqrt(num / den) < 2e-3


def test_sub_laplacian_multiplier(gaussian, family):
    # m(lam, n) = |lam|(2n+d) reproduces forward(-Delta_G f)
    fn = _gauss_fn()
    h = 1e-3
    ex = np.array([1.0, 0.0])
    ey = np.array([0.0, 1.0])

    def lap(x):
        out = 0.0
        for e in (ex, ey):
            from heisenlab.group import group_mul

            xp = group_mul(H1, x, GroupPoint(h * e, np.zeros(1)))
            xm = group_mul(H1, x, GroupPoint(-h * e, np.zeros(1)))
            out += (fn(xp) - 2 * fn(x) + fn(xm)) / h ** 2
        return out

    f = gaussian
    vals = np.empty(f.values.shape, dtype=complex)
    for i, vx in enumerate(f.v_axes[0]):
        for j, vy in enumerate(f.v_axes[1]):
            for k, zz in enumerate(f.z_axes[0]):
                vals[i, j, k] = -lap(GroupPoint(np.array([vx, vy]), np.array([zz])))
    lhs = forward(f.with_values(vals), REF_GRID, SPACE, boundary_tol=None)
    rhs = apply_multiplier(family, lambda lam, n: np.linalg.norm(lam) * (2 * n + 1))
    blk = level_mask(SPACE, SPACE.N - 2)
    num = den = 0.0
    for i in range(len(REF_GRID)):
        num += np.linalg.norm((lhs.ops[i] - rhs.ops[i])[np.ix_(blk, blk)]) ** 2
        den += np.linalg.norm(rhs.ops[i][np.ix_(blk, blk)]) ** 2
    assert np.sqrt(num / den) < 2e-3


def test_calibrate_c0():
    template = box_field(H1, 3.6, 6.5, (36, 36, 56))
    c0, closed, ests = calibrate_c0(H1, REF_GRID, SPACE, template)
    assert closed == pytest.approx((2 * np.pi) ** -2)
    assert abs(c0 / closed - 1.0) < 0.01
    # f-independence: widths scaled together leave the estimate stable
    assert max(abs(e / closed - 1.0) for e in ests) < 0.01
    assert c0 > 0


def test_parseval_polarization_constant():
    # |l|^d (2pi)^-d int (pi Phi,Psi) conj((pi Phit,Psit)) dv = (Phi,Phit) conj((Psi,Psit))
    lam = 1.3
    n = 240
    half = 9.0
    pv = np.linspace(-half, half, n)
    qv = np.linspace(-half, half, n)
    dpq = (pv[1] - pv[0]) * (qv[1] - qv[0])
    m = coeff1d_laguerre(np.sqrt(lam) * pv[:, None], np.sqrt(lam) * qv[None, :], 3)
    # coefficient (pi_x h_a, h_b) = e^{i lam p q/2} m[b, a]
    for (a1, b1, a2, b2, want) in [
        (0, 0, 0, 0, 1.0),   # Phi=Phit=h0, Psi=Psit=h0
        (1, 0, 1, 0, 1.0),   # Phi=Phit=h1, Psi=Psit=h0
        (0, 0, 1, 0, 0.0),   # Phi=h0, Phit=h1 -> orthogonal
        (2, 1, 2, 1, 1.0),
    ]:
        c1 = m[:, :, b1, a1]
        c2 = m[:, :, b2, a2]
        val = lam / (2 * np.pi) * np.sum(c1 * np.conj(c2)) * dpq
        assert abs(val - want) < 1e-3


def test_packet_grid_nodes():
    g = packet_grid(H1, [1.0], 0.1, halfwidth=6.0, n_per_axis=16)
    assert np.all(g.weights > 0)
    norms = np.linalg.norm(g.nodes, axis=1)
    assert np.all(np.abs(norms - 100.0) < 61.0)


def test_family_serialization_roundtrip(tmp_path, family):
    path = str(tmp_path / "fam.npz")
    save_family(family, path)
    F2 = load_family(path)
    assert np.allclose(F2.ops, family.ops)
    assert np.allclose(F2.grid.nodes, family.grid.nodes)
    assert F2.space.N == family.space.N
    assert F2.grid.c0 == family.grid.c0
