"""Operator-valued group Fourier transform, inversion and multipliers.

The transform of a GridField is always taken of its centered representative
w (the field is u = L_center w); left translations act on the Fourier side
as an untouched right factor, so storing the centered family keeps the
Hermite content low for wave packets while remaining exact.  Frame scale
and carrier are absorbed into the evaluation frequency s^2 lambda and the
z-phases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import BoundaryMass, CalibrationDivergence
from .fields import GridField, sample_on_grid
from .fock import FockSpace, coeff1d_laguerre, level_mask, pi_matrix
from .group import GroupPoint, HTypeStructure, adapted_basis
from .util import ordered_map

__all__ = [
    "LambdaGrid",
    "FourierFamily",
    "shell_grid",
    "packet_grid",
    "forward",
    "inverse_on_grid",
    "inverse_at",
    "plancherel_sum",
    "plancherel_residual",
    "roundtrip_residual",
    "calibrate_c0",
    "apply_multiplier",
    "save_family",
    "load_family",
]


@dataclass(frozen=True)
class LambdaGrid:
    """Quadrature nodes over a shell in the dual of the center.

    weights include the Plancherel density |lambda|^d and the quadrature
    weight; c0 is the global Plancherel constant in use.
    """

    nodes: np.ndarray      # (n, p)
    weights: np.ndarray    # (n,)
    c0: float
    lam_min: float
    lam_max: float

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if np.any(np.linalg.norm(nodes, axis=1) == 0.0):
            raise ValueError("lambda grid must exclude the origin")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.nodes.shape[0]

    def with_c0(self, c0: float) -> "LambdaGrid":
        return replace(self, c0=float(c0))


def _gauss_legendre(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def shell_grid(group: HTypeStructure, lam_min: float, lam_max: float,
               n_radial: int, n_dirs: int | None = None,
               c0: float | None = None) -> LambdaGrid:
    """Quadrature over {lam_min <= |lambda| <= lam_max}.

    p = 1: Gauss-Legendre radii x both signs (symmetric under lambda -> -lambda).
    p >= 2: Gauss-Legendre radii x a uniform direction set.
    """
    if not 0 < lam_min < lam_max:
        raise ValueError("need 0 < lam_min < lam_max")
    d, p = group.d, group.p
    r, wr = _gauss_legendre(lam_min, lam_max, n_radial)
    if c0 is None:
        c0 = (2.0 * np.pi) ** -(d + p)
    if p == 1:
        nodes = np.concatenate([r, -r])[:, None]
        weights = np.concatenate([wr * r ** d, wr * r ** d])
    else:
        if n_dirs is None:
            n_dirs = 8 * p
        if p == 2:
            ang = 2.0 * np.pi * (np.arange(n_dirs) + 0.5) / n_dirs
            dirs = np.column_stack([np.cos(ang), np.sin(ang)])
            wdir = np.full(n_dirs, 2.0 * np.pi / n_dirs)
        else:
            # Fibonacci-type sphere sample (p = 3); equal weights
            if p != 3:
                raise NotImplementedError("direction sets implemented for p <= 3")
            k = np.arange(n_dirs) + 0.5
            phi = np.arccos(1.0 - 2.0 * k / n_dirs)
            gold = np.pi * (1.0 + np.sqrt(5.0)) * k
            dirs = np.column_stack([np.sin(phi) * np.cos(gold),
                                    np.sin(phi) * np.sin(gold), np.cos(phi)])
            wdir = np.full(n_dirs, 4.0 * np.pi / n_dirs)
        nodes = (r[:, None, None] * dirs[None, :, :]).reshape(-1, p)
        weights = (wr[:, None] * r[:, None] ** (d + p - 1) * wdir[None, :]).ravel()
    return LambdaGrid(nodes, weights, float(c0), lam_min, lam_max)


def packet_grid(group: HTypeStructure, lam0, eps: float, halfwidth: float = 8.0,
                n_per_axis: int = 32, c0: float | None = None) -> LambdaGrid:
    """Narrow shell around lambda_0/eps^2 adapted to a wave packet.

    Nodes lambda = (lam0 + eps xi)/eps^2 with xi on a tensor Gauss-Legendre
    grid over [-halfwidth, halfwidth]^p; weights carry the eps^-p Jacobian
    and the Plancherel density.
    """
    d, p = group.d, group.p
    lam0 = np.asarray(lam0, dtype=float).ravel()
    xi, wxi = _gauss_legendre(-halfwidth, halfwidth, n_per_axis)
    grids = np.meshgrid(*([xi] * p), indexing="ij")
    wgrids = np.meshgrid(*([wxi] * p), indexing="ij")
    xis = np.stack([gg.ravel() for gg in grids], axis=-1)          # (M, p)
    wts = np.prod(np.stack([ww.ravel() for ww in wgrids], -1), -1)  # (M,)
    nodes = (lam0[None, :] + eps * xis) / eps ** 2
    norms = np.linalg.norm(nodes, axis=1)
    keep = norms > 0
    if c0 is None:
        c0 = (2.0 * np.pi) ** -(d + p)
    return LambdaGrid(nodes[keep], (wts * eps ** -p)[keep] * norms[keep] ** d,
                      float(c0), float(norms.min()), float(norms.max()))


@dataclass(frozen=True)
class FourierFamily:
    """One operator per lambda node: the transform of the centered field.

    The represented function is u = L_center w with F(lambda) = Fw(lambda);
    the full transform of u would be F(lambda) (pi^lambda_center)*, which is
    never materialized (it has no finite Hermite truncation for distant
    centers).
    """

    grid: LambdaGrid
    space: FockSpace
    group: HTypeStructure
    ops: np.ndarray        # (n_nodes, dim, dim)
    center: GroupPoint

    def __post_init__(self):
        ops = np.asarray(self.ops, dtype=complex)
        if ops.shape != (len(self.grid), self.space.dim, self.space.dim):
            raise ValueError("ops shape mismatch")
        object.__setattr__(self, "ops", ops)

    def hs_norms_sq(self) -> np.ndarray:
        return np.sum(np.abs(self.ops) ** 2, axis=(1, 2))

    def __add__(self, other):
        if not isinstance(other, FourierFamily):
            return NotImplemented
        if other.space != self.space or len(other.grid) != len(self.grid):
            raise ValueError("families are not compatible")
        return replace(self, ops=self.ops + other.ops)


# ---------------------------------------------------------------------------
# direction-basis cache and grid/basis alignment


@lru_cache(maxsize=None)
def _direction_basis_cached(group_key, dir_key):
    group, direction = _GROUPS[group_key], np.asarray(dir_key)
    return adapted_basis(group, direction)


_GROUPS = {}


def direction_basis(group: HTypeStructure, lam):
    """Adapted basis for lambda; depends only on the direction lambda/|lambda|."""
    lam = np.asarray(lam, dtype=float).ravel()
    direction = lam / np.linalg.norm(lam)
    key = (group.d, group.p, group.P_mats.tobytes())
    _GROUPS[key] = group
    return _direction_basis_cached(key, tuple(np.round(direction, 15)))


def _signed_permutation(cf):
    """Per-dimension (axis_p, sign_p, axis_q, sign_q) if the adapted basis is
    a signed permutation of the coordinate axes, else None."""
    roles = []
    for j in range(cf.group.d):
        out = []
        for col in (cf.P_basis[:, j], cf.Q_basis[:, j]):
            i = int(np.argmax(np.abs(col)))
            s = np.sign(col[i])
            e = np.zeros_like(col)
            e[i] = s
            if np.max(np.abs(col - e)) > 1e-12:
                return None
            out.extend([i, s])
        roles.append(tuple(out))
    return roles


# ---------------------------------------------------------------------------
# forward transform


def _z_contract(field: GridField, lam_tilde, conj_sign: float):
    """Contract the z axes with exp(i (carrier - lam_tilde) . z) (forward,
    conj_sign=+1) producing T(v) times the z cell measure."""
    g = field.group
    vals = field.values
    nz = g.p
    out = vals
    for k in range(nz - 1, -1, -1):
        zax = field.z_axes[k]
        ph = np.exp(1j * conj_sign * (field.carrier[k] - lam_tilde[k]) * zax)
        out = np.tensordot(out, ph, axes=([g.dim_v + k], [0]))
    hz = np.prod([a[1] - a[0] for a in field.z_axes])
    return out * hz


def _forward_one_node(field: GridField, lam, space: FockSpace):
    """Transform of the centered representative at a single lambda node."""
    g = field.group
    s = field.scale
    lam_t = s * s * np.asarray(lam, dtype=float)
    cf = direction_basis(g, lam_t)
    nt = float(np.linalg.norm(lam_t))
    rt = np.sqrt(nt)
    T = _z_contract(field, lam_t, +1.0)          # shape: v-grid
    hv = np.prod([a[1] - a[0] for a in field.v_axes])
    roles = _signed_permutation(cf)
    pref = s ** (g.homogeneous_dim / 2.0) * hv
    if roles is not None:
        # tensor fast path: transpose v axes into (p1,q1,p2,q2,...) order
        perm, pvals, qvals = [], [], []
        for (ip, sp, iq, sq) in roles:
            perm.extend([ip, iq])
            pvals.append(sp * field.v_axes[ip])
            qvals.append(sq * field.v_axes[iq])
        R = np.transpose(T, perm)
        for j in range(g.d):
            m = coeff1d_laguerre(rt * pvals[j][:, None], rt * qvals[j][None, :], space.N)
            ph = np.exp(-0.5j * nt * pvals[j][:, None] * qvals[j][None, :])
            W = np.conj(m) * ph[:, :, None, None]   # W[p,q,a,b] = conj(m[p,q,b,a])-assembled
            # conj(m)[...,b,a] indexed as [a,b]: swap the matrix axes
            W = np.swapaxes(W, -1, -2)
            R = np.einsum("pq...,pqab->ab...", R, W)
        # R axes: (a_d, b_d, ..., a_1, b_1); gather the full matrix
        idx = space.indices
        gather = []
        for j in range(g.d):
            gather.append(idx[:, g.d - 1 - j][:, None])   # A (row) axis
            gather.append(idx[:, g.d - 1 - j][None, :])   # B (column) axis
        return pref * R[tuple(gather)]
    # generic fallback: chunked direct evaluation
    mesh = np.meshgrid(*field.v_axes, indexing="ij")
    v = np.stack([mm.ravel() for mm in mesh], axis=-1)
    Tf = T.reshape(-1)
    G = np.zeros((space.dim, space.dim), dtype=complex)
    idx = space.indices
    chunk = 2048
    for st in range(0, v.shape[0], chunk):
        vc = v[st:st + chunk]
        pc, qc = cf.coords_pq(vc)
        Ms = None
        for j in range(g.d):
            m = coeff1d_laguerre(rt * pc[:, j], rt * qc[:, j], space.N)
            mj = m[:, idx[:, j][:, None], idx[:, j][None, :]]
            Ms = mj if Ms is None else Ms * mj
        phase = np.exp(0.5j * nt * np.sum(pc * qc, axis=1))
        # G += sum_c T_c conj(phase_c M_c)[beta,alpha] -> transpose to [alpha,beta]
        G += np.einsum("c,cba->ab", Tf[st:st + chunk] * np.conj(phase), np.conj(Ms))
    return pref * G


def forward(field: GridField, grid: LambdaGrid, space: FockSpace,
            workers: int = 1, boundary_tol: float | None = 1e-6) -> FourierFamily:
    """Group Fourier transform of the centered representative of `field`.

    Raises BoundaryMass when more than boundary_tol of the mass sits in the
    outer 10% shell of the box (pass None to skip the check).
    """
    if boundary_tol is not None:
        field.require_contained(boundary_tol)
    ops = ordered_map(lambda lam: _forward_one_node(field, lam, space),
                      list(grid.nodes), workers)
    return FourierFamily(grid, space, field.group, np.stack(ops), field.center)


# ---------------------------------------------------------------------------
# inverse transform


def _relative_center_ops(F: FourierFamily, target_center: GroupPoint,
                         space: FockSpace):
    """F'(lambda) = F(lambda) pi^lambda_dc for dc = center^{-1} target_center.

    dc must be central or eps-small horizontally; otherwise the truncated
    representation cannot express the translation (guarded by pi_matrix's
    envelope in the caller's space).
    """
    from .group import group_inv, group_mul

    g = F.group
    dc = group_mul(g, group_inv(g, F.center), target_center)
    if not np.any(dc.v) and not np.any(dc.z):
        return F.ops
    if not np.any(dc.v):
        # central relative shift: exact scalar phases, no truncation at all
        phases = np.exp(1j * (F.grid.nodes @ dc.z))
        return F.ops * phases[:, None, None]
    out = np.empty_like(F.ops)
    for i, lam in enumerate(F.grid.nodes):
        cf = replace_lam(direction_basis(g, lam), lam)
        M = pi_matrix(cf, dc, space, method="laguerre", envelope=space.N / 2.0)
        out[i] = F.ops[i] @ M.entries
    return out


def replace_lam(cf, lam):
    """CentralFrequency for lam reusing the direction's adapted basis."""
    from dataclasses import replace as drep

    lam = np.asarray(lam, dtype=float).ravel()
    nrm = float(np.linalg.norm(lam))
    base = direction_basis(cf.group, lam)
    return drep(base, lam=lam, norm=nrm, unit_vertical=lam / nrm,
                J=base.J * (nrm / base.norm))


def _inverse_one_node(template: GridField, lam, wt, op, space, trace_margin):
    g = template.group
    s = template.scale
    lam_t = s * s * np.asarray(lam, dtype=float)
    cf = direction_basis(g, lam_t)
    nt = float(np.linalg.norm(lam_t))
    rt = np.sqrt(nt)
    mask = level_mask(space, space.N - trace_margin)
    Fm = op * mask[None, :]          # zero the trace rows beyond the margin
    pref = s ** (g.homogeneous_dim / 2.0)
    roles = _signed_permutation(cf)
    if roles is not None:
        idx = space.indices
        # scatter F' into a per-dimension index tensor:
        # Ft[A_1,B_1,...,A_d,B_d] = F'[B,A] (injective, so plain assignment)
        Ft = np.zeros((space.N + 1,) * (2 * g.d), dtype=complex)
        gather = []
        for j in range(g.d):
            gather.append(idx[:, j][:, None])
            gather.append(idx[:, j][None, :])
        Ft[tuple(gather)] = Fm.T
        R = Ft
        pvals, qvals, perm = [], [], []
        for (ip, sp, iq, sq) in roles:
            perm.extend([ip, iq])
            pvals.append(sp * template.v_axes[ip])
            qvals.append(sq * template.v_axes[iq])
        for j in range(g.d):
            m = coeff1d_laguerre(rt * pvals[j][:, None], rt * qvals[j][None, :], space.N)
            ph = np.exp(0.5j * nt * pvals[j][:, None] * qvals[j][None, :])
            W = m * ph[:, :, None, None]
            R = np.einsum("ab...,pqab->...pq", R, W)
        # R axes now (p1,q1,...,p_d,q_d); invert the transpose into grid order
        inv_perm = np.argsort(perm)
        Tv = np.transpose(R, inv_perm)
    else:
        mesh = np.meshgrid(*template.v_axes, indexing="ij")
        v = np.stack([mm.ravel() for mm in mesh], axis=-1)
        idx = space.indices
        Tv = np.zeros(v.shape[0], dtype=complex)
        chunk = 2048
        for st in range(0, v.shape[0], chunk):
            vc = v[st:st + chunk]
            pc, qc = cf.coords_pq(vc)
            Ms = None
            for j in range(g.d):
                m = coeff1d_laguerre(rt * pc[:, j], rt * qc[:, j], space.N)
                mj = m[:, idx[:, j][:, None], idx[:, j][None, :]]
                Ms = mj if Ms is None else Ms * mj
            phase = np.exp(0.5j * nt * np.sum(pc * qc, axis=1))
            Tv[st:st + chunk] = phase * np.einsum("cab,ba->c", Ms, Fm)
        Tv = Tv.reshape(tuple(len(a) for a in template.v_axes))
    # outer z phases exp(i (lam_t - carrier) . z)
    out = Tv.reshape(Tv.shape + (1,) * g.p)
    for k in range(g.p):
        ph = np.exp(1j * (lam_t[k] - template.carrier[k]) * template.z_axes[k])
        shape = (1,) * (g.dim_v + k) + (-1,)
        out = out * ph.reshape(shape + (1,) * (g.p - k - 1))
    return wt * pref * out


def inverse_on_grid(F: FourierFamily, template: GridField, workers: int = 1,
                    trace_margin: int = 2) -> GridField:
    """Evaluate the inversion formula on the template's grid and frame.

    The template's center may differ from the family's center by a central
    (or eps-small horizontal) group element.
    """
    space = F.space
    ops = _relative_center_ops(F, template.center, space)
    contribs = ordered_map(
        lambda i: _inverse_one_node(template, F.grid.nodes[i], F.grid.weights[i],
                                    ops[i], space, trace_margin),
        range(len(F.grid)), workers)
    total = F.grid.c0 * np.sum(contribs, axis=0)
    return template.with_values(total)


def inverse_at(F: FourierFamily, x: GroupPoint, trace_margin: int = 2) -> complex:
    """Pointwise inversion: u(x) with u = L_center w."""
    from .group import group_inv, group_mul

    g = F.group
    xt = group_mul(g, group_inv(g, F.center), x)
    mask = level_mask(F.space, F.space.N - trace_margin)
    val = 0.0 + 0.0j
    for lam, wt, op in zip(F.grid.nodes, F.grid.weights, F.ops):
        cf = replace_lam(direction_basis(g, lam), lam)
        M = pi_matrix(cf, xt, F.space, method="laguerre", envelope=0.0)
        val += wt * np.trace(M.entries @ (op * mask[None, :]))
    return F.grid.c0 * complex(val)


# ---------------------------------------------------------------------------
# Plancherel, calibration, multipliers


def plancherel_sum(F: FourierFamily) -> float:
    return float(F.grid.c0 * np.dot(F.grid.weights, F.hs_norms_sq()))


def plancherel_residual(field: GridField, grid: LambdaGrid, space: FockSpace,
                        workers: int = 1) -> float:
    """|  ||f||^2 - c0 sum w ||Ff||_HS^2 | / ||f||^2."""
    n2 = field.norm_sq()
    if n2 == 0.0:
        return 0.0
    F = forward(field, grid, space, workers=workers, boundary_tol=None)
    return abs(n2 - plancherel_sum(F)) / n2


def roundtrip_residual(field: GridField, grid: LambdaGrid, space: FockSpace,
                       workers: int = 1) -> float:
    """Relative L2 error of inverse(forward(f)) against f on its own grid."""
    F = forward(field, grid, space, workers=workers, boundary_tol=None)
    back = inverse_on_grid(F, field, workers=workers)
    return np.sqrt(
        np.sum(np.abs(back.values - field.values) ** 2)
        / max(np.sum(np.abs(field.values) ** 2), 1e-300))


def reference_gaussian(template: GridField, v_width: float = 0.86,
                       z_width: float = 1.8, z_carrier: float = 2.6) -> GridField:
    """Band-limited Gaussian test function: Gaussian envelope times a
    vertical carrier e^{i mu z_1}, so the lambda content sits inside a
    moderate shell (plain Gaussians spread mass down to lambda = 0 where no
    finite Hermite truncation can follow)."""
    return sample_on_grid(template, lambda v, z: np.exp(
        -np.sum(v ** 2, -1) / (2 * v_width ** 2)
        - np.sum(z ** 2, -1) / (2 * z_width ** 2)
        + 1j * z_carrier * z[..., 0]))


def calibrate_c0(group: HTypeStructure, grid: LambdaGrid, space: FockSpace,
                 template: GridField,
                 family=((0.86, 1.8, 2.6), (0.7, 1.6, 3.2), (1.0, 2.0, 2.2)),
                 check_closed_form: bool = True, tol: float = 0.01,
                 workers: int = 1):
    """Plancherel constant from a family of reference Gaussians.

    family: (v_width, z_width, z_carrier) triples.  Returns
    (c0_estimate, closed_form, per-member estimates) and raises
    CalibrationDivergence when the estimate differs from the prototype
    closed form (2 pi)^-(d+p) by more than tol.
    """
    ests = []
    for wv, wz, mu in family:
        f = reference_gaussian(template, wv, wz, mu)
        F = forward(f, grid, space, workers=workers, boundary_tol=None)
        raw = float(np.dot(F.grid.weights, F.hs_norms_sq()))
        ests.append(f.norm_sq() / raw)
    c0_est = float(np.mean(ests))
    closed = (2.0 * np.pi) ** -(group.d + group.p)
    if check_closed_form and abs(c0_est / closed - 1.0) > tol:
        raise CalibrationDivergence(
            f"calibrated c0 {c0_est:.6g} vs closed form {closed:.6g}")
    return c0_est, closed, ests


def apply_multiplier(F: FourierFamily, m) -> FourierFamily:
    """Left-multiply each F(lambda) by the diagonal multiplier m(lambda, n).

    m maps (lambda vector, levels array) -> complex array over ranks; the
    spectral parameter n enters through the Hermite level |alpha|.
    """
    levels = F.space.levels
    out = np.empty_like(F.ops)
    for i, lam in enumerate(F.grid.nodes):
        diag = np.asarray(m(lam, levels), dtype=complex)
        out[i] = diag[:, None] * F.ops[i]
    return FourierFamily(F.grid, F.space, F.group, out, F.center)


# ---------------------------------------------------------------------------
# serialization


def save_family(F: FourierFamily, path: str):
    meta = dict(d=F.group.d, p=F.group.p, N=F.space.N, c0=F.grid.c0,
                lam_min=F.grid.lam_min, lam_max=F.grid.lam_max,
                center_v=F.center.v.tolist(), center_z=F.center.z.tolist(),
                lattice_scale_v=F.group.lattice_scale_v,
                lattice_scale_z=F.group.lattice_scale_z)
    np.savez(path, nodes=F.grid.nodes, weights=F.grid.weights, ops=F.ops,
             P_mats=F.group.P_mats, meta=json.dumps(meta))


def load_family(path: str) -> FourierFamily:
    from .group import validate_structure

    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    group = validate_structure(meta["d"], meta["p"], data["P_mats"],
                               meta["lattice_scale_v"], meta["lattice_scale_z"])
    grid = LambdaGrid(data["nodes"], data["weights"], meta["c0"],
                      meta["lam_min"], meta["lam_max"])
    space = FockSpace(meta["d"], meta["N"])
    center = GroupPoint(np.array(meta["center_v"]), np.array(meta["center_z"]))
    return FourierFamily(grid, space, group, data["ops"], center)
