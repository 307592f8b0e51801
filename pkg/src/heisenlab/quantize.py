"""Semiclassical pseudodifferential operators Op_eps(sigma) by kernel convolution.

Symbols are represented by their convolution kernels kappa_x(w) (the symbol
sigma(x,lambda) = F kappa_x(lambda) is derived on demand); Op_eps acts by a
support-limited stencil sum in group coordinates, with the twisted group
division y^{-1}x evaluated exactly per stencil offset.  The symbolic calculus
(adjoint/composition at first order, locality, kernel cutoff) is exercised by
residual harnesses whose pass criteria are log-log slopes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield

import numpy as np

from .errors import InsufficientResolution, SupportOverflow
from .fields import GridField
from .fock import FockOperator, FockSpace, dxi_matrix, xi_matrix
from .group import CentralFrequency, GroupPoint, group_mul
from .util import loglog_slope

__all__ = [
    "Symbol",
    "SeparableSymbol",
    "bump",
    "bump_symbol",
    "op_eps_apply",
    "op_adjoint_apply",
    "symbol_at",
    "difference_ops",
    "kernel_l1_bound",
    "adjoint_residual",
    "composition_residual",
    "locality_residual",
    "kernel_cutoff_residual",
    "multiply_by",
]


def bump(u, radius):
    """Smooth compactly supported bump of one variable, 1 at 0, 0 for |u|>=radius."""
    u = np.asarray(u, dtype=float)
    r2 = (u / radius) ** 2
    out = np.zeros_like(u)
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


@dataclass(frozen=True)
class Symbol:
    """Operator symbol given through its kernel kappa_x(w).

    kernel(xv, xz, wv, wz) must broadcast over leading axes; the w-support
    is the box |w_v|_inf <= v_radius, |w_z|_inf <= z_radius, and x_center /
    x_radius describe the x-support (used by locality margins).
    """

    kernel: object
    v_radius: float
    z_radius: float
    x_center: GroupPoint | None = None
    x_radius: float | None = None

    def __call__(self, xv, xz, wv, wz):
        return self.kernel(xv, xz, wv, wz)


def _group_x_derivative(phi, i, dim_v, p, group, h=1e-5):
    """Left-invariant derivative of an x-callable along the i-th frame vector."""
    ei = np.zeros(dim_v)
    ei[i] = 1.0

    def dphi(xv, xz):
        tw = group.twist(xv, np.broadcast_to(ei, xv.shape))
        xp = phi(xv + h * ei, xz + h * tw)
        xm = phi(xv - h * ei, xz - h * tw)
        return (xp - xm) / (2 * h)

    return dphi


@dataclass(frozen=True)
class SeparableSymbol(Symbol):
    """Kernel as a sum of separable terms phi_m(x) g_m(w).

    Needed by the first-order calculus harnesses, where the correction
    symbols involve x-derivatives of phi and w-moments/convolutions of g.
    """

    terms: tuple = ()

    @staticmethod
    def from_terms(terms, v_radius, z_radius, x_center=None, x_radius=None):
        terms = tuple(terms)

        def kernel(xv, xz, wv, wz):
            out = None
            for phi, gw in terms:
                t = phi(xv, xz) * gw(wv, wz)
                out = t if out is None else out + t
            return out

        return SeparableSymbol(kernel, v_radius, z_radius, x_center, x_radius,
                               terms=terms)

    def adjoint_symbol(self) -> "SeparableSymbol":
        """Kernel of sigma*: kappa*(x,w) = conj(kappa(x, w^{-1}))."""
        new_terms = []
        for phi, gw in self.terms:
            new_terms.append((
                lambda xv, xz, phi=phi: np.conj(phi(xv, xz)),
                lambda wv, wz, gw=gw: np.conj(gw(-wv, -wz)),
            ))
        return SeparableSymbol.from_terms(new_terms, self.v_radius, self.z_radius,
                                          self.x_center, self.x_radius)

    def adjoint_correction(self, group) -> "SeparableSymbol":
        """Kernel of P.Delta_p sigma* + Q.Delta_q sigma*.

        Contraction over any orthonormal basis of the first stratum:
        sum_i w_i (V_i kappa*)(x, w).
        """
        adj = self.adjoint_symbol()
        dim_v = group.dim_v
        new_terms = []
        for phi, gw in adj.terms:
            for i in range(dim_v):
                dphi = _group_x_derivative(phi, i, dim_v, group.p, group)
                new_terms.append((
                    dphi,
                    lambda wv, wz, gw=gw, i=i: wv[..., i] * gw(wv, wz),
                ))
        return SeparableSymbol.from_terms(new_terms, self.v_radius, self.z_radius,
                                          self.x_center, self.x_radius)


# ---------------------------------------------------------------------------
# gridded group convolution of w-kernels (for composition symbols)


def _w_grid(group, v_radius, z_radius, n_v, n_z):
    axes_v = [np.linspace(-v_radius, v_radius, n_v) for _ in range(group.dim_v)]
    axes_z = [np.linspace(-z_radius, z_radius, n_z) for _ in range(group.p)]
    return axes_v, axes_z


def group_convolve(group, g2, g1, v_rad2, z_rad2, v_rad1, z_rad1,
                   n_v=21, n_z=13):
    """(g2 * g1)(w) = int g2(y) g1(y^{-1} w) dy on a grid, cubic-interpolated.

    Returns (callable, v_radius, z_radius) of the product kernel.
    """
    from scipy.interpolate import RegularGridInterpolator

    dv = group.dim_v
    v_out = v_rad1 + v_rad2
    z_out = z_rad1 + z_rad2 + 0.5 * dv * v_rad1 * v_rad2 * np.max(np.abs(group.P_mats))
    axes_v, axes_z = _w_grid(group, v_out, z_out, 2 * n_v + 1, 2 * n_z + 1)
    mesh = np.meshgrid(*(axes_v + axes_z), indexing="ij")
    wv = np.stack(mesh[:dv], axis=-1)
    wz = np.stack(mesh[dv:], axis=-1)

    yv_axes, yz_axes = _w_grid(group, v_rad2, z_rad2, n_v, n_z)
    ymesh = np.meshgrid(*(yv_axes + yz_axes), indexing="ij")
    yv = np.stack([mm.ravel() for mm in ymesh[:dv]], axis=-1)
    yz = np.stack([mm.ravel() for mm in ymesh[dv:]], axis=-1)
    yvol = np.prod([a[1] - a[0] for a in yv_axes + yz_axes])
    g2_vals = np.asarray(g2(yv, yz), dtype=complex)
    live = np.abs(g2_vals) > 0
    out = np.zeros(wv.shape[:-1], dtype=complex)
    for yv_i, yz_i, g2_i in zip(yv[live], yz[live], g2_vals[live]):
        # y^{-1} w = (wv - yv, wz - yz - twist(yv, wv))
        rv = wv - yv_i
        rz = wz - yz_i - group.twist(np.broadcast_to(yv_i, wv.shape), wv)
        out += g2_i * g1(rv, rz)
    out *= yvol
    interp_re = RegularGridInterpolator(tuple(axes_v + axes_z), out.real,
                                        bounds_error=False, fill_value=0.0,
                                        method="cubic")
    interp_im = RegularGridInterpolator(tuple(axes_v + axes_z), out.imag,
                                        bounds_error=False, fill_value=0.0,
                                        method="cubic")

    def conv(wv_a, wz_a):
        pts = np.concatenate([np.moveaxis(np.asarray(wv_a), -1, 0),
                              np.moveaxis(np.asarray(wz_a), -1, 0)], axis=0)
        pts = np.moveaxis(pts, 0, -1)
        return interp_re(pts) + 1j * interp_im(pts)

    return conv, v_out, z_out


def compose_symbols(group, s1: SeparableSymbol, s2: SeparableSymbol,
                    n_v=21, n_z=13):
    """Product symbol sigma1 sigma2 and the first-order correction symbol.

    kernel(sigma1 sigma2) = sum over term pairs phi1 phi2 (g2 * g1);
    correction kernel = sum_i (V_i kappa_2) * (w_i kappa_1).
    """
    prod_terms, corr_terms = [], []
    v_out = z_out = 0.0
    for phi1, g1 in s1.terms:
        for phi2, g2 in s2.terms:
            conv, vr, zr = group_convolve(group, g2, g1, s2.v_radius, s2.z_radius,
                                          s1.v_radius, s1.z_radius, n_v, n_z)
            v_out, z_out = max(v_out, vr), max(z_out, zr)
            prod_terms.append((
                lambda xv, xz, a=phi1, b=phi2: a(xv, xz) * b(xv, xz), conv))
            for i in range(group.dim_v):
                g1i = lambda wv, wz, g=g1, i=i: wv[..., i] * g(wv, wz)
                dphi2 = _group_x_derivative(phi2, i, group.dim_v, group.p, group)
                convc, _, _ = group_convolve(group, g2, g1i, s2.v_radius,
                                             s2.z_radius, s1.v_radius,
                                             s1.z_radius, n_v, n_z)
                corr_terms.append((
                    lambda xv, xz, a=phi1, b=dphi2: a(xv, xz) * b(xv, xz), convc))
    prod = SeparableSymbol.from_terms(prod_terms, v_out, z_out, s1.x_center,
                                      s1.x_radius)
    corr = SeparableSymbol.from_terms(corr_terms, v_out, z_out, s1.x_center,
                                      s1.x_radius)
    return prod, corr


# ---------------------------------------------------------------------------
# preset symbols


def bump_symbol(group, x0: GroupPoint, x_radius: float, v_radius: float,
                z_radius: float, amplitude=1.0) -> SeparableSymbol:
    """kappa_x(w) = amp * bump(x - x0) * bump_w(w): the workhorse test symbol."""

    def phi(xv, xz):
        dv = xv - x0.v
        dz = xz - x0.z
        r2 = (np.sum(dv ** 2, -1) + np.sum(dz ** 2, -1))
        return amplitude * bump(np.sqrt(r2), x_radius)

    def gw(wv, wz):
        rho = np.sqrt(np.sum((np.asarray(wv) / v_radius) ** 2, -1)
                      + np.sum((np.asarray(wz) / z_radius) ** 2, -1))
        return bump(rho, 1.0)

    return SeparableSymbol.from_terms([(phi, gw)], v_radius, z_radius, x0, x_radius)


# ---------------------------------------------------------------------------
# the stencil convolution engine


def _extended_values(f: GridField, mv, mz):
    """Values extended by the stencil margins: twisted wrap (periodized)
    or zero padding."""
    g = f.group
    nv = [len(a) for a in f.v_axes]
    nz = [len(a) for a in f.z_axes]
    shape = tuple(n + 2 * m for n, m in zip(nv, mv)) + tuple(
        n + 2 * m for n, m in zip(nz, mz))
    if not f.periodized:
        ext = np.zeros(shape, dtype=complex)
        sl = tuple(slice(m, m + n) for n, m in zip(nv + nz, list(mv) + list(mz)))
        ext[sl] = f.values
        return ext
    # periodized: gather by lattice reduction of the extended coordinates
    from .group import reduce_points

    hv = [a[1] - a[0] for a in f.v_axes]
    hz = [a[1] - a[0] for a in f.z_axes]
    axes = [f.v_axes[i][0] + hv[i] * (np.arange(-mv[i], nv[i] + mv[i]))
            for i in range(len(nv))]
    axes += [f.z_axes[k][0] + hz[k] * (np.arange(-mz[k], nz[k] + mz[k]))
             for k in range(len(nz))]
    mesh = np.meshgrid(*axes, indexing="ij")
    v = np.stack(mesh[: g.dim_v], axis=-1)
    z = np.stack(mesh[g.dim_v:], axis=-1)
    rv, rz = reduce_points(g, v, z)
    iv = [np.rint((rv[..., i] - f.v_axes[i][0]) / hv[i]).astype(int)
          for i in range(g.dim_v)]
    iz = [np.rint((rz[..., k] - f.z_axes[k][0]) / hz[k]).astype(int)
          for k in range(g.p)]
    err = 0.0
    for i in range(g.dim_v):
        err = max(err, float(np.max(np.abs(rv[..., i] - (f.v_axes[i][0] + iv[i] * hv[i])))))
    for k in range(g.p):
        err = max(err, float(np.max(np.abs(rz[..., k] - (f.z_axes[k][0] + iz[k] * hz[k])))))
    if err > 1e-8:
        raise SupportOverflow(
            "twisted periodization does not map this grid to itself; "
            "choose n_z a multiple of 2 n_v")
    iv = [np.clip(ii, 0, n - 1) for ii, n in zip(iv, nv)]
    iz = [np.clip(ii, 0, n - 1) for ii, n in zip(iz, nz)]
    return f.values[tuple(iv) + tuple(iz)]


def _stencil_offsets(f: GridField, eps: float, sigma: Symbol):
    g = f.group
    s = f.scale
    hv = [a[1] - a[0] for a in f.v_axes]
    hz = [a[1] - a[0] for a in f.z_axes]
    rv = sigma.v_radius * eps / s
    # the kernel's z-argument is (dz + twist(dv, v))/..., so nonzero kernel
    # values reach z-offsets up to eps^2 R_z plus the twist range
    vmax = max(np.max(np.abs(a)) for a in f.v_axes)
    pmax = float(np.max(np.sum(np.abs(f.group.P_mats), axis=-1)))
    rz = sigma.z_radius * (eps / s) ** 2 + 0.5 * rv * vmax * pmax
    mv = [int(math.floor(rv / h)) + 1 for h in hv]
    mz = [int(math.floor(rz / h)) + 1 for h in hz]
    limit = 4 if f.periodized else 2
    for m, a in zip(mv + mz, list(f.v_axes) + list(f.z_axes)):
        if 2 * m + 1 > limit * len(a):
            raise SupportOverflow("scaled kernel support exceeds the grid")
    return mv, mz, hv, hz


def _apply_stencil(sigma: Symbol, eps: float, f: GridField, adjoint: bool):
    """out(x) = sum_y kappa^eps_x(y^{-1} x) f(y) dy  (or its exact adjoint).

    Frame convention: per offset D = (dv, dz) the source is y = x - D
    (forward) or x = y + D (adjoint); in both cases the kernel argument is
    w = (dv, dz + twist(dv, v_mesh)) scaled by delta_{scale/eps}, where
    v_mesh is the output point's frame v-coordinates.  Scale and carrier
    factors are exact.
    """
    import itertools

    g = f.group
    s = f.scale
    Q = g.homogeneous_dim
    mv, mz, hv, hz = _stencil_offsets(f, eps, sigma)
    ext = _extended_values(f, mv, mz)
    nv = [len(a) for a in f.v_axes]
    nz = [len(a) for a in f.z_axes]
    out = np.zeros(f.values.shape, dtype=complex)
    ratio = s / eps
    pref = ratio ** Q * f.cell_volume
    xv_abs = [np.asarray(f.abs_v(i)) for i in range(g.dim_v)]
    xz_abs = [np.asarray(f.abs_z(k)) for k in range(g.p)]
    vmesh = [f.broadcast_axis(i) for i in range(g.dim_v)]
    rv_lim = sigma.v_radius * eps / s + 1e-15
    terms = getattr(sigma, "terms", None)
    if terms is not None and not adjoint:
        # phi factors do not depend on the offset in the forward direction
        xv_st = np.stack([np.broadcast_to(a, f.values.shape) for a in xv_abs], -1)
        xz_st = np.stack([np.broadcast_to(a, f.values.shape) for a in xz_abs], -1)
        phis = [np.asarray(phi(xv_st, xz_st), dtype=complex) for phi, _ in terms]

    for ov in itertools.product(*[range(-m, m + 1) for m in mv]):
        dv = np.array([o * h for o, h in zip(ov, hv)])
        if np.any(np.abs(dv) > rv_lim):
            continue
        # w_z = dz + twist(dv, v_mesh): broadcastable over the v axes only
        tw = [sum(0.5 * (g.P_mats[k].T @ dv)[i] * vmesh[i]
                  for i in range(g.dim_v)) for k in range(g.p)]
        wv = dv * ratio
        if terms is not None and adjoint:
            xv_st = np.stack([np.broadcast_to(a + s * dv[i], f.values.shape)
                              for i, a in enumerate(xv_abs)], -1)
        for oz in itertools.product(*[range(-m, m + 1) for m in mz]):
            dz = np.array([o * h for o, h in zip(oz, hz)])
            wzs = [(dz[k] + tw[k]) * ratio ** 2 for k in range(g.p)]
            src_sl = []
            for i in range(g.dim_v):
                st = mv[i] + ov[i] if adjoint else mv[i] - ov[i]
                src_sl.append(slice(st, st + nv[i]))
            for k in range(g.p):
                st = mz[k] + oz[k] if adjoint else mz[k] - oz[k]
                src_sl.append(slice(st, st + nz[k]))
            src = ext[tuple(src_sl)]
            cphase = np.exp((1j if adjoint else -1j) * float(np.dot(f.carrier, dz)))
            if terms is not None:
                # separable fast path: g evaluated on the broadcast v-shape only
                wshape = np.broadcast_shapes(*[np.shape(t) for t in tw]) or (1,)
                wv_b = np.broadcast_to(wv, wshape + (g.dim_v,))
                wz_b = np.stack([np.broadcast_to(w, wshape) for w in wzs], -1)
                kv = 0.0
                if adjoint:
                    xz_st = np.stack(
                        [np.broadcast_to(
                            xz_abs[k] + s * s * dz[k] + g.twist(f.center.v, s * dv)[k],
                            f.values.shape) for k in range(g.p)], -1)
                    for phi, gw in terms:
                        kv = kv + phi(xv_st, xz_st) * np.asarray(gw(wv_b, wz_b))
                    kv = np.conj(kv)
                else:
                    for ph, (phi, gw) in zip(phis, terms):
                        kv = kv + ph * np.asarray(gw(wv_b, wz_b))
                if not np.any(kv):
                    continue
                out += kv * (cphase * src)
            else:
                if adjoint:
                    xv_st = np.stack([np.broadcast_to(a + s * dv[i], f.values.shape)
                                      for i, a in enumerate(xv_abs)], -1)
                    xz_st = np.stack(
                        [np.broadcast_to(
                            xz_abs[k] + s * s * dz[k] + g.twist(f.center.v, s * dv)[k],
                            f.values.shape) for k in range(g.p)], -1)
                else:
                    xv_st = np.stack([np.broadcast_to(a, f.values.shape)
                                      for a in xv_abs], -1)
                    xz_st = np.stack([np.broadcast_to(a, f.values.shape)
                                      for a in xz_abs], -1)
                wv_b = np.broadcast_to(wv, f.values.shape + (g.dim_v,))
                wz_b = np.stack([np.broadcast_to(w, f.values.shape) for w in wzs], -1)
                kv = np.asarray(sigma(xv_st, xz_st, wv_b, wz_b), dtype=complex)
                if adjoint:
                    kv = np.conj(kv)
                if not np.any(kv):
                    continue
                out += kv * (cphase * src)
    return f.with_values(out * pref)


def op_eps_apply(sigma: Symbol, eps: float, f: GridField) -> GridField:
    """Op_eps(sigma) f by support-limited discrete convolution."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return _apply_stencil(sigma, eps, f, adjoint=False)


def op_adjoint_apply(sigma: Symbol, eps: float, f: GridField) -> GridField:
    """Exact adjoint of the discrete Op_eps(sigma) on the same grid."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return _apply_stencil(sigma, eps, f, adjoint=True)


def multiply_by(f: GridField, chi) -> GridField:
    """Pointwise multiply by chi(xv_abs, xz_abs)."""
    g = f.group
    xv = np.stack([np.broadcast_to(f.abs_v(i), f.values.shape)
                   for i in range(g.dim_v)], -1)
    xz = np.stack([np.broadcast_to(f.abs_z(k), f.values.shape)
                   for k in range(g.p)], -1)
    return f.with_values(f.values * chi(xv, xz))


# ---------------------------------------------------------------------------
# symbol evaluation and difference operators


def symbol_at(sigma: Symbol, x: GroupPoint, cf: CentralFrequency,
              space: FockSpace, n_v: int = 33, n_z: int = 25) -> FockOperator:
    """sigma(x, lambda) = F kappa_x(lambda) by quadrature over supp kappa."""
    from .fields import GridField as GF
    from .gft import _forward_one_node

    g = cf.group
    axes_v, axes_z = _w_grid(g, sigma.v_radius * 1.02, sigma.z_radius * 1.02,
                             n_v, n_z)
    mesh = np.meshgrid(*(axes_v + axes_z), indexing="ij")
    wv = np.stack(mesh[: g.dim_v], axis=-1)
    wz = np.stack(mesh[g.dim_v:], axis=-1)
    xv = np.broadcast_to(x.v, wv.shape)
    xz = np.broadcast_to(x.z, wz.shape)
    vals = np.asarray(sigma(xv, xz, wv, wz), dtype=complex)
    fld = GF(g, tuple(axes_v), tuple(axes_z), vals, g.identity())
    return FockOperator(space, _forward_one_node(fld, cf.lam, space))


def difference_ops(A: FockOperator, cf: CentralFrequency):
    """Difference operators Delta_p_j(A), Delta_q_j(A) as matrix commutators.

    Delta_p_j = |l|^{-1/2} [xi_j, .],  Delta_q_j = |l|^{-1/2} [i d_xi_j, .].
    """
    sp = A.space
    rt = cf.norm ** -0.5
    dps, dqs = [], []
    for j in range(1, sp.d + 1):
        X = xi_matrix(sp, j)
        D = 1j * dxi_matrix(sp, j)
        dps.append(FockOperator(sp, rt * (X @ A.entries - A.entries @ X)))
        dqs.append(FockOperator(sp, rt * (D @ A.entries - A.entries @ D)))
    return dps, dqs


def kernel_l1_bound(sigma: Symbol, group, x_samples, n_v=31, n_z=21) -> float:
    """int sup_x |kappa_x(w)| dw, estimated on a w-grid and x sample set."""
    axes_v, axes_z = _w_grid(group, sigma.v_radius * 1.02, sigma.z_radius * 1.02,
                             n_v, n_z)
    mesh = np.meshgrid(*(axes_v + axes_z), indexing="ij")
    wv = np.stack(mesh[: group.dim_v], axis=-1)
    wz = np.stack(mesh[group.dim_v:], axis=-1)
    vol = np.prod([a[1] - a[0] for a in axes_v + axes_z])
    sup = None
    for x in x_samples:
        xv = np.broadcast_to(x.v, wv.shape)
        xz = np.broadcast_to(x.z, wz.shape)
        vals = np.abs(np.asarray(sigma(xv, xz, wv, wz)))
        sup = vals if sup is None else np.maximum(sup, vals)
    return float(np.sum(sup) * vol)


# ---------------------------------------------------------------------------
# residual harnesses (slopes are the pass criteria)


def calculus_grid(group, eps: float, sigma_reach_v: float, sigma_reach_z: float,
                  field_v: float = 0.35, field_z: float = 0.35,
                  passes: int = 1, points_per_width: float = 2.5,
                  h_cap: float = 0.05, res_v: float | None = None,
                  res_z: float | None = None) -> GridField:
    """Per-epsilon grid on G resolving the delta_eps-scaled kernel.

    The grid spacing tracks the width of the narrowest scaled kernel
    (res_v/res_z, defaulting to the reach); the box holds the field support
    plus `passes` kernel reaches.
    """
    from .fields import box_field

    rv = eps * sigma_reach_v
    rz = eps * eps * sigma_reach_z + 0.5 * rv * (field_v + passes * rv)
    res_rv = eps * (res_v if res_v is not None else sigma_reach_v)
    res_rz = (eps * eps * (res_z if res_z is not None else sigma_reach_z)
              + 0.5 * res_rv * field_v)
    hv = min(res_rv / points_per_width, h_cap)
    hz = min(res_rz / points_per_width, h_cap)
    ext_v = field_v + (passes + 0.5) * rv
    ext_z = field_z + (passes + 0.5) * rz
    nv = 2 * int(np.ceil(ext_v / hv / 2.0)) + 2
    nz = 2 * int(np.ceil(ext_z / hz / 2.0)) + 2
    return box_field(group, ext_v, ext_z, (nv,) * group.dim_v + (nz,) * group.p)


def _rel_residual(r_vals, f):
    return float(np.sqrt(np.sum(np.abs(r_vals) ** 2) * f.cell_volume) / f.norm())


def _fields_for(field_fns, group, eps, reach_v, reach_z, passes, grid_kw,
                res_v=None, res_z=None):
    from .fields import sample_on_grid

    tpl = calculus_grid(group, eps, reach_v, reach_z, passes=passes,
                        res_v=res_v, res_z=res_z, **grid_kw)
    return [sample_on_grid(tpl, fn) for fn in field_fns]


def adjoint_residual(sigma: SeparableSymbol, eps_list, field_fns, group=None,
                     grid_kw=None):
    """Rows (eps, residual) for Op* = Op(sigma*) - eps Op(corr) + O(eps^2).

    field_fns: callables fn(v, z) sampled on a per-epsilon grid adapted to
    the scaled kernel (or ready GridFields, reused for every epsilon).
    residual(eps) = sup_f ||Op_eps(sigma)* f - Op_eps(sigma*) f
                          + eps Op_eps(corr) f|| / ||f||.
    """
    group = group or getattr(field_fns[0], "group", None)
    star = sigma.adjoint_symbol()
    corr = sigma.adjoint_correction(group)
    rows = []
    for eps in eps_list:
        if callable(field_fns[0]):
            fields = _fields_for(field_fns, group, eps, sigma.v_radius,
                                 sigma.z_radius, 1, grid_kw or {})
        else:
            fields = field_fns
        worst = 0.0
        for f in fields:
            a = op_adjoint_apply(sigma, eps, f)
            b = op_eps_apply(star, eps, f)
            c = op_eps_apply(corr, eps, f)
            worst = max(worst, _rel_residual(a.values - b.values + eps * c.values, f))
        rows.append((float(eps), worst))
    slope = loglog_slope([r[0] for r in rows], [r[1] for r in rows])
    return rows, slope


def composition_residual(s1: SeparableSymbol, s2: SeparableSymbol, eps_list,
                         field_fns, group=None, grid_kw=None, n_v=21, n_z=13):
    """Rows (eps, residual) for Op(s1)Op(s2) = Op(s1 s2) - eps Op(corr) + O(eps^2)."""
    group = group or getattr(field_fns[0], "group", None)
    prod, corr = compose_symbols(group, s1, s2, n_v, n_z)
    reach_v = s1.v_radius + s2.v_radius
    reach_z = s1.z_radius + s2.z_radius
    res_v = min(s1.v_radius, s2.v_radius)
    res_z = min(s1.z_radius, s2.z_radius)
    rows = []
    for eps in eps_list:
        if callable(field_fns[0]):
            fields = _fields_for(field_fns, group, eps, reach_v, reach_z, 2,
                                 grid_kw or {}, res_v=res_v, res_z=res_z)
        else:
            fields = field_fns
        worst = 0.0
        for f in fields:
            a = op_eps_apply(s1, eps, op_eps_apply(s2, eps, f))
            b = op_eps_apply(prod, eps, f)
            c = op_eps_apply(corr, eps, f)
            worst = max(worst, _rel_residual(a.values - b.values + eps * c.values, f))
        rows.append((float(eps), worst))
    slope = loglog_slope([r[0] for r in rows], [r[1] for r in rows])
    return rows, slope


def locality_residual(sigma: Symbol, chi, eps_list, field_fns, group=None,
                      grid_kw=None):
    """Rows (eps, ||Op(sigma)f - Op(sigma)(chi f)|| / ||f||); chi = 1 near supp_x."""
    rows = []
    group = group or getattr(field_fns[0], "group", None)
    for eps in eps_list:
        if callable(field_fns[0]):
            fields = _fields_for(field_fns, group, eps, sigma.v_radius,
                                 sigma.z_radius, 1, grid_kw or {})
        else:
            fields = field_fns
        worst = 0.0
        for f in fields:
            a = op_eps_apply(sigma, eps, f)
            b = op_eps_apply(sigma, eps, multiply_by(f, chi))
            worst = max(worst, _rel_residual(a.values - b.values, f))
        rows.append((float(eps), worst))
    slope = loglog_slope([r[0] for r in rows], [max(r[1], 1e-300) for r in rows])
    return rows, slope


def _cutoff_symbol(sigma: Symbol, eps, chi0_radius_v, chi0_radius_z):
    def window(wv, wz):
        rho = np.sqrt(np.sum((eps * np.asarray(wv) / chi0_radius_v) ** 2, -1)
                      + np.sum((eps ** 2 * np.asarray(wz) / chi0_radius_z) ** 2, -1))
        return bump(rho, 1.0)

    terms = getattr(sigma, "terms", None)
    if terms is not None:
        new_terms = [(phi, lambda wv, wz, g=gw: g(wv, wz) * window(wv, wz))
                     for phi, gw in terms]
        return SeparableSymbol.from_terms(new_terms, sigma.v_radius,
                                          sigma.z_radius, sigma.x_center,
                                          sigma.x_radius)
    return Symbol(lambda xv, xz, wv, wz: sigma(xv, xz, wv, wz) * window(wv, wz),
                  sigma.v_radius, sigma.z_radius, sigma.x_center, sigma.x_radius)


def kernel_cutoff_residual(sigma: Symbol, chi0_radius_v, chi0_radius_z,
                           eps_list, field_fns, group=None, grid_kw=None):
    """Cutting the kernel to a delta_eps-neighborhood of 1_G changes Op_eps
    only superpolynomially little; rows (eps, relative change)."""
    rows = []
    group = group or getattr(field_fns[0], "group", None)
    for eps in eps_list:
        if callable(field_fns[0]):
            fields = _fields_for(field_fns, group, eps, sigma.v_radius,
                                 sigma.z_radius, 1, grid_kw or {})
        else:
            fields = field_fns
        cut = _cutoff_symbol(sigma, eps, chi0_radius_v, chi0_radius_z)
        worst = 0.0
        for f in fields:
            a = op_eps_apply(sigma, eps, f)
            b = op_eps_apply(cut, eps, f)
            worst = max(worst, _rel_residual(a.values - b.values, f))
        rows.append((float(eps), worst))
    slope = loglog_slope([r[0] for r in rows], [max(r[1], 1e-300) for r in rows])
    return rows, slope
