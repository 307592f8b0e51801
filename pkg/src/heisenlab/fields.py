"""Complex fields sampled on box grids in G, with frame and carrier metadata.

A GridField stores values V on a tensor grid in frame coordinates y and
represents

    u(x) = scale^(-Q/2) V(y) exp(i carrier . z_y),   y = d_{1/scale}(center^{-1} x).

Plain fields use the trivial frame (center = 1, scale = 1, carrier = 0).
Wave packets store their slow envelope on the sqrt(eps)-scaled moving frame
with the fast vertical oscillation in the carrier; every operation that
touches packets works on this representation, so the eps^-2 phase never has
to be resolved by a grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BoundaryMass
from .group import GroupPoint, HTypeStructure

__all__ = ["GridField", "box_axes", "box_field", "quotient_field", "sample_on_grid"]


def box_axes(extent, n):
    """Cell-centered axis over [-extent, extent) with n cells."""
    h = 2.0 * extent / n
    return -extent + (np.arange(n) + 0.5) * h


def _spacing(axis):
    if len(axis) < 2:
        raise ValueError("grid axes need at least two points")
    h = axis[1] - axis[0]
    if np.max(np.abs(np.diff(axis) - h)) > 1e-12 * abs(h):
        raise ValueError("grid axes must be uniform")
    return float(h)


@dataclass(frozen=True)
class GridField:
    group: HTypeStructure
    v_axes: tuple
    z_axes: tuple
    values: np.ndarray
    center: GroupPoint
    scale: float = 1.0
    carrier: np.ndarray = None
    periodized: bool = False

    def __post_init__(self):
        g = self.group
        if len(self.v_axes) != g.dim_v or len(self.z_axes) != g.p:
            raise ValueError("axis count does not match the group dimensions")
        vals = np.asarray(self.values, dtype=complex)
        shape = tuple(len(a) for a in self.v_axes) + tuple(len(a) for a in self.z_axes)
        if vals.shape != shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {shape}")
        object.__setattr__(self, "values", vals)
        car = np.zeros(g.p) if self.carrier is None else np.asarray(self.carrier, float)
        object.__setattr__(self, "carrier", car)
        object.__setattr__(self, "v_axes", tuple(np.asarray(a, float) for a in self.v_axes))
        object.__setattr__(self, "z_axes", tuple(np.asarray(a, float) for a in self.z_axes))

    # -- geometry -----------------------------------------------------------

    @property
    def spacings(self):
        return tuple(_spacing(a) for a in self.v_axes + self.z_axes)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def naxes(self) -> int:
        return len(self.v_axes) + len(self.z_axes)

    def axis(self, i):
        k = len(self.v_axes)
        return self.v_axes[i] if i < k else self.z_axes[i - k]

    def broadcast_axis(self, i):
        """Axis values shaped for broadcasting against `values`."""
        shape = [1] * self.naxes
        shape[i] = -1
        return self.axis(i).reshape(shape)

    def frame_coords_of(self, x: GroupPoint):
        """Frame coordinates y of an absolute point x."""
        g = self.group
        dv = x.v - self.center.v
        dz = x.z - self.center.z - g.twist(self.center.v, dv)
        return dv / self.scale, dz / self.scale ** 2

    def abs_z(self, k: int):
        """Absolute central coordinate z_k as a broadcastable sum over axes."""
        g = self.group
        s = self.scale
        out = self.center.z[k] + s * s * self.broadcast_axis(g.dim_v + k)
        w = 0.5 * (g.P_mats[k].T @ self.center.v)  # z twist weights
        for i in range(g.dim_v):
            out = out + s * w[i] * self.broadcast_axis(i)
        return out

    def abs_v(self, i: int):
        return self.center.v[i] + self.scale * self.broadcast_axis(i)

    # -- values -------------------------------------------------------------

    def with_values(self, new_values) -> "GridField":
        return replace(self, values=np.asarray(new_values, dtype=complex))

    def norm_sq(self) -> float:
        """L2(G) mass of u (frame normalization makes this the plain grid sum)."""
        return float(np.sum(np.abs(self.values) ** 2) * self.cell_volume)

    def norm(self) -> float:
        return np.sqrt(self.norm_sq())

    def inner(self, other: "GridField") -> complex:
        """L2 inner product (u, w); requires matching frames and grids."""
        self._require_same_frame(other)
        return complex(np.vdot(other.values, self.values) * self.cell_volume)

    def _require_same_frame(self, other: "GridField"):
        same = (
            self.scale == other.scale
            and np.array_equal(self.center.coords(), other.center.coords())
            and np.array_equal(self.carrier, other.carrier)
            and all(np.array_equal(a, b) for a, b in zip(self.v_axes, other.v_axes))
            and all(np.array_equal(a, b) for a, b in zip(self.z_axes, other.z_axes))
        )
        if not same:
            raise ValueError("fields live on different frames or grids")

    def boundary_fraction(self, shell: float = 0.1) -> float:
        """Fraction of the L2 mass in the outer `shell` of the box, per axis."""
        mask = np.zeros(self.values.shape, dtype=bool)
        for i in range(self.naxes):
            a = self.axis(i)
            lo = a[0] + shell * (a[-1] - a[0])
            hi = a[-1] - shell * (a[-1] - a[0])
            ax_mask = (a < lo) | (a > hi)
            shape = [1] * self.naxes
            shape[i] = -1
            mask |= ax_mask.reshape(shape)
        total = np.sum(np.abs(self.values) ** 2)
        if total == 0.0:
            return 0.0
        return float(np.sum(np.abs(self.values[mask]) ** 2) / total)

    def require_contained(self, tol: float = 1e-6, shell: float = 0.1):
        frac = self.boundary_fraction(shell)
        if frac > tol:
            raise BoundaryMass(
                f"{frac:.3g} of the mass sits in the outer {shell:.0%} shell (tol {tol:g})")
        return frac


def box_field(group: HTypeStructure, v_extent, z_extent, shape,
              center: GroupPoint | None = None, scale: float = 1.0,
              carrier=None, periodized: bool = False) -> GridField:
    """Zero field on a symmetric cell-centered box in frame coordinates.

    v_extent/z_extent: scalar or per-axis half-widths; shape: points per axis
    (scalar or sequence of 2d+p entries).
    """
    g = group
    ext_v = np.broadcast_to(np.asarray(v_extent, float), (g.dim_v,))
    ext_z = np.broadcast_to(np.asarray(z_extent, float), (g.p,))
    ns = np.broadcast_to(np.asarray(shape, int), (g.dim_v + g.p,))
    v_axes = tuple(box_axes(ext_v[i], ns[i]) for i in range(g.dim_v))
    z_axes = tuple(box_axes(ext_z[k], ns[g.dim_v + k]) for k in range(g.p))
    vals = np.zeros(tuple(ns), dtype=complex)
    return GridField(g, v_axes, z_axes, vals, center or g.identity(), scale,
                     carrier, periodized)


def quotient_field(group: HTypeStructure, n_v: int, n_z: int) -> GridField:
    """Zero field on the fundamental box [0,sv)^2d x [0,sz)^p, cell-centered.

    n_z should be a multiple of n_v so that the twisted periodization maps
    grid points to grid points.
    """
    g = group
    hv = g.lattice_scale_v / n_v
    hz = g.lattice_scale_z / n_z
    v_axes = tuple((np.arange(n_v) + 0.5) * hv for _ in range(g.dim_v))
    z_axes = tuple((np.arange(n_z) + 0.5) * hz for _ in range(g.p))
    shape = (n_v,) * g.dim_v + (n_z,) * g.p
    return GridField(g, v_axes, z_axes, np.zeros(shape, dtype=complex),
                     g.identity(), 1.0, None, True)


def sample_on_grid(template: GridField, fn) -> GridField:
    """Fill a field by evaluating fn(v_mesh, z_mesh) in frame coordinates.

    fn receives arrays of shape (*grid, 2d) and (*grid, p).
    """
    g = template.group
    mesh = np.meshgrid(*(template.v_axes + template.z_axes), indexing="ij")
    v = np.stack(mesh[: g.dim_v], axis=-1)
    z = np.stack(mesh[g.dim_v:], axis=-1)
    return template.with_values(np.asarray(fn(v, z), dtype=complex))
