"""Exact arithmetic of H-type groups.

Structure validation, the (step-2) group law in exponential coordinates,
dilations, the homogeneous quasi-norm, lambda-dependent linear algebra,
vertical/horizontal flows and lattice reduction for the compact quotient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateBasis, StructureError

__all__ = [
    "HTypeStructure",
    "GroupPoint",
    "CentralFrequency",
    "validate_structure",
    "heisenberg",
    "structure_from_config",
    "group_mul",
    "group_inv",
    "dilate",
    "quasi_norm",
    "adapted_basis",
    "coords_pqz",
    "flow_phi",
    "horizontal_flow",
    "lattice_reduce",
    "reduce_points",
]

DEFAULT_SCALE_V = np.sqrt(2.0 * np.pi)
DEFAULT_SCALE_Z = np.pi


def _readonly(a):
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class HTypeStructure:
    """A prototype H-type group on R^(2d+p).

    Attributes
    ----------
    d : int
        Half the dimension of the first stratum.
    p : int
        Dimension of the center.
    P_mats : ndarray, shape (p, 2d, 2d)
        Orthogonal skew-symmetric matrices defining the group law twist
        ``(w,s)*(w',s') = (w+w', s_k + s'_k + <w, P_k w'>/2)``.
    lattice_scale_v, lattice_scale_z : float
        Spacings of the cocompact lattice along the first stratum and the
        center (defaults sqrt(2*pi) and pi).
    """

    d: int
    p: int
    P_mats: np.ndarray
    lattice_scale_v: float = DEFAULT_SCALE_V
    lattice_scale_z: float = DEFAULT_SCALE_Z

    @property
    def dim_v(self) -> int:
        return 2 * self.d

    @property
    def dim(self) -> int:
        return 2 * self.d + self.p

    @property
    def homogeneous_dim(self) -> int:
        """Q = dim v + 2 dim z = 2d + 2p."""
        return 2 * self.d + 2 * self.p

    def identity(self) -> "GroupPoint":
        return GroupPoint(np.zeros(self.dim_v), np.zeros(self.p))

    def point(self, *coords) -> "GroupPoint":
        """Build a point from 2d+p scalar coordinates (v..., z...)."""
        c = np.asarray(coords, dtype=float).ravel()
        if c.size != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {c.size}")
        return GroupPoint(c[: self.dim_v], c[self.dim_v:])

    def twist(self, v1, v2):
        """Central part of the product twist, <v1, P_k v2>/2 per central axis.

        Broadcasts over leading axes of v1/v2 (last axis length 2d).
        """
        v1 = np.asarray(v1, dtype=float)
        v2 = np.asarray(v2, dtype=float)
        # out[..., k] = v1 . (P_k v2) / 2
        pv2 = np.einsum("kij,...j->...ki", self.P_mats, v2)
        return 0.5 * np.einsum("...i,...ki->...k", v1, pv2)

    def lattice_closed(self, tol: float = 1e-12) -> bool:
        """Whether the scaled integer lattice is closed under the group law."""
        sv, sz = self.lattice_scale_v, self.lattice_scale_z
        # twist of two lattice generators must land on the central lattice
        for i in range(self.dim_v):
            for j in range(self.dim_v):
                t = 0.5 * sv * sv * self.P_mats[:, i, j]
                if np.any(np.abs(t / sz - np.round(t / sz)) > tol):
                    return False
        return True


@dataclass(frozen=True)
class GroupPoint:
    """Element of G in exponential coordinates (v, z)."""

    v: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", _readonly(self.v))
        object.__setattr__(self, "z", _readonly(self.z))
        if not (np.all(np.isfinite(self.v)) and np.all(np.isfinite(self.z))):
            raise ValueError("group point must have finite coordinates")

    def coords(self) -> np.ndarray:
        return np.concatenate([self.v, self.z])

    def __repr__(self):
        return f"GroupPoint(v={self.v.tolist()}, z={self.z.tolist()})"


@dataclass(frozen=True)
class CentralFrequency:
    """A nonzero central covector with its derived linear algebra.

    J is the bracket map ``<J u, w> = lambda([u, w])``; for the prototype
    twist this is sum_k lambda_k (P_k)^T.  Columns of P_basis/Q_basis form
    the lambda-adapted symplectic orthonormal basis with Q_j = (J/|l|) P_j.
    """

    group: HTypeStructure
    lam: np.ndarray
    norm: float
    unit_vertical: np.ndarray
    J: np.ndarray
    P_basis: np.ndarray
    Q_basis: np.ndarray

    def coords_pq(self, v):
        """(p, q) coordinates of first-stratum vectors; broadcasts."""
        v = np.asarray(v, dtype=float)
        return v @ self.P_basis, v @ self.Q_basis

    def vector_from_pq(self, pc, qc):
        pc = np.asarray(pc, dtype=float)
        qc = np.asarray(qc, dtype=float)
        return pc @ self.P_basis.T + qc @ self.Q_basis.T

    def lam_of_z(self, z):
        """lambda(z) for central coordinates z; broadcasts."""
        return np.asarray(z, dtype=float) @ self.lam


def validate_structure(d, p, P_mats, lattice_scale_v=DEFAULT_SCALE_V,
                       lattice_scale_z=DEFAULT_SCALE_Z, tol=1e-12) -> HTypeStructure:
    """Validate the defining identities of a prototype H-type structure.

    Raises
    ------
    StructureError
        Naming the violated identity (orthogonality, skew-symmetry,
        anticommutation, or linear independence).
    """
    d, p = int(d), int(p)
    if d < 1 or p < 1:
        raise StructureError("d and p must be positive integers")
    P = np.asarray(P_mats, dtype=float)
    if P.shape != (p, 2 * d, 2 * d):
        raise StructureError(f"expected {p} matrices of shape {2*d}x{2*d}, got {P.shape}")
    eye = np.eye(2 * d)
    for r in range(p):
        if np.max(np.abs(P[r].T @ P[r] - eye)) > tol:
            raise StructureError(f"P^({r + 1}) is not orthogonal")
        if np.max(np.abs(P[r].T + P[r])) > tol:
            raise StructureError(f"P^({r + 1}) is not skew-symmetric")
    for r in range(p):
        for s in range(r + 1, p):
            if np.max(np.abs(P[r] @ P[s] + P[s] @ P[r])) > tol:
                raise StructureError(
                    f"anticommutation fails: P^({r + 1})P^({s + 1}) + P^({s + 1})P^({r + 1}) != 0")
    if np.linalg.matrix_rank(P.reshape(p, -1)) < p:
        raise StructureError("the matrices P^(r) are not linearly independent")
    return HTypeStructure(d, p, _readonly(P), float(lattice_scale_v), float(lattice_scale_z))


def heisenberg(d: int = 1, lattice_scale_v=DEFAULT_SCALE_V,
               lattice_scale_z=DEFAULT_SCALE_Z) -> HTypeStructure:
    """Heisenberg preset: p = 1, P^(1) = [[0, I], [-I, 0]]."""
    eye = np.eye(d)
    P1 = np.block([[np.zeros((d, d)), eye], [-eye, np.zeros((d, d))]])
    return validate_structure(d, 1, P1[None, :, :], lattice_scale_v, lattice_scale_z)


def structure_from_config(source) -> HTypeStructure:
    """Load a structure preset from a JSON file path, file object or dict.

    Keys: ``d``, ``p``, ``matrices`` (list of p row-major 2d x 2d arrays),
    optional ``lattice_scale_v`` / ``lattice_scale_z``; or ``preset``:
    ``{"preset": "heisenberg", "d": 1}``.
    """
    if isinstance(source, dict):
        cfg = source
    elif hasattr(source, "read"):
        cfg = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    if cfg.get("preset") == "heisenberg":
        return heisenberg(int(cfg.get("d", 1)),
                          float(cfg.get("lattice_scale_v", DEFAULT_SCALE_V)),
                          float(cfg.get("lattice_scale_z", DEFAULT_SCALE_Z)))
    d, p = int(cfg["d"]), int(cfg["p"])
    mats = np.asarray(cfg["matrices"], dtype=float).reshape(p, 2 * d, 2 * d)
    return validate_structure(d, p, mats,
                              float(cfg.get("lattice_scale_v", DEFAULT_SCALE_V)),
                              float(cfg.get("lattice_scale_z", DEFAULT_SCALE_Z)))


def _check_dims(g: HTypeStructure, a: GroupPoint):
    if a.v.shape != (g.dim_v,) or a.z.shape != (g.p,):
        raise ValueError("point dimensions do not match the structure")


def group_mul(g: HTypeStructure, a: GroupPoint, b: GroupPoint) -> GroupPoint:
    """Product (w,s)(w',s') = (w+w', s+s'+<w,P w'>/2)."""
    _check_dims(g, a)
    _check_dims(g, b)
    return GroupPoint(a.v + b.v, a.z + b.z + g.twist(a.v, b.v))


def group_inv(g: HTypeStructure, a: GroupPoint) -> GroupPoint:
    """In exponential coordinates the inverse is (-v, -z)."""
    _check_dims(g, a)
    return GroupPoint(-a.v, -a.z)


def dilate(g: HTypeStructure, t: float, a: GroupPoint) -> GroupPoint:
    """Group dilation: v -> t v, z -> t^2 z (t > 0)."""
    if t <= 0:
        raise ValueError("dilation parameter must be positive")
    return GroupPoint(t * a.v, t * t * a.z)


def quasi_norm(g: HTypeStructure, a) -> float:
    """Homogeneous quasi-norm (sum |v|^4 + sum |z|^2)^(1/4).

    Accepts a GroupPoint or an (v, z) array pair; broadcasts over points.
    """
    if isinstance(a, GroupPoint):
        v, z = a.v, a.z
    else:
        v, z = a
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)
    return (np.sum(v ** 4, axis=-1) + np.sum(z ** 2, axis=-1)) ** 0.25


def adapted_basis(g: HTypeStructure, lam, threshold: float = 1e-8) -> CentralFrequency:
    """Deterministic lambda-adapted symplectic orthonormal basis of the first stratum.

    Gram-Schmidt seeded with standard basis vectors in index order; each
    accepted seed yields P_j, and Q_j = (J/|lambda|) P_j.
    """
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.shape != (g.p,) or not np.any(lam != 0.0):
        raise ValueError("lambda must be a nonzero central covector")
    norm = float(np.linalg.norm(lam))
    # bracket convention: <J u, w> = lambda([u, w]) = sum_k lam_k <u, P_k w>
    J = np.einsum("k,kij->ji", lam, g.P_mats)  # transpose of sum lam_k P_k
    Jhat = J / norm
    cols = []
    P_cols, Q_cols = [], []
    for e in np.eye(g.dim_v):
        if len(P_cols) == g.d:
            break
        r = e.copy()
        for c in cols:
            r -= np.dot(c, r) * c
        rn = np.linalg.norm(r)
        if rn <= threshold:
            continue
        pj = r / rn
        qj = Jhat @ pj
        P_cols.append(pj)
        Q_cols.append(qj)
        cols.extend([pj, qj])
    if len(P_cols) < g.d:
        raise DegenerateBasis("Gram-Schmidt threshold never met; corrupted structure data")
    return CentralFrequency(
        group=g, lam=_readonly(lam), norm=norm,
        unit_vertical=_readonly(lam / norm), J=_readonly(J),
        P_basis=_readonly(np.column_stack(P_cols)),
        Q_basis=_readonly(np.column_stack(Q_cols)),
    )


def coords_pqz(cf: CentralFrequency, a: GroupPoint):
    """(p, q, z) coordinates of a point in the lambda-adapted basis."""
    pc, qc = cf.coords_pq(a.v)
    return pc, qc, np.array(a.z, dtype=float)


def flow_phi(g: HTypeStructure, n: int, s: float, x: GroupPoint, lam) -> GroupPoint:
    """Vertical flow Phi_n^s: shift z by s (n + d/2) lambda/|lambda|.

    Central elements commute, so left and right translation agree.
    """
    if n < 0:
        raise ValueError("Hermite level n must be nonnegative")
    lam = np.asarray(lam, dtype=float).ravel()
    nrm = np.linalg.norm(lam)
    if nrm == 0.0:
        raise ValueError("lambda must be nonzero")
    return GroupPoint(x.v, x.z + s * (n + g.d / 2.0) * lam / nrm)


def horizontal_flow(g: HTypeStructure, s: float, omega, x: GroupPoint,
                    side: str = "left", check_unit: bool = True) -> GroupPoint:
    """Flow along a unit horizontal direction omega.

    side='left'  : Exp(s omega.V) x   (assumption (A) as printed)
    side='right' : x Exp(s omega.V)   (flow of the left-invariant fields,
                   the Xi^s flow of the transport statement)
    """
    omega = np.asarray(omega, dtype=float).ravel()
    if omega.shape != (g.dim_v,):
        raise ValueError("omega must have length 2d")
    if check_unit and abs(np.linalg.norm(omega) - 1.0) > 1e-10:
        raise ValueError("omega must be a unit vector")
    step = GroupPoint(s * omega, np.zeros(g.p))
    if side == "left":
        return group_mul(g, step, x)
    if side == "right":
        return group_mul(g, x, step)
    raise ValueError("side must be 'left' or 'right'")


def lattice_reduce(g: HTypeStructure, x: GroupPoint):
    """Split x = gamma * rep with gamma in the lattice and rep in the box.

    The fundamental box is [0, scale_v)^(2d) x [0, scale_z)^p; the central
    coordinate of gamma accounts for the twisted group law so that
    ``group_mul(gamma, rep) == x`` exactly.
    """
    rv, rz, gv, gz = reduce_points(g, x.v[None, :], x.z[None, :], return_gamma=True)
    rep = GroupPoint(rv[0], rz[0])
    gamma = GroupPoint(gv[0], gz[0])
    return rep, gamma


def reduce_points(g: HTypeStructure, v, z, return_gamma: bool = False):
    """Vectorized lattice reduction of point arrays.

    Parameters
    ----------
    v : ndarray (..., 2d)
    z : ndarray (..., p)

    Returns
    -------
    rep_v, rep_z : reduced coordinates in the fundamental box
    (gamma_v, gamma_z) : lattice coordinates, if requested.
    """
    sv, sz = g.lattice_scale_v, g.lattice_scale_z
    v = np.asarray(v, dtype=float)
    z = np.asarray(z, dtype=float)

    def _split(x, s):
        k = np.floor(x / s)
        r = x - k * s
        k = np.where(r >= s, k + 1, k)
        k = np.where(r < 0, k - 1, k)
        return k * s, x - k * s

    gv, rep_v = _split(v, sv)
    # rep_z_k = z_k - gz_k - <gv, P_k v>/2  must land in [0, sz); the
    # reconstruction gamma*rep is then exact because twist(gv, gv) = 0.
    shift = z - g.twist(gv, v)
    gz, rep_z = _split(shift, sz)
    if return_gamma:
        return rep_v, rep_z, gv, gz
    return rep_v, rep_z
