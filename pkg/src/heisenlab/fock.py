"""Truncated Hermite (Fock) model of the infinite-dimensional representations.

Matrices of pi^lambda_x on the basis of Hermite functions of total degree
<= N, the sub-Laplacian symbol H(lambda), ladder operators and spectral
projectors.  Two engines compute the 1D translation-modulation coefficient
integrals: Gauss-Hermite quadrature (used by `pi_matrix`) and the exact
Laguerre closed form for displacement matrix elements (used by the batch
transform paths, stable for arbitrarily large arguments).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite

from .errors import QuadratureOverflow
from .group import CentralFrequency, GroupPoint, coords_pqz

__all__ = [
    "FockSpace",
    "FockVector",
    "FockOperator",
    "hermite_scaled",
    "hermite_functions",
    "coeff1d_gh",
    "coeff1d_laguerre",
    "pi_matrix",
    "homomorphism_residual",
    "h_lambda",
    "spectral_projector",
    "annihilation",
    "xi_matrix",
    "dxi_matrix",
    "ladder",
    "pi_of_generator",
    "level_mask",
]


def _multi_indices(d: int, N: int) -> np.ndarray:
    """All multi-indices alpha with |alpha| <= N in graded lexicographic order."""
    out = []
    for total in range(N + 1):
        level = []

        def rec(prefix, remaining, slots):
            if slots == 1:
                level.append(prefix + [remaining])
                return
            for k in range(remaining, -1, -1):
                rec(prefix + [k], remaining - k, slots - 1)

        rec([], total, d)
        level.sort(key=lambda t: t, reverse=True)
        out.extend(level)
    return np.asarray(out, dtype=np.int64)


@dataclass(frozen=True)
class FockSpace:
    """Hermite functions of total degree <= N on R^d, graded-lex ordered."""

    d: int
    N: int

    def __post_init__(self):
        if self.d < 1 or self.N < 0:
            raise ValueError("need d >= 1 and N >= 0")

    @property
    def indices(self) -> np.ndarray:
        return _indices_cached(self.d, self.N)

    @property
    def dim(self) -> int:
        return self.indices.shape[0]

    @property
    def levels(self) -> np.ndarray:
        return self.indices.sum(axis=1)

    def rank(self, alpha) -> int:
        """Rank of a multi-index in the ordering."""
        alpha = tuple(int(a) for a in np.atleast_1d(alpha))
        return _rank_table(self.d, self.N)[alpha]

    def basis_vector(self, alpha) -> "FockVector":
        c = np.zeros(self.dim, dtype=complex)
        c[self.rank(alpha)] = 1.0
        return FockVector(self, c)


@lru_cache(maxsize=None)
def _indices_cached(d, N):
    idx = _multi_indices(d, N)
    idx.flags.writeable = False
    return idx


@lru_cache(maxsize=None)
def _rank_table(d, N):
    return {tuple(a): r for r, a in enumerate(_indices_cached(d, N))}


@dataclass(frozen=True)
class FockVector:
    space: FockSpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.space.dim,):
            raise ValueError("coefficient length does not match the space")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


@dataclass(frozen=True)
class FockOperator:
    space: FockSpace
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError("matrix shape does not match the space")
        if not np.all(np.isfinite(m)):
            raise ValueError("entries must be finite")
        object.__setattr__(self, "entries", m)

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            return FockOperator(self.space, self.entries @ other.entries)
        if isinstance(other, FockVector):
            return FockVector(self.space, self.entries @ other.coeffs)
        return NotImplemented

    def adjoint(self) -> "FockOperator":
        return FockOperator(self.space, self.entries.conj().T)


# ---------------------------------------------------------------------------
# Hermite machinery


def hermite_scaled(nmax: int, x) -> np.ndarray:
    """Scaled Hermite values Htilde_n(x) = h_n(x) exp(x^2/2), n = 0..nmax.

    Stable three-term recursion; output shape x.shape + (nmax+1,).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (nmax + 1,))
    out[..., 0] = np.pi ** -0.25
    if nmax >= 1:
        out[..., 1] = np.sqrt(2.0) * x * out[..., 0]
    for n in range(1, nmax):
        out[..., n + 1] = (np.sqrt(2.0 / (n + 1)) * x * out[..., n]
                           - np.sqrt(n / (n + 1.0)) * out[..., n - 1])
    return out


def hermite_functions(nmax: int, x) -> np.ndarray:
    """L2-normalized Hermite functions h_n(x), n = 0..nmax."""
    x = np.asarray(x, dtype=float)
    return hermite_scaled(nmax, x) * np.exp(-0.5 * x * x)[..., None]


def gh_rule(num_nodes: int):
    return _gh_cached(int(num_nodes))


@lru_cache(maxsize=None)
def _gh_cached(num_nodes):
    u, w = roots_hermite(num_nodes)
    u.flags.writeable = False
    w.flags.writeable = False
    return u, w


def coeff1d_gh(s, theta, nmax: int, num_nodes: int) -> np.ndarray:
    """1D coefficients m[b,a] = int e^{i theta xi} h_a(xi+s) h_b(xi) dxi.

    Gauss-Hermite quadrature with `num_nodes` nodes; accurate while
    |theta| stays well below sqrt(2*num_nodes).  Broadcasts over s/theta;
    output shape broadcast(s,theta).shape + (nmax+1, nmax+1).
    """
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s, theta = np.broadcast_arrays(s, theta)
    u, w = gh_rule(num_nodes)
    ha = hermite_scaled(nmax, u + s[..., None] / 2.0)      # (..., K, n+1)
    hb = hermite_scaled(nmax, u - s[..., None] / 2.0)
    osc = w * np.exp(1j * theta[..., None] * u)            # (..., K)
    m = np.einsum("...k,...ka,...kb->...ba", osc, ha, hb)
    pref = np.exp(-0.25 * s * s - 0.5j * theta * s)
    return m * pref[..., None, None]


def _laguerre_triangle(x, nmax: int) -> np.ndarray:
    """L_n^(k)(x) for 0 <= n, k <= nmax; x array -> shape x.shape+(n,k)."""
    x = np.asarray(x, dtype=float)
    L = np.empty(x.shape + (nmax + 1, nmax + 1))
    k = np.arange(nmax + 1, dtype=float)
    L[..., 0, :] = 1.0
    if nmax >= 1:
        L[..., 1, :] = 1.0 + k - x[..., None]
    for n in range(1, nmax):
        L[..., n + 1, :] = ((2 * n + 1 + k - x[..., None]) * L[..., n, :]
                            - (n + k) * L[..., n - 1, :]) / (n + 1.0)
    return L


def coeff1d_laguerre(s, theta, nmax: int) -> np.ndarray:
    """Exact closed form of `coeff1d_gh` via displacement matrix elements.

    m[b,a] = e^{-i theta s/2} <h_b| D(zeta) |h_a>, zeta = (-s + i theta)/sqrt2,
    with the Laguerre formula for D.  Stable for arbitrarily large arguments
    (entries decay like exp(-|zeta|^2/2)).
    """
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s, theta = np.broadcast_arrays(s, theta)
    zeta = (-s + 1j * theta) / np.sqrt(2.0)
    x = np.abs(zeta) ** 2
    big = x > 600.0  # entries below ~1e-130; avoid pow overflow in tails
    xs = np.where(big, 0.0, x)
    L = _laguerre_triangle(xs, nmax)
    n = np.arange(nmax + 1)
    # sqrt(min! / max!) = 1/sqrt(prod_{i=min+1..max} i), precomputed ratios
    logfact = np.cumsum(np.concatenate([[0.0], np.log(np.arange(1, nmax + 1))]))
    a_idx = n[None, :]
    b_idx = n[:, None]
    kdiff = b_idx - a_idx
    nmin = np.minimum(a_idx, b_idx)
    ratio = np.exp(0.5 * (logfact[nmin] - logfact[np.maximum(a_idx, b_idx)]))
    zc = np.where(big, 1.0, zeta)  # dummy base under the mask
    powz = zc[..., None, None] ** np.maximum(kdiff, 0)
    powzc = (-np.conj(zc[..., None, None])) ** np.maximum(-kdiff, 0)
    gauss = np.exp(-0.5 * xs)
    # L_min^(|k|)(x): gather over the triangle
    Lg = np.take_along_axis(
        L.reshape(x.shape + (-1,)),
        (nmin * (nmax + 1) + np.abs(kdiff)).reshape((1,) * x.ndim + (-1,)),
        axis=-1,
    ).reshape(x.shape + (nmax + 1, nmax + 1))
    D = ratio * np.where(kdiff >= 0, powz, powzc) * Lg * gauss[..., None, None]
    D = np.where(big[..., None, None], 0.0, D)
    pref = np.exp(-0.5j * theta * s)
    return D * pref[..., None, None]


def _tensor_assemble(space: FockSpace, m_per_dim) -> np.ndarray:
    """Full matrix M[beta, alpha] = prod_j m_j[beta_j, alpha_j]."""
    idx = space.indices
    M = m_per_dim[0][idx[:, 0][:, None], idx[:, 0][None, :]]
    for j in range(1, space.d):
        M = M * m_per_dim[j][idx[:, j][:, None], idx[:, j][None, :]]
    return M


def pi_matrix(cf: CentralFrequency, x: GroupPoint, space: FockSpace,
              num_nodes: int | None = None, envelope: float | None = None,
              method: str = "gh") -> FockOperator:
    """Matrix of pi^lambda_x on the truncated Hermite basis.

    M[beta, alpha] = <pi^lambda_x h_alpha, h_beta>
                   = e^{i lambda(z) + i|l| p.q/2} prod_j m_j[beta_j, alpha_j].

    Parameters
    ----------
    num_nodes : Gauss-Hermite nodes per axis (default 2(N+1)+20).
    envelope : max allowed |lambda|(p_j^2+q_j^2) per axis before the
        truncated matrix stops being a meaningful unitarity proxy
        (default num_nodes/2).  Exceeding it raises QuadratureOverflow.
    method : 'gh' (spec quadrature) or 'laguerre' (exact closed form).
    """
    if space.d != cf.group.d:
        raise ValueError("Fock space dimension does not match the group")
    if num_nodes is None:
        num_nodes = 2 * (space.N + 1) + 20
    if envelope is None:
        envelope = num_nodes / 2.0
    pc, qc, z = coords_pqz(cf, x)
    if not (np.any(pc) or np.any(qc)):
        # central element: pi_x is exactly the scalar e^{i lambda(z)}
        phase = np.exp(1j * cf.lam_of_z(z))
        return FockOperator(space, phase * np.eye(space.dim))
    worst = cf.norm * np.max(pc ** 2 + qc ** 2)
    if envelope > 0 and worst > envelope:
        raise QuadratureOverflow(
            f"|lambda| |x|^2 = {worst:.3g} exceeds the envelope {envelope:.3g}")
    rt = np.sqrt(cf.norm)
    mats = []
    for j in range(space.d):
        s, th = rt * pc[j], rt * qc[j]
        if method == "gh":
            mats.append(coeff1d_gh(s, th, space.N, num_nodes))
        elif method == "laguerre":
            mats.append(coeff1d_laguerre(s, th, space.N))
        else:
            raise ValueError("method must be 'gh' or 'laguerre'")
    phase = np.exp(1j * (cf.lam_of_z(z) + 0.5 * cf.norm * np.dot(pc, qc)))
    return FockOperator(space, phase * _tensor_assemble(space, mats))


def level_mask(space: FockSpace, max_level: int) -> np.ndarray:
    """Boolean mask of ranks with |alpha| <= max_level."""
    return space.levels <= max_level


def homomorphism_residual(cf: CentralFrequency, x: GroupPoint, y: GroupPoint,
                          space: FockSpace, margin: int = 4,
                          block_level: int | None = None, **kw) -> float:
    """Operator-norm defect of pi(xy) = pi(x)pi(y) on an interior block.

    The block is |alpha| <= block_level (default N - margin).  To observe
    decay under refinement, grow N while holding block_level fixed.
    """
    from .group import group_mul

    Mx = pi_matrix(cf, x, space, **kw).entries
    My = pi_matrix(cf, y, space, **kw).entries
    Mxy = pi_matrix(cf, group_mul(cf.group, x, y), space, **kw).entries
    if block_level is None:
        block_level = space.N - margin
    blk = level_mask(space, block_level)
    D = (Mxy - Mx @ My)[np.ix_(blk, blk)]
    return float(np.linalg.norm(D, 2))


def h_lambda(cf: CentralFrequency, space: FockSpace) -> FockOperator:
    """Fourier resolution of -Delta: diagonal |lambda| (2|alpha| + d)."""
    return FockOperator(space, np.diag(cf.norm * (2.0 * space.levels + space.d)
                                       ).astype(complex))


def spectral_projector(space: FockSpace, n: int) -> FockOperator:
    """Orthogonal projector onto Hermite level |alpha| = n."""
    if not 0 <= n <= space.N:
        raise ValueError("level out of range")
    return FockOperator(space, np.diag((space.levels == n).astype(complex)))


def annihilation(space: FockSpace, j: int) -> np.ndarray:
    """Matrix of a_j: h_alpha -> sqrt(alpha_j) h_{alpha - e_j}."""
    if not 1 <= j <= space.d:
        raise ValueError("axis out of range")
    idx = space.indices
    A = np.zeros((space.dim, space.dim))
    rank = _rank_table(space.d, space.N)
    for r, alpha in enumerate(idx):
        if alpha[j - 1] > 0:
            lower = alpha.copy()
            lower[j - 1] -= 1
            A[rank[tuple(lower)], r] = np.sqrt(alpha[j - 1])
    return A


def xi_matrix(space: FockSpace, j: int) -> np.ndarray:
    """Matrix of multiplication by xi_j (truncated)."""
    A = annihilation(space, j)
    return (A + A.T) / np.sqrt(2.0)


def dxi_matrix(space: FockSpace, j: int) -> np.ndarray:
    """Matrix of d/dxi_j (truncated)."""
    A = annihilation(space, j)
    return (A - A.T) / np.sqrt(2.0)


def ladder(space: FockSpace, j: int, kind: str, cf: CentralFrequency) -> FockOperator:
    """pi^lambda of the ladder combinations R_j = (P_j - iQ_j)/2, Rbar_j.

    'lower' gives pi(R_j) = sqrt(|l|)/2 (d_xi + xi)  (annihilates h_0),
    'raise' gives pi(Rbar_j) = sqrt(|l|)/2 (d_xi - xi).
    """
    c = np.sqrt(cf.norm / 2.0)
    A = annihilation(space, j)
    if kind == "lower":
        return FockOperator(space, (c * A).astype(complex))
    if kind == "raise":
        return FockOperator(space, (-c * A.T).astype(complex))
    raise ValueError("kind must be 'raise' or 'lower'")


def pi_of_generator(cf: CentralFrequency, space: FockSpace, generator: str,
                    k: int = 1) -> FockOperator:
    """Matrix of pi^lambda of a Lie algebra generator.

    generator: 'P' -> sqrt(|l|) d_xi_k, 'Q' -> i sqrt(|l|) xi_k,
    'Z' -> i lambda_k Id.
    """
    rt = np.sqrt(cf.norm)
    if generator == "P":
        return FockOperator(space, (rt * dxi_matrix(space, k)).astype(complex))
    if generator == "Q":
        return FockOperator(space, 1j * rt * xi_matrix(space, k))
    if generator == "Z":
        if not 1 <= k <= cf.group.p:
            raise ValueError("central axis out of range")
        return FockOperator(space, 1j * cf.lam[k - 1] * np.eye(space.dim, dtype=complex))
    raise ValueError("generator must be 'P', 'Q' or 'Z'")
