"""High-order multi-resolution finite elements for the damped Helmholtz equation.

Each finite element carries a tensor-product integrated-Legendre basis of degree
``q`` and ``n_v x n_v`` material subvoxels.  Stiffness and mass integrands are
integrated once per subvoxel of the reference element ("preintegration"), so a
new material field only rescales and sums precomputed blocks:

    k_e = sum_v rho_inv_v * k_v,    m_e = sum_v kappa_inv_v * m_v
    S   = K - (1j*omega*eta_d + omega**2) * M

with ``omega`` the angular frequency normalized by the speed of sound in air.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DomainError, NumericalError, SingularSystemError
from .geometry import Discretization, VoxelGrid

log = logging.getLogger(__name__)

# material constants: air (1) and aluminum (2)
RHO_AIR = 1.204
RHO_SOLID = 2643.0
KAPPA_AIR = 1.419e5
KAPPA_SOLID = 6.87e10
C_AIR = math.sqrt(KAPPA_AIR / RHO_AIR)
# 20 uPa reference; reproduces the 110.0 dB empty-ceiling level
P_REF = 2e-5

RHO_RATIO = RHO_AIR / RHO_SOLID
KAPPA_RATIO = KAPPA_AIR / KAPPA_SOLID

RESIDUAL_TOL = 1e-10


# ---------------------------------------------------------------------------
# material model

def material_interpolation(zeta):
    """Normalized inverse density and bulk modulus for indicator values in [0, 1]."""
    zeta = np.asarray(zeta, dtype=float)
    if np.any(zeta < 0) or np.any(zeta > 1) or np.any(np.isnan(zeta)):
        raise DomainError("indicator values must lie in [0, 1]")
    rho_inv = 1.0 + zeta * (RHO_RATIO - 1.0)
    kappa_inv = 1.0 + zeta * (KAPPA_RATIO - 1.0)
    return rho_inv, kappa_inv


@dataclass(frozen=True)
class MaterialFields:
    rho_inv: np.ndarray
    kappa_inv: np.ndarray

    @classmethod
    def from_indicator(cls, zeta):
        return cls(*material_interpolation(zeta))

    @classmethod
    def air(cls, shape):
        return cls(np.ones(shape), np.ones(shape))


def normalized_frequency(f):
    """Angular frequency divided by the speed of sound in air (1/m)."""
    if f <= 0:
        raise DomainError(f"frequency must be positive, got {f}")
    return 2.0 * math.pi * f / C_AIR


def sound_pressure_level(C, p_ref=P_REF):
    """Sound pressure level in dB of a mean squared pressure ``C`` (Pa^2)."""
    C = np.asarray(C, dtype=float)
    if np.any(C <= 0):
        raise DomainError("sound pressure level needs a positive mean squared pressure")
    out = 10.0 * np.log10(C / p_ref**2)
    return float(out) if out.ndim == 0 else out


class Mode(NamedTuple):
    n: int
    m: int
    f: float


def natural_frequencies(a, b, n_max, m_max):
    """Rigid-walled rectangular room resonances, sorted by frequency.

    ``f_nm = c/2 * sqrt((n/a)^2 + (m/b)^2)``; the constant mode (0, 0) is excluded.
    """
    if a <= 0 or b <= 0:
        raise DomainError("room dimensions must be positive")
    modes = [
        Mode(n, m, 0.5 * C_AIR * math.hypot(n / a, m / b))
        for n in range(n_max + 1)
        for m in range(m_max + 1)
        if (n, m) != (0, 0)
    ]
    return sorted(modes, key=lambda md: (md.f, md.n, md.m))


# ---------------------------------------------------------------------------
# basis and preintegration

def integrated_legendre(q, xi):
    """1-D integrated Legendre shape functions of degree ``q`` and their derivatives.

    Returns ``(N, dN)`` with shape ``(q+1, len(xi))``.  ``N[0]`` and ``N[1]`` are
    the linear hat functions at -1 and +1; ``N[k]`` for ``k >= 2`` vanish at both
    ends.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    L = np.empty((max(q, 1) + 1, xi.size))
    L[0] = 1.0
    L[1] = xi
    for k in range(2, q + 1):
        L[k] = ((2 * k - 1) * xi * L[k - 1] - (k - 1) * L[k - 2]) / k
    N = np.empty((q + 1, xi.size))
    dN = np.empty((q + 1, xi.size))
    N[0], N[1] = 0.5 * (1 - xi), 0.5 * (1 + xi)
    dN[0], dN[1] = -0.5, 0.5
    for k in range(2, q + 1):
        N[k] = (L[k] - L[k - 2]) / math.sqrt(2 * (2 * k - 1))
        dN[k] = math.sqrt((2 * k - 1) / 2) * L[k - 1]
    return N, dN


def element_basis(q, xi, eta):
    """2-D tensor-product basis values at points ``(xi, eta)``.

    Returns ``(N, dNdxi, dNdeta)`` with shape ``(npts, (q+1)**2)``, local mode
    ``(a, b)`` stored at ``b*(q+1) + a``.
    """
    Nx, dNx = integrated_legendre(q, xi)
    Ny, dNy = integrated_legendre(q, eta)
    N = np.einsum("bp,ap->pba", Ny, Nx).reshape(len(Nx[0]), -1)
    dxi = np.einsum("bp,ap->pba", Ny, dNx).reshape(len(Nx[0]), -1)
    deta = np.einsum("bp,ap->pba", dNy, Nx).reshape(len(Nx[0]), -1)
    return N, dxi, deta


@dataclass(frozen=True)
class PreintegratedElement:
    """Stiffness and mass blocks of every subvoxel of one reference element.

    ``k[v]`` and ``m[v]`` have shape ``((q+1)**2, (q+1)**2)``; subvoxel ``(si, sj)``
    is ``v = sj*n_v + si``.  ``k`` is dimensionless, ``m`` carries the element
    area (m^2).
    """

    q: int
    n_v: int
    hx: float
    hy: float
    k: np.ndarray
    m: np.ndarray
    n_gauss: int


def _subinterval_integrals(q, n_v, n_gauss):
    pts, wts = np.polynomial.legendre.leggauss(n_gauss)
    A = np.empty((n_v, q + 1, q + 1))
    B = np.empty((n_v, q + 1, q + 1))
    for s in range(n_v):
        lo = -1.0 + 2.0 * s / n_v
        half = 1.0 / n_v
        xi = lo + half * (pts + 1.0)
        w = wts * half
        N, dN = integrated_legendre(q, xi)
        A[s] = (N * w) @ N.T
        B[s] = (dN * w) @ dN.T
    return A, B


def preintegrate(q, n_v, hx=1.0, hy=1.0):
    """Integrate stiffness and mass integrands separately on each subvoxel.

    Gauss-Legendre with ``q+1`` points per direction per subvoxel is exact for
    the degree-``2q`` integrands.  The 2-D blocks are Kronecker products of the
    1-D subinterval integrals.
    """
    if q < 1 or n_v < 1:
        raise ConfigurationError("preintegration needs q >= 1 and n_v >= 1")
    n_gauss = q + 1
    A, B = _subinterval_integrals(q, n_v, n_gauss)
    nd = (q + 1) ** 2
    k = np.empty((n_v * n_v, nd, nd))
    m = np.empty((n_v * n_v, nd, nd))
    for sj in range(n_v):
        for si in range(n_v):
            v = sj * n_v + si
            k[v] = (hy / hx) * np.kron(A[sj], B[si]) + (hx / hy) * np.kron(B[sj], A[si])
            m[v] = (hx * hy / 4.0) * np.kron(A[sj], A[si])
    return PreintegratedElement(q, n_v, hx, hy, k, m, n_gauss)


# ---------------------------------------------------------------------------
# global system

@dataclass
class ComplexSystem:
    """``S p = f`` with ``S = K - (1j*omega*eta_d + omega**2) M``.

    The sparse LU factorization is computed lazily and reused; since ``S`` is
    complex symmetric, the adjoint solve uses the same factors.
    """

    K: sp.csc_matrix
    M: sp.csc_matrix
    S: sp.csc_matrix
    f: np.ndarray
    omega: float
    eta_d: float
    _lu: object = field(default=None, repr=False)

    @property
    def mass_coefficient(self):
        return 1j * self.omega * self.eta_d + self.omega**2

    def factorize(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.S, permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise SingularSystemError(f"sparse LU failed: {exc}") from exc
            pivots = np.abs(self._lu.U.diagonal())
            worst = int(np.argmin(pivots))
            if not np.all(np.isfinite(pivots)) or pivots[worst] == 0.0:
                raise SingularSystemError(
                    f"zero pivot at position {worst} (column {self._lu.perm_c[worst]})"
                )
        return self._lu

    def solve(self, rhs, check=True):
        lu = self.factorize()
        x = lu.solve(np.asarray(rhs, dtype=complex))
        if check:
            norm_rhs = np.linalg.norm(rhs)
            if norm_rhs > 0:
                res = np.linalg.norm(self.S @ x - rhs) / norm_rhs
                if not np.isfinite(res) or res > RESIDUAL_TOL:
                    raise NumericalError(f"linear solve residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
        return x


class HelmholtzModel:
    """Discretization-specific data: element maps, preintegrated blocks, sparsity,
    source vector and quiet-zone mass matrix.

    Build once per ``(grid, q, n_v)``; assembling for a new material field or
    frequency is then a handful of vectorized operations.
    """

    def __init__(self, disc: Discretization):
        self.disc = disc
        self.grid: VoxelGrid = disc.grid
        self.pre = preintegrate(disc.q, disc.n_v, disc.hx, disc.hy)
        self.edofs = disc.element_dofs()
        self.evox = disc.element_voxels()
        self._build_pattern()
        self.f_unit = self._point_load(self.grid.setup.x_f, self.grid.setup.y_f)
        self.Ms = self._suppression_mass()
        self.suppression_area = self.grid.suppression_area

    # -- sparsity ---------------------------------------------------------
    def _build_pattern(self):
        nd = self.disc.n_local
        n = self.disc.n_dofs
        rows = np.repeat(self.edofs, nd, axis=1).ravel()
        cols = np.tile(self.edofs, (1, nd)).ravel()
        keys = cols.astype(np.int64) * n + rows
        ukeys, inverse = np.unique(keys, return_inverse=True)
        self._scatter = inverse
        self._indices = (ukeys % n).astype(np.int32)
        col_of = (ukeys // n).astype(np.int64)
        self._indptr = np.searchsorted(col_of, np.arange(n + 1)).astype(np.int32)
        self._nnz = ukeys.size

    def _to_csc(self, local):
        """Scatter element matrices ``(E, nd, nd)`` into a CSC matrix.

        Contributions are accumulated in element order for every entry, so a
        symmetric set of element matrices yields an exactly symmetric result.
        """
        vals = local.reshape(-1)
        if np.iscomplexobj(vals):
            data = np.bincount(self._scatter, vals.real, self._nnz) + 1j * np.bincount(
                self._scatter, vals.imag, self._nnz
            )
        else:
            data = np.bincount(self._scatter, vals, self._nnz)
        n = self.disc.n_dofs
        return sp.csc_matrix((data, self._indices, self._indptr), shape=(n, n))

    def element_matrices(self, coeff, blocks):
        """``sum_v coeff[e, v] * blocks[v]`` for every element, symmetrized exactly."""
        V, nd, _ = blocks.shape
        out = (coeff @ blocks.reshape(V, nd * nd)).reshape(-1, nd, nd)
        return 0.5 * (out + out.transpose(0, 2, 1))

    # -- loads and quiet zone -------------------------------------------------
    def _locate(self, x, y):
        d = self.disc
        ei = min(int(x // d.hx), d.ex - 1)
        ej = min(int(y // d.hy), d.ey - 1)
        xi = 2.0 * (x - ei * d.hx) / d.hx - 1.0
        eta = 2.0 * (y - ej * d.hy) / d.hy - 1.0
        return ej * d.ex + ei, xi, eta

    def _point_load(self, x, y):
        """Consistent load of a unit point source: ``f_k = N_k(x, y)``."""
        e, xi, eta = self._locate(x, y)
        N, _, _ = element_basis(self.disc.q, [xi], [eta])
        f = np.zeros(self.disc.n_dofs, dtype=complex)
        np.add.at(f, self.edofs[e], N[0])
        f[np.abs(f) < 1e-15] = 0.0
        return f

    def _suppression_mass(self):
        mask = self.grid.suppression_mask.ravel()[self.evox].astype(float)
        return self._to_csc(self.element_matrices(mask, self.pre.m)).real

    # -- assembly ---------------------------------------------------------
    def material_blocks(self, mat: MaterialFields):
        rho = np.asarray(mat.rho_inv, dtype=float).reshape(self.grid.shape)
        kap = np.asarray(mat.kappa_inv, dtype=float).reshape(self.grid.shape)
        return rho.ravel()[self.evox], kap.ravel()[self.evox]

    def assemble(self, mat: MaterialFields, omega, eta_d=None, s_hat=None) -> ComplexSystem:
        setup = self.grid.setup
        eta_d = setup.eta_d if eta_d is None else eta_d
        s_hat = setup.s_hat if s_hat is None else s_hat
        if eta_d == 0:
            log.warning("assembling an undamped system; resonant frequencies are singular")
        rho_v, kap_v = self.material_blocks(mat)
        K = self._to_csc(self.element_matrices(rho_v, self.pre.k))
        M = self._to_csc(self.element_matrices(kap_v, self.pre.m))
        coef = 1j * omega * eta_d + omega**2
        S = sp.csc_matrix((K.data - coef * M.data, K.indices, K.indptr), shape=K.shape)
        return ComplexSystem(K, M, S, s_hat * self.f_unit, omega, eta_d)

    # -- post-processing ----------------------------------------------------
    def cost(self, p):
        """Mean squared pressure over the quiet zone."""
        if self.suppression_area <= 0:
            raise ConfigurationError("empty suppression region")
        p = np.asarray(p)
        return float(np.real(np.vdot(p, self.Ms @ p))) / self.suppression_area

    def cost_gradient(self, p):
        """``dC/dRe(p) - 1j*dC/dIm(p)``."""
        return 2.0 * (self.Ms @ np.conj(p)) / self.suppression_area

    def voxel_values(self, p):
        """Solution evaluated at voxel centers, shape ``(ny, nx)``."""
        n_v = self.disc.n_v
        centers = -1.0 + (2.0 * np.arange(n_v) + 1.0) / n_v
        xi = np.tile(centers, n_v)
        eta = np.repeat(centers, n_v)
        N, _, _ = element_basis(self.disc.q, xi, eta)  # (V, nd)
        vals = np.asarray(p)[self.edofs] @ N.T  # (E, V)
        out = np.empty(self.grid.nx * self.grid.ny, dtype=vals.dtype)
        out[self.evox.ravel()] = vals.ravel()
        return out.reshape(self.grid.shape)

    def point_value(self, p, x, y):
        e, xi, eta = self._locate(x, y)
        N, _, _ = element_basis(self.disc.q, [xi], [eta])
        return complex(N[0] @ np.asarray(p)[self.edofs[e]])


def assemble(model: HelmholtzModel, mat: MaterialFields, omega, eta_d=None) -> ComplexSystem:
    return model.assemble(mat, omega, eta_d)


def solve_forward(system: ComplexSystem):
    """Solve ``S p = f``; the factorization stays cached on ``system``."""
    return system.solve(system.f)


def cost(model: HelmholtzModel, p):
    return model.cost(p)


def spl_field(model: HelmholtzModel, p, p_ref=P_REF):
    """Voxelwise sound pressure level (dB); exact zeros are floored at 1e-300 Pa^2."""
    p2 = np.abs(model.voxel_values(p)) ** 2
    return 10.0 * np.log10(np.maximum(p2, 1e-300) / p_ref**2)
