"""Linear-decay density filter, smoothed Heaviside projection and thresholding.

The filter is a sparse row-stochastic matrix over the design voxels,
``zeta_tilde = W zeta`` with ``W_vk ∝ max(r_f - |x_v - x_k|, 0)``.  Neighborhoods
are clipped to the design region and renormalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, UsageError
from .geometry import VoxelGrid

BETA_GROWTH = 1.02
BETA_CAPS = {1: 75.0, 2: 150.0}


def default_filter_radius(setup):
    """Two voxel spacings of the 216-row reference grid, in meters."""
    return 2.0 * setup.b / 216


@dataclass(frozen=True)
class FilterKernel:
    r_f: float
    shape: tuple
    W: sp.csr_matrix
    WT: sp.csr_matrix

    @property
    def is_identity(self):
        return self.W.nnz == self.shape[0] * self.shape[1]


def build_filter(grid: VoxelGrid, r_f=None) -> FilterKernel:
    if r_f is None:
        r_f = default_filter_radius(grid.setup)
    if r_f < 0:
        raise DomainError("filter radius must be non-negative")
    rows_n, cols_n = grid.design_shape
    dx, dy = grid.dx, grid.dy
    di = int(math.ceil(r_f / dx))
    dj = int(math.ceil(r_f / dy))
    J, I = np.mgrid[0:rows_n, 0:cols_n]
    idx = (J * cols_n + I).ravel()
    rows, cols, vals = [idx], [idx], [np.full(idx.size, max(r_f, 1e-300))]
    for oj in range(-dj, dj + 1):
        for oi in range(-di, di + 1):
            if oi == 0 and oj == 0:
                continue
            d = math.hypot(oi * dx, oj * dy)
            if d >= r_f:
                continue
            jn, in_ = J + oj, I + oi
            ok = ((jn >= 0) & (jn < rows_n) & (in_ >= 0) & (in_ < cols_n)).ravel()
            rows.append(idx[ok])
            cols.append((jn * cols_n + in_).ravel()[ok])
            vals.append(np.full(ok.sum(), r_f - d))
    n = rows_n * cols_n
    W = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    W = sp.diags(1.0 / np.asarray(W.sum(axis=1)).ravel()) @ W
    W = W.tocsr()
    return FilterKernel(r_f, (rows_n, cols_n), W, W.T.tocsr())


def density_filter(zeta, kernel: FilterKernel):
    zeta = np.asarray(zeta, dtype=float)
    return (kernel.W @ zeta.ravel()).reshape(zeta.shape)


def density_filter_transpose(g, kernel: FilterKernel):
    g = np.asarray(g, dtype=float)
    return (kernel.WT @ g.ravel()).reshape(g.shape)


@dataclass(frozen=True)
class ProjectionParams:
    beta: float = 1.0
    eta: float = 0.5

    def __post_init__(self):
        if self.beta <= 0:
            raise DomainError("projection sharpness beta must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError("projection threshold eta must lie in [0, 1]")


def project(zt, params: ProjectionParams):
    b, eta = params.beta, params.eta
    den = math.tanh(b * eta) + math.tanh(b * (1.0 - eta))
    out = (math.tanh(b * eta) + np.tanh(b * (np.asarray(zt, dtype=float) - eta))) / den
    # rounding can push the endpoints one ulp outside [0, 1]
    return np.clip(out, 0.0, 1.0)


def projection_slope(zt, params: ProjectionParams):
    b, eta = params.beta, params.eta
    den = math.tanh(b * eta) + math.tanh(b * (1.0 - eta))
    t = np.tanh(b * (np.asarray(zt, dtype=float) - eta))
    return b * (1.0 - t * t) / den


def filter_project_backward(upstream, zt, params: ProjectionParams, kernel: FilterKernel):
    """Chain ``dC/d(projected)`` back to ``dC/dzeta``."""
    return density_filter_transpose(np.asarray(upstream) * projection_slope(zt, params), kernel)


class FilterProjection:
    """Stateful forward/backward pair caching the filtered field of the last forward."""

    def __init__(self, kernel: FilterKernel, eta=0.5):
        self.kernel = kernel
        self.eta = eta
        self._cache = None

    def forward(self, zeta, beta):
        params = ProjectionParams(beta, self.eta)
        zt = density_filter(zeta, self.kernel)
        self._cache = (zt, params)
        return project(zt, params)

    def backward(self, upstream):
        if self._cache is None:
            raise UsageError("backward called without a cached forward pass")
        zt, params = self._cache
        return filter_project_backward(upstream, zt, params, self.kernel)


def beta_schedule(epoch, stage=1, start=1.0, caps=None):
    """Projection sharpness at ``epoch`` of ``stage``: 2% growth per epoch, capped.

    ``start`` is the value at epoch 0 of the stage (stage 2 normally continues
    from the last stage-1 value).
    """
    if epoch < 0:
        raise DomainError("epoch must be non-negative")
    caps = BETA_CAPS if caps is None else caps
    if stage not in caps:
        raise DomainError(f"unknown stage {stage}")
    return min(start * BETA_GROWTH**epoch, caps[stage])


def threshold(x, eta=0.5):
    """0/1 design; values equal to ``eta`` become solid."""
    return (np.asarray(x) >= eta).astype(float)
