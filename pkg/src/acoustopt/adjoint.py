"""Adjoint sensitivities of the quiet-zone cost with respect to voxel indicators.

With ``S p = f`` and ``C = Re(p^H M_s p) / |A_s|``, a single extra solve
``S lam = -2 M_s conj(p) / |A_s|`` (``S`` is complex symmetric, so the forward
factors are reused) gives

    dC/dzeta_v = Re(lam_e^T dS_e/dzeta_v p_e),
    dS_e/dzeta_v = (rho1/rho2 - 1) k_v - (1j*omega*eta_d + omega**2)(kappa1/kappa2 - 1) m_v
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import KAPPA_RATIO, RHO_RATIO, ComplexSystem, HelmholtzModel, MaterialFields, normalized_frequency
from .errors import NumericalError


@dataclass
class CostEvaluation:
    C: float
    gradient: np.ndarray  # (n_ceiling, nx), dC/dzeta per design voxel
    p: np.ndarray
    system: ComplexSystem


def adjoint_rhs(model: HelmholtzModel, p):
    return -model.cost_gradient(p)


def solve_adjoint(model: HelmholtzModel, system: ComplexSystem, p):
    return system.solve(adjoint_rhs(model, p))


def sensitivities(model: HelmholtzModel, system: ComplexSystem, p, lam=None, full=False):
    """``dC/dzeta`` per design voxel, shape ``(n_ceiling, nx)``.

    ``full=True`` returns the whole ``(ny, nx)`` grid instead.  The cost has no
    explicit dependence on the indicator, so only the implicit term appears.
    """
    if lam is None:
        lam = solve_adjoint(model, system, p)
    pre = model.pre
    V, nd, _ = pre.k.shape
    pe = np.asarray(p)[model.edofs]
    le = np.asarray(lam)[model.edofs]
    X = (le[:, :, None] * pe[:, None, :]).reshape(-1, nd * nd)
    dk = X @ pre.k.reshape(V, nd * nd).T
    dm = X @ pre.m.reshape(V, nd * nd).T
    per_sub = np.real((RHO_RATIO - 1.0) * dk - system.mass_coefficient * (KAPPA_RATIO - 1.0) * dm)
    out = np.empty(model.grid.nx * model.grid.ny)
    out[model.evox.ravel()] = per_sub.ravel()
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite sensitivities")
    out = out.reshape(model.grid.shape)
    return out if full else model.grid.extract_design(out).copy()


def evaluate(model: HelmholtzModel, design, frequency, gradient=True) -> CostEvaluation:
    """Forward solve, cost and (optionally) adjoint sensitivities for a ceiling design.

    ``design`` is the ``(n_ceiling, nx)`` indicator field; the rest of the room is air.
    """
    zeta = model.grid.embed_design(design)
    system = model.assemble(MaterialFields.from_indicator(zeta), normalized_frequency(frequency))
    p = system.solve(system.f)
    C = model.cost(p)
    if not np.isfinite(C):
        raise NumericalError("non-finite cost")
    grad = sensitivities(model, system, p) if gradient else None
    return CostEvaluation(C, grad, p, system)


def frequency_response(model: HelmholtzModel, design, frequencies):
    """Cost ``C(f)`` of one ceiling design over a list of frequencies."""
    return np.array([evaluate(model, design, f, gradient=False).C for f in frequencies])
