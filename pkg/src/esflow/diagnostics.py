"""Error norms, residual measures, conservation/entropy audits, and TGV diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gas as gm
from .gas import GasParameters
from .mesh import Mesh, PERIODIC
from .sbp import DimensionError, LglOperatorSet


class UnsupportedConfigurationError(ValueError):
    pass


@dataclass
class HistoryRecord:
    """Per-physical-step diagnostics row."""

    time: float
    step: int
    pseudo_iterations: int
    eps_abs: float
    eps_rel: float
    totals: tuple          # conserved totals, length ncomp
    total_entropy: float
    kinetic_energy: float
    eps_solenoidal: float
    eps_dilational: float
    min_density: float
    min_internal_energy: float
    theta_min: float
    theta_mean: float
    dtau: float
    positivity_violations: int = 0

    @property
    def eps_viscous(self) -> float:
        return self.eps_solenoidal + self.eps_dilational


def quad_weights(mesh: Mesh, ops: LglOperatorSet) -> np.ndarray:
    """P*J at every node, shape (nelem, nodes...)."""
    w = ops.weights
    tensor = w
    for _ in range(mesh.dim - 1):
        tensor = np.multiply.outer(tensor, w)
    return mesh.jacobians().reshape((-1,) + (1,) * mesh.dim) * tensor


def domain_measure(mesh: Mesh, ops: LglOperatorSet) -> float:
    return float(np.sum(quad_weights(mesh, ops)))


def error_norms(fld: np.ndarray, exact: np.ndarray, mesh: Mesh, ops: LglOperatorSet):
    """(L1, L2, Linf) of fld - exact, quadrature-weighted and volume-normalized."""
    fld = np.asarray(fld)
    exact = np.asarray(exact)
    if fld.shape != exact.shape:
        raise DimensionError(f"layout mismatch: {fld.shape} vs {exact.shape}")
    ncomp = fld.shape[1]
    pj = quad_weights(mesh, ops)
    diff = fld - exact
    denom = ncomp * np.sum(pj)
    l1 = np.sum(pj[:, None] * np.abs(diff)) / denom
    l2 = np.sqrt(np.sum(pj[:, None] * diff**2) / denom)
    linf = np.max(np.abs(diff)) if diff.size else 0.0
    return float(l1), float(l2), float(linf)


def solution_l2(fld: np.ndarray, mesh: Mesh, ops: LglOperatorSet) -> float:
    """Volume-normalized L2 norm of a field (the norm used by the error measures)."""
    pj = quad_weights(mesh, ops)
    denom = fld.shape[1] * np.sum(pj)
    return float(np.sqrt(np.sum(pj[:, None] * np.asarray(fld) ** 2) / denom))


def residual_measures(u_next, u_k, diff0_norm, dtau, dtau0, mesh, ops):
    """(eps_abs, eps_rel) of one pseudotime iteration.

    eps_abs = ||u_next - u_k||_L2 / dtau; eps_rel additionally normalizes by
    the first iteration's change and step.  diff0_norm <= 0 means the very
    first iteration already matched: eps_rel is reported as 0.
    """
    if dtau <= 0.0 or dtau0 <= 0.0:
        raise gm.DomainError("pseudotime steps must be positive")
    diff = solution_l2(u_next - u_k, mesh, ops)
    eps_abs = diff / dtau
    eps_rel = (diff / diff0_norm) * (dtau0 / dtau) if diff0_norm > 0.0 else 0.0
    return eps_abs, eps_rel


def total_conserved(fld: np.ndarray, mesh: Mesh, ops: LglOperatorSet) -> np.ndarray:
    """Quadrature totals of each conserved component, shape (ncomp,)."""
    pj = quad_weights(mesh, ops)
    axes = (0,) + tuple(range(2, fld.ndim))
    return np.sum(pj[:, None] * fld, axis=axes)


def total_entropy(fld: np.ndarray, mesh: Mesh, ops: LglOperatorSet, gas: GasParameters) -> float:
    pj = quad_weights(mesh, ops)
    s = gm.entropy_function(np.moveaxis(fld, 1, 0), gas)
    return float(np.sum(pj * s))


def _local_gradients(v: np.ndarray, mesh: Mesh, ops: LglOperatorSet):
    """Element-local physical gradients of nodal data (no interface coupling).

    v: (..., nelem, nodes...); returns (dim,) + v.shape.
    """
    dim = mesh.dim
    out = np.empty((dim,) + v.shape)
    h = mesh.element_widths()
    for d in range(dim):
        axis = v.ndim - dim + d
        moved = np.moveaxis(v, axis, -1)
        dv = np.moveaxis(moved @ ops.dmat.T, -1, axis)
        out[d] = dv * (2.0 / h[:, d]).reshape((-1,) + (1,) * dim)
    return out


def tgv_diagnostics(fld: np.ndarray, mesh: Mesh, ops: LglOperatorSet, gas: GasParameters):
    """Kinetic energy and the solenoidal/dilational viscous dissipation components.

    E_k  = (gamma-1) M^2 / |V| * sum PJ rho |v|^2 / 2
    eps_S = (gamma-1) M^2 / (Re |V|) * sum PJ mu(T) |omega|^2
    eps_D = 4 (gamma-1) M^2 / (3 Re |V|) * sum PJ mu(T) (div v)^2
    """
    if any(b != PERIODIC for b in mesh.bc):
        raise UnsupportedConfigurationError("TGV diagnostics require a periodic mesh")
    rho, v, _p, t, _e = gm.primitives(np.moveaxis(fld, 1, 0), gas)
    pj = quad_weights(mesh, ops)
    vol = np.sum(pj)
    pref = gas.alpha / vol

    ek = pref * np.sum(pj * 0.5 * rho * np.sum(v**2, axis=0))

    grads = np.stack([_local_gradients(v[i], mesh, ops) for i in range(mesh.dim)])
    # grads[i, d] = dv_i/dx_d
    divv = np.trace(grads, axis1=0, axis2=1)
    if mesh.dim == 2:
        om2 = (grads[1, 0] - grads[0, 1]) ** 2
    elif mesh.dim == 3:
        om2 = ((grads[2, 1] - grads[1, 2]) ** 2
               + (grads[0, 2] - grads[2, 0]) ** 2
               + (grads[1, 0] - grads[0, 1]) ** 2)
    else:
        om2 = np.zeros_like(divv)
    mu = gas.viscosity(t)
    eps_s = pref / gas.reynolds * np.sum(pj * mu * om2)
    eps_d = 4.0 * pref / (3.0 * gas.reynolds) * np.sum(pj * mu * divv**2)
    return float(ek), float(eps_s), float(eps_d)


def conservation_audit(history) -> dict:
    """Max relative drift of conserved totals and entropy-increase statistics."""
    if not history:
        return {"max_drift": 0.0, "entropy_increases": 0, "max_entropy_increase": 0.0}
    totals = np.array([h.totals for h in history])
    ref = totals[0]
    scale = np.maximum(np.abs(ref), 1e-300)
    drift = np.abs(totals - ref) / scale
    entropy = np.array([h.total_entropy for h in history])
    jumps = np.diff(entropy)
    increases = jumps[jumps > 0.0]
    return {
        "max_drift": float(drift.max()),
        "per_component_drift": drift.max(axis=0).tolist(),
        "entropy_increases": int(increases.size),
        "max_entropy_increase": float(increases.max()) if increases.size else 0.0,
    }
