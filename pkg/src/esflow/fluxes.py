"""Pointwise and two-point flux evaluations.

Under the nondimensionalization in :mod:`esflow.gas` the inviscid flux in
direction d is

    F_d = [rho v_d,  rho v_i v_d + Pi delta_id,  (rho E + alpha Pi) v_d],

with Pi = p/(gamma Minf^2) the momentum-equation pressure and alpha the
kinetic scale; the viscous flux carries 1/Re on the stress, alpha/Re on the
work term, and 1/(Re Pr) on the heat flux.  The two-point entropy-conservative
flux is a kinetic-energy-preserving form (logarithmic means of density and
inverse temperature) satisfying (w_L - w_R)^T f = psi_L - psi_R exactly for
the entropy pair of :mod:`esflow.gas`.

Entropy-dissipative interface terms are built from the dissipation matrix
D = R |Lambda| T R^T, where R are the entropy-scaled right eigenvectors at an
arithmetic-average state and R T R^T equals dU/dw there.
"""

from __future__ import annotations

import numpy as np

from . import gas as gm
from .gas import GasParameters, log_mean


class InsufficientDissipationError(ValueError):
    pass


class NegativeViscosityError(ValueError):
    pass


# ---------------------------------------------------------------------------
# inviscid fluxes


def euler_flux(u: np.ndarray, direction: int, gas: GasParameters, check: bool = True) -> np.ndarray:
    """Analytic inviscid flux in the given coordinate direction."""
    rho, v, p, _t, _e = gm.primitives(u, gas, check=check)
    pi = p / (gas.gamma * gas.mach**2)
    vd = v[direction]
    f = np.concatenate(((rho * vd)[None], u[1:-1] * vd, ((u[-1] + gas.alpha * pi) * vd)[None]))
    f[1 + direction] += pi
    return f


def ec_flux(uL: np.ndarray, uR: np.ndarray, direction: int, gas: GasParameters,
            check: bool = True) -> np.ndarray:
    """Two-point entropy-conservative, kinetic-energy-preserving flux.

    Symmetric, consistent, and satisfying the entropy-conservation condition
    (w_L - w_R)^T f = psi_L - psi_R with psi_d = (gamma-1) rho v_d.
    """
    rL, vL, _pL, tL, _ = gm.primitives(uL, gas, check=check)
    rR, vR, _pR, tR, _ = gm.primitives(uR, gas, check=check)
    g, a = gas.gamma, gas.alpha
    bL, bR = 1.0 / tL, 1.0 / tR
    r_ln = log_mean(rL, rR)
    b_ln = log_mean(bL, bR)
    vbar = 0.5 * (vL + vR)
    v2bar = 0.5 * (np.sum(vL**2, axis=0) + np.sum(vR**2, axis=0))
    bbar = 0.5 * (bL + bR)
    rbar = 0.5 * (rL + rR)
    pi_tilde = (g - 1.0) * rbar / (g * a * bbar)

    f0 = r_ln * vbar[direction]
    fm = vbar * f0
    fm[direction] = fm[direction] + pi_tilde
    e_tilde = 1.0 / (g * b_ln) - 0.5 * a * v2bar + a * np.sum(vbar**2, axis=0)
    fe = f0 * e_tilde + a * pi_tilde * vbar[direction]
    return np.concatenate((f0[None], fm, fe[None]))


def ec_energy_average(uL: np.ndarray, uR: np.ndarray, gas: GasParameters) -> np.ndarray:
    """Total-energy average E~ for which (w_L-w_R).[1, vbar, E~] = (gamma-1)(rho_L-rho_R)/rho_ln.

    This is the average carried by the mass-diffusion column so that density
    diffusion is pointwise entropy-dissipative.
    """
    _rL, vL, _pL, tL, _ = gm.primitives(uL, gas, check=False)
    _rR, vR, _pR, tR, _ = gm.primitives(uR, gas, check=False)
    g, a = gas.gamma, gas.alpha
    b_ln = log_mean(1.0 / tL, 1.0 / tR)
    vbar = 0.5 * (vL + vR)
    v2bar = 0.5 * (np.sum(vL**2, axis=0) + np.sum(vR**2, axis=0))
    return 1.0 / (g * b_ln) - 0.5 * a * v2bar + a * np.sum(vbar**2, axis=0)


def first_order_mass_flux(uL: np.ndarray, uR: np.ndarray, mbar, dcoef) -> np.ndarray:
    """Positivity-compatible mass flux mbar - D*(rho_R - rho_L).

    Raises InsufficientDissipationError if D < D_min = |mbar|/(2 rho_A).
    """
    rho_a = 0.5 * (uL[0] + uR[0])
    dmin = np.abs(mbar) / (2.0 * rho_a)
    if np.any(dcoef < dmin * (1.0 - 1e-12)):
        raise InsufficientDissipationError(
            "dissipation coefficient below the positivity floor |mbar|/(2 rho_A)"
        )
    return mbar - dcoef * (uR[0] - uL[0])


def min_mass_dissipation(uL: np.ndarray, uR: np.ndarray, mbar) -> np.ndarray:
    """D_min = |mbar| / (2 rho_A) with rho_A the arithmetic neighbor average."""
    return np.abs(mbar) / (uL[0] + uR[0])


# ---------------------------------------------------------------------------
# characteristic entropy dissipation


def dissipation_matrix(rho, v, t, direction: int, gas: GasParameters,
                       lam_floor=0.0) -> np.ndarray:
    """Entropy-scaled dissipation matrix D = R |Lambda| T R^T, shape (..., n, n).

    R are the right eigenvectors of dF_d/dU scaled so that R T R^T = dU/dw;
    consequently D is symmetric positive semidefinite and D = |dF/dU| dU/dw.
    """
    g, a = gas.gamma, gas.alpha
    dim = v.shape[0]
    n = dim + 2
    cm = np.sqrt(g * a / (g - 1.0))
    ce = g / (g - 1.0)
    p = rho * t
    ah = np.sqrt(g * p / rho)           # sound speed of the cm-rescaled state
    vh = cm * v
    q2 = np.sum(vh**2, axis=0)
    hh = ah**2 / (g - 1.0) + 0.5 * q2   # total specific enthalpy, rescaled state
    vn = vh[direction]

    shape = np.shape(rho)
    R = np.zeros(shape + (n, n))
    # local column order: acoustic-, entropy, shear..., acoustic+
    R[..., 0, 0] = 1.0
    R[..., 0, 1] = 1.0
    R[..., 0, n - 1] = 1.0
    for i in range(dim):
        R[..., 1 + i, 0] = vh[i]
        R[..., 1 + i, 1] = vh[i]
        R[..., 1 + i, n - 1] = vh[i]
    R[..., 1 + direction, 0] -= ah
    R[..., 1 + direction, n - 1] += ah
    R[..., n - 1, 0] = hh - vn * ah
    R[..., n - 1, 1] = 0.5 * q2
    R[..., n - 1, n - 1] = hh + vn * ah
    tangents = [i for i in range(dim) if i != direction]
    for j, td in enumerate(tangents):
        R[..., 1 + td, 2 + j] = 1.0
        R[..., n - 1, 2 + j] = vh[td]

    # undo the rescaling: rows of L^{-1} R, eigenvalues divided by cm
    R[..., 1:1 + dim, :] /= cm
    R[..., n - 1, :] /= ce

    lam = np.empty(shape + (n,))
    vn_true = v[direction]
    a_true = ah / cm
    lam[..., 0] = np.abs(vn_true - a_true)
    lam[..., 1:n - 1] = np.abs(vn_true)[..., None]
    lam[..., n - 1] = np.abs(vn_true + a_true)
    lam = np.maximum(lam, lam_floor)

    tscale = np.empty(shape + (n,))
    tscale[..., 0] = rho / (2.0 * g)
    tscale[..., 1] = rho * (g - 1.0) / g
    tscale[..., 2:n - 1] = p[..., None]
    tscale[..., n - 1] = rho / (2.0 * g)
    tscale /= (g - 1.0)

    return np.einsum("...ik,...k,...jk->...ij", R, lam * tscale, R)


def ed_dissipation(uL: np.ndarray, uR: np.ndarray, direction: int, gas: GasParameters,
                   check: bool = True) -> np.ndarray:
    """Characteristic entropy dissipation 0.5 D(u_avg) (w_R - w_L).

    The contraction (w_R - w_L)^T . result is nonnegative since D is SPSD.
    Output is component-first like the flux routines.
    """
    if check:
        gm.primitives(uL, gas)
        gm.primitives(uR, gas)
    rL, vL, _pL, tL, _ = gm.primitives(uL, gas, check=False)
    rR, vR, _pR, tR, _ = gm.primitives(uR, gas, check=False)
    dmat = dissipation_matrix(0.5 * (rL + rR), 0.5 * (vL + vR), 0.5 * (tL + tR),
                              direction, gas)
    dw = gm.entropy_variables(uR, gas, check=False) - gm.entropy_variables(uL, gas, check=False)
    dw = np.moveaxis(dw, 0, -1)
    out = 0.5 * np.einsum("...ij,...j->...i", dmat, dw)
    return np.moveaxis(out, -1, 0)


# ---------------------------------------------------------------------------
# viscous and artificial-dissipation fluxes


def stress_tensor(grad_v: np.ndarray, mu) -> np.ndarray:
    """Deviatoric Newtonian stress tau_id = mu (dv_i/dx_d + dv_d/dx_i - 2/3 delta_id div v).

    grad_v[i, d] holds dv_i/dx_d; shape (dim, dim, ...).
    """
    dim = grad_v.shape[0]
    divv = np.trace(grad_v, axis1=0, axis2=1)
    tau = grad_v + np.swapaxes(grad_v, 0, 1)
    for i in range(dim):
        tau[i, i] -= (2.0 / 3.0) * divv
    return mu * tau


def viscous_flux_kernel(v, grad_v, grad_t, direction: int, mu_eff, kappa_eff,
                        alpha: float) -> np.ndarray:
    """Shared viscous/AD flux kernel with explicit transport coefficients.

    Returns [0, tau_id, alpha tau_id v_i + kappa_eff dT/dx_d] with
    tau = stress_tensor(grad_v, mu_eff).
    """
    dim = v.shape[0]
    tau = stress_tensor(grad_v, mu_eff)
    taud = tau[:, direction]
    work = alpha * np.sum(taud * v, axis=0) + kappa_eff * grad_t[direction]
    zero = np.zeros_like(work)
    return np.concatenate((zero[None], taud, work[None]))


def viscous_flux(u: np.ndarray, grad_v: np.ndarray, grad_t: np.ndarray, direction: int,
                 gas: GasParameters, check: bool = True) -> np.ndarray:
    """Physical viscous flux with mu(T)/Re stress and mu/(Re Pr) heat conduction."""
    _rho, v, _p, t, _e = gm.primitives(u, gas, check=check)
    mu = gas.viscosity(t) / gas.reynolds
    kappa = mu / gas.prandtl
    return viscous_flux_kernel(v, grad_v, grad_t, direction, mu, kappa, gas.alpha)


def brenner_ad_flux(u: np.ndarray, grad_v: np.ndarray, grad_t: np.ndarray,
                    grad_rho: np.ndarray, direction: int, mu_ad, gas: GasParameters,
                    check: bool = True) -> np.ndarray:
    """Brenner-form artificial dissipation flux.

    Viscous kernel evaluated with (mu_ad, c_T mu_ad) plus the mass-diffusion
    column sigma drho/dx_d [1, v, E] with sigma = c_rho mu_ad / rho.
    """
    mu_ad = np.asarray(mu_ad, dtype=float)
    if np.any(mu_ad < 0.0):
        raise NegativeViscosityError("artificial viscosity must be nonnegative")
    rho, v, _p, _t, _e = gm.primitives(u, gas, check=check)
    f = viscous_flux_kernel(v, grad_v, grad_t, direction, mu_ad,
                            gas.c_temp * mu_ad, gas.alpha)
    sigma = gas.c_rho * mu_ad / rho
    mass_diff = sigma * grad_rho[direction]
    f[0] += mass_diff
    f[1:-1] += mass_diff * v
    f[-1] += mass_diff * u[-1] / rho
    return f


# ---------------------------------------------------------------------------
# smoothness sensor


def _modal_transform_matrix(ops) -> np.ndarray:
    """Inverse of the orthonormal-Legendre Vandermonde on the LGL nodes."""
    n = ops.n_nodes
    vmat = np.zeros((n, n))
    x = ops.nodes
    pk_m1 = np.ones_like(x)
    vmat[:, 0] = pk_m1 * np.sqrt(0.5)
    if n > 1:
        pk = x.copy()
        vmat[:, 1] = pk * np.sqrt(1.5)
        for k in range(1, n - 1):
            pk_p1 = ((2 * k + 1) * x * pk - k * pk_m1) / (k + 1)
            pk_m1, pk = pk, pk_p1
            vmat[:, k + 1] = pk * np.sqrt(k + 1.5)
    return np.linalg.inv(vmat)


def smoothness_sensor(element_field: np.ndarray, ops) -> np.ndarray:
    """Top-mode modal energy fraction of the sensor variable, per element.

    element_field has shape (nelem, n1, ..., nd) with n_i = p+1 nodes; the
    fraction vanishes for fields polynomial of degree <= p-1 per direction.
    """
    vm = _modal_transform_matrix(ops)
    modal = element_field
    dim = element_field.ndim - 1
    for axis in range(1, dim + 1):
        modal = np.moveaxis(np.moveaxis(modal, axis, -1) @ vm.T, -1, axis)
    total = np.sum(modal**2, axis=tuple(range(1, dim + 1)))
    top = np.zeros_like(total)
    for axis in range(1, dim + 1):
        sl = [slice(None)] * (dim + 1)
        sl[axis] = -1
        top += np.sum(modal[tuple(sl)] ** 2, axis=tuple(range(1, dim)))
    return top / (total + 1e-300)


def artificial_viscosity(element_field: np.ndarray, ops, gas: GasParameters,
                         h_elem, check: bool = True) -> np.ndarray:
    """Per-element artificial viscosity from a Persson-type density sensor.

    element_field has shape (nelem, ncomp, nodes...); h_elem is the smallest
    element width per element.  The value ramps smoothly from 0 on smooth data
    to h (|v| + a)_max / (p + 1) when the top density mode carries O(1) energy.
    """
    rho, v, _p, t, _e = gm.primitives(np.moveaxis(element_field, 1, 0), gas, check=check)
    sensor = smoothness_sensor(rho, ops)
    p_ord = ops.p
    s_log = np.log10(sensor + 1e-300)
    # band placed just under the top-mode energy fraction of a genuine jump,
    # so resolved viscous profiles switch cleanly off
    s0 = -4.0 * np.log10(p_ord) - 0.5
    kappa = 0.5
    ramp = np.where(
        s_log < s0 - kappa, 0.0,
        np.where(s_log > s0 + kappa, 1.0,
                 0.5 * (1.0 + np.sin(0.5 * np.pi * (s_log - s0) / kappa))))
    axes = tuple(range(1, rho.ndim))
    speed = np.max(np.abs(v).max(axis=0) + gm.sound_speed(t, gas), axis=axes)
    return ramp * np.asarray(h_elem) * speed / (p_ord + 1)
