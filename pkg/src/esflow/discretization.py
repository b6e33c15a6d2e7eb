"""Residual assembly on tensor-product LGL meshes.

Two residuals for the scaled equation (J u)_t = R are built from the same
element-face fluxes:

* ``residual_first_order`` (R1): finite-volume style two-point fluxes between
  adjacent nodes on the flux-point grid.  The mass row of every dissipative
  flux has the exact form mbar - D (rho_R - rho_L) with
  D = max(D_min, D_char, D_sigma), which is what the pseudotime density bound
  requires; momentum and energy receive the characteristic dissipation with
  the mass row/column deleted plus the mass-diffusion carry
  D * drho * [1, vbar, E~].  Each dissipative piece is pointwise
  entropy-dissipative.
* ``residual_high_order`` (R_p): telescoped entropy-conservative fluxes at
  interior flux points, the same dissipative flux at element faces, and
  viscous/artificial-dissipation terms applied through the derivative matrix
  with one-sided (LDG) gradients of the entropy variables.

Sharing the face flux between the two residuals keeps any per-element convex
blend of them discretely conservative.

Ghost states for Dirichlet boundaries are full exterior element fields keyed
by (direction, side); their traces feed the face fluxes and gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fluxes as fx
from . import gas as gm
from .gas import GasParameters
from .mesh import DIRICHLET, Mesh, roll_elems
from .sbp import LglOperatorSet, telescope_divergence


@dataclass
class ResidualPair:
    """First-order and high-order residuals of the same field (public layout)."""

    r1: np.ndarray                # (nelem, ncomp, nodes...)
    rp: np.ndarray
    mu_ad: np.ndarray             # (nelem,)
    mass_diss_sums: np.ndarray    # (nelem, nodes...): sum_d (D+ + D-)/dxi_bar


class InvariantViolationError(RuntimeError):
    pass


def _cf(field):
    """Public (nelem, ncomp, ...) -> component-first (ncomp, nelem, ...)."""
    return np.moveaxis(field, 1, 0)


def _fc(ufirst):
    return np.moveaxis(ufirst, 0, 1)


def _axis_matmul(arr, mat, axis):
    moved = np.moveaxis(arr, axis, -1)
    return np.moveaxis(moved @ mat.T, -1, axis)


def _ebcast(per_elem, n_node_axes):
    return np.asarray(per_elem).reshape((-1,) + (1,) * n_node_axes)


# ---------------------------------------------------------------------------
# dissipative two-point flux (interior flux points and element faces)


def _pair_flux(uL, uR, d, gas: GasParameters, ahat, mu_ad, dxi, jfac):
    """Contravariant dissipative interface flux and its mass coefficient D.

    uL, uR are component-first; ahat/mu_ad/jfac/dxi broadcast over the trailing
    shape.  flux[0] = ahat*f_ec[0] - D*(rho_R - rho_L) exactly.
    """
    g_unused, a = gas.gamma, gas.alpha
    rL, vL, _pL, tL, _ = gm.primitives(uL, gas, check=False)
    rR, vR, _pR, tR, _ = gm.primitives(uR, gas, check=False)
    ec = fx.ec_flux(uL, uR, d, gas, check=False)

    rho_a = 0.5 * (rL + rR)
    vbar = 0.5 * (vL + vR)
    tbar = 0.5 * (tL + tR)
    mbar = ahat * ec[0]
    d_min = np.abs(mbar) / (2.0 * rho_a)
    d_char = 0.5 * ahat * (np.abs(vbar[d]) + gm.sound_speed(tbar, gas))
    sigma = gas.c_rho * mu_ad / rho_a
    d_sigma = sigma * ahat**2 / (jfac * dxi)
    dcoef = np.maximum(np.maximum(d_min, d_char), d_sigma)

    drho = uR[0] - uL[0]
    etilde = fx.ec_energy_average(uL, uR, gas)
    col = np.concatenate((np.ones_like(drho)[None], vbar, etilde[None])) * (dcoef * drho)

    dmat = fx.dissipation_matrix(rho_a, vbar, tbar, d, gas)
    dmat[..., 0, :] = 0.0
    dmat[..., :, 0] = 0.0
    dw = gm.entropy_variables(uR, gas, check=False) - gm.entropy_variables(uL, gas, check=False)
    ed = 0.5 * ahat * np.moveaxis(
        np.einsum("...ij,...j->...i", dmat, np.moveaxis(dw, 0, -1)), -1, 0)

    # two-point artificial dissipation, normal gradients only
    dx_phys = dxi * jfac / ahat
    tau = mu_ad * (vR - vL) / dx_phys
    tau[d] = tau[d] * (4.0 / 3.0)
    work = a * np.sum(vbar * tau, axis=0) + gas.c_temp * mu_ad * (tR - tL) / dx_phys
    zero = np.zeros_like(work)
    ad = ahat * np.concatenate((zero[None], tau, work[None]))

    return ahat * ec - ed - col - ad, dcoef


# ---------------------------------------------------------------------------
# one-sided (LDG) gradients and divergences


def _ghost_trace(ghost_field, d, side):
    """Domain-facing trace of a ghost element field: (ncomp, nb, other nodes...)."""
    g = _cf(np.asarray(ghost_field, dtype=float))
    node_axis = 2 + d
    return np.take(g, -1 if side == "left" else 0, axis=node_axis)


def _minus_gradient(q, mesh: Mesh, ops: LglOperatorSet, d: int, wstar_left=None):
    """Physical d-gradient with minus-side interface traces.

    q has shape (..., nelem, nodes...); wstar_left optionally overrides the
    interface value at left-domain-boundary faces (Dirichlet).
    """
    dim = mesh.dim
    node_axis = q.ndim - dim + d
    elem_axis = q.ndim - dim - 1
    two_over_h = _ebcast(2.0 / mesh.element_widths()[:, d], dim)

    grad = _axis_matmul(q, ops.dmat, node_axis)
    trace0 = np.take(q, 0, axis=node_axis)
    trace1 = np.take(q, -1, axis=node_axis)
    wstar = roll_elems(mesh, trace1, elem_axis, d, 1)
    if mesh.bc[d] == DIRICHLET:
        mask = mesh.boundary_mask(d, "left")
        idx = (slice(None),) * elem_axis + (mask,)
        wstar[idx] = trace0[idx] if wstar_left is None else wstar_left
    corr = (trace0 - wstar) / ops.weights[0]
    sl = [slice(None)] * q.ndim
    sl[node_axis] = 0
    grad[tuple(sl)] = grad[tuple(sl)] + corr
    return grad * two_over_h


def _plus_divergence(fhat, mesh: Mesh, ops: LglOperatorSet, d: int):
    """D fhat + P^{-1}B(f* - fhat) with plus-side traces; a term of (J u)_t.

    At a Dirichlet right boundary the plus side does not exist and the interior
    trace is kept (no correction).
    """
    dim = mesh.dim
    node_axis = fhat.ndim - dim + d
    elem_axis = fhat.ndim - dim - 1

    div = _axis_matmul(fhat, ops.dmat, node_axis)
    trace0 = np.take(fhat, 0, axis=node_axis)
    trace1 = np.take(fhat, -1, axis=node_axis)
    fstar = roll_elems(mesh, trace0, elem_axis, d, -1)
    if mesh.bc[d] == DIRICHLET:
        mask = mesh.boundary_mask(d, "right")
        idx = (slice(None),) * elem_axis + (mask,)
        fstar[idx] = trace1[idx]
    corr = (fstar - trace1) / ops.weights[-1]
    sl = [slice(None)] * fhat.ndim
    sl[node_axis] = -1
    div[tuple(sl)] = div[tuple(sl)] + corr
    return div


def ldg_gradient_scalar(vals, mesh, ops, d):
    """Minus-sided physical d-gradient of per-element nodal data (nelem, nodes...)."""
    return _minus_gradient(vals, mesh, ops, d)


def ldg_divergence_scalar(flux_hat, mesh, ops, d):
    """Plus-sided divergence term of (J u)_t for contravariant nodal fluxes."""
    return _plus_divergence(flux_hat, mesh, ops, d)


def _theta_of_w(w, mesh, ops, gas, ghosts):
    """Entropy-variable gradients: (ncomp, dim) + w.shape[1:]."""
    theta = np.empty((w.shape[0], mesh.dim) + w.shape[1:])
    for d in range(mesh.dim):
        wstar_left = None
        if mesh.bc[d] == DIRICHLET and ghosts and (d, "left") in ghosts:
            gtrace = _ghost_trace(ghosts[(d, "left")], d, "left")
            wstar_left = gm.entropy_variables(gtrace, gas, check=False)
        theta[:, d] = _minus_gradient(w, mesh, ops, d, wstar_left)
    return theta


def ldg_gradients(field, mesh: Mesh, ops: LglOperatorSet, gas: GasParameters,
                  ghosts=None):
    """Physical gradients of the entropy variables, (ncomp, dim, nelem, nodes...)."""
    w = gm.entropy_variables(_cf(np.asarray(field, dtype=float)), gas, check=False)
    return _theta_of_w(w, mesh, ops, gas, ghosts)


def _gradients_from_theta(w, theta, gas: GasParameters):
    """Exact chain rule from entropy-variable gradients to (grad v, grad T, dln rho)."""
    g, a = gas.gamma, gas.alpha
    t = -g / w[-1]
    v = w[1:-1] * t / (g * a)
    grad_t = (t**2 / g) * theta[-1]
    grad_v = (t / (g * a)) * theta[1:-1] + (v[:, None] * t / g) * theta[-1][None]
    v_dot_gv = np.einsum("i...,id...->d...", v, grad_v)
    v2 = np.sum(v**2, axis=0)
    ds = -theta[0] - 0.5 * g * a * (2.0 * v_dot_gv / t - v2 * grad_t / t**2)
    dlnrho = (grad_t / t - ds) / (g - 1.0)
    return grad_v, grad_t, dlnrho


# ---------------------------------------------------------------------------
# residual assembly


def compute_residual_pair(field, mesh: Mesh, ops: LglOperatorSet, gas: GasParameters,
                          ghosts=None, include_ad=True) -> ResidualPair:
    """Assemble R1 and R_p for one field, sharing face fluxes and gradients."""
    dim = mesh.dim
    n = ops.n_nodes
    ufirst = _cf(np.asarray(field, dtype=float))
    rho = ufirst[0]
    rhoe = gm.internal_energy_density(ufirst, gas)
    if np.any(rho <= 0.0) or np.any(rhoe <= 0.0) or not np.all(np.isfinite(rho)):
        bad = np.argwhere(~((rho > 0.0) & (rhoe > 0.0) & np.isfinite(rho)))
        raise gm.InadmissibleStateError(
            f"residual evaluation on inadmissible field at element/node {bad[0].tolist()}",
            where=bad)

    jac = mesh.jacobians()
    ahat = mesh.ahat()
    widths = mesh.element_widths()

    _rp, vel0, _p0, temp0, _e0 = gm.primitives(ufirst, gas, check=False)
    if include_ad:
        mu_ad = fx.artificial_viscosity(np.asarray(field), ops, gas,
                                        widths.min(axis=1), check=False)
        # nodal application with a density-weighted cap: the kinematic AD
        # viscosity mu/rho stays O(h * wavespeed) even at near-vacuum nodes,
        # which keeps the sigma = c_rho mu/rho diffusivity and the pseudotime
        # bounds from collapsing in mixed elements
        lam = np.sum(np.abs(vel0), axis=0) + gm.sound_speed(temp0, gas)
        h_e = _ebcast(widths.min(axis=1), dim)
        cap = rho * h_e * lam / (ops.p + 1)
        mu_node = np.minimum(_ebcast(mu_ad, dim), cap)
    else:
        mu_ad = np.zeros(mesh.n_elem)
        mu_node = np.zeros_like(rho)

    w = gm.entropy_variables(ufirst, gas, check=False)
    theta = _theta_of_w(w, mesh, ops, gas, ghosts)
    grad_v, grad_t, dlnrho = _gradients_from_theta(w, theta, gas)
    grad_rho = rho * dlnrho
    vel, temp = vel0, temp0

    r1 = np.zeros_like(ufirst)
    rp = np.zeros_like(ufirst)
    dsums = np.zeros_like(rho)

    for d in range(dim):
        node_axis = 2 + d
        # line layout: node axis d last
        u_line = np.moveaxis(ufirst, node_axis, -1)   # (ncomp, nelem, other..., n)
        mu_line = np.moveaxis(mu_node, node_axis - 1, -1)
        ahat_d = _ebcast(ahat[:, d], dim - 1)
        jfac = _ebcast(jac, dim - 1)

        # ----- element-face flux (single-valued across each face)
        uLf = u_line[..., -1]
        uRf = roll_elems(mesh, u_line[..., 0], 1, d, -1)
        mu_f = 0.5 * (mu_line[..., -1] + roll_elems(mesh, mu_line[..., 0], 0, d, -1))
        left_extra = None
        if mesh.bc[d] == DIRICHLET:
            if ghosts is None or (d, "right") not in ghosts or (d, "left") not in ghosts:
                raise InvariantViolationError(
                    f"missing Dirichlet ghost states for direction {d}")
            mask_r = mesh.boundary_mask(d, "right")
            mask_l = mesh.boundary_mask(d, "left")
            uRf[:, mask_r] = _ghost_trace(ghosts[(d, "right")], d, "right")
            mu_f[mask_r] = mu_line[..., -1][mask_r]
            gl = _ghost_trace(ghosts[(d, "left")], d, "left")
            left_extra = _pair_flux(
                gl, u_line[:, mask_l][..., 0], d, gas,
                _ebcast(ahat[mask_l, d], dim - 1), mu_line[..., 0][mask_l],
                ops.weights[0], _ebcast(jac[mask_l], dim - 1))
        fstar, dface = _pair_flux(uLf, uRf, d, gas, ahat_d, mu_f,
                                  ops.weights[0], jfac)

        # ----- R1 interior two-point fluxes
        dxi = ops.nodes[1:] - ops.nodes[:-1]
        mu_i = 0.5 * (mu_line[..., :-1] + mu_line[..., 1:])
        f_int, d_int = _pair_flux(u_line[..., :-1], u_line[..., 1:], d, gas,
                                  ahat_d[..., None], mu_i,
                                  dxi, jfac[..., None])

        fbar1 = np.empty(u_line.shape[:-1] + (n + 1,))
        fbar1[..., 1:n] = f_int
        fbar1[..., n] = fstar
        fbar_left = roll_elems(mesh, fstar, 1, d, 1)
        dleft = roll_elems(mesh, dface, 0, d, 1)
        if left_extra is not None:
            fbar_left[:, mask_l], dleft[mask_l] = left_extra
        fbar1[..., 0] = fbar_left

        # ----- R_p telescoped EC interior fluxes
        ftable = fx.ec_flux(u_line[..., :, None], u_line[..., None, :], d, gas,
                            check=False)
        fbarp = fbar1.copy()
        fbarp[..., 1:n] = np.einsum("ilm,c...lm->c...i", ops.ec_weights,
                                    ftable) * ahat_d[..., None]

        r1 -= np.moveaxis(telescope_divergence(ops, fbar1, axis=-1), -1, node_axis)
        rp -= np.moveaxis(telescope_divergence(ops, fbarp, axis=-1), -1, node_axis)

        # ----- mass-dissipation sums for the pseudotime density bound
        dfp = np.empty(d_int.shape[:-1] + (n + 1,))
        dfp[..., 1:n] = d_int
        dfp[..., n] = dface
        dfp[..., 0] = dleft
        per_node = (dfp[..., 1:] + dfp[..., :-1]) / ops.weights
        dsums += np.moveaxis(per_node, -1, node_axis - 1)

        # ----- viscous terms (both residuals) and volume AD (R_p only)
        mu_phys = gas.viscosity(temp) / gas.reynolds
        fv_hat = fx.viscous_flux_kernel(vel, grad_v, grad_t, d, mu_phys,
                                        mu_phys / gas.prandtl, gas.alpha) \
            * _ebcast(ahat[:, d], dim)
        visc = _plus_divergence(fv_hat, mesh, ops, d)
        r1 += visc
        rp += visc

        if include_ad:
            fad_hat = fx.brenner_ad_flux(ufirst, grad_v, grad_t, grad_rho, d,
                                         mu_node, gas, check=False) \
                * _ebcast(ahat[:, d], dim)
            rp += _plus_divergence(fad_hat, mesh, ops, d)

    return ResidualPair(r1=_fc(r1).copy(), rp=_fc(rp).copy(), mu_ad=mu_ad,
                        mass_diss_sums=dsums)


def residual_first_order(field, mesh, ops, gas, ghosts=None, include_ad=True):
    """First-order positivity-compatible residual R1 of (J u)_t = R."""
    return compute_residual_pair(field, mesh, ops, gas, ghosts, include_ad).r1


def residual_high_order(field, mesh, ops, gas, ghosts=None, include_ad=True):
    """Design-order entropy-stable residual R_p of (J u)_t = R."""
    return compute_residual_pair(field, mesh, ops, gas, ghosts, include_ad).rp


# ---------------------------------------------------------------------------
# per-element flux limiter


def flux_limiter_theta(u_base, r_p, r_1, dtau, c_tau, mesh: Mesh, gas: GasParameters,
                       floors, resolution=1e-3):
    """Largest per-element theta in [0,1] keeping the blended update admissible.

    u_base is the theta-independent part of the pseudotime update (current
    iterate plus the physical-level increments), so the update
    u(theta) = u_base + c_tau*(dtau/J)*[theta r_p + (1-theta) r_1] is affine
    in theta: the density constraint is solved in closed form and the
    internal-energy constraint by bisection seeded at the density bound.  The
    theta = 0 (pure first-order) update must already be admissible.
    """
    eps_rho, eps_ie = floors
    dim = u_base.ndim - 2
    jac = mesh.jacobians().reshape((-1,) + (1,) * (dim + 1))
    u0 = u_base + c_tau * (dtau / jac) * r_1
    u1 = u_base + c_tau * (dtau / jac) * r_p
    node_axes = tuple(range(1, dim + 1))

    def elem_min(arr):
        return arr.min(axis=node_axes) if node_axes else arr

    def admissible(u):
        rho = elem_min(u[:, 0])
        rhoe = elem_min(gm.internal_energy_density(_cf(u), gas))
        return (rho >= eps_rho) & (rhoe >= eps_ie)

    if not np.all(admissible(u0)):
        raise InvariantViolationError(
            "first-order update violates positivity; pseudotime step bound is broken")

    drho = u1[:, 0] - u0[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        room = np.where(drho < 0.0, (u0[:, 0] - eps_rho) / np.where(drho < 0.0, -drho, 1.0),
                        np.inf)
    theta_rho = np.clip(elem_min(room), 0.0, 1.0)

    def blend(theta_e):
        th = theta_e.reshape((-1,) + (1,) * (dim + 1))
        return u0 + th * (u1 - u0)

    theta = theta_rho.copy()
    ok = admissible(blend(theta))
    lo = np.where(ok, theta, 0.0)
    hi = theta
    if not np.all(ok):
        for _ in range(int(np.ceil(np.log2(1.0 / resolution))) + 2):
            mid = 0.5 * (lo + hi)
            good = admissible(blend(mid))
            lo = np.where(good, mid, lo)
            hi = np.where(good, hi, mid)
        theta = lo
    if not np.all(admissible(blend(theta))):
        raise InvariantViolationError("limiter failed to produce an admissible blend")
    return theta
