"""Benchmark case definitions: initial data, exact solutions, and ghost states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gas as gm
from .gas import GasParameters
from .mesh import DIRICHLET, PERIODIC, Mesh, make_mesh
from .sbp import build_lgl_operators
from .viscous_shock import ViscousShockProfile

TGV_CM = 89.6


class CaseError(ValueError):
    pass


@dataclass
class CaseSetup:
    name: str
    mesh: Mesh
    ops: object
    gas: GasParameters
    initial: callable            # () -> field
    exact: callable              # (t) -> field, or None
    ghosts_fn: callable          # (t) -> ghosts dict, or None
    t_end: float


def _field(rho, v, t, gas):
    return np.moveaxis(gm.conservative(rho, v, t, gas), 0, 1)


def density_wave(dim, n_elems, p, gas, t_end=0.5, jitter=0.0, seed=None,
                 amplitude=0.2):
    """Periodic density wave advected at unit speed along x.

    With constant pressure the profile is an exact inviscid solution; at
    finite Reynolds number heat conduction through the temperature field makes
    it a stiffness-friendly near-solution used for conservation and entropy
    audits.
    """
    mesh = make_mesh(dim, n_elems, (0.0, 1.0), p, bc=PERIODIC,
                     jitter=jitter, seed=seed)
    ops = build_lgl_operators(p)
    x = mesh.node_coords(ops)

    def exact(t):
        rho = 1.0 + amplitude * np.sin(2.0 * np.pi * (x[0] - t))
        v = np.zeros((dim,) + rho.shape)
        v[0] = 1.0
        return _field(rho, v, 1.0 / rho, gas)

    return CaseSetup("density-wave", mesh, ops, gas, lambda: exact(0.0), exact,
                     None, t_end)


def viscous_shock(dim, n_elems, p, gas, t_end=0.64, speed=0.25, extent=5.0,
                  jitter=0.0, seed=None):
    """Traveling viscous shock with the exact profile as Dirichlet data."""
    if gas.mach <= 1.0:
        raise CaseError("viscous-shock requires a supersonic freestream Mach")
    profile = ViscousShockProfile(gas)
    bc = (DIRICHLET,) + (PERIODIC,) * (dim - 1)
    extents = ((-extent, extent),) + ((0.0, 1.0),) * (dim - 1)
    if np.isscalar(n_elems):
        n_elems = (int(n_elems),) + (1,) * (dim - 1)
    mesh = make_mesh(dim, n_elems, extents, p, bc=bc, jitter=jitter, seed=seed)
    ops = build_lgl_operators(p)
    x = mesh.node_coords(ops)

    def state_at(coords_x, t):
        rho, u, temp = profile(coords_x - speed * t)
        v = np.zeros((dim,) + rho.shape)
        v[0] = u + speed
        return _field(rho, v, temp, gas)

    def exact(t):
        return state_at(x[0], t)

    h = mesh.widths[0]
    mask_l = mesh.boundary_mask(0, "left")
    mask_r = mesh.boundary_mask(0, "right")
    xg_l = x[0][mask_l] - h[0]
    xg_r = x[0][mask_r] + h[-1]

    def ghosts_fn(t):
        return {(0, "left"): state_at(xg_l, t), (0, "right"): state_at(xg_r, t)}

    return CaseSetup("viscous-shock", mesh, ops, gas, lambda: exact(0.0), exact,
                     ghosts_fn, t_end)


def sod_torture(n_elems, p, gas, t_end=0.15, rho_right=1e-3, p_right=1e-5,
                interface=0.5):
    """Near-vacuum Sod-type Riemann data; exercises the positivity machinery."""
    mesh = make_mesh(1, n_elems, (0.0, 1.0), p, bc=DIRICHLET)
    ops = build_lgl_operators(p)
    x = mesh.node_coords(ops)[0]

    def state_at(coords):
        right = coords > interface
        rho = np.where(right, rho_right, 1.0)
        pres = np.where(right, p_right, 1.0)
        v = np.zeros((1,) + coords.shape)
        return _field(rho, v, pres / rho, gas)

    h = mesh.widths[0]
    mask_l = mesh.boundary_mask(0, "left")
    mask_r = mesh.boundary_mask(0, "right")
    ghost_l = state_at(x[mask_l] - h[0])
    ghost_r = state_at(x[mask_r] + h[-1])

    def ghosts_fn(_t):
        return {(0, "left"): ghost_l, (0, "right"): ghost_r}

    return CaseSetup("sod-torture", mesh, ops, gas, lambda: state_at(x), None,
                     ghosts_fn, t_end)


def taylor_green(dim, n_elems, p, gas, t_end=1.0, c_m=TGV_CM):
    """Taylor-Green vortex on the periodic cube [-pi, pi]^dim (dim 2 or 3).

    p(x) = 1 + gamma M^2/C_M (cos 2x + cos 2y)(cos 2z + 2), T = 1, rho = p/T,
    with the 2D case taken as the z = 0 plane of the 3D field.
    """
    if dim < 2:
        raise CaseError("tgv requires dimension >= 2")
    mesh = make_mesh(dim, n_elems, (-np.pi, np.pi), p, bc=PERIODIC)
    ops = build_lgl_operators(p)
    x = mesh.node_coords(ops)
    z = x[2] if dim == 3 else np.zeros_like(x[0])

    def initial():
        pres = 1.0 + gas.gamma * gas.mach**2 / c_m * (
            np.cos(2 * x[0]) + np.cos(2 * x[1])) * (np.cos(2 * z) + 2.0)
        v = np.zeros((dim,) + pres.shape)
        v[0] = np.sin(x[0]) * np.cos(x[1]) * np.cos(z)
        v[1] = -np.cos(x[0]) * np.sin(x[1]) * np.cos(z)
        temp = np.ones_like(pres)
        return _field(pres / temp, v, temp, gas)

    return CaseSetup("tgv", mesh, ops, gas, initial, None, None, t_end)


def build_case(name, dim, n_elems, p, gas, t_end, jitter=0.0, seed=None, **kw):
    if name == "density-wave":
        return density_wave(dim, n_elems, p, gas, t_end, jitter, seed, **kw)
    if name == "viscous-shock":
        return viscous_shock(dim, n_elems, p, gas, t_end, jitter=jitter, seed=seed, **kw)
    if name == "sod-torture":
        if dim != 1:
            raise CaseError("sod-torture is one-dimensional")
        return sod_torture(n_elems, p, gas, t_end, **kw)
    if name == "tgv":
        return taylor_green(dim, n_elems, p, gas, t_end, **kw)
    raise CaseError(f"unknown case {name!r}")
