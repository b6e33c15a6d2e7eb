"""Steady 1D viscous-shock profile, integrated once at startup.

The stationary Navier-Stokes shock connects the upstream state
(rho, u, T) = (1, 1, 1) to its Rankine-Hugoniot partner through the ODE
system (momentum and energy first integrals)

    u_x = (3 Re)/(4 mu) [u + Pi(u,T) - P0]
    T_x = (Re Pr)/mu    [T/gamma - (alpha/2) u^2 + alpha P0 u - Q0]

with Pi = T/(gamma M^2 u) on the unit mass flux.  The heteroclinic orbit is
integrated from a small perturbation along the unstable direction at the
upstream point with tight tolerances, then recentred so u = (u1+u2)/2 sits at
x = 0.  Evaluations outside the integrated range clamp to the end states
(the tails decay exponentially).

A moving shock is the same profile boosted by the frame speed: the profile is
an exact unsteady solution by Galilean invariance, which makes it a clean
reference for temporal convergence studies.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from . import gas as gm
from .gas import GasParameters


def rankine_hugoniot_downstream(gas: GasParameters):
    """(u2, T2) behind a stationary shock with upstream (1, 1), Mach = gas.mach."""
    g, m2 = gas.gamma, gas.mach**2
    u2 = ((g - 1.0) * m2 + 2.0) / ((g + 1.0) * m2)
    t2 = ((2.0 * g * m2 - (g - 1.0)) * ((g - 1.0) * m2 + 2.0)) / ((g + 1.0) ** 2 * m2)
    return u2, t2


class ViscousShockProfile:
    """Callable steady-shock profile (rho, u, T)(x) with the shock centre at 0."""

    def __init__(self, gas: GasParameters, span: float = None):
        if gas.mach <= 1.0:
            raise gm.DomainError("viscous shock requires a supersonic Mach number")
        self.gas = gas
        g, a, m2 = gas.gamma, gas.alpha, gas.mach**2
        re, pr = gas.reynolds, gas.prandtl
        p0 = 1.0 + 1.0 / (g * m2)
        q0 = 1.0 / g + 0.5 * a + a / (g * m2)
        u2, t2 = rankine_hugoniot_downstream(gas)
        self.u2, self.t2 = u2, t2

        def rhs(_x, y):
            u, t = y
            mu = float(gas.viscosity(t))
            ux = (u + t / (g * m2 * u) - p0) * (3.0 * re) / (4.0 * mu)
            tx = (t / g - 0.5 * a * u**2 + a * p0 * u - q0) * re * pr / mu
            return [ux, tx]

        # The upstream point is an unstable node and the downstream point a
        # saddle, so the unique shock orbit is the downstream stable manifold:
        # integrate backward in x from a small step along it.
        eps = 1e-7
        j = np.zeros((2, 2))
        f0 = np.array(rhs(0.0, [u2, t2]))
        for k, dy in enumerate(np.eye(2) * eps):
            j[:, k] = (np.array(rhs(0.0, [u2 + dy[0], t2 + dy[1]])) - f0) / eps
        lam, vec = np.linalg.eig(j)
        k = int(np.argmin(lam.real))
        direction = np.real(vec[:, k])
        if direction[0] < 0:
            direction = -direction           # backward march increases u
        y0 = np.array([u2, t2]) + 1e-9 * direction / abs(direction[0])

        if span is None:
            span = 5000.0 / re * max(1.0, pr)

        def rhs_back(_s, y):
            ux, tx = rhs(_s, y)
            return [-ux, -tx]

        def upstream(_s, y):
            return (1.0 - y[0]) - 1e-13
        upstream.terminal = True

        sol = solve_ivp(rhs_back, (0.0, span), y0, method="Radau", dense_output=True,
                        rtol=1e-12, atol=1e-13, events=upstream)
        self._sol = sol               # parametrized by s = -x + const
        umid = 0.5 * (1.0 + u2)
        ss = np.linspace(sol.t[0], sol.t[-1], 20001)
        us = sol.sol(ss)[0]
        self._s_center = float(np.interp(umid, us, ss))  # u increases along s
        self._s_lo = sol.t[0]
        self._s_hi = sol.t[-1]

    def __call__(self, x):
        """(rho, u, T) at positions x (shock-frame coordinates, centre at 0)."""
        x = np.asarray(x, dtype=float)
        s = np.clip(self._s_center - x, self._s_lo, self._s_hi)
        u, t = self._sol.sol(s.reshape(-1))
        u = u.reshape(x.shape).copy()
        t = t.reshape(x.shape).copy()
        upstream = self._s_center - x >= self._s_hi
        downstream = self._s_center - x <= self._s_lo
        u[upstream] = 1.0
        t[upstream] = 1.0
        u[downstream] = self.u2
        t[downstream] = self.t2
        return 1.0 / u, u, t

    def conservative(self, x, speed: float = 0.0, t: float = 0.0):
        """Conservative state of the profile moving with the given frame speed."""
        rho, u, temp = self(np.asarray(x) - speed * t)
        return gm.conservative(rho, (u + speed)[None], temp, self.gas)
