"""Forward-Euler, SSPRK3, and dual time-stepping BDF1/BDF2 drivers.

The dual time-stepping updates are written in increment form, algebraically
identical to the contraction form u^{k+1} = C^tau (u^{k,n} + dtau R) but with
an exact fixed point: zero residual at a steady level reproduces the level
bitwise.  Pseudotime steps obey three bounds recomputed each iteration:

* the density bound (BDF1/BDF2 variants of the forward-Euler bound, larger
  than it whenever the previous physical levels have positive density),
* the internal-energy bound from the per-node quadratic trinomial
  A (dtau/J)^2 + B (dtau/J) + C, whose vertical intercept C = (rho e rho)^k
  is positive on admissible states,
* a multiplier kappa_tau on the forward-Euler density bound.

Positivity of every iterate is enforced unconditionally: a violating update
halves dtau and retries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as diag
from . import gas as gm
from .discretization import (InvariantViolationError, compute_residual_pair,
                             flux_limiter_theta)
from .gas import DomainError, GasParameters


class PositivityDeadlockError(RuntimeError):
    pass


@dataclass
class DualTimeConfig:
    dt_initial: float = 1e-2
    dt_final: float = None            # defaults to dt_initial (no ramp)
    ramp_start: float = np.inf        # physical time after which dt decays
    ramp_decay: float = 0.5           # per-step factor after ramp_start
    kappa_tau: float = 2.0            # multiplier on the forward-Euler density bound
    pseudo_cfl: float = 0.25          # explicit-stability bound on the pseudotime step
    safety: float = 0.9
    eps_abs_tol: float = 1e-8
    eps_rel_tol: float = 1e-6
    max_pseudo_iters: int = 2000
    max_halvings: int = 30
    eps_rho: float = 1e-11
    eps_ie: float = 1e-11
    theta_resolution: float = 1e-3

    def __post_init__(self):
        if self.dt_final is None:
            self.dt_final = self.dt_initial
        if self.dt_initial <= 0 or self.dt_final <= 0:
            raise DomainError("physical steps must be positive")
        if self.kappa_tau < 1.0 or not 0.0 < self.safety <= 1.0:
            raise DomainError("kappa_tau >= 1 and safety in (0, 1] required")
        if self.eps_abs_tol <= 0 or self.eps_rel_tol <= 0:
            raise DomainError("convergence thresholds must be positive")

    @property
    def floors(self):
        return (self.eps_rho, self.eps_ie)

    def dt_at(self, t: float, dt_prev: float) -> float:
        if t < self.ramp_start:
            return self.dt_initial
        return max(self.dt_final, dt_prev * self.ramp_decay)


# ---------------------------------------------------------------------------
# update formulas and contraction coefficients


def c1_tau(dt: float, dtau: float) -> float:
    """C1 = dt/(dt + dtau)."""
    if dt <= 0 or dtau <= 0:
        raise DomainError("steps must be positive")
    return dt / (dt + dtau)


def c2_tau(dt: float, dtau: float) -> float:
    """C2 = 2 dt/(2 dt + 3 dtau)."""
    if dt <= 0 or dtau <= 0:
        raise DomainError("steps must be positive")
    return 2.0 * dt / (2.0 * dt + 3.0 * dtau)


def bdf1_pseudo_update(u_k, u_n, r, dt, dtau, jac=1.0):
    """u^{k+1} = C1 (u^{k,n} + dtau R/J), increment form (exact fixed point)."""
    c = c1_tau(dt, dtau)
    return u_k + c * ((dtau / dt) * (u_n - u_k) + (dtau / jac) * r)


def bdf2_pseudo_update(u_k, u_n, u_nm1, r, dt, dtau, jac=1.0):
    """u^{k+1} = C2 (u^{k,n} + dtau R/J) with the two-level combination."""
    c = c2_tau(dt, dtau)
    combo = 2.0 * u_n - 0.5 * u_nm1 - 1.5 * u_k
    return u_k + c * ((dtau / dt) * combo + (dtau / jac) * r)


def bdf1_base_state(u_k, u_n, dt, dtau):
    """Theta-independent part of the BDF1 update: C1 u^{k,n} in increment form."""
    return u_k + c1_tau(dt, dtau) * (dtau / dt) * (u_n - u_k)


def bdf2_base_state(u_k, u_n, u_nm1, dt, dtau):
    """Theta-independent part of the BDF2 update: C2 u^{k,n} in increment form."""
    combo = 2.0 * u_n - 0.5 * u_nm1 - 1.5 * u_k
    return u_k + c2_tau(dt, dtau) * (dtau / dt) * combo


# ---------------------------------------------------------------------------
# pseudotime step bounds


def _min_positive(bounds) -> float:
    pos = bounds[bounds > 0.0]
    return float(pos.min()) if pos.size else np.inf


def dtau_density_bound_bdf1(rho_k, rho_n, diss_sums, jac, dt):
    """Density-positivity bound: min over nodes of 1/((2/J) sum - (1/dt) rho_n/rho_k).

    Nodes with a nonpositive denominator impose no constraint; dt = inf
    recovers the forward-Euler bound.
    """
    if np.any(rho_k <= 0.0) or np.any(rho_n <= 0.0):
        raise gm.InadmissibleStateError("density bound requires positive densities")
    jb = np.asarray(jac).reshape((-1,) + (1,) * (np.ndim(rho_k) - 1))
    denom = (2.0 / jb) * diss_sums
    if np.isfinite(dt):
        denom = denom - (rho_n / rho_k) / dt
    return _min_positive(1.0 / np.maximum(denom, 1e-300) * (denom > 0.0))


def dtau_density_bound_bdf2(rho_k, rho_n, rho_nm1, diss_sums, jac, dt):
    """BDF2 variant: physical-time term (2/dt) rho_n/rho_k - (1/(2dt)) rho_nm1/rho_k."""
    if np.any(rho_k <= 0.0) or np.any(rho_n <= 0.0) or np.any(rho_nm1 <= 0.0):
        raise gm.InadmissibleStateError("density bound requires positive densities")
    jb = np.asarray(jac).reshape((-1,) + (1,) * (np.ndim(rho_k) - 1))
    denom = (2.0 / jb) * diss_sums
    if np.isfinite(dt):
        denom = denom - (2.0 * rho_n / rho_k - 0.5 * rho_nm1 / rho_k) / dt
    return _min_positive(1.0 / np.maximum(denom, 1e-300) * (denom > 0.0))


def dtau_density_bound_fe(rho_k, diss_sums, jac):
    """Forward-Euler density bound (the dt -> inf limit of the BDF bounds)."""
    return dtau_density_bound_bdf1(rho_k, rho_k, diss_sums, jac, np.inf)


# ---------------------------------------------------------------------------
# internal-energy quadratic trinomial


def _q_form(u, alpha):
    """(rho e) rho = rho * rhoE - alpha/2 |m|^2 as a quadratic form in u."""
    return u[0] * u[-1] - 0.5 * alpha * np.sum(u[1:-1] ** 2, axis=0)


def _b_form(u, w, alpha):
    """Symmetric bilinear form with _q_form(u) = _b_form(u, u)."""
    return 0.5 * (u[0] * w[-1] + u[-1] * w[0]) - 0.5 * alpha * np.sum(u[1:-1] * w[1:-1], axis=0)


def internal_energy_quadratic_bdf1(u_k, u_n, r, dt, gas: GasParameters, jac=1.0):
    """(A, B, C) with (rho e rho)^{k+1} / C1^2 = A (dtau/J)^2 + B (dtau/J) + C.

    Inputs are component-first arrays (ncomp, ...); C = (rho e rho)^k > 0 on
    admissible states.
    """
    a = gas.alpha
    c = _q_form(u_k, a)
    if np.any(c <= 0.0):
        raise gm.InadmissibleStateError("internal-energy quadratic needs admissible u^k")
    r_eff = r + (jac / dt) * u_n
    return _q_form(r_eff, a), 2.0 * _b_form(u_k, r_eff, a), c


def internal_energy_quadratic_bdf2(u_k, u_n, u_nm1, r, dt, gas: GasParameters, jac=1.0):
    """BDF2 coefficients with the (2/dt) u^n - (1/(2dt)) u^{n-1} combination."""
    a = gas.alpha
    c = _q_form(u_k, a)
    if np.any(c <= 0.0):
        raise gm.InadmissibleStateError("internal-energy quadratic needs admissible u^k")
    z = (2.0 / dt) * u_n - (0.5 / dt) * u_nm1
    r_eff = r + jac * z
    return _q_form(r_eff, a), 2.0 * _b_form(u_k, r_eff, a), c


def _dtau_ie_core(a, b, c0):
    """Largest x with A y^2 + B y + c0 > 0 for all y in [0, x]; inf when A,B >= 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c0 = np.asarray(c0, dtype=float)
    out = np.full(np.broadcast(a, b, c0).shape, np.inf)
    a, b, c0 = np.broadcast_arrays(a, b, c0)

    lin = (np.abs(a) < 1e-300) & (b < 0.0)
    np.divide(c0, -b, out=out, where=lin)

    quad = np.abs(a) >= 1e-300
    disc = b**2 - 4.0 * a * c0
    has_root = quad & ((a < 0.0) | ((b < 0.0) & (disc >= 0.0)))
    sq = np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = (-b - sq) / (2.0 * a)
        r2 = (-b + sq) / (2.0 * a)
    small = np.where((r1 > 0.0) & ((r1 <= r2) | (r2 <= 0.0)), r1,
                     np.where(r2 > 0.0, r2, np.inf))
    out = np.where(has_root, small, out)
    return out


def max_dtau_internal_energy(a, b, c, jac=1.0, floor=0.0):
    """Largest dtau keeping the trinomial above the floor margin; may be inf."""
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0.0):
        raise gm.InadmissibleStateError("positive vertical intercept C required")
    x = _dtau_ie_core(a, b, c - floor)
    return jac * x


# ---------------------------------------------------------------------------
# problems: what the drivers need to know about the spatial side


class PdeProblem:
    """Adapter exposing residuals, bounds, limiting, and norms to the drivers."""

    def __init__(self, mesh, ops, gas: GasParameters, ghosts_fn=None, include_ad=True,
                 pseudo_cfl=None):
        self.mesh = mesh
        self.ops = ops
        self.gas = gas
        self.ghosts_fn = ghosts_fn
        self.include_ad = include_ad
        self.pseudo_cfl = pseudo_cfl
        self._jac = mesh.jacobians()

    def dtau_cfl(self, u, mu_ad):
        """Explicit-stability (CFL) bound on the pseudotime step.

        The positivity bounds do not imply linear stability of the explicit
        pseudotime update for the high-order residual, so the step is also
        capped by convective and diffusive spectral estimates on the smallest
        flux-point control volume.
        """
        gas = self.gas
        rho, v, _p, t, _e = gm.primitives(np.moveaxis(u, 1, 0), gas, check=False)
        speed = np.sum(np.abs(v), axis=0) + gm.sound_speed(t, gas)
        w_min = float(self.ops.weights.min())
        h = self.mesh.element_widths()           # (nelem, dim)
        h_min = h.min(axis=1).reshape((-1,) + (1,) * (u.ndim - 2))
        dxb = 0.5 * h_min * w_min
        # kinematic AD viscosity is capped nodally at h*speed/(p+1)
        nu_ad = np.minimum(mu_ad.reshape((-1,) + (1,) * (u.ndim - 2)) / rho,
                           h_min * speed / (self.ops.p + 1))
        nu = gas.viscosity(t) / (gas.reynolds * rho) \
            + (1.0 + gas.c_rho + gas.c_temp) * nu_ad
        rate = self.mesh.dim * (speed / dxb + nu / dxb**2)
        return float(1.0 / np.max(rate))

    def residual_pair(self, u, t):
        ghosts = self.ghosts_fn(t) if self.ghosts_fn else None
        return compute_residual_pair(u, self.mesh, self.ops, self.gas,
                                     ghosts=ghosts, include_ad=self.include_ad)

    def jac_field(self, u):
        return self._jac.reshape((-1,) + (1,) * (u.ndim - 1))

    def admissible(self, u, floors) -> bool:
        return gm.is_admissible(np.moveaxis(u, 1, 0), self.gas, floors)

    def norm(self, du) -> float:
        return diag.solution_l2(du, self.mesh, self.ops)

    def limit_and_update(self, u_base, pair, dtau, c_tau, floors, resolution):
        theta = flux_limiter_theta(u_base, pair.rp, pair.r1, dtau, c_tau,
                                   self.mesh, self.gas, floors, resolution)
        th = theta.reshape((-1,) + (1,) * (u_base.ndim - 1))
        r_blend = th * pair.rp + (1.0 - th) * pair.r1
        jac = self.jac_field(u_base)
        return u_base + c_tau * (dtau / jac) * r_blend, theta

    def dtau_bounds(self, u_k, u_n, u_nm1, pair, dt, floors, scheme):
        """(dtau_fe, dtau_rho, dtau_ie) from the first-order residual."""
        rho_k = u_k[:, 0]
        dtau_fe = dtau_density_bound_fe(rho_k, pair.mass_diss_sums, self._jac)
        uk = np.moveaxis(u_k, 1, 0)
        un = np.moveaxis(u_n, 1, 0)
        r1 = np.moveaxis(pair.r1, 1, 0)
        jn = self._jac.reshape((-1,) + (1,) * (u_k.ndim - 2))
        if scheme == "bdf2":
            dtau_rho = dtau_density_bound_bdf2(rho_k, u_n[:, 0], u_nm1[:, 0],
                                               pair.mass_diss_sums, self._jac, dt)
            a, b, c = internal_energy_quadratic_bdf2(uk, un, np.moveaxis(u_nm1, 1, 0),
                                                     r1, dt, self.gas, jn)
        else:
            dtau_rho = dtau_density_bound_bdf1(rho_k, u_n[:, 0], pair.mass_diss_sums,
                                               self._jac, dt)
            a, b, c = internal_energy_quadratic_bdf1(uk, un, r1, dt, self.gas, jn)
        floor = floors[1] * rho_k
        dtau_ie = _min_positive(np.asarray(max_dtau_internal_energy(a, b, c, jn, floor)))
        return dtau_fe, dtau_rho, dtau_ie

    def stability_cap(self, u_k, pair, config) -> float:
        cfl = self.pseudo_cfl if self.pseudo_cfl is not None else config.pseudo_cfl
        return cfl * self.dtau_cfl(u_k, pair.mu_ad)


class CallableProblem:
    """Wraps a plain residual function for driver-level tests and model problems."""

    def __init__(self, residual_fn, norm=None):
        self._fn = residual_fn
        self._norm = norm or (lambda du: float(np.sqrt(np.mean(du**2))))

    def residual_pair(self, u, t):
        r = self._fn(u, t)

        class _Pair:
            r1 = r
            rp = r
            mu_ad = None
            mass_diss_sums = None
        return _Pair()

    def jac_field(self, u):
        return 1.0

    def admissible(self, u, floors) -> bool:
        return True

    def norm(self, du) -> float:
        return self._norm(du)

    def limit_and_update(self, u_base, pair, dtau, c_tau, floors, resolution):
        return u_base + c_tau * dtau * pair.r1, np.ones(1)

    def dtau_bounds(self, u_k, u_n, u_nm1, pair, dt, floors, scheme):
        return np.inf, np.inf, np.inf

    def stability_cap(self, u_k, pair, config) -> float:
        return np.inf


# ---------------------------------------------------------------------------
# drivers


@dataclass
class PseudoInfo:
    iterations: int = 0
    converged: bool = False
    eps_abs: float = np.inf
    eps_rel: float = np.inf
    dtau_last: float = 0.0
    dtau_first: float = 0.0
    halvings: int = 0
    theta_min: float = 1.0
    theta_mean: float = 1.0
    positivity_violations: int = 0
    history: list = field(default_factory=list)


def pseudo_converge(u_n, config: DualTimeConfig, scheme: str, problem, dt: float,
                    t_next: float = 0.0, u_nm1=None, dtau_cap=np.inf):
    """March the pseudotime ODE to steady state for one physical step.

    Returns (u_next, PseudoInfo); nonconvergence is reported via the info
    object, not raised.  scheme is "bdf1" or "bdf2" (BDF2 requires u_nm1).
    """
    if scheme not in ("bdf1", "bdf2"):
        raise DomainError(f"unknown scheme {scheme!r}")
    if scheme == "bdf2" and u_nm1 is None:
        raise DomainError("BDF2 requires the previous physical level")
    floors = config.floors
    u_k = np.array(u_n, dtype=float, copy=True)
    info = PseudoInfo()
    diff0 = None
    dtau0 = None
    stab = 1.0          # adaptive throttle on the stability cap
    recent = []

    for it in range(config.max_pseudo_iters):
        pair = problem.residual_pair(u_k, t_next)
        dtau_fe, dtau_rho, dtau_ie = problem.dtau_bounds(u_k, u_n, u_nm1, pair, dt,
                                                         floors, scheme)
        dtau = config.safety * min(config.kappa_tau * dtau_fe, dtau_rho, dtau_ie,
                                   stab * problem.stability_cap(u_k, pair, config),
                                   dtau_cap)
        if not np.isfinite(dtau):
            dtau = dt  # nothing constrains the step; pace it by the physical step
        theta = np.ones(1)
        for _ in range(config.max_halvings + 1):
            if scheme == "bdf2":
                c_tau = c2_tau(dt, dtau)
                base = bdf2_base_state(u_k, u_n, u_nm1, dt, dtau)
            else:
                c_tau = c1_tau(dt, dtau)
                base = bdf1_base_state(u_k, u_n, dt, dtau)
            try:
                u_next, theta = problem.limit_and_update(base, pair, dtau, c_tau,
                                                         floors,
                                                         config.theta_resolution)
                if problem.admissible(u_next, floors):
                    break
            except InvariantViolationError:
                pass
            info.halvings += 1
            dtau *= 0.5
        else:
            raise PositivityDeadlockError(
                f"positivity retry cascade exceeded {config.max_halvings} halvings")

        diff = problem.norm(u_next - u_k)
        if diff0 is None:
            diff0, dtau0 = diff, dtau
            info.dtau_first = dtau
        eps_abs = diff / dtau
        eps_rel = (diff / diff0) * (dtau0 / dtau) if diff0 > 0.0 else 0.0
        info.history.append((it, dtau, eps_abs, eps_rel))
        # throttle the stability cap when the iteration stops contracting
        recent.append(eps_abs)
        if len(recent) > 12:
            recent.pop(0)
        if len(recent) == 12 and eps_abs > 1.5 * min(recent) and stab > 1e-3:
            stab *= 0.6
            recent.clear()
        u_k = u_next
        info.iterations = it + 1
        info.eps_abs = eps_abs
        info.eps_rel = eps_rel
        info.dtau_last = dtau
        info.theta_min = float(np.min(theta))
        info.theta_mean = float(np.mean(theta))
        if eps_abs < config.eps_abs_tol or eps_rel < config.eps_rel_tol:
            info.converged = True
            break
    return u_k, info


def forward_euler_step(u, problem, config: DualTimeConfig, t: float = 0.0,
                       dt_max=np.inf):
    """One positivity-preserving explicit Euler step at the stable step size.

    Returns (u_next, dt_used, theta).  The step is
    safety*min(dtau_rho_FE, dtau_IE_FE, dt_max), with halving retries on
    floor violations.
    """
    floors = config.floors
    pair = problem.residual_pair(u, t)
    dtau_fe, _rho, dtau_ie = problem.dtau_bounds(u, u, u, pair, np.inf, floors, "bdf1")
    dt_used = config.safety * min(dtau_fe, dtau_ie,
                                  problem.stability_cap(u, pair, config), dt_max)
    if not np.isfinite(dt_used):
        raise DomainError("explicit step needs a finite bound or dt_max")
    for _ in range(config.max_halvings + 1):
        try:
            u_next, theta = problem.limit_and_update(u, pair, dt_used, 1.0, floors,
                                                     config.theta_resolution)
            if problem.admissible(u_next, floors):
                return u_next, dt_used, theta
        except InvariantViolationError:
            pass
        dt_used *= 0.5
    raise PositivityDeadlockError("explicit step could not satisfy the floors")


def ssprk3_step(u, problem, config: DualTimeConfig, t: float = 0.0, dt=None):
    """Three-stage Shu-Osher SSP Runge-Kutta step (convex combination of Euler steps)."""
    floors = config.floors
    if dt is None:
        pair = problem.residual_pair(u, t)
        dtau_fe, _r, dtau_ie = problem.dtau_bounds(u, u, u, pair, np.inf, floors, "bdf1")
        dt = config.safety * min(dtau_fe, dtau_ie,
                                 problem.stability_cap(u, pair, config))

    def euler(v, stage_t, h):
        pair = problem.residual_pair(v, stage_t)
        out, _theta = problem.limit_and_update(v, pair, h, 1.0, floors,
                                               config.theta_resolution)
        return out

    for _ in range(config.max_halvings + 1):
        u1 = euler(u, t, dt)
        if problem.admissible(u1, floors):
            u2 = 0.75 * u + 0.25 * euler(u1, t + dt, dt)
            if problem.admissible(u2, floors):
                u3 = (u + 2.0 * euler(u2, t + 0.5 * dt, dt)) / 3.0
                if problem.admissible(u3, floors):
                    return u3, dt
        dt *= 0.5
    raise PositivityDeadlockError("SSPRK3 step could not satisfy the floors")
