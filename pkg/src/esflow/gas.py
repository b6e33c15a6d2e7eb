"""Thermodynamics, variable conversions, entropy quantities, and admissibility.

Nondimensional convention (freestream reference values): p = rho*T, specific
total energy E = T/gamma + E_k with E_k = (gamma-1)*Minf^2 * |v|^2 / 2.  The
kinetic scale alpha = (gamma-1)*Minf^2 shows up throughout; internal energy
density is rho*e = rho*E - alpha*|m|^2/(2*rho) and p = gamma*rho*e.  The sound
speed is sqrt(T)/Minf in velocity units.

Conservative arrays are component-first: U has shape (2+dim, ...) with
components [rho, m_1..m_dim, rho*E].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InadmissibleStateError(ValueError):
    """A state left the set {rho > 0, rho*e > 0}; carries the offending location."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class GasParameters:
    gamma: float = 1.4
    mach: float = 1.0
    reynolds: float = 100.0
    prandtl: float = 0.72
    viscosity_law: str = "constant"   # "constant" or "power"
    viscosity_exponent: float = 0.7
    c_rho: float = 0.9
    c_temp: float = None  # defaults to c_rho/(gamma-1)

    def __post_init__(self):
        if self.gamma <= 1.0:
            raise DomainError("gamma must exceed 1")
        if self.mach <= 0 or self.reynolds <= 0 or self.prandtl <= 0:
            raise DomainError("mach, reynolds, prandtl must be positive")
        if not 0.0 < self.c_rho <= 1.0:
            raise DomainError("c_rho must lie in (0, 1]")
        if self.c_temp is None:
            object.__setattr__(self, "c_temp", self.c_rho / (self.gamma - 1.0))

    @property
    def alpha(self) -> float:
        """Kinetic-energy scale (gamma-1)*Minf^2."""
        return (self.gamma - 1.0) * self.mach**2

    def viscosity(self, temperature):
        """Nondimensional dynamic viscosity mu(T)."""
        if self.viscosity_law == "constant":
            return np.ones_like(np.asarray(temperature, dtype=float))
        return np.asarray(temperature, dtype=float) ** self.viscosity_exponent


def n_components(dim: int) -> int:
    return dim + 2


def internal_energy_density(u: np.ndarray, gas: GasParameters) -> np.ndarray:
    """rho*e = rho*E - alpha*|m|^2/(2 rho)."""
    rho = u[0]
    m2 = np.sum(u[1:-1] ** 2, axis=0)
    return u[-1] - 0.5 * gas.alpha * m2 / rho


def is_admissible(u: np.ndarray, gas: GasParameters, floors=(0.0, 0.0)) -> bool:
    """True iff rho >= eps_rho and rho*e >= eps_ie at every point."""
    eps_rho, eps_ie = floors
    rho = u[0]
    if np.any(rho < eps_rho) or not np.all(np.isfinite(rho)):
        return False
    return bool(np.all(internal_energy_density(u, gas) >= eps_ie))


def _check_admissible(u: np.ndarray, gas: GasParameters):
    rho = u[0]
    rhoe = internal_energy_density(u, gas)
    bad = (rho <= 0.0) | (rhoe <= 0.0)
    if np.any(bad):
        where = np.argwhere(bad)
        raise InadmissibleStateError(
            f"inadmissible state at {where[0].tolist()} "
            f"(rho={np.min(rho):.3e}, rho*e={np.min(rhoe):.3e})",
            where=where,
        )


def primitives(u: np.ndarray, gas: GasParameters, check: bool = True):
    """(rho, v, p, T, e) from conservative variables.

    v has shape (dim, ...); T = gamma*e and p = rho*T under the nondimensional
    convention in the module docstring.
    """
    if check:
        _check_admissible(u, gas)
    rho = u[0]
    v = u[1:-1] / rho
    e = internal_energy_density(u, gas) / rho
    t = gas.gamma * e
    p = rho * t
    return rho, v, p, t, e


def conservative(rho, v, t, gas: GasParameters) -> np.ndarray:
    """Conservative variables from (rho, v, T); v is (dim, ...)."""
    rho = np.asarray(rho, dtype=float)
    v = np.asarray(v, dtype=float)
    e_total = t / gas.gamma + 0.5 * gas.alpha * np.sum(v**2, axis=0)
    return np.concatenate((rho[None], rho * v, (rho * e_total)[None]), axis=0)


def thermodynamic_entropy(u: np.ndarray, gas: GasParameters) -> np.ndarray:
    """s = ln(p) - gamma*ln(rho), additive constant fixed to zero."""
    rho, _v, p, _t, _e = primitives(u, gas, check=False)
    return np.log(p) - gas.gamma * np.log(rho)


def entropy_function(u: np.ndarray, gas: GasParameters) -> np.ndarray:
    """Convex entropy S = -rho*s."""
    return -u[0] * thermodynamic_entropy(u, gas)


def entropy_variables(u: np.ndarray, gas: GasParameters, check: bool = True) -> np.ndarray:
    """w = dS/dU for S = -rho*s.

    w = [gamma - s - (gamma*alpha/2)|v|^2/T, gamma*alpha*v/T, -gamma/T].
    """
    if check:
        _check_admissible(u, gas)
    rho, v, p, t, _e = primitives(u, gas, check=False)
    s = np.log(p) - gas.gamma * np.log(rho)
    g, a = gas.gamma, gas.alpha
    w0 = g - s - 0.5 * g * a * np.sum(v**2, axis=0) / t
    wm = g * a * v / t
    wlast = -g / t
    return np.concatenate((w0[None], wm, wlast[None]), axis=0)


def entropy_potential(u: np.ndarray, direction: int, gas: GasParameters) -> np.ndarray:
    """psi_d = w.F_d - Fs_d = (gamma-1)*rho*v_d."""
    rho = u[0]
    vd = u[1 + direction] / rho
    return (gas.gamma - 1.0) * rho * vd


def entropy_flux(u: np.ndarray, direction: int, gas: GasParameters) -> np.ndarray:
    """Entropy flux Fs_d = -rho*s*v_d."""
    rho = u[0]
    vd = u[1 + direction] / rho
    return -rho * thermodynamic_entropy(u, gas) * vd


def log_mean(a, b):
    """Logarithmic mean (a-b)/(ln a - ln b), series-expanded near a = b.

    With z = (a-b)/(a+b), ln(a/b) = 2*atanh(z) = 2z(1 + z^2/3 + z^4/5 + ...),
    so the mean is (a+b)/2 / (1 + z^2/3 + z^4/5 + z^6/7) for small z.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0.0) or np.any(b <= 0.0):
        raise DomainError("log_mean requires positive arguments")
    z = (a - b) / (a + b)
    z2 = z * z
    series = 1.0 + z2 * (1.0 / 3.0 + z2 * (1.0 / 5.0 + z2 / 7.0))
    small = np.abs(z) < 1e-4
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = np.where(small, 1.0, (a - b) / np.log(np.where(small, 2.0, a / b)))
    out = np.where(small, 0.5 * (a + b) / series, exact)
    if out.ndim == 0:
        return float(out)
    return out


def sound_speed(t, gas: GasParameters):
    """a = sqrt(T)/Minf in nondimensional velocity units."""
    return np.sqrt(t) / gas.mach


def primitives_from_entropy_variables(w: np.ndarray, gas: GasParameters):
    """(rho, v, T) from entropy variables; inverse of entropy_variables."""
    g, a = gas.gamma, gas.alpha
    t = -g / w[-1]
    v = w[1:-1] * t / (g * a)
    s = g - w[0] - 0.5 * g * a * np.sum(v**2, axis=0) / t
    rho = np.exp((np.log(t) - s) / (g - 1.0))
    return rho, v, t
