import numpy as np
import pytest

import esflow.gas as gm
from esflow.gas import DomainError, GasParameters, InadmissibleStateError, log_mean

GAS = GasParameters(gamma=1.4, mach=2.5, reynolds=10.0)


def random_states(n, dim=3, seed=0, gas=GAS):
    rng = np.random.default_rng(seed)
    rho = rng.uniform(0.1, 3.0, n)
    t = rng.uniform(0.2, 4.0, n)
    v = rng.uniform(-2.0, 2.0, (dim, n))
    return gm.conservative(rho, v, t, gas)


def test_rest_state_primitives():
    # rho = 1, T = 1 at rest: rho*E = T/gamma
    u = np.array([1.0, 0.0, 0.0, 0.0, 1.0 / GAS.gamma])
    rho, v, p, t, e = gm.primitives(u, GAS)
    assert abs(p - 1.0) < 1e-15 and abs(t - 1.0) < 1e-15
    assert np.max(np.abs(v)) == 0.0


def test_pressure_is_rho_t():
    u = gm.conservative(np.array(2.0), np.zeros((3,)), np.array(1.0), GAS)
    _rho, _v, p, _t, _e = gm.primitives(u, GAS)
    assert abs(p - 2.0) < 1e-14


def test_roundtrip_oracle():
    u = random_states(2000)
    rho, v, _p, t, _e = gm.primitives(u, GAS)
    u2 = gm.conservative(rho, v, t, GAS)
    assert np.max(np.abs(u2 - u)) < 1e-13 * np.max(np.abs(u))


def test_primitives_of_admissible_are_positive():
    _rho, _v, p, t, _e = gm.primitives(random_states(5000, seed=3), GAS)
    assert np.all(p > 0) and np.all(t > 0)


def test_inadmissible_raises_with_location():
    u = random_states(5)
    u[0, 2] = -1.0
    with pytest.raises(InadmissibleStateError) as err:
        gm.primitives(u, GAS)
    assert err.value.where is not None


def test_entropy_variable_velocity_mirror():
    rho, t = np.array(1.2), np.array(0.8)
    v = np.array([0.5, -0.3, 1.1])
    wp = gm.entropy_variables(gm.conservative(rho, v, t, GAS), GAS)
    wm = gm.entropy_variables(gm.conservative(rho, -v, t, GAS), GAS)
    assert np.allclose(wp[1:-1], -wm[1:-1], atol=1e-14)
    assert abs(wp[0] - wm[0]) < 1e-14 and abs(wp[-1] - wm[-1]) < 1e-14


def test_entropy_variables_fd_oracle():
    # w.(dU/dt) reproduces dS/dt along a smooth one-parameter family at O(h^2)
    def u_of(s):
        rho = np.array(1.0 + 0.3 * np.sin(s))
        v = np.array([0.4 * s, -0.2 * np.cos(s), 0.1])
        t = np.array(1.0 + 0.2 * s**2)
        return gm.conservative(rho, v, t, GAS)

    s0 = 0.37
    errs = []
    for h in (1e-3, 5e-4):
        du = (u_of(s0 + h) - u_of(s0 - h)) / (2 * h)
        ds = (gm.entropy_function(u_of(s0 + h), GAS)
              - gm.entropy_function(u_of(s0 - h), GAS)) / (2 * h)
        w = gm.entropy_variables(u_of(s0), GAS)
        errs.append(abs(float(np.sum(w * du)) - float(ds)))
    assert errs[0] < 1e-5
    assert errs[1] < errs[0] / 2.0


def test_entropy_variables_deterministic():
    u = np.array([1.0, 0.0, 0.0, 0.0, 1.0 / GAS.gamma])
    w1 = gm.entropy_variables(u, GAS)
    w2 = gm.entropy_variables(u.copy(), GAS)
    assert np.array_equal(w1, w2)
    assert np.all(np.isfinite(w1))


def test_entropy_convexity_probe():
    rng = np.random.default_rng(5)
    u1 = random_states(400, seed=8)
    u2 = random_states(400, seed=9)
    lam = rng.uniform(0.05, 0.95, 400)
    blend = lam * u1 + (1 - lam) * u2
    ok = (blend[0] > 0) & (gm.internal_energy_density(blend, GAS) > 0)
    s_blend = gm.entropy_function(blend[:, ok], GAS)
    s_mix = (lam[ok] * gm.entropy_function(u1[:, ok], GAS)
             + (1 - lam[ok]) * gm.entropy_function(u2[:, ok], GAS))
    assert np.all(s_blend <= s_mix + 1e-12)


def test_is_admissible():
    floors = (1e-13, 1e-13)
    u = gm.conservative(np.array(1.0), np.zeros((3,)), np.array(1.0), GAS)
    assert gm.is_admissible(u, GAS, floors)
    bad = u.copy()
    bad[0] = 1e-14
    assert not gm.is_admissible(bad, GAS, floors)
    # boundary of the admissible set: rho*e exactly zero
    edge = np.array([1.0, 2.0, 0.0, 0.0, GAS.alpha * 2.0])  # rhoE = alpha*|m|^2/(2 rho)
    assert gm.internal_energy_density(edge, GAS) == 0.0
    assert not gm.is_admissible(edge, GAS, floors)


def test_log_mean_basic():
    assert log_mean(2.5, 2.5) == 2.5
    assert abs(log_mean(1.0, np.e) - (np.e - 1.0)) < 1e-14
    # series branch: high-precision limit value is 1 + 5e-13
    assert abs(log_mean(1.0, 1.0 + 1e-12) - (1.0 + 5e-13)) < 1e-15


def test_log_mean_properties():
    rng = np.random.default_rng(2)
    a = rng.uniform(0.01, 10.0, 1000)
    b = rng.uniform(0.01, 10.0, 1000)
    lm = log_mean(a, b)
    assert np.allclose(lm, log_mean(b, a), rtol=1e-14)
    assert np.all(lm >= np.minimum(a, b) - 1e-14)
    assert np.all(lm <= np.maximum(a, b) + 1e-14)
    with pytest.raises(DomainError):
        log_mean(-1.0, 2.0)


def test_entropy_potential_identity():
    # psi_d = w.F_d - Fs_d, with F the consistent scaled flux
    from esflow.fluxes import euler_flux
    u = random_states(200, seed=12)
    w = gm.entropy_variables(u, GAS)
    for d in range(3):
        psi = np.sum(w * euler_flux(u, d, GAS), axis=0) - gm.entropy_flux(u, d, GAS)
        assert np.max(np.abs(psi - gm.entropy_potential(u, d, GAS))) < 1e-11


def test_entropy_variable_inverse():
    u = random_states(300, seed=20)
    w = gm.entropy_variables(u, GAS)
    rho, v, t = gm.primitives_from_entropy_variables(w, GAS)
    u2 = gm.conservative(rho, v, t, GAS)
    assert np.max(np.abs(u2 - u)) < 1e-10


def test_gas_parameter_validation():
    with pytest.raises(DomainError):
        GasParameters(gamma=1.0)
    with pytest.raises(DomainError):
        GasParameters(c_rho=0.0)
    g = GasParameters(gamma=1.4, c_rho=0.9)
    assert abs(g.c_temp - 0.9 / 0.4) < 1e-15
    gp = GasParameters(viscosity_law="power")
    assert abs(gp.viscosity(4.0) - 4.0**0.7) < 1e-14
