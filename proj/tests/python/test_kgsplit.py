import math
import os

import numpy as np
import pytest

import kgsplit as kg

PRESETS = os.path.join(os.path.dirname(__file__), "..", "..", "presets")


def small_config(**kw):
    c = kg.Config.parse("K = 16\nrho = 2\ng = monomial:3:1\nh = 0.05\nT = 1\neps = 0.3\nmodes = 0,1\n")
    for k, v in kw.items():
        setattr(c, k, v)
    return c


def test_config_round_trip():
    c = small_config()
    assert kg.Config.parse(c.serialize()) == c
    assert c.n_steps == 20
    assert c.g == "monomial:3:1"
    with pytest.raises(kg.ConfigError):
        kg.Config.parse("bogus = 1\n")
    with pytest.raises(kg.ConfigError):
        c.scheme = "euler"
    for name in os.listdir(PRESETS):
        p = kg.Config.load(os.path.join(PRESETS, name))
        assert kg.Config.parse(p.serialize()) == p


def test_mode_transform_round_trip():
    rng = np.random.default_rng(1)
    q, p = rng.standard_normal(16), rng.standard_normal(16)
    u = kg.to_modes(q, p, 2.0)
    assert u.dtype == np.complex128 and u.shape == (16,)
    q2, p2 = kg.from_modes(u, 2.0)
    assert np.allclose(q, q2, atol=1e-13) and np.allclose(p, p2, atol=1e-13)
    assert kg.mode_numbers(4) == [-2, -1, 0, 1]


def test_linear_flow_is_exact():
    c = small_config(g="zero")
    u = kg.random_unit_state(16, 3)
    v = kg.step(u, c, 100)
    ks = kg.mode_numbers(16)
    omega = np.sqrt(2.0 + np.array(ks, dtype=float) ** 2)
    assert np.allclose(v, u * np.exp(-1j * omega * 100 * c.h), atol=1e-13)


def test_strang_matches_composition():
    c = small_config(scheme="strang")
    u = 0.3 * kg.random_unit_state(16, 5)
    half = kg.flow_V(u, c.h / 2, c)
    ref = kg.flow_V(kg.flow_T(half, c.h, c), c.h / 2, c)
    assert np.allclose(kg.step(u, c), ref, atol=1e-15)


def test_run_and_determinism():
    c = small_config()
    a, b = kg.run(c), kg.run(c)
    assert a["csv"] == b["csv"]
    assert a["J"].shape == (21, 2)
    assert a["csv"].splitlines()[0] == "step,time,H,Hh,norm_h12,norm_h1,J_0,J_1"
    assert a["summary"]["max_energy_drift"] < 1e-3
    u0 = kg.initial_state(c)
    assert kg.super_action(u0, 1) == pytest.approx(a["J"][0, 1], rel=1e-14)


def test_polynomials():
    K = 8
    T = kg.quadratic_T(K, 1.0)
    J1 = kg.super_action_poly(K, 1)
    assert T.bracket(J1).is_zero()
    P = kg.random_polynomial(K, 3, 1, 0.3)
    X = kg.random_polynomial(K, 3, 2, 0.3)
    u = 0.5 * kg.random_unit_state(K, 7)
    gp, gx = P.gradient(u), X.gradient(u)
    pairing = np.sum(np.real(1j * gp * np.conj(gx)))
    assert P.bracket(X)(u) == pytest.approx(pairing, abs=1e-12)
    assert kg.Poly.deserialize(P.serialize())(u) == pytest.approx(P(u), rel=1e-15)
    assert (2.0 * P - P - P).h_norm() == pytest.approx(0.0, abs=1e-15)


def test_taylor_reproduces_quartic_potential():
    c = kg.Config.parse("K = 8\nrho = 1\ng = monomial:2:1 + monomial:3:1\nh = 0.2\n")
    u = 0.1 * kg.random_unit_state(8, 11)
    P1, P2 = kg.taylor_of_V(1, c), kg.taylor_of_V(2, c)
    assert (P1.degree, P2.degree) == (3, 4)
    V = kg.hamiltonian(u, c) - kg.hamiltonian(u, small_config(K=8, rho=1.0, g="zero", h=0.2))
    assert P1(u) + P2(u) == pytest.approx(V, rel=1e-12)


def test_scaling_study_exponent():
    c = kg.Config.parse("K = 8\nrho = 1\ng = monomial:2:1 + monomial:3:1\nh = 0.2\nscheme = lie\nr = 1\n")
    res = kg.scaling_study(c, "bea_defect_lie", [0.1, 0.05, 0.025])
    assert res["expected"] == 3.0
    assert abs(res["exponents"][0] - 3.0) < 0.7
    with pytest.raises(kg.ConfigError):
        kg.scaling_study(c, "speed", [0.1, 0.05, 0.025])


def test_birkhoff_and_divisors():
    value, witness = kg.min_small_divisor(8, 1.0, 0)
    assert value == pytest.approx(math.sqrt(2.0) - 1.0, rel=1e-14)
    assert len(witness) == 2
    c = kg.Config.parse("K = 8\nrho = 1\ng = monomial:2:1\nh = 0.1\nr = 2\nmodes = 0,1,2\n")
    out = kg.birkhoff(c)
    assert out["gamma"] > 0
    assert all(out["commutes"])
    assert out["self_check"] < 1e-12
    assert [q.degree for q in out["Q"]] == [3, 4]


def test_errors_are_typed():
    c = small_config()
    with pytest.raises(kg.SizeError):
        kg.step(np.zeros(8, dtype=complex), c)
    assert issubclass(kg.BlowUpError, kg.NumericalError)
    assert issubclass(kg.NumericalError, kg.Error)
    with pytest.raises(kg.IoError):
        kg.Config.load("/nonexistent/x.cfg")
