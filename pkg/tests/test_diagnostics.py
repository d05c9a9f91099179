import json

import numpy as np
import pytest

from discrete_mfg.core import InvalidInput, copy_row
from discrete_mfg.costs import (PiOnlyCost, QuadraticRowCost, congestion, congestion_table,
                                constant_table, entropy_model, monotone_w, switching_costs,
                                theta_example)
from discrete_mfg.diagnostics import (assess, check_hp3, check_hp9, check_jacobian_simpleev,
                                      check_kav, estimate_gamma_hp8, estimate_gamma_hp10,
                                      estimate_K_hp11, estimate_spread_C, hp6_sum, hp9_holds,
                                      simpleev_matrix)

B3 = np.array([1.0, 2.0, 3.0])


def separable_models():
    a = switching_costs(3, 1.0)
    return [
        entropy_model(np.random.default_rng(0).uniform(0, 2, (3, 3)), 0.7),
        congestion(a, B3, 0.5),
        congestion(a, B3, 0.5, at="origin"),
        congestion(a, B3),
        monotone_w(a, 1.0),
        monotone_w(a, 1.0, 0.5),
        theta_example(),
        QuadraticRowCost(congestion_table(a, B3), 0.8),
    ]


# hp8

def test_hp8_monotone_w_alpha_one():
    est = estimate_gamma_hp8(monotone_w(switching_costs(3, 1.0), 1.0), 300, 0)
    assert est.ok and est.value >= 1.0 - 1e-9


def test_hp8_constant_model_fails():
    est = estimate_gamma_hp8(PiOnlyCost(constant_table(np.ones((3, 3)))), 200, 0)
    assert est.value == 0.0 and not est.ok


def test_hp8_origin_congestion_positive():
    est = estimate_gamma_hp8(congestion(switching_costs(3, 1.0), B3, 0.5, at="origin"), 300, 0)
    assert est.ok and est.value > 0
    assert set(est.worst) == {"pi", "pi_tilde", "V", "V_tilde", "ratio"}


def test_hp8_destination_congestion_is_not_monotone():
    # the pi-part of G then depends on V through the policy, and sampled pairs go negative
    est = estimate_gamma_hp8(congestion(switching_costs(3, 1.0), B3, 0.5), 300, 0)
    assert not est.ok and est.worst["ratio"] < 0


# hp9

def test_hp9_equality_cases():
    m = entropy_model(np.random.default_rng(1).normal(size=(3, 3)), 0.5)
    rng = np.random.default_rng(2)
    for _ in range(50):
        p, V = rng.dirichlet(np.ones(3)), rng.normal(size=3)
        assert hp9_holds(p, V, V, m, slack=0.0)
        assert hp9_holds(p, V, V + rng.normal() * 5, m)


@pytest.mark.parametrize("model", separable_models(), ids=lambda m: m.name)
def test_hp9_holds_on_separable_models(model):
    assert check_hp9(model, 300, 0)


def test_hp9_detects_violation(monkeypatch):
    import discrete_mfg.diagnostics as diag

    # G(V) = 2V breaks the argmax inequality
    monkeypatch.setattr(diag, "nash_step", lambda p, V, m: (2 * np.asarray(V), None, None))
    m = entropy_model(np.zeros((2, 2)), 1.0)
    assert not diag.hp9_holds([0.5, 0.5], np.array([1.0, 0.0]), np.zeros(2), m)


# hp3

def test_hp3_entropy_true_linear_false():
    assert check_hp3(entropy_model(np.zeros((3, 3)), 1.0), 20, 0)
    assert not check_hp3(PiOnlyCost(constant_table(np.ones((3, 3)))), 20, 0)


# hp10

def test_hp10_entropy_bounded_box_positive():
    est = estimate_gamma_hp10(entropy_model(np.zeros((2, 2)), 1.0), 300, 0, v_scale=1.0)
    assert est.ok and est.value > 0


def test_hp10_shift_pairs_skipped():
    # a tiny box makes every pair a near-constant shift, so nothing is usable
    m = entropy_model(np.zeros((2, 2)), 1.0)
    est = estimate_gamma_hp10(m, 1, 0, v_scale=1e-12)
    assert est.value == 0.0 and not est.ok and est.worst == {}


def test_hp10_linear_model_kav3_bound():
    # vertex policies give LHS <= 0 but no strict margin
    m = PiOnlyCost(constant_table(np.random.default_rng(3).uniform(size=(3, 3))))
    est = estimate_gamma_hp10(m, 200, 0)
    assert est.worst["ratio"] >= -1e-10
    assert check_kav(m, 200, 0)["kav3"]


# spread and hp6

def test_spread_entropy_symmetric_is_zero():
    est = estimate_spread_C(entropy_model(np.zeros((3, 3)), 0.8), 100, 0)
    assert est.value <= 1e-12


def test_spread_theta_at_zero_values():
    est = estimate_spread_C(theta_example(), 50, 0, v_scale=0.0)
    assert est.value == 0.0


@pytest.mark.parametrize("model", separable_models()[1:4], ids=lambda m: m.name)
def test_spread_below_hp6(model):
    est = estimate_spread_C(model, 200, 0)
    assert est.ok and est.value <= est.worst["hp6"] + 1e-9


def test_hp6_uses_row_replacement():
    m = congestion(switching_costs(3, 1.0), B3)
    P = np.random.default_rng(4).dirichlet(np.ones(3), size=3)
    assert hp6_sum(m, np.full(3, 1 / 3), P, 1, 1) == 0.0
    R = copy_row(P, 0, 2)
    assert np.array_equal(R[2], P[0]) and np.array_equal(R[:2], P[:2])


# hp11

def test_K_examples():
    assert estimate_K_hp11(PiOnlyCost(constant_table(np.ones((3, 3)))), 50, 0).value == 0.0
    assert estimate_K_hp11(congestion(np.zeros((3, 3)), B3), 50, 0).value == pytest.approx(3.0, abs=1e-14)
    assert estimate_K_hp11(entropy_model(np.ones((3, 3)), 0.5), 50, 0).value == 0.0


# simple zero eigenvalue

def test_simpleev_two_state_hand_values():
    J = simpleev_matrix([0.5, 0.5], 1.0)
    np.testing.assert_allclose(J, [[-0.25, 0.25], [0.25, -0.25]], atol=1e-15)
    ok, info = check_jacobian_simpleev([0.5, 0.5], 1.0, return_details=True)
    assert ok
    np.testing.assert_allclose(np.sort(info["eigenvalues"]), [-0.5, 0.0], atol=1e-15)


@pytest.mark.parametrize("d,eps", [(3, 1.0), (5, 0.5), (8, 2.0)])
def test_simpleev_uniform_spectrum(d, eps):
    ok, info = check_jacobian_simpleev(np.full(d, 1 / d), eps, return_details=True)
    ev = np.sort(info["eigenvalues"])
    assert ok
    np.testing.assert_allclose(ev[:-1], -1 / (eps * d), rtol=1e-12)
    assert abs(ev[-1]) <= 1e-14


@pytest.mark.parametrize("p", [[1.0, 0.0, 0.0], [0.5, 0.5 + 1e-12, -1e-12], [0.3, 0.3]])
def test_simpleev_rejects_boundary(p):
    with pytest.raises(InvalidInput):
        check_jacobian_simpleev(p, 1.0)


# report, determinism, monotonicity

def test_estimators_deterministic_and_monotone():
    m = congestion(switching_costs(3, 1.0), B3, 0.5, at="origin")
    a = estimate_gamma_hp8(m, 100, 7)
    assert a == estimate_gamma_hp8(m, 100, 7)
    assert estimate_gamma_hp8(m, 200, 7).value <= a.value
    assert estimate_gamma_hp10(m, 200, 7, v_scale=1.0).value <= estimate_gamma_hp10(m, 100, 7, v_scale=1.0).value
    assert estimate_spread_C(m, 200, 7).value >= estimate_spread_C(m, 100, 7).value
    assert estimate_K_hp11(m, 200, 7).value >= estimate_K_hp11(m, 100, 7).value


@pytest.mark.parametrize("model", separable_models(), ids=lambda m: m.name)
def test_kav3_on_separable_models(model):
    assert check_kav(model, 200, 0)["kav3"]


def test_assess_report_round_trip_and_table():
    m = congestion(switching_costs(3, 1.0), B3, 0.5, at="origin")
    r = assess(m, 100, 0)
    assert r == assess(m, 100, 0)
    rec = json.loads(r.to_json())
    assert rec["C_est"] == pytest.approx(1 / min(r.gamma_hp8, r.gamma_hp10))
    assert rec["hp9_ok"] and rec["kav_ok"] and rec["hp3_ok"]
    assert rec["gamma_hp8"] >= 0 and rec["gamma_hp10"] >= 0
    assert "C_est" in r.table()


def test_assess_constant_model_has_infinite_C():
    r = assess(PiOnlyCost(constant_table(np.ones((2, 2)))), 50, 0)
    assert r.C_est == np.inf and r.to_dict()["C_est"] is None
