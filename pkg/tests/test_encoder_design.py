import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import q_mp
from zdjscc.decoder import mmse_table
from zdjscc.encoder_design import (CalibrationError, GridMapping, calibrate_lambda, default_grid,
                                   dop_onebit_design, linear_encoder, mapping_power, pam_encoder, prop1_mse_multiplier,
                                   prop1_encoder, prop1_values, symmetric_pam_thresholds)
from zdjscc.math_kernel import gaussian_expectation
from zdjscc.model import SourceSpec, make_link
from zdjscc.performance import DegeneratePowerError, dop_eval, dop_onebit_closed, mse_eval, mse_linear_closed

SRC = SourceSpec(1.0)


def test_default_grid():
    g = default_grid(SRC)
    assert g.size == 2001 and g[0] == -6.0 and g[-1] == 6.0 and g[1000] == 0.0


def test_grid_mapping_saturates_outside_grid():
    m = GridMapping(np.array([-1.0, 0.0, 1.0]), np.array([-2.0, 0.0, 3.0]))
    assert list(m(np.array([-5.0, 0.5, 5.0]))) == [-2.0, 1.5, 3.0]
    with pytest.raises(ValueError):
        GridMapping(np.array([0.0, 0.0]), np.array([1.0, 1.0]))


def test_prop1_zero_and_residual():
    lam = 0.3
    m = prop1_encoder(lam, SRC, 1.0)
    assert m(np.array([0.0]))[0] == 0.0
    f, v = m.f_values, m.v_grid
    resid = f * np.exp(f * f / 2) * math.sqrt(2 * math.pi) * lam - v
    assert np.max(np.abs(resid)) < 1e-12 * 100


def test_prop1_forward_point():
    # choose lambda so that v0 / (sqrt(2 pi) lambda) = e^0.5 at v0 = 1.3
    v0 = 1.3
    lam = v0 / (math.sqrt(2 * math.pi) * math.exp(0.5))
    assert abs(prop1_values(np.array([v0]), lam, 1.0)[0] - 1.0) < 1e-12


def test_prop1_large_lambda_is_linear():
    lam = 200.0
    m = prop1_encoder(lam, SRC, 1.0)
    lin = m.v_grid / (math.sqrt(2 * math.pi) * lam)
    assert np.max(np.abs(m.f_values)) < 0.05
    inner = m.v_grid != 0
    assert np.max(np.abs(m.f_values[inner] / lin[inner] - 1)) < 0.01


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-6, 1e3), st.floats(0.2, 5.0))
def test_prop1_odd_and_increasing(lam, sigma_w):
    v = default_grid(SRC)
    f = prop1_values(v, lam, sigma_w)
    assert np.max(np.abs(f + f[::-1])) < 1e-9
    assert np.all(np.diff(f) > 0)


def test_prop1_local_optimality_probe():
    link = make_link()
    lam, m = calibrate_lambda(lambda l: prop1_encoder(l, SRC, 1.0), 1.0)
    # the implicit equation is stationary for D + lam_mse * P with lam_mse = 2 v_hat lam
    lam = prop1_mse_multiplier(lam, mmse_table(m, link).v_hat[1])

    def lagr(mapping):
        t = mmse_table(mapping, link)
        return mse_eval(mapping, t, link).value + lam * mapping_power(mapping, 1.0)

    base = GridMapping(m.v_grid, m.f_values.copy()).with_power(1.0)
    L0 = lagr(base)
    rng = np.random.default_rng(3)
    for i in rng.choice(np.arange(300, 1700), 20, replace=False):
        for s in (1.01, 0.99):
            f = base.f_values.copy()
            f[i] *= s
            assert lagr(GridMapping(m.v_grid, f)) >= L0 - 1e-12


def test_calibrate_lambda_examples():
    lam, m = calibrate_lambda(lambda l: prop1_encoder(l, SRC, 1.0), 1.0)
    assert abs(m.mean_power - 1.0) < 1e-3
    again = prop1_encoder(lam, SRC, 1.0)
    assert again.mean_power == m.mean_power
    lam2, _ = calibrate_lambda(lambda l: prop1_encoder(l, SRC, 1.0), 2.0)
    assert lam2 < lam
    link = make_link()
    assert mse_eval(m, mmse_table(m, link), link).value <= mse_linear_closed(1.0) + 1e-9
    assert abs(mse_linear_closed(1.0) - (1 - 1 / math.pi)) < 1e-12


def test_calibrate_lambda_asserts_monotone():
    class Fake:
        def __init__(self, p):
            self.mean_power = p

    # power increasing in lambda violates the contract
    with pytest.raises(CalibrationError):
        calibrate_lambda(lambda l: Fake(l), 3.0)


def test_calibrate_lambda_bracket_failure():
    class Fake:
        mean_power = 0.5

    with pytest.raises(CalibrationError):
        calibrate_lambda(lambda l: Fake(), 1.0, max_doublings=5)


def test_linear_examples():
    m = linear_encoder(1.0, SRC)
    assert m(np.array([1.0]))[0] == 1.0
    m = linear_encoder(4.0, SRC)
    assert m(np.array([0.5]))[0] == 1.0
    m = linear_encoder(2.7, SRC)
    assert abs(mapping_power(m, 1.0) - 2.7) < 1e-9
    with pytest.raises(ValueError):
        linear_encoder(0.0, SRC)


def test_pam_examples():
    m, const = pam_encoder(2, [0.0], 1.0, SRC)
    assert np.allclose(const, [-1.0, 1.0])
    m, const = pam_encoder(2, [0.0], 3.0, SRC)
    assert np.allclose(const, [-math.sqrt(3), math.sqrt(3)])
    m, const = pam_encoder(3, [-0.4, 0.4], 1.0, SRC)
    assert const[1] == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.floats(0.01, 100))
def test_pam_power_exact(M, P):
    thr = symmetric_pam_thresholds(M)
    m, const = pam_encoder(M, thr, P, SRC)
    recomputed = gaussian_expectation(lambda v: m(v) ** 2, 1.0, points=thr)
    assert abs(recomputed - P) <= 1e-9 * P


def test_pam_degenerate_power():
    with pytest.raises(DegeneratePowerError):
        pam_encoder(3, [-40.0, 40.0], 1.0, SRC)


def test_dop_design_structure_and_reconstruction():
    D = 0.3
    for lam in (1e-3, 0.05, 1.0, 30.0):
        des = dop_onebit_design(lam, D, SRC, 1.0)
        assert set(des.mapping.values.tolist()) <= {0.0, des.u, -des.u}
        assert 0.0 <= des.a_star <= math.sqrt(D)
        assert des.v_hat[0] == pytest.approx(math.sqrt(D) - des.a_star)
        assert des.v_hat[1] == -des.v_hat[0]
        assert abs(des.u * math.exp(des.u**2 / 2) - 1 / (2 * math.sqrt(2 * math.pi) * lam)) < 1e-9 * max(1, des.u)


def test_dop_design_limits():
    D = 0.09
    big = dop_onebit_design(1e8, D, SRC, 1.0)
    assert abs(big.a_star - math.sqrt(D)) < 1e-6
    link = make_link()
    eps = dop_eval(big.mapping, big.table(), link, D).value
    assert abs(eps - 2 * q_mp(math.sqrt(D))) < 1e-6
    small = dop_onebit_design(1e-30, D, SRC, 1.0)
    assert small.a_star < 1e-6 and abs(small.v_hat[0] - math.sqrt(D)) < 1e-6
    eps = dop_eval(small.mapping, small.table(), link, D).value
    assert abs(eps - 2 * q_mp(2 * math.sqrt(D))) < 1e-6


def test_dop_design_beats_random_offsets():
    rng = np.random.default_rng(9)
    for lam, D in [(0.02, 0.09), (0.3, 0.3), (2.0, 0.5)]:
        des = dop_onebit_design(lam, D, SRC, 1.0)
        best = dop_onebit_closed(des.a_star, des.u, D, 1.0, 1.0, lam)
        for a in rng.uniform(0, math.sqrt(D), 50):
            assert best <= dop_onebit_closed(a, des.u, D, 1.0, 1.0, lam) + 1e-12


def test_dop_design_tiny_lambda_in_log_form():
    des = dop_onebit_design(None, 0.09, SRC, 1.0, log_lam=-1500.0)
    assert des.lam == 0.0 and des.u > 50
