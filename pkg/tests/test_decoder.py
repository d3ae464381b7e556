import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import q_mp
from zdjscc.decoder import (DecoderTable, collapse_equal_noise, dop_table, mmse_table, transition_matrix,
                            transition_prob)
from zdjscc.encoder_design import GridMapping, default_grid, linear_encoder, pam_encoder, prop1_encoder
from zdjscc.model import SourceSpec, make_link, uniform_midtread_quantizer
from zdjscc.performance import dop_eval, mse_eval

SRC = SourceSpec()


def zero_map():
    g = default_grid(SRC)
    return GridMapping(g, np.zeros(g.size))


def test_table_validation():
    with pytest.raises(ValueError):
        DecoderTable([0.0, np.nan])
    with pytest.raises(ValueError):
        DecoderTable([0.0], "dop")
    t = DecoderTable([-1.0, 2.0])
    assert t.decode(2) == 2.0 and list(t.decode(np.array([1, 2, 2]))) == [-1.0, 2.0, 2.0]


def test_transition_examples():
    link = make_link()
    m = zero_map()
    assert transition_prob(0.3, 1, m, link) == pytest.approx(0.5)
    big = linear_encoder(1e6, SRC)
    assert transition_prob(1.0, 2, big, link) > 1 - 1e-12
    l2 = make_link(noise_sigmas=(1.0, 1.0))
    assert np.allclose(transition_matrix([0.4], m, l2), 0.25)
    with pytest.raises(ValueError):
        transition_prob(0.0, 3, m, link)


def test_transition_against_q_oracle():
    l2 = make_link(noise_sigmas=(1.0, 0.5))
    m = linear_encoder(1.0, SRC)
    v = 0.7
    # outcome 2 of N=2 has bits (1, 0): branch 1 negative, branch 2 non-negative
    ref = q_mp(v / 1.0) * (1 - q_mp(v / 0.5))
    assert transition_prob(v, 2, m, l2) == pytest.approx(ref, rel=1e-12)
    l4 = make_link(quantizer=uniform_midtread_quantizer(4, 1.0))
    f = 0.3
    ref = q_mp(0 - f) - q_mp(1 - f)
    assert transition_prob(f, 3, linear_encoder(1.0, SRC), l4) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-6, 6), st.sampled_from([(1.0,), (1.0, 0.3), (0.5, 1.0, 2.0)]))
def test_rows_sum_to_one(v, sig):
    link = make_link(noise_sigmas=sig)
    m = linear_encoder(3.0, SRC)
    assert abs(transition_matrix([v], m, link).sum() - 1.0) < 1e-12


def test_mmse_examples():
    link = make_link()
    t = mmse_table(linear_encoder(1e8, SRC), link)
    assert np.allclose(t.v_hat, [-math.sqrt(2 / math.pi), math.sqrt(2 / math.pi)], atol=1e-4)
    assert np.all(np.abs(mmse_table(zero_map(), link).v_hat) < 1e-14)
    t = mmse_table(prop1_encoder(0.2, SRC, 1.0), link)
    assert t.v_hat[0] == pytest.approx(-t.v_hat[1], abs=1e-13)


def test_mmse_empty_cell_is_zero():
    link = make_link(quantizer=uniform_midtread_quantizer(4, 40.0))
    t = mmse_table(linear_encoder(0.01, SRC), link)
    assert t.v_hat[0] == 0.0 and t.v_hat[3] == 0.0


def test_mmse_table_perturbation():
    for link in (make_link(quantizer=uniform_midtread_quantizer(4, 0.8)), make_link(noise_sigmas=(1.0, 0.6))):
        m = linear_encoder(2.0, SRC)
        t = mmse_table(m, link)
        base = mse_eval(m, t, link).value
        for j in range(len(t)):
            for s in (1.01, 0.99):
                vh = t.v_hat.copy()
                vh[j] *= s
                assert mse_eval(m, DecoderTable(vh), link).value >= base - 1e-13


def test_mmse_antisymmetric_under_bit_complement():
    link = make_link(noise_sigmas=(1.0, 0.7, 1.4))
    t = mmse_table(linear_encoder(1.5, SRC), link)
    J = len(t)
    # complementing every bit maps j to J + 1 - j
    assert np.allclose(t.v_hat, -t.v_hat[::-1], atol=1e-12)
    assert J == 8


def test_dop_examples():
    link = make_link()
    D = 0.09
    assert np.all(dop_table(zero_map(), link, D).v_hat == 0.0)
    bpsk, _ = pam_encoder(2, [0.0], 1e4, SRC)
    t = dop_table(bpsk, link, D)
    assert np.allclose(t.v_hat, [-math.sqrt(D), math.sqrt(D)], atol=1e-6)


def test_dop_two_branch_high_snr_points():
    D = 0.09
    r = math.sqrt(D)
    link = make_link(noise_sigmas=(1.0, 1.0))
    # three-level digital map: mixed outcomes only come from the middle
    m, _ = pam_encoder(3, [-r, r], 1e4, SRC)
    t = dop_table(m, link, D)
    assert t.v_hat[0] == pytest.approx(-2 * r, abs=1e-6)
    assert t.v_hat[3] == pytest.approx(2 * r, abs=1e-6)
    assert abs(t.v_hat[1]) < 1e-6 and abs(t.v_hat[2]) < 1e-6


def test_dop_table_perturbation():
    D = 0.3
    for link in (make_link(), make_link(quantizer=uniform_midtread_quantizer(4, 1.0))):
        m = linear_encoder(3.0, SRC)
        t = dop_table(m, link, D)
        base = dop_eval(m, t, link, D).value
        for j in range(len(t)):
            for s in (-1, 1):
                vh = t.v_hat.copy()
                vh[j] += s * 0.05 * math.sqrt(D)
                assert dop_eval(m, DecoderTable(vh, "dop", D), link, D).value >= base - 1e-12


def test_dop_scan_resolution_is_enough():
    link = make_link(quantizer=uniform_midtread_quantizer(4, 0.7))
    m = linear_encoder(2.0, SRC)
    D = 0.2
    coarse = dop_eval(m, dop_table(m, link, D), link, D).value
    fine = dop_eval(m, dop_table(m, link, D, per_sigma=1600), link, D).value
    assert abs(coarse - fine) < 1e-4


def test_collapse_examples():
    for N, distinct in ((1, 2), (2, 3), (3, 4)):
        link = make_link(noise_sigmas=(1.0,) * N)
        rep = collapse_equal_noise(mmse_table(linear_encoder(1.0, SRC), link), N)
        assert rep.ok and rep.n_distinct == distinct and rep.values.size == N + 1
    l2 = make_link(noise_sigmas=(1.0, 1.0))
    t = mmse_table(linear_encoder(1.0, SRC), l2)
    assert t.v_hat[1] == pytest.approx(t.v_hat[2], abs=1e-12)


def test_collapse_flags_unequal_noise():
    link = make_link(noise_sigmas=(1.0, 0.3))
    rep = collapse_equal_noise(mmse_table(linear_encoder(1.0, SRC), link), 2)
    assert not rep.ok
    with pytest.raises(AssertionError):
        rep.raise_if_violated()


def test_table_csv(tmp_path):
    link = make_link(noise_sigmas=(1.0, 1.0))
    t = mmse_table(linear_encoder(1.0, SRC), link)
    p = tmp_path / "t.csv"
    t.to_csv(p, link)
    lines = p.read_text().splitlines()
    assert lines[0] == "j,symbol,v_hat" and lines[1].startswith("1,11,")
