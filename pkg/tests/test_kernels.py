import numpy as np
import pytest

from zdjscc import kernels

pytestmark = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(1)
    f = np.concatenate([rng.normal(0, 3, 500), [0.0, 40.0, -40.0]])
    sig = np.array([1.0, 0.6, 1.7])
    signs = np.array([[1.0 if (7 - j) >> (2 - k) & 1 else -1.0 for k in range(3)] for j in range(8)])
    return f, sig, signs, rng


def test_klevel_probs_agree(data):
    f = data[0]
    edges = np.array([-np.inf, -1.5, -0.5, 0.0, 0.5, 1.5, np.inf])
    a = kernels.klevel_probs_np(f, edges, 0.8)
    b = kernels.klevel_probs_nb(f, edges, 0.8)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-300)
    assert np.allclose(kernels.klevel_dprobs_np(f, edges, 0.8), kernels.klevel_dprobs_nb(f, edges, 0.8),
                       rtol=1e-12, atol=1e-300)


def test_onebit_probs_agree(data):
    f, sig, signs, _ = data
    assert np.allclose(kernels.onebit_probs_np(f, sig, signs), kernels.onebit_probs_nb(f, sig, signs),
                       rtol=1e-13, atol=1e-300)
    assert np.allclose(kernels.onebit_dprobs_np(f, sig, signs), kernels.onebit_dprobs_nb(f, sig, signs),
                       rtol=1e-12, atol=1e-300)


def test_rows_sum_to_one(data):
    f, sig, signs, _ = data
    for P in (kernels.onebit_probs_nb(f, sig, signs), kernels.onebit_probs_np(f, sig, signs)):
        assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_root_agree(data):
    log_c = np.concatenate([data[3].normal(0, 30, 300), [-700.0, 0.5, 700.0, 5000.0]])
    a = kernels.exp_growth_root_np(log_c, 1.3)
    b = kernels.exp_growth_root_nb(log_c, 1.3)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-300)


def test_outcomes_agree(data):
    rng = data[3]
    z = rng.normal(0, 1, (400, 3))
    z[0] = 0.0
    assert np.array_equal(kernels.onebit_outcome_np(z), kernels.onebit_outcome_nb(z))
    thr = np.array([-1.0, 0.0, 1.0])
    zz = np.concatenate([z[:, 0] * 2, thr])
    assert np.array_equal(kernels.klevel_outcome_np(zz, thr), kernels.klevel_outcome_nb(zz, thr))


def test_backend_flag_switches_dispatch_with_same_answer():
    import subprocess
    import sys
    import os

    code = ("from zdjscc import kernels; from zdjscc.model import make_link;"
            "from zdjscc.encoder_design import linear_encoder; from zdjscc.decoder import mmse_table;"
            "from zdjscc.performance import mse_eval; l = make_link(noise_sigmas=(1.0, 0.5));"
            "m = linear_encoder(2.0, l.source); print(kernels.backend_name(), repr(mse_eval(m, mmse_table(m, l), l).value))")
    out = {}
    for flag in ("0", "1"):
        res = subprocess.run([sys.executable, "-c", code], env={**os.environ, "ZDJSCC_NO_NUMBA": flag},
                             capture_output=True, text=True, check=True)
        name, val = res.stdout.split()
        out[name] = float(val)
    assert set(out) == {"numba", "numpy"}
    assert abs(out["numba"] - out["numpy"]) < 1e-12
