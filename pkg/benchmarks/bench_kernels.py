"""Time the numba kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [n]

Also runs one end-to-end NOE solve under each backend (the backend flag is
read at import time, so that part runs in subprocesses).
"""
import os
import subprocess
import sys
import time

import numpy as np

from zdjscc import kernels


def best_of(fn, repeat=5):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_table(n):
    rng = np.random.default_rng(0)
    f = rng.normal(0, 2, n)
    edges = np.array([-np.inf, -1.0, 0.0, 1.0, np.inf])
    sig = np.array([1.0, 0.7, 1.3])
    signs = np.array([[1.0 if (7 - j) >> (2 - k) & 1 else -1.0 for k in range(3)] for j in range(8)])
    log_c = rng.normal(0, 5, n)
    z3 = rng.normal(0, 1, (n, 3))
    thr = np.array([-1.0, 0.0, 1.0])
    cases = [
        ("klevel_probs", lambda: kernels.klevel_probs_np(f, edges, 1.0), lambda: kernels.klevel_probs_nb(f, edges, 1.0)),
        ("klevel_dprobs", lambda: kernels.klevel_dprobs_np(f, edges, 1.0), lambda: kernels.klevel_dprobs_nb(f, edges, 1.0)),
        ("onebit_probs", lambda: kernels.onebit_probs_np(f, sig, signs), lambda: kernels.onebit_probs_nb(f, sig, signs)),
        ("onebit_dprobs", lambda: kernels.onebit_dprobs_np(f, sig, signs), lambda: kernels.onebit_dprobs_nb(f, sig, signs)),
        ("exp_growth_root", lambda: kernels.exp_growth_root_np(log_c, 1.0), lambda: kernels.exp_growth_root_nb(log_c, 1.0)),
        ("onebit_outcome", lambda: kernels.onebit_outcome_np(z3), lambda: kernels.onebit_outcome_nb(z3)),
        ("klevel_outcome", lambda: kernels.klevel_outcome_np(f, thr), lambda: kernels.klevel_outcome_nb(f, thr)),
    ]
    print(f"{'kernel':<16} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}   (n={n})")
    for name, np_fn, nb_fn in cases:
        t_np = best_of(np_fn)
        if kernels.HAVE_NUMBA:
            t_nb = best_of(nb_fn)
            print(f"{name:<16} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.2f}")
        else:
            print(f"{name:<16} {1e3 * t_np:10.3f} {'n/a':>10}")


SOLVE = """
import time
from zdjscc import kernels
from zdjscc.model import make_link, uniform_midtread_quantizer
from zdjscc.noe_optimizer import noe_at_power
link = make_link(quantizer=uniform_midtread_quantizer(4, 1.0))
noe_at_power(link, 1.0)
t = time.perf_counter()
noe_at_power(link, 1.0)
print(kernels.backend_name(), round(time.perf_counter() - t, 3))
"""


def solve_table():
    print("\nend-to-end K=4 NOE solve at 0 dB (seconds):")
    for flag in ("0", "1"):
        env = {"ZDJSCC_NO_NUMBA": flag}
        out = subprocess.run([sys.executable, "-c", SOLVE], env={**os.environ, **env},
                             capture_output=True, text=True, check=True)
        print("  " + out.stdout.strip())


if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    kernel_table(n)
    solve_table()
