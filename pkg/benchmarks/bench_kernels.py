"""Compiled vs NumPy kernels on random tracking problems.

    python3 benchmarks/bench_kernels.py [--K 100 1000] [--d 2 3] [--repeat 50]
"""

import argparse
import timeit

import numpy as np

from ocnlme import _lqcore_py

try:
    from ocnlme import _lqcore
except ImportError:
    _lqcore = None


def problem(K, d, rng):
    A = -np.abs(rng.standard_normal((K, d, d))) * 0.5
    r = rng.standard_normal((K, d))
    dt = np.full(K, 0.1)
    Phi, s = _lqcore_py.exp_transition(A, r, dt)
    B = np.eye(d)
    U = np.eye(d)
    C = np.eye(1, d)
    omega = (np.arange(K) % 10 == 0).astype(float)
    yd = rng.standard_normal((K, 1)) * omega[:, None]
    y_final = rng.standard_normal(1)
    return dict(A=A, r=r, dt=dt, Phi=Phi, s=s, B=B, U=U, C=C, omega=omega, yd=yd, y_final=y_final)


def bench(mod, p, repeat):
    args = (p["Phi"], p["s"], p["B"], p["U"], p["C"], p["omega"], p["yd"], p["y_final"], p["dt"])
    R, h, G, _ = mod.riccati_backward(*args)
    x0 = np.ones(p["Phi"].shape[1])
    cases = {
        "exp_transition": lambda: mod.exp_transition(p["A"], p["r"], p["dt"]),
        "riccati_backward": lambda: mod.riccati_backward(*args),
        "forward_pass": lambda: mod.forward_pass(p["Phi"], p["s"], p["B"], R, h, G, p["dt"], x0),
    }
    return {k: min(timeit.repeat(f, number=1, repeat=repeat)) for k, f in cases.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--K", type=int, nargs="+", default=[100, 1000])
    ap.add_argument("--d", type=int, nargs="+", default=[2, 3])
    ap.add_argument("--repeat", type=int, default=50)
    a = ap.parse_args()
    if _lqcore is None:
        print("compiled extension not built; only the NumPy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'K':>6}{'d':>3}{'numpy us':>12}{'compiled us':>13}{'speedup':>9}")
    for K in a.K:
        for d in a.d:
            p = problem(K, d, rng)
            py = bench(_lqcore_py, p, a.repeat)
            cy = bench(_lqcore, p, a.repeat) if _lqcore is not None else {}
            for k, t in py.items():
                c = cy.get(k)
                extra = f"{c * 1e6:13.1f}{t / c:9.1f}" if c else f"{'-':>13}{'-':>9}"
                print(f"{k:<18}{K:>6}{d:>3}{t * 1e6:12.1f}{extra}")


if __name__ == "__main__":
    main()
