"""Time the compiled kernels against the NumPy fallback.

Run ``python3 benchmarks/bench_kernels.py``. Each kernel is timed on the
window sizes the harness uses (teleport: 4 frames, flight: 10 frames) and
the outputs of both backends are compared.
"""

import argparse
import sys
import timeit
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from conftest import make_window  # noqa: E402

from nbvpose.estimator import EnergyWeights, WindowProblem  # noqa: E402
from nbvpose.geometry import Intrinsics  # noqa: E402
from nbvpose.kernels import backends  # noqa: E402


def bench(n_frames, repeat, rng):
    window, _, calib = make_window(rng, n_frames, sigma_2d=3.0, sigma_3d=0.03, jitter=0.02)
    problem = WindowProblem(window, EnergyWeights.decision(), calib, Intrinsics())
    args = problem._args(window.poses)
    n = window.poses.size
    rows, outputs = [], {}
    for name, mod in backends().items():
        terms, grad, H = np.zeros(4), np.empty(window.poses.shape), np.empty((n, n))
        t_grad = min(timeit.repeat(lambda: mod.energy_grad(*args, terms, grad), number=repeat, repeat=5)) / repeat
        t_hess = min(timeit.repeat(lambda: mod.hessian(*args, H), number=repeat, repeat=5)) / repeat
        mod.energy_grad(*args, terms, grad)
        mod.hessian(*args, H)
        outputs[name] = (grad.copy(), H.copy())
        rows.append((name, t_grad, t_hess))
    return rows, outputs


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'frames':>6s} {'backend':>9s} {'energy+grad':>13s} {'hessian':>11s}")
    for n_frames in (4, 10):
        rows, outputs = bench(n_frames, args.repeat, rng)
        base = {name: (g, h) for name, g, h in rows}
        for name, t_grad, t_hess in rows:
            print(f"{n_frames:6d} {name:>9s} {1e6 * t_grad:10.1f} us {1e6 * t_hess:8.1f} us")
        if "compiled" in base:
            g_py, h_py = base["python"]
            g_c, h_c = base["compiled"]
            gp, hp = outputs["python"]
            gc, hc = outputs["compiled"]
            print(f"{'':6s} {'speedup':>9s} {g_py / g_c:12.1f}x {h_py / h_c:10.1f}x   "
                  f"max |diff| grad {np.max(np.abs(gp - gc)):.1e}, hessian {np.max(np.abs(hp - hc)):.1e}")
        else:
            print("compiled extension not built; only the NumPy backend was timed")


if __name__ == "__main__":
    main()
