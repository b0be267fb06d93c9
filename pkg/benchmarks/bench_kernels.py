"""Time the numba kernels against the numpy fallback on identical inputs.

    python3 benchmarks/bench_kernels.py [--agents N] [--repeat R]
"""

import argparse
import time

import numpy as np

from ctsim import _kernels as k


def best_of(fn, args, repeat):
    fn(*args)  # warm-up (includes JIT compilation for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--agents", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()

    rng = np.random.default_rng(0)
    u = rng.random((4, a.agents))
    e = rng.standard_exponential((2, a.agents))
    p, ps = rng.normal(0.5, 0.2, a.agents), rng.normal(0.5, 0.2, a.agents)
    cases = {
        "count_reports": ((u[0], u[1], u[2], u[3], 0.6, 0.55, 0.4, 0.7, 0.8),),
        "chain_counts": ((e[0], e[1], 1.0, 0.5, 1.5),),
        "loss_terms": ((p, ps, 0.1, 0.6, 0.2, -0.05, 0.7, 0.3),),
    }
    print(f"backend={k.BACKEND} agents={a.agents} repeat={a.repeat}")
    print(f"{'kernel':<15}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}  agree")
    for name, (args,) in cases.items():
        t_np, out_np = best_of(getattr(k, f"{name}_numpy"), args, a.repeat)
        if not k.HAVE_NUMBA:
            print(f"{name:<15}{t_np * 1e3:>12.2f}{'-':>12}{'-':>10}  -")
            continue
        t_nb, out_nb = best_of(getattr(k, f"{name}_numba"), args, a.repeat)
        if isinstance(out_np, tuple) and isinstance(out_np[0], np.ndarray):
            agree = all(np.array_equal(x, y) for x, y in zip(out_np, out_nb))
        else:
            agree = tuple(np.atleast_1d(out_np)) == tuple(np.atleast_1d(out_nb))
        print(f"{name:<15}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
