"""Compare the numba and numpy full-joint kernels.

Usage: python benchmarks/bench_joint.py [--nodes 16] [--repeat 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fident._kernels import JointKernel, numba_available
from fident.bn import random_parameterization
from fident.oracle import random_dag


def _time(fn, repeat: int) -> float:
    fn()  # warm-up (and JIT compile)
    t = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t) / repeat


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, nargs="+", default=[8, 12, 16, 18])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"{'nodes':>5} {'states':>8} {'numpy ms':>10} {'numba ms':>10} {'max diff':>10}")
    for n in args.nodes:
        rng = np.random.default_rng(args.seed)
        m = random_parameterization(random_dag(rng, n, p_edge=0.3), seed=rng)
        nodes = m.nodes
        idx = {v: i for i, v in enumerate(nodes)}
        cards = [m.cards[v] for v in nodes]
        parents = [[idx[p] for p in m.graph.parents(v)] for v in nodes]
        k_np = JointKernel(cards, parents, use_numba=False)
        flat = k_np.pack([m.cpts[v].table for v in nodes])
        t_np = _time(lambda: k_np(flat), args.repeat)
        if numba_available:
            k_nb = JointKernel(cards, parents, use_numba=True)
            t_nb = _time(lambda: k_nb(flat), args.repeat)
            diff = float(np.max(np.abs(k_nb(flat) - k_np(flat))))
            print(f"{n:>5} {2 ** n:>8} {1e3 * t_np:>10.3f} {1e3 * t_nb:>10.3f} {diff:>10.1e}")
        else:
            print(f"{n:>5} {2 ** n:>8} {1e3 * t_np:>10.3f} {'n/a':>10} {'n/a':>10}")


if __name__ == "__main__":
    main()
