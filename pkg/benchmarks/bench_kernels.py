"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Both implementations are imported directly, so one process times both.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from ridgecusum import _kernels_py as py
from ridgecusum.scan import gram_of, mc_min_gap, sc_triples

try:
    from ridgecusum import _kernels as cy
except ImportError:  # pragma: no cover
    cy = None


def cases(rng):
    p = 100
    for n in (200, 400, 600):
        P = np.ascontiguousarray(np.hstack([np.zeros((p, 1)), np.cumsum(rng.standard_normal((p, n)), axis=1)]))
        G = gram_of(P)
        gap = mc_min_gap(n, 0.1)
        tri = sc_triples(n, 0.1)
        yield f"kahan_cumsum   p={p} n={n}", lambda m, X=rng.standard_normal((p, n)): m.kahan_cumsum(X)
        yield f"gram_values SC n={n}", lambda m, G=G, tri=tri: m.gram_values(G, tri, True)
        yield f"scan_gram_max  n={n}", lambda m, G=G, n=n, gap=gap: m.scan_gram_max(G, n, gap, True)
        yield f"scan_linf_max  n={n}", lambda m, P=P, n=n, gap=gap: m.scan_linf_max(P, n, gap)
    r = 100
    Xi = rng.standard_normal((200, r, r))
    cum = np.zeros((200, r + 1, r + 1))
    cum[:, 1:, 1:] = Xi.cumsum(1).cumsum(2)
    yield f"dense_sup  200 paths r={r}", lambda m, cum=cum: m.dense_sup(cum, 10)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numpy [s]':>10s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, fn in cases(rng):
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
        if cy is None:
            print(f"{name:32s} {t_py:10.4f} {'n/a':>11s}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat))
        print(f"{name:32s} {t_py:10.4f} {t_cy:11.4f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
