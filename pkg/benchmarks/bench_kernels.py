"""Time the compiled kernels against the NumPy fallback.

Usage::

    python benchmarks/bench_kernels.py [--groups 200] [--group-size 50] [--repeat 5]

Each kernel is run on the same random group layout with both backends;
the script prints the best wall time per call and the speedup, and checks
that the two backends agree.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from structot.kernels import available_backends

THRESHOLD_SQRT = 2


def _layout(rng, groups, size):
    n = groups * size
    idx = rng.permutation(n).astype(np.int64)
    ptr = np.arange(0, n + 1, size, dtype=np.int64)
    wts = rng.uniform(0.1, 2.0, n)
    return n, idx, ptr, wts


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(groups: int = 200, size: int = 50, repeat: int = 5, seed: int = 0) -> list[tuple]:
    rng = np.random.default_rng(seed)
    n, idx, ptr, wts = _layout(rng, groups, size)
    w = rng.normal(size=n)
    mask = rng.random(n) < 0.5
    alpha = float(size) / 4.0
    # every element in two groups: the identity layout plus a permuted one
    _, idx2, _, wts2 = _layout(rng, groups, size)
    cover = (np.concatenate([np.arange(n, dtype=np.int64), idx2]),
             np.arange(0, 2 * n + 1, size, dtype=np.int64), np.concatenate([wts, wts2]))
    side = int(np.sqrt(n))
    K = np.exp(-5.0 * rng.uniform(size=(side, side)))
    a = np.full(side, 1.0 / side)
    b = rng.uniform(0.5, 1.0, side)
    b /= b.sum()
    backends = available_backends()
    rows = []
    cases = {
        "group_greedy": lambda k: _greedy(k, w, idx, ptr, wts, alpha, n),
        "group_eval": lambda k: k.group_eval(mask, idx, ptr, wts, THRESHOLD_SQRT, alpha),
        "group_project": lambda k: _project(k, w, idx, ptr, wts, alpha, n),
        "group_bcd": lambda k: _bcd(k, w, cover, alpha, n),
        "sinkhorn_scale": lambda k: _scale(k, K, a, b),
    }
    for name, case in cases.items():
        times, outs = {}, {}
        for bname, k in backends.items():
            outs[bname] = case(k)
            times[bname] = _best(lambda: case(k), repeat)
        ref = np.asarray(outs["python"], dtype=float)
        agree = all(np.allclose(np.asarray(o, dtype=float), ref, atol=1e-9) for o in outs.values())
        rows.append((name, times, agree))
    return rows


def _greedy(k, w, idx, ptr, wts, alpha, n):
    out = np.zeros(n)
    k.group_greedy(w, idx, ptr, wts, THRESHOLD_SQRT, alpha, out)
    return out


def _project(k, w, idx, ptr, wts, alpha, n):
    out = np.zeros(n)
    k.group_project(w, idx, ptr, wts, THRESHOLD_SQRT, alpha, out)
    return out


def _bcd(k, w, cover, alpha, n, sweeps=5):
    idx, ptr, wts = cover
    ng = ptr.size - 1
    blocks = np.zeros(idx.size)
    # tol 0: both backends run exactly ``sweeps`` sweeps
    k.group_bcd(w, idx, ptr, wts, np.full(ng, THRESHOLD_SQRT, dtype=np.int64),
                np.full(ng, alpha), np.ones(ng), np.zeros(n), blocks, 0.0, sweeps)
    return np.bincount(idx, weights=blocks, minlength=n)


def _scale(k, K, a, b):
    u, v, *_ = k.sinkhorn_scale(K, a, b, 1e-9, 10000, 50.0)
    return u[:, None] * K * v[None, :]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--groups", type=int, default=200)
    ap.add_argument("--group-size", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rows = run(args.groups, args.group_size, args.repeat, args.seed)
    names = sorted({b for _, t, _ in rows for b in t})
    print(f"{'kernel':<16}" + "".join(f"{b + ' (ms)':>16}" for b in names) + f"{'speedup':>10}  agree")
    ok = True
    for name, times, agree in rows:
        cells = "".join(f"{1e3 * times[b]:>16.3f}" for b in names)
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        print(f"{name:<16}{cells}{speed:>10.1f}  {agree}")
        ok &= agree
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
