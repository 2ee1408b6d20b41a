"""Time one presentation on each backend and check they agree.

    python benchmarks/bench_kernel.py [--task iris|pattern5x3] [--repeat N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from memsnn import engine, experiments as ex, kernel


def _sample(task: str):
    if task in ("pattern5x3", "digits7x3"):
        P, L = ex.load_patterns("5x3" if task == "pattern5x3" else "7x3")
        cfg = engine.preset(task)
        return cfg, ex.pattern_trains(P, cfg)[0], int(L[0])
    X, y = ex._load_dataset(task)
    cfg = engine.preset(task)
    enc = ex.FeatureEncoder(cfg.T).fit(X)
    return cfg, enc.transform(X[:1], cfg.spike_shape)[0], int(y[0])


def bench(backend: str, cfg, train, label, repeat: int):
    times, w = [], None
    for _ in range(repeat):
        net = engine.Network.build(cfg)
        engine.init_weights(net)
        t0 = time.perf_counter()
        res = engine.present_sample(net, train, label, learning=True, backend=backend)
        times.append(time.perf_counter() - t0)
        w = net.xb.w.copy()
    return min(times), res, w


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--task", default="iris")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    cfg, train, label = _sample(args.task)
    print(f"task {args.task}: n={cfg.n} m={cfg.m} steps<={cfg.n_steps}")
    t_py, r_py, w_py = bench("python", cfg, train, label, max(1, args.repeat // 3))
    print(f"python  {t_py * 1e3:9.1f} ms  ({r_py.steps} steps)")
    if kernel._ckernel is None:
        print("cython  not built")
        return
    t_c, r_c, w_c = bench("cython", cfg, train, label, args.repeat)
    print(f"cython  {t_c * 1e3:9.1f} ms  ({r_c.steps} steps)  speed-up x{t_py / t_c:.0f}")
    same = r_py.spikes == r_c.spikes and np.array_equal(w_py, w_c)
    print(f"outputs identical: {same}  max |dw| = {np.max(np.abs(w_py - w_c)):.3g} m")


if __name__ == "__main__":
    main()
