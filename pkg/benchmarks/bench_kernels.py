"""Compare the compiled and numpy interpolation kernels.

Times the raw kernels on random points and one backward solve with each
backend patched in, and checks that both produce the same numbers.

    python3 benchmarks/bench_kernels.py --points 200000 --repeat 5
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from bdsdelab import _kernels_py, kernels
from bdsdelab.noise import sample_noise
from bdsdelab.problems import get_problem
from bdsdelab.finite import march_solve
from bdsdelab.weighted import SpatialGrid

try:
    from bdsdelab import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def bench_raw(points: int, repeat: int, rng: np.random.Generator) -> list[tuple[str, str, float]]:
    rows = []
    n = 129
    axis_h = 16.0 / (n - 1)
    fields1 = np.ascontiguousarray(rng.standard_normal((3, n)))
    pts1 = np.ascontiguousarray(rng.uniform(-9.0, 9.0, points))
    fields2 = np.ascontiguousarray(rng.standard_normal((2, n * n)))
    pts2 = np.ascontiguousarray(rng.uniform(-9.0, 9.0, (points, 2)))
    backends = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    ref1 = _kernels_py.interp_1d(fields1, -8.0, 8.0, axis_h, pts1)
    ref2 = _kernels_py.interp_2d(fields2, -8.0, 8.0, axis_h, n, pts2)
    for name, mod in backends:
        out1 = mod.interp_1d(fields1, -8.0, 8.0, axis_h, pts1)
        out2 = mod.interp_2d(fields2, -8.0, 8.0, axis_h, n, pts2)
        assert np.allclose(out1, ref1, rtol=0, atol=1e-13) and np.allclose(out2, ref2, rtol=0, atol=1e-13)
        t1 = min(timeit.repeat(lambda: mod.interp_1d(fields1, -8.0, 8.0, axis_h, pts1), number=1, repeat=repeat))
        t2 = min(timeit.repeat(lambda: mod.interp_2d(fields2, -8.0, 8.0, axis_h, n, pts2), number=1, repeat=repeat))
        rows.append((name, "interp_1d", t1))
        rows.append((name, "interp_2d", t2))
    return rows


def bench_solve(repeat: int) -> list[tuple[str, str, float]]:
    problem = get_problem("nonlinear")
    grid = SpatialGrid.build(1, 8.0, 129)
    noise = sample_noise(0, 0.0, 2.0**-7, 128, 1, 1)
    backends = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    rows, results = [], []
    saved = kernels.interp_1d, kernels.interp_2d
    try:
        for name, mod in backends:
            kernels.interp_1d, kernels.interp_2d = mod.interp_1d, mod.interp_2d
            solve = lambda: march_solve(problem.driver, problem.coeffs, grid, noise, 64)
            results.append(solve().Y)
            rows.append((name, "march_solve", min(timeit.repeat(solve, number=1, repeat=repeat))))
    finally:
        kernels.interp_1d, kernels.interp_2d = saved
    if len(results) == 2:
        assert np.allclose(results[0], results[1], rtol=0, atol=1e-12)
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--points", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    rows = bench_raw(args.points, args.repeat, rng) + bench_solve(max(1, args.repeat // 2))
    print(f"default backend at import: {kernels.BACKEND}")
    print(f"{'backend':<8} {'case':<12} {'seconds':>10}")
    for name, case, t in rows:
        print(f"{name:<8} {case:<12} {t:>10.4f}")
    by_case: dict[str, dict[str, float]] = {}
    for name, case, t in rows:
        by_case.setdefault(case, {})[name] = t
    for case, times in by_case.items():
        if "cython" in times:
            print(f"speedup {case}: {times['python'] / times['cython']:.2f}x")


if __name__ == "__main__":
    main()
