"""Time the Gibbs scan kernels: compiled extension against the NumPy fallback.

Each backend advances an identical chain from an identical state, so the
numbers differ only in kernel dispatch.  Typical invocation:

    python benchmarks/bench_gibbs.py --sizes 30x20x30 100x20x100 --scans 2000
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ebfkit.crossed_gibbs import (
    FLAT_PRIOR,
    CellStats,
    ChainState,
    CrossedModelConfig,
    available_backends,
    run_scans,
    simulate_dataset,
)


def parse_size(text: str) -> tuple[int, int, int]:
    try:
        j, k, n = (int(part) for part in text.split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected JxKxn, got {text!r}") from None
    return j, k, n


def time_backend(data, stats, backend: str, scans: int, repeats: int) -> float:
    run_scans(stats, ChainState.initial(data), FLAT_PRIOR,
              np.random.default_rng(0), 10, backend)
    best = float("inf")
    for _ in range(repeats):
        state = ChainState.initial(data)
        rng = np.random.default_rng(0)
        start = time.perf_counter()
        run_scans(stats, state, FLAT_PRIOR, rng, scans, backend)
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--sizes", nargs="+", type=parse_size, metavar="JxKxn",
                        default=[(30, 20, 30), (100, 20, 100)])
    parser.add_argument("--scans", type=int, default=2000)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = available_backends()
    print("backends:", ", ".join(backends))
    header = f"{'size':>12}" + "".join(f"{b + ' (s)':>16}" for b in backends)
    if set(backends) == {"compiled", "python"}:
        header += f"{'speedup':>10}"
    print(header)
    for j, k, n in args.sizes:
        data = simulate_dataset(CrossedModelConfig(
            J=j, K=k, n=n, tau11=0.75, tau12=0.5, rho1=0.3,
            tau21=0.5, tau22=0.5, rho2=0.3, seed=args.seed))
        stats = CellStats.from_dataset(data)
        times = {b: time_backend(data, stats, b, args.scans, args.repeats)
                 for b in backends}
        row = f"{f'{j}x{k}x{n}':>12}" + "".join(f"{times[b]:>16.3f}" for b in backends)
        if set(backends) == {"compiled", "python"}:
            row += f"{times['python'] / times['compiled']:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
