"""Time the compiled and pure-Python customer kernels on the same market.

    python3 benchmarks/bench_kernel.py --customers 2000 --steps 60
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import replace

from promosim.config import MarketConfig
from promosim.engine.kernel import available_backends
from promosim.engine.simulation import frames_to_rows, run


def bench(config: MarketConfig, backend: str, repeats: int) -> tuple[float, list]:
    best = float("inf")
    rows = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = run(config, backend=backend)
        best = min(best, time.perf_counter() - t0)
        rows = frames_to_rows(result.frames)
    return best, rows


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--customers", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=60)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    config = replace(MarketConfig(name="bench"), n_customers=args.customers, T=args.steps).with_promotion(0, 12, 24, 48)
    timings, outputs = {}, {}
    for backend in available_backends():
        timings[backend], outputs[backend] = bench(config, backend, args.repeats)
        print(f"{backend:>9}: {timings[backend]:8.3f} s  ({args.customers} customers x {args.steps} steps)")
    report = {"customers": args.customers, "steps": args.steps, "seconds": timings}
    if len(timings) == 2:
        report["speedup"] = timings["python"] / timings["compiled"]
        report["identical_output"] = outputs["python"] == outputs["compiled"]
        print(f"  speedup: {report['speedup']:.1f}x, identical output: {report['identical_output']}")
    print(json.dumps(report))


if __name__ == "__main__":
    main()
