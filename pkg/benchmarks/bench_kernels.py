"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--channels 64] [--samples 2000]

Both backends run the same block, outputs are checked for bit equality,
and the time per sample is reported together with the real-time factor at
the design sample rate. The Python twin is slow, so keep ``--samples``
modest.
"""

import argparse
import time

import numpy as np

from carfac_rt import _backend
from carfac_rt.fixedpoint import FixedCarfac
from carfac_rt.model import Carfac, design_carfac


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--channels", type=int, default=64)
    ap.add_argument("--fs", type=float, default=256000.0)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if not _backend.compiled_available():
        print("compiled kernels not built; nothing to compare")
        return 1
    coeffs = design_carfac(n_channels=args.channels, sample_rate_hz=args.fs)
    t = np.arange(args.samples) / args.fs
    x = 0.1 * np.sin(2 * np.pi * 1000.0 * t)

    print(f"{'engine':<8} {'backend':<9} {'us/sample':>10} {'rt factor':>10}  match")
    for label, make in (("exact", lambda b: Carfac(coeffs, "exact", backend=b)),
                        ("approx", lambda b: Carfac(coeffs, "approx", backend=b)),
                        ("fixed", lambda b: FixedCarfac(coeffs, backend=b))):
        outs = {}
        for backend in ("compiled", "python"):
            rep = args.repeat if backend == "compiled" else 1
            dt, outs[backend] = _time(lambda: make(backend).process(x), rep)
            per = dt / args.samples
            rt = 1.0 / (per * args.fs)
            match = ""
            if backend == "python":
                match = "yes" if np.array_equal(outs["compiled"], outs["python"]) else "NO"
            print(f"{label:<8} {backend:<9} {per * 1e6:>10.2f} {rt:>10.3f}  {match}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
