"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_backends.py [--D 100] [--Y 16384] [--K 50] [--repeat 5]

Each kernel regenerates its projection rows from the seed, which is the
inner loop of every distributed energy and gradient evaluation. Results are
checked for agreement before timing.
"""
import argparse
import timeit

import numpy as np

from drdam import _fallback

try:
    from drdam import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(D, Y, K, kind):
    rng = np.random.default_rng(0)
    u = rng.uniform(0, 1 / np.sqrt(D), size=D)
    U = rng.uniform(0, 1 / np.sqrt(D), size=(K, D))
    T = rng.normal(size=_fallback.n_out(kind, Y))
    n = _fallback.n_out(kind, Y)
    return {
        "normals": lambda m: m.normals(7, 1, Y, D),
        "stream_features": lambda m: m.stream_features(kind, 7, Y, u),
        "stream_energy_grad": lambda m: m.stream_energy_grad(kind, 7, Y, u, T),
        "stream_consolidate": lambda m: _consolidate(m, kind, Y, U, n),
    }


def _consolidate(mod, kind, Y, U, n):
    T = np.zeros(n)  # accumulated in place
    mod.stream_consolidate(kind, 7, Y, U, T)
    return T


def _flat(r):
    if isinstance(r, tuple):
        return np.concatenate([np.atleast_1d(np.asarray(v, dtype=float)).ravel() for v in r])
    return np.asarray(r, dtype=float).ravel()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--D", type=int, default=100)
    ap.add_argument("--Y", type=int, default=2 ** 14)
    ap.add_argument("--K", type=int, default=50)
    ap.add_argument("--kind", default="sincos", choices=["cos", "sincos", "exp", "expexp"])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    kind = {"cos": 0, "sincos": 1, "exp": 2, "expexp": 3}[args.kind]
    backends = [("python", _fallback)] + ([("compiled", _kernels)] if _kernels is not None else [])
    print(f"kind={args.kind} D={args.D} Y={args.Y} K={args.K}, best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    for label, fn in cases(args.D, args.Y, args.K, kind).items():
        outs, times = [], []
        for _, mod in backends:
            outs.append(_flat(fn(mod)))
            times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)))
        if len(outs) == 2 and not np.allclose(outs[0], outs[1], rtol=1e-9, atol=1e-12):
            raise SystemExit(f"{label}: backends disagree")
        speed = f"{times[0] / times[1]:>9.2f}x" if len(times) == 2 else ""
        print(f"{label:<20}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + speed)
    if _kernels is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
