"""Compiled versus pure-Python kernels: wall time and output identity.

    python3 benchmarks/bench_backends.py            # default workload
    python3 benchmarks/bench_backends.py --scale 4  # 4x the samples

Both backends share one RNG and one arithmetic order, so every row also
checks that the two produce identical arrays.
"""
import argparse
import time

import numpy as np

from srnmlmc import _pykernels, kernels
from srnmlmc.models import decay_model, gene_model, michaelis_menten_model
from srnmlmc.network import sensitive_set


def _args_for(model, level, count, delta):
    net = model.network
    w = model.observable.weight_vector(net.num_species)
    sens = np.zeros(net.num_reactions, dtype=np.uint8)
    sens[sorted(sensitive_set(model.observable, net))] = 1
    dt, n = 2.0 ** -level, 2 ** level
    common = (net.stoich, net.reactant_order, net.rates, model.x0)
    return {
        "coupled": common + (dt, n, 7, level, 0, count, delta, w, sens),
        "tau_leap": common + (dt, n, 7, level, 0, count),
        "ssa": common + (model.final_time, 7, -1, 0, count),
    }


def _time(fn, args, repeats):
    best, out = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scale", type=float, default=1.0, help="multiply the sample counts")
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args(argv)

    if not kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    from srnmlmc import _ckernels

    cases = [
        ("decay", decay_model(), 8, 0.75),
        ("gene", gene_model(), 6, 0.75),
        ("mm", michaelis_menten_model(), 6, 0.75),
    ]
    print(f"{'kernel':<10}{'model':<7}{'paths':>8}{'python s':>11}{'compiled s':>12}{'speedup':>9}  identical")
    for name, model, level, delta in cases:
        count = max(1, int(200 * args.scale))
        for kind, call_args in _args_for(model, level, count, delta).items():
            t_py, out_py = _time(getattr(_pykernels, f"{kind}_batch"), call_args, 1)
            t_c, out_c = _time(getattr(_ckernels, f"{kind}_batch"), call_args, args.repeats)
            same = all(np.array_equal(a, b) for a, b in zip(out_py, out_c))
            print(f"{kind:<10}{name:<7}{count:>8}{t_py:>11.4f}{t_c:>12.5f}{t_py / t_c:>9.0f}  {same}")

    n = int(100_000 * args.scale)
    for mean in (2.5, 40.0):
        t_py, a = _time(_pykernels.poisson_stream, (1, 0, 0, 0, mean, n), 1)
        t_c, b = _time(_ckernels.poisson_stream, (1, 0, 0, 0, mean, n), args.repeats)
        print(f"{'poisson':<10}{f'm={mean:g}':<7}{n:>8}{t_py:>11.4f}{t_c:>12.5f}{t_py / t_c:>9.0f}  "
              f"{np.array_equal(a, b)}")


if __name__ == "__main__":
    main()
