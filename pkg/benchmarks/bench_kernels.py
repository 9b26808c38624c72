"""Compare the compiled and pure-Python kernels.

Times Gibbs sweeps and pseudo-likelihood value+gradient evaluations on a
seeded random network, checks that both backends agree, and prints one row
per kernel::

    python benchmarks/bench_kernels.py [--vars 12] [--rows 5000] [--sweeps 2000]
"""
import argparse
import time

import numpy as np

from markovnet import _kernels
from markovnet.inference import GibbsConfig, marginals_gibbs
from markovnet.model import GraphStructure, MarkovNetwork, VariableSpec
from markovnet.training import PseudoLikelihood


def random_network(n_vars, card, n_edges, seed):
    rng = np.random.default_rng(seed)
    variables = [VariableSpec(0, "Class", 2, "label")]
    variables += [VariableSpec(i, f"V{i}", card, "feature") for i in range(1, n_vars)]
    pairs = [(u, v) for u in range(n_vars) for v in range(u + 1, n_vars)]
    chosen = rng.choice(len(pairs), size=min(n_edges, len(pairs)), replace=False)
    structure = GraphStructure(variables, [pairs[i] for i in sorted(chosen)])
    return MarkovNetwork(structure, rng.normal(scale=0.5, size=structure.n_params))


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), result


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vars", type=int, default=12)
    ap.add_argument("--card", type=int, default=5)
    ap.add_argument("--edges", type=int, default=30)
    ap.add_argument("--rows", type=int, default=5000)
    ap.add_argument("--sweeps", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    net = random_network(args.vars, args.card, args.edges, args.seed)
    s = net.structure
    rng = np.random.default_rng(args.seed + 1)
    data = np.column_stack([rng.integers(0, c, size=args.rows) for c in s.cardinalities])
    weights = rng.uniform(0.5, 2.0, size=args.rows)
    gibbs_cfg = GibbsConfig(seed=args.seed, burn_in=args.sweeps // 10, samples=args.sweeps)

    print(f"network: {s.n} variables, {len(s.edges)} edges, {s.n_params} parameters; "
          f"{args.rows} rows; {gibbs_cfg.total_sweeps} Gibbs sweeps")
    if "cython" not in _kernels.AVAILABLE:
        print("compiled extension not built; only the Python backend is available")

    results = {}
    for backend in _kernels.AVAILABLE:
        pl = PseudoLikelihood(s, data, weights, backend=backend)
        t_gibbs, margs = best_of(lambda: marginals_gibbs(net, {}, gibbs_cfg, backend=backend)[0],
                                 args.repeats)
        t_pl, (value, grad) = best_of(lambda: pl.value_and_grad(net.theta), args.repeats)
        results[backend] = (t_gibbs, t_pl, margs, value, grad)

    header = f"{'kernel':<18}" + "".join(f"{b + ' s':>12}" for b in _kernels.AVAILABLE)
    if len(results) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, idx in (("gibbs sweeps", 0), ("pseudo-lik + grad", 1)):
        row = f"{label:<18}" + "".join(f"{results[b][idx]:>12.4f}" for b in _kernels.AVAILABLE)
        if len(results) == 2:
            row += f"{results['python'][idx] / results['cython'][idx]:>9.1f}x"
        print(row)

    if len(results) == 2:
        c, p = results["cython"], results["python"]
        print(f"gibbs marginals identical: {c[2].max_abs_diff(p[2]) == 0.0}")
        print(f"pseudo-lik |value diff| {abs(c[3] - p[3]):.2e}, max |grad diff| {np.max(np.abs(c[4] - p[4])):.2e}")


if __name__ == "__main__":
    main()
