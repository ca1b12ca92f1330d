"""Time the hot kernels compiled with numba against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

The kernel backend is fixed at import time, so each backend runs in its own
subprocess (the fallback with REGRETRL_DISABLE_NUMBA=1).  Compilation is
excluded by a warm-up call.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _time(fn, repeat):
    fn()  # warm-up / compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_worker(repeat):
    from regretrl import NUMBA_ENABLED, kernels, oracle
    from regretrl.fixtures import build_cliff_grid, build_random_mdp
    from regretrl.learning import LearnerConfig, train

    grid = build_cliff_grid(6, 4)
    rng = np.random.default_rng(0)
    pi = oracle.value_optimal_policy(grid)
    u = rng.random((2000, grid.horizon, 2))
    offsets = np.arange(2000) % 2

    def rollout():
        kernels.rollout(grid.cumulative_transition, grid.reward, grid.terminal_mask, grid.start,
                        pi, np.arange(grid.n_states), 2, offsets, grid.horizon, u)

    cfg = LearnerConfig(episodes=3000, seed=3)

    def learn():
        train(grid, cfg, "drn")

    small = build_random_mdp(11, 6, 3, 3)
    pol = oracle.as_actions(small, np.zeros(small.n_states, dtype=np.int64))
    mus = np.array(list(oracle.enumerate_adversaries(small)))
    act = pol[mus]
    fire = np.ones(small.horizon, dtype=bool)

    def perturbed():
        kernels.perturbed_values(small.transition, small.reward, act, pol, fire, small.gamma)

    out = {"numba": NUMBA_ENABLED,
           "rollout_2000_episodes": _time(rollout, repeat),
           "drn_train_3000_episodes": _time(learn, repeat),
           f"perturbed_values_{act.shape[0]}_maps": _time(perturbed, repeat)}
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        run_worker(args.repeat)
        return
    results = {}
    for label, disable in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, REGRETRL_DISABLE_NUMBA=disable)
        proc = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(args.repeat)],
                              env=env, capture_output=True, text=True)
        if proc.returncode:
            sys.exit(f"{label} worker failed:\n{proc.stderr}")
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])
    keys = [k for k in results["numba"] if k != "numba"]
    print(f"{'kernel':32s} {'numba [s]':>12s} {'numpy [s]':>12s} {'speedup':>9s}")
    for k in keys:
        a, b = results["numba"][k], results["numpy"][k]
        print(f"{k:32s} {a:12.5f} {b:12.5f} {b / a:8.1f}x")


if __name__ == "__main__":
    main()
