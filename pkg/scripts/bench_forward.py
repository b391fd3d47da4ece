#!/usr/bin/env python3
"""Timing: closed-form batch evaluation vs the enumeration oracle.

Times batch_forward on the bundled 6-bus line-limited problem and on a
synthetic 60-variable box QP, and compares per-point cost against
brute-force active-set enumeration.

Usage:
    python3 scripts/bench_forward.py [--count N] [--seed N]
"""

import argparse
import time

import numpy as np

from cfqp import dcopf
from cfqp.cases import case6
from cfqp.model import batch_forward, init_model
from cfqp.oracle import brute_force_solve
from cfqp.problem import ActiveSet, MpQpProblem, ParameterPoint


def time_batch(model, thetas, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        batch_forward(model, thetas)
        best = min(best, time.perf_counter() - start)
    return best


def bench_line_problem(count, seed):
    case = case6()
    problem, _ = dcopf.build_dcopf_with_lines(case)
    theta0 = ParameterPoint.zeros(problem)
    model = init_model(problem, brute_force_solve(problem, theta0).active_set, theta0)
    P_d = case.demand_vector()
    thetas = []
    for i in range(count):
        rng = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, i]))
        thetas.append(
            ParameterPoint.of_theta_e(problem, (1.0 - rng.uniform(0.9, 1.1, 6)) * P_d)
        )
    batch = time_batch(model, thetas)
    oracle_n = min(count, 20)
    start = time.perf_counter()
    for theta in thetas[:oracle_n]:
        brute_force_solve(problem, theta)
    oracle = (time.perf_counter() - start) / oracle_n
    model_pp = batch / count
    print(f"6-bus line problem (n={problem.n}, m2={problem.m2}):")
    print(f"  model  {model_pp * 1e6:8.1f} us/point ({count} points, best of 5)")
    print(f"  oracle {oracle * 1e6:8.1f} us/point ({oracle_n} solves)")
    print(f"  speedup {oracle / model_pp:.0f}x")


def bench_synthetic(count, seed, n=60):
    rng = np.random.default_rng(seed)
    problem = MpQpProblem(
        Q=np.diag(rng.uniform(0.5, 5.0, n)),
        C=rng.uniform(-5.0, 5.0, n),
        C0=0.0,
        A_e=np.ones((1, n)),
        b_e=np.zeros(1),
        A_C=np.vstack([-np.eye(n), np.eye(n)]),
        b_C=np.concatenate([np.full(n, -50.0), np.full(n, -50.0)]),
    )
    model = init_model(problem, ActiveSet(()), ParameterPoint.zeros(problem))
    thetas = [
        ParameterPoint.of_theta_e(problem, rng.uniform(-40.0, 40.0, 1))
        for _ in range(count)
    ]
    batch = time_batch(model, thetas)
    print(f"synthetic box QP (n={n}):")
    print(f"  model  {batch / count * 1e6:8.1f} us/point "
          f"({count} points in {batch * 1e3:.1f} ms)")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=17)
    args = ap.parse_args()
    bench_line_problem(args.count, args.seed)
    bench_synthetic(args.count, args.seed)


if __name__ == "__main__":
    main()
