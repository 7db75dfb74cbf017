"""Smoke test for the noisy_threshold_py extension.

Build first:  cd crates/py && maturin develop --release
Then run:     python python/smoke_test.py
"""

import json
import math

import noisy_threshold_py as nt


def main():
    cfg = nt.ProblemConfig(200, 3, 0.2, 0.05, seed=7)
    assert (cfg.n, cfg.k) == (200, 3)

    hidden = [i in (5, 50, 150) for i in range(200)]
    oracle = nt.NoisyBitOracle(cfg, hidden)
    assert len(oracle) == 200 and oracle.weight == 3
    oracle.query(0)
    assert oracle.total_queries == 1 and oracle.per_bit[0] == 1

    out = nt.check_bit(oracle, 5, 0.01)
    assert out.queries_used >= 1
    assert sum(oracle.per_bit) == oracle.total_queries

    run = nt.compute_threshold(oracle, cfg)
    print("threshold:", run)

    kl = nt.kl_bern_flip(0.2)
    assert abs(kl - 0.6 * math.log(4.0)) < 1e-12
    rate = nt.optimal_rate(200, 3, 0.05, 0.2)
    assert abs(rate - 200 * math.log(3 / 0.05) / kl) < 1e-9 * rate
    assert nt.checkbit_budget(0.01, 0.2) > 0
    assert nt.majority_readings(0.01, 0.2) >= 1
    assert nt.survivor_gate(1000, 5, 0.01) > 0

    heavy, light = nt.bin_probabilities(4, 0.2)
    assert abs(sum(heavy) - 1) < 1e-12 and abs(sum(light) - 1) < 1e-12

    bound, witness = nt.lecam_two_point(10, 2, 0.2, [1.0] * 9)
    assert 0 <= bound <= 1 and witness >= 1

    try:
        nt.ProblemConfig(10, 20, 0.2, 0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("k > n accepted")

    spec = {
        "cells": [{"n": 100, "k": 2, "p": 0.2, "delta": 0.1}],
        "trials": 20,
        "weight_policy": "exactly_k",
        "algorithm": "noisy_threshold",
        "seed": 1,
    }
    a = nt.run_experiment(json.dumps(spec))
    b = nt.run_experiment(json.dumps(spec))
    assert a == b
    report = json.loads(a)
    assert report["schema_version"] == 1
    cell = report["cells"][0]
    print("cell:", {k: cell[k] for k in ("n", "k", "error_rate", "q_mean", "ratio")})
    print("smoke test passed")


if __name__ == "__main__":
    main()
