"""Compute the reference constants frozen in tests/conftest.py.

    python scripts/oracle_reference.py [--mc-n 1000000]
"""

from __future__ import annotations

import argparse

import numpy as np

from selcon import datagen, oracle, runner


def testing_reference(alpha: float, mc_n: int, seed: int = 0) -> dict:
    spec = datagen.TestingMixture()
    b_star = oracle.bstar_testing(spec, mc_n, seed)
    q0 = runner._q0_informative("testing", alpha, None, mc_n)
    snap = runner.StatSnapshot(
        lambda X: 1.0 - spec.posterior(X)[:, 0],
        lambda X, Y: (np.asarray(Y) == 0).astype(float),
    )
    rng = np.random.default_rng(seed + 1)
    power = oracle.estimate_power(spec, snap, q0, mc_n, rng)
    ier = oracle.estimate_ier(spec, snap, q0, mc_n, rng)
    return {"b_star": b_star, "q0": q0, "power": power, "ier_at_q0": ier}


def main() -> None:
    p = argparse.ArgumentParser()
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--mc-n", type=int, default=1_000_000)
    args = p.parse_args()
    for k, v in testing_reference(args.alpha, args.mc_n).items():
        print(f"{k} = {v:.6f}")


if __name__ == "__main__":
    main()
