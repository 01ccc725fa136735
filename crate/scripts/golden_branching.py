#!/usr/bin/env python3
"""Golden posterior over r for the stochastic-branching program, using
scipy's Poisson pmf (independent of the crate's hand-rolled log pmf).
Writes crates/ang-core/tests/golden/branching_posterior.csv."""

import os

import numpy as np
from scipy.special import logsumexp
from scipy.stats import poisson

PRIOR_RATE = 4.0
INNER_RATE = 4.0
LARGE_RATE = 6.0
OBSERVED = 6


def fib_legacy(n):
    a, b = 1, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def main():
    rows = []
    weights = []
    r = 0
    while True:
        prior = poisson.logpmf(r, PRIOR_RATE)
        if prior < np.log(1e-12) and r > 4:
            break
        if r > 4:
            like = poisson.logpmf(OBSERVED, LARGE_RATE)
        else:
            base = fib_legacy(3 * r)
            ks = np.arange(0, 200)
            terms = (poisson.logpmf(ks, INNER_RATE)
                     + poisson.logpmf(OBSERVED, base + ks))
            like = logsumexp(terms)
        rows.append(r)
        weights.append(prior + like)
        r += 1
    weights = np.asarray(weights)
    probs = np.exp(weights - logsumexp(weights))
    out = os.path.join(os.path.dirname(__file__), "..",
                       "crates", "ang-core", "tests", "golden",
                       "branching_posterior.csv")
    with open(out, "w") as f:
        f.write("label,support,probability\n")
        for r, p in zip(rows, probs):
            f.write(f"r,{r},{p:.17g}\n")
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
