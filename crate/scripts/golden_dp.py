#!/usr/bin/env python3
"""Golden cluster-count posterior for the CRP normal-gamma mixture, by
exhaustive set-partition enumeration with scipy's gammaln (independent of
the crate's half-integer recurrence). Writes
crates/ang-core/tests/golden/dp_cluster_posterior.csv."""

import math
import os

import numpy as np
from scipy.special import gammaln, logsumexp

ALPHA = 1.72
DATA = [1.0, 1.1, 1.2, -10.0, -15.0, -20.0, 0.01, 0.1, 0.05, 0.0]
MU0, KAPPA, A, B = 0.0, 0.1, 1.0, 10.0  # B is a rate


def block_log_marginal(block):
    y = np.asarray(block)
    n = len(y)
    mean = y.mean()
    ss = float(((y - mean) ** 2).sum())
    kn = KAPPA + n
    an = A + n / 2.0
    bn = B + 0.5 * ss + KAPPA * n * (mean - MU0) ** 2 / (2.0 * kn)
    return (gammaln(an) - gammaln(A) + A * math.log(B) - an * math.log(bn)
            + 0.5 * (math.log(KAPPA) - math.log(kn))
            - (n / 2.0) * math.log(2.0 * math.pi))


def partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def main():
    n = len(DATA)
    by_k = {}
    count = 0
    crp_denom = sum(math.log(ALPHA + i) for i in range(n))
    for part in partitions(DATA):
        count += 1
        k = len(part)
        lw = k * math.log(ALPHA) - crp_denom
        for block in part:
            lw += gammaln(len(block))  # log (n_j - 1)!
            lw += block_log_marginal(block)
        by_k.setdefault(k, []).append(lw)
    assert count == 115975, count
    log_per_k = {k: logsumexp(ws) for k, ws in by_k.items()}
    z = logsumexp(list(log_per_k.values()))
    out = os.path.join(os.path.dirname(__file__), "..",
                       "crates", "ang-core", "tests", "golden",
                       "dp_cluster_posterior.csv")
    with open(out, "w") as f:
        f.write("label,support,probability\n")
        for k in range(1, n + 1):
            p = math.exp(log_per_k[k] - z) if k in log_per_k else 0.0
            f.write(f"(K),{k},{p:.17g}\n")
    print(f"wrote posterior over K to {out}")


if __name__ == "__main__":
    main()
