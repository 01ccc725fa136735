#!/usr/bin/env python3
"""Golden smoothed marginals for the three-state HMM, computed in
unscaled log space (independent of the crate's scaled linear-space pass).
Writes crates/ang-core/tests/golden/hmm_marginals.csv."""

import os

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

INITIAL = np.log(np.full(3, 1.0 / 3.0))
TRANS = np.log(np.array([
    [0.1, 0.5, 0.4],
    [0.2, 0.2, 0.6],
    [0.15, 0.15, 0.7],
]))
MEANS = np.array([-1.0, 1.0, 0.0])
STD = 1.0
OBS = [0.9, 0.8, 0.7, 0.0, -0.025, 5.0, 2.0, 0.1, 0.0, 0.13, 0.45, 6.0,
       0.2, 0.3, -1.0, -1.0]


def emission_logpdf(y):
    return norm.logpdf(y, loc=MEANS, scale=STD)


def main():
    n = len(OBS)
    log_alpha = np.zeros((n + 1, 3))
    log_alpha[0] = INITIAL
    for i, y in enumerate(OBS):
        step = logsumexp(log_alpha[i][:, None] + TRANS, axis=0)
        log_alpha[i + 1] = step + emission_logpdf(y)
    log_beta = np.zeros((n + 1, 3))
    for i in range(n - 1, -1, -1):
        inner = TRANS + emission_logpdf(OBS[i])[None, :] + log_beta[i + 1][None, :]
        log_beta[i] = logsumexp(inner, axis=1)
    rows = []
    gammas = np.zeros((n + 1, 3))
    for i in range(n + 1):
        lg = log_alpha[i] + log_beta[i]
        g = np.exp(lg - logsumexp(lg))
        gammas[i] = g
        for k in range(3):
            rows.append((f"(get-state {i})", k, g[k]))
    trailing = gammas[n] @ np.exp(TRANS)
    for k in range(3):
        rows.append(("trailing", k, trailing[k]))
    out = os.path.join(os.path.dirname(__file__), "..",
                       "crates", "ang-core", "tests", "golden",
                       "hmm_marginals.csv")
    with open(out, "w") as f:
        f.write("label,support,probability\n")
        for label, k, p in rows:
            f.write(f"{label},{k},{p:.17g}\n")
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
