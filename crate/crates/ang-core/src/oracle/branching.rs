//! Exact posterior over r for the stochastic-branching program: r ~ Poisson(4),
//! the observation rate is 6 when r > 4 and fib(3r) + Poisson(4) otherwise,
//! and 6 is observed. The latent inner Poisson draw is summed out.

use super::pois_lpmf;

#[derive(Debug, Clone)]
pub struct BranchingSpec {
    pub prior_rate: f64,
    pub inner_rate: f64,
    pub large_rate: f64,
    pub observed: u64,
}

impl Default for BranchingSpec {
    fn default() -> BranchingSpec {
        BranchingSpec { prior_rate: 4.0, inner_rate: 4.0, large_rate: 6.0, observed: 6 }
    }
}

/// Fibonacci with the 1, 1, 2, 3, 5, ... convention (fib(0) = fib(1) = 1).
pub fn fib_legacy(n: u64) -> u64 {
    let (mut a, mut b) = (1u64, 1u64);
    for _ in 0..n {
        (a, b) = (b, a + b);
    }
    a
}

/// Normalized posterior P(r | observation) as (r, probability) pairs.
/// The support is truncated where the Poisson prior drops below 1e-12.
pub fn branching_posterior(spec: &BranchingSpec) -> Vec<(u32, f64)> {
    let mut weights: Vec<(u32, f64)> = Vec::new();
    let mut r = 0u32;
    loop {
        let prior = pois_lpmf(spec.prior_rate, u64::from(r));
        if prior < (1e-12f64).ln() && r > 4 {
            break;
        }
        let like = if r > 4 {
            pois_lpmf(spec.large_rate, spec.observed)
        } else {
            // Sum out k ~ Poisson(inner_rate); the per-term likelihood is
            // bounded by 1, so a prior tail below 1e-14 is negligible.
            let base = fib_legacy(3 * u64::from(r));
            let mut terms = Vec::new();
            let mut tail = 1.0;
            let mut k = 0u64;
            while tail > 1e-14 {
                let lp = pois_lpmf(spec.inner_rate, k);
                terms.push(lp + pois_lpmf((base + k) as f64, spec.observed));
                tail -= lp.exp();
                k += 1;
            }
            super::lse(&terms)
        };
        weights.push((r, prior + like));
        r += 1;
    }
    let z = super::lse(&weights.iter().map(|&(_, w)| w).collect::<Vec<_>>());
    weights.into_iter().map(|(r, w)| (r, (w - z).exp())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_fib_convention() {
        let want = [1u64, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233];
        for (n, &w) in want.iter().enumerate() {
            assert_eq!(fib_legacy(n as u64), w);
        }
    }

    #[test]
    fn test_posterior_is_proper() {
        let post = branching_posterior(&BranchingSpec::default());
        let s: f64 = post.iter().map(|&(_, p)| p).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(post.len() > 20, "support truncated too early: {}", post.len());
        assert!(post.iter().all(|&(_, p)| p >= 0.0));
    }

    #[test]
    fn test_large_fib_rate_kills_r_equals_4() {
        // fib(12) = 233 forces an observation rate of at least 233,
        // so seeing 6 is essentially impossible.
        let post = branching_posterior(&BranchingSpec::default());
        let p4 = post.iter().find(|&&(r, _)| r == 4).unwrap().1;
        assert!(p4 < 1e-80, "P(r=4) = {p4}");
    }

    #[test]
    fn test_tail_ratio_to_prior_is_constant() {
        // Every r > 4 shares the same likelihood, so posterior/prior
        // must be one constant across the whole upper tail.
        let post = branching_posterior(&BranchingSpec::default());
        let ratio = |r: u32| {
            let p = post.iter().find(|&&(q, _)| q == r).unwrap().1;
            p / pois_lpmf(4.0, u64::from(r)).exp()
        };
        let base = ratio(5);
        for r in 6..=10 {
            assert!((ratio(r) / base - 1.0).abs() < 1e-12, "r = {r}");
        }
    }

    #[test]
    fn test_hand_summed_r0_weight() {
        // r = 0: base = fib(0) = 1, weight = prior(0)·Σ_k pois(k;4)·pois(6;1+k).
        let spec = BranchingSpec::default();
        let mut like = 0.0f64;
        for k in 0..200u64 {
            like += (pois_lpmf(4.0, k) + pois_lpmf(1.0 + k as f64, 6)).exp();
        }
        let unnorm0 = pois_lpmf(4.0, 0).exp() * like;
        let post = branching_posterior(&spec);
        // Rebuild the normalizer from the returned distribution.
        let p0 = post[0].1;
        let p5 = post.iter().find(|&&(r, _)| r == 5).unwrap().1;
        let unnorm5 = (pois_lpmf(4.0, 5) + pois_lpmf(6.0, 6)).exp();
        assert!(((p0 / p5) - (unnorm0 / unnorm5)).abs() < 1e-12);
    }

    #[test]
    fn test_golden_file_match() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/tests/golden/branching_posterior.csv"
        ))
        .expect("golden file present");
        let post = branching_posterior(&BranchingSpec::default());
        let mut checked = 0;
        for line in text.lines().skip(1) {
            let mut parts = line.split(',');
            let _label = parts.next().unwrap();
            let r: u32 = parts.next().unwrap().parse().unwrap();
            let p: f64 = parts.next().unwrap().parse().unwrap();
            let ours = post.iter().find(|&&(q, _)| q == r).map_or(0.0, |&(_, p)| p);
            assert!((ours - p).abs() < 1e-8, "r={r}: {ours} vs {p}");
            checked += 1;
        }
        assert!(checked >= 15);
    }
}
