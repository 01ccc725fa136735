//! Exact cluster-count posterior for the CRP mixture of normal-gamma
//! components, by enumerating all set partitions of the data. Ten points
//! give Bell(10) = 115975 partitions, cheap to sum exactly.

use super::{ln_factorial, ln_gamma_half, lse};

#[derive(Debug, Clone)]
pub struct DpSpec {
    pub alpha: f64,
    pub data: Vec<f64>,
    /// Component prior: mean ~ N(mu0, 1/(kappa*prec)), prec ~ Gamma(a, rate b).
    pub mu0: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for DpSpec {
    fn default() -> DpSpec {
        DpSpec {
            alpha: 1.72,
            data: vec![1.0, 1.1, 1.2, -10.0, -15.0, -20.0, 0.01, 0.1, 0.05, 0.0],
            mu0: 0.0,
            kappa: 0.1,
            a: 1.0,
            b: 10.0,
        }
    }
}

/// Marginal likelihood of one block under the normal-gamma prior,
/// precision integrated against Gamma(a, rate b).
pub fn ng_block_log_marginal(spec: &DpSpec, block: &[f64]) -> f64 {
    let n = block.len() as f64;
    assert!(n > 0.0);
    let mean = block.iter().sum::<f64>() / n;
    let ss: f64 = block.iter().map(|y| (y - mean) * (y - mean)).sum();
    let kn = spec.kappa + n;
    let an = spec.a + n / 2.0;
    let bn = spec.b
        + 0.5 * ss
        + spec.kappa * n * (mean - spec.mu0) * (mean - spec.mu0) / (2.0 * kn);
    ln_gamma_half(an) - ln_gamma_half(spec.a) + spec.a * spec.b.ln() - an * bn.ln()
        + 0.5 * (spec.kappa.ln() - kn.ln())
        - (n / 2.0) * (2.0 * std::f64::consts::PI).ln()
}

/// P(K = k clusters | data) for k in 0..=n; index 0 is always zero.
pub fn dp_cluster_count_posterior(spec: &DpSpec) -> Vec<f64> {
    let n = spec.data.len();
    let mut by_k: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    let mut count = 0usize;
    // Restricted-growth recursion: item i joins an existing block or
    // opens block `blocks.len()`, visiting each partition exactly once.
    fn rec(
        spec: &DpSpec,
        i: usize,
        blocks: &mut Vec<Vec<f64>>,
        by_k: &mut [Vec<f64>],
        count: &mut usize,
    ) {
        let n = spec.data.len();
        if i == n {
            *count += 1;
            let k = blocks.len();
            let mut lw = k as f64 * spec.alpha.ln();
            for idx in 0..n {
                lw -= (spec.alpha + idx as f64).ln();
            }
            for block in blocks.iter() {
                lw += ln_factorial(block.len() as u64 - 1);
                lw += ng_block_log_marginal(spec, block);
            }
            by_k[k].push(lw);
            return;
        }
        let y = spec.data[i];
        let existing = blocks.len();
        for j in 0..=existing {
            if j == existing {
                blocks.push(vec![y]);
            } else {
                blocks[j].push(y);
            }
            rec(spec, i + 1, blocks, by_k, count);
            if j == existing {
                blocks.pop();
            } else {
                blocks[j].pop();
            }
        }
    }
    rec(spec, 0, &mut blocks, &mut by_k, &mut count);
    if n == 10 {
        assert_eq!(count, 115975, "Bell(10) partitions");
    }
    let per_k: Vec<f64> = by_k
        .iter()
        .map(|ws| if ws.is_empty() { f64::NEG_INFINITY } else { lse(ws) })
        .collect();
    let z = lse(&per_k);
    per_k
        .iter()
        .map(|&w| if w == f64::NEG_INFINITY { 0.0 } else { (w - z).exp() })
        .collect()
}
