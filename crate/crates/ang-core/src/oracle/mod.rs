//! Exact ground truth for the four conditional measure-test programs,
//! computed without the interpreter or the engines. Each oracle sticks to
//! closed-form math (forward-backward, partition enumeration, pmf algebra,
//! conjugate updates) with its own self-contained special functions.

pub mod branching;
pub mod dp;
pub mod gaussian;
pub mod hmm;

pub use branching::{branching_posterior, fib_legacy, BranchingSpec};
pub use dp::{dp_cluster_count_posterior, ng_block_log_marginal, DpSpec};
pub use gaussian::{gaussian_posterior, GaussPosterior, GaussSpec};
pub use hmm::{hmm_marginals, hmm_trailing_predictive, HmmSpec};

/// log(Σ exp(xs)) with max subtraction; −∞ for an empty or all-−∞ input.
pub(crate) fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Exact ln k! by direct accumulation (k small in every oracle).
pub(crate) fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Exact lnΓ(x) for positive integer and half-integer x via the
/// recurrence lnΓ(x+1) = ln x + lnΓ(x), anchored at Γ(1)=1, Γ(½)=√π.
pub(crate) fn ln_gamma_half(x: f64) -> f64 {
    let two_x = (2.0 * x).round();
    assert!(
        (2.0 * x - two_x).abs() < 1e-12 && x > 0.0,
        "exact lnΓ needs positive half-integer input, got {x}"
    );
    let mut acc = if two_x as u64 % 2 == 0 {
        0.0
    } else {
        0.5 * std::f64::consts::PI.ln()
    };
    let mut t = if two_x as u64 % 2 == 0 { 1.0 } else { 0.5 };
    while t + 0.5 < x + 0.25 {
        acc += t.ln();
        t += 1.0;
    }
    acc
}

/// Poisson log-pmf from first principles.
pub(crate) fn pois_lpmf(rate: f64, k: u64) -> f64 {
    k as f64 * rate.ln() - rate - ln_factorial(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_ln_factorial_exact() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(6) - 720.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn test_ln_gamma_half_anchors() {
        assert!((ln_gamma_half(1.0)).abs() < 1e-15);
        assert!((ln_gamma_half(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-15);
        // Γ(3.5) = 15/8 √π
        let want = (15.0 / 8.0f64).ln() + 0.5 * std::f64::consts::PI.ln();
        assert!((ln_gamma_half(3.5) - want).abs() < 1e-12);
        assert!((ln_gamma_half(6.0) - 120.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn test_pois_lpmf_matches_primitive_density() {
        use crate::erp::{erp_log_pdf, ErpParams, ErpType};
        use crate::value::Value;
        for (rate, k) in [(4.0, 6u64), (6.0, 6), (0.5, 0), (13.0, 2)] {
            let p = ErpParams::from_args(ErpType::Poisson, &[Value::Num(rate)]).unwrap();
            let a = erp_log_pdf(&p, &Value::Num(k as f64));
            let b = pois_lpmf(rate, k);
            assert!((a - b).abs() < 1e-10, "{rate} {k}: {a} vs {b}");
        }
    }

    #[test]
    fn test_lse_basics() {
        assert_eq!(lse(&[]), f64::NEG_INFINITY);
        assert_eq!(lse(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = lse(&[0.0, 0.0]);
        assert!((v - 2.0f64.ln()).abs() < 1e-15);
    }
}
