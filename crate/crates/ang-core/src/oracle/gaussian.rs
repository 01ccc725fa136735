//! Conjugate normal-normal posterior for the polar-method program: the
//! latent mean has a normal prior, observations share a known variance,
//! so the posterior is available in closed form.

use crate::special::normal_cdf;

#[derive(Debug, Clone)]
pub struct GaussSpec {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub lik_var: f64,
    pub observations: Vec<f64>,
}

impl Default for GaussSpec {
    fn default() -> GaussSpec {
        GaussSpec { prior_mean: 1.0, prior_var: 5.0, lik_var: 2.0, observations: vec![9.0, 8.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPosterior {
    pub mean: f64,
    pub var: f64,
}

impl GaussPosterior {
    pub fn cdf(&self, x: f64) -> f64 {
        normal_cdf(x, self.mean, self.var.sqrt())
    }
}

pub fn gaussian_posterior(spec: &GaussSpec) -> GaussPosterior {
    let n = spec.observations.len() as f64;
    let precision = 1.0 / spec.prior_var + n / spec.lik_var;
    let weighted = spec.prior_mean / spec.prior_var
        + spec.observations.iter().sum::<f64>() / spec.lik_var;
    GaussPosterior { mean: weighted / precision, var: 1.0 / precision }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_two_observation_posterior_hand_computed() {
        // precision = 1/5 + 2/2 = 1.2, mean = (1/5 + 17/2)/1.2 = 7.25.
        let p = gaussian_posterior(&GaussSpec::default());
        assert!((p.mean - 7.25).abs() < 1e-12);
        assert!((p.var - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn test_no_observations_returns_prior() {
        let spec = GaussSpec { observations: vec![], ..GaussSpec::default() };
        let p = gaussian_posterior(&spec);
        assert!((p.mean - 1.0).abs() < 1e-12);
        assert!((p.var - 5.0).abs() < 1e-12);
    }

    #[test]
    fn test_cdf_properties() {
        let p = gaussian_posterior(&GaussSpec::default());
        assert!((p.cdf(p.mean) - 0.5).abs() < 1e-12);
        assert!(p.cdf(p.mean + 1.0) > p.cdf(p.mean));
        assert!(p.cdf(-1e6) < 1e-12);
        assert!(p.cdf(1e6) > 1.0 - 1e-12);
        // One posterior sd ≈ Φ(1).
        let one_sd = p.cdf(p.mean + p.var.sqrt());
        assert!((one_sd - 0.841_344_746_068_542_9).abs() < 1e-9);
    }

    #[test]
    fn test_strong_data_overwhelms_prior() {
        let spec = GaussSpec {
            observations: std::iter::repeat(4.0).take(10_000).collect(),
            ..GaussSpec::default()
        };
        let p = gaussian_posterior(&spec);
        assert!((p.mean - 4.0).abs() < 1e-2);
        assert!(p.var < 1e-3);
    }
}
