//! Elementary random primitives: exact log-densities plus samplers.
//!
//! Densities are written out by hand (they are what inference scores);
//! draws go through `rand_distr` driven by our deterministic streams.
//! Each type has both directions, and the measure-test battery checks
//! sampler/density agreement for every one of them.

use std::sync::Arc;

use rand_distr::Distribution;

use crate::rng::RngStream;
use crate::special::{ln_gamma, normal_cdf, reg_inc_beta, reg_inc_gamma, LN_2PI};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErpType {
    Normal,
    Gamma,
    Poisson,
    Flip,
    Discrete,
    Categorical,
    UniformContinuous,
    Beta,
}

impl ErpType {
    pub fn name(self) -> &'static str {
        match self {
            ErpType::Normal => "normal",
            ErpType::Gamma => "gamma",
            ErpType::Poisson => "poisson",
            ErpType::Flip => "flip",
            ErpType::Discrete => "discrete",
            ErpType::Categorical => "categorical",
            ErpType::UniformContinuous => "uniform-continuous",
            ErpType::Beta => "beta",
        }
    }

    pub fn by_name(name: &str) -> Option<ErpType> {
        Some(match name {
            "normal" => ErpType::Normal,
            "gamma" => ErpType::Gamma,
            "poisson" => ErpType::Poisson,
            "flip" => ErpType::Flip,
            "discrete" => ErpType::Discrete,
            "categorical" => ErpType::Categorical,
            "uniform-continuous" => ErpType::UniformContinuous,
            "beta" => ErpType::Beta,
            _ => return None,
        })
    }
}

/// Validated parameter snapshot for one draw.
///
/// `gamma` is shape/rate; `normal`'s second argument is the standard
/// deviation. Both conventions are fixed project-wide and shared by the
/// oracles.
#[derive(Debug, Clone)]
pub enum ErpParams {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, rate: f64 },
    Poisson { lambda: f64 },
    Flip { p: f64 },
    Discrete { weights: Arc<[f64]> },
    Categorical { items: Arc<[(Value, f64)]> },
    UniformContinuous { lo: f64, hi: f64 },
    Beta { a: f64, b: f64 },
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{erp}: {constraint}")]
pub struct ParamError {
    pub erp: &'static str,
    pub constraint: String,
}

fn param_err(erp: &'static str, constraint: impl Into<String>) -> ParamError {
    ParamError { erp, constraint: constraint.into() }
}

impl ErpParams {
    /// Build and validate parameters from evaluated argument values.
    pub fn from_args(t: ErpType, args: &[Value]) -> Result<ErpParams, ParamError> {
        let name = t.name();
        let nums = |n: usize| -> Result<Vec<f64>, ParamError> {
            if args.len() != n {
                return Err(param_err(name, format!("expects {n} arguments, got {}", args.len())));
            }
            args.iter()
                .map(|v| v.num().ok_or_else(|| param_err(name, "arguments must be numbers")))
                .collect()
        };
        match t {
            ErpType::Normal => {
                let a = nums(2)?;
                if !(a[1] > 0.0) {
                    return Err(param_err(name, format!("standard deviation must be > 0, got {}", a[1])));
                }
                Ok(ErpParams::Normal { mean: a[0], sd: a[1] })
            }
            ErpType::Gamma => {
                let a = nums(2)?;
                if !(a[0] > 0.0 && a[1] > 0.0) {
                    return Err(param_err(name, "shape and rate must be > 0"));
                }
                Ok(ErpParams::Gamma { shape: a[0], rate: a[1] })
            }
            ErpType::Poisson => {
                let a = nums(1)?;
                if !(a[0] > 0.0) {
                    return Err(param_err(name, "rate must be > 0"));
                }
                Ok(ErpParams::Poisson { lambda: a[0] })
            }
            ErpType::Flip => {
                let p = if args.is_empty() { 0.5 } else { nums(1)?[0] };
                if !(0.0..=1.0).contains(&p) {
                    return Err(param_err(name, "probability must be in [0, 1]"));
                }
                Ok(ErpParams::Flip { p })
            }
            ErpType::Discrete => {
                if args.len() != 1 {
                    return Err(param_err(name, "expects one weight-list argument"));
                }
                let items = args[0]
                    .iter_list()
                    .ok_or_else(|| param_err(name, "argument must be a list of weights"))?;
                let mut weights = Vec::with_capacity(items.len());
                for v in items {
                    let w = v.num().ok_or_else(|| param_err(name, "weights must be numbers"))?;
                    if !(w >= 0.0) || !w.is_finite() {
                        return Err(param_err(name, format!("weights must be >= 0, got {w}")));
                    }
                    weights.push(w);
                }
                if !(weights.iter().sum::<f64>() > 0.0) {
                    return Err(param_err(name, "weights must have positive sum"));
                }
                Ok(ErpParams::Discrete { weights: weights.into() })
            }
            ErpType::Categorical => {
                if args.len() != 1 {
                    return Err(param_err(name, "expects one list of (value weight) pairs"));
                }
                let items = args[0]
                    .iter_list()
                    .ok_or_else(|| param_err(name, "argument must be a list of (value weight) pairs"))?;
                let mut pairs = Vec::with_capacity(items.len());
                for it in items {
                    let pair = it
                        .iter_list()
                        .filter(|p| p.len() == 2)
                        .ok_or_else(|| param_err(name, "each item must be a (value weight) pair"))?;
                    let w = pair[1].num().ok_or_else(|| param_err(name, "weights must be numbers"))?;
                    if !(w >= 0.0) || !w.is_finite() {
                        return Err(param_err(name, format!("weights must be >= 0, got {w}")));
                    }
                    pairs.push((pair[0].clone(), w));
                }
                if !(pairs.iter().map(|p| p.1).sum::<f64>() > 0.0) {
                    return Err(param_err(name, "weights must have positive sum"));
                }
                Ok(ErpParams::Categorical { items: pairs.into() })
            }
            ErpType::UniformContinuous => {
                let a = nums(2)?;
                if !(a[0] < a[1]) {
                    return Err(param_err(name, "lower bound must be below upper bound"));
                }
                Ok(ErpParams::UniformContinuous { lo: a[0], hi: a[1] })
            }
            ErpType::Beta => {
                let a = nums(2)?;
                if !(a[0] > 0.0 && a[1] > 0.0) {
                    return Err(param_err(name, "both shape parameters must be > 0"));
                }
                Ok(ErpParams::Beta { a: a[0], b: a[1] })
            }
        }
    }

    pub fn erp_type(&self) -> ErpType {
        match self {
            ErpParams::Normal { .. } => ErpType::Normal,
            ErpParams::Gamma { .. } => ErpType::Gamma,
            ErpParams::Poisson { .. } => ErpType::Poisson,
            ErpParams::Flip { .. } => ErpType::Flip,
            ErpParams::Discrete { .. } => ErpType::Discrete,
            ErpParams::Categorical { .. } => ErpType::Categorical,
            ErpParams::UniformContinuous { .. } => ErpType::UniformContinuous,
            ErpParams::Beta { .. } => ErpType::Beta,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ErpParams::Normal { mean, sd } => format!("normal({mean}, {sd})"),
            ErpParams::Gamma { shape, rate } => format!("gamma({shape}, {rate})"),
            ErpParams::Poisson { lambda } => format!("poisson({lambda})"),
            ErpParams::Flip { p } => format!("flip({p})"),
            ErpParams::Discrete { weights } => format!("discrete({weights:?})"),
            ErpParams::Categorical { items } => format!("categorical({} items)", items.len()),
            ErpParams::UniformContinuous { lo, hi } => format!("uniform-continuous({lo}, {hi})"),
            ErpParams::Beta { a, b } => format!("beta({a}, {b})"),
        }
    }
}

/// Draw one value; advances the stream.
pub fn erp_sample(params: &ErpParams, rng: &mut RngStream) -> Value {
    match params {
        ErpParams::Normal { mean, sd } => {
            let d = rand_distr::Normal::new(*mean, *sd).expect("validated params");
            Value::Num(d.sample(rng))
        }
        ErpParams::Gamma { shape, rate } => {
            let d = rand_distr::Gamma::new(*shape, 1.0 / rate).expect("validated params");
            Value::Num(d.sample(rng))
        }
        ErpParams::Poisson { lambda } => {
            let d = rand_distr::Poisson::new(*lambda).expect("validated params");
            Value::Num(d.sample(rng))
        }
        ErpParams::Flip { p } => Value::Bool(rng.uniform() < *p),
        ErpParams::Discrete { weights } => {
            Value::Num(weighted_index(weights.iter().copied(), rng) as f64)
        }
        ErpParams::Categorical { items } => {
            let i = weighted_index(items.iter().map(|p| p.1), rng);
            items[i].0.clone()
        }
        ErpParams::UniformContinuous { lo, hi } => Value::Num(lo + (hi - lo) * rng.uniform()),
        ErpParams::Beta { a, b } => {
            let d = rand_distr::Beta::new(*a, *b).expect("validated params");
            Value::Num(d.sample(rng))
        }
    }
}

/// Inverse-CDF draw over nonnegative weights with positive sum.
fn weighted_index(weights: impl Iterator<Item = f64> + Clone, rng: &mut RngStream) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.uniform() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        u -= w;
        if u < 0.0 {
            return i;
        }
        last = i;
    }
    last
}

/// Exact log density / mass at `v`; -inf outside support or on type mismatch.
pub fn erp_log_pdf(params: &ErpParams, v: &Value) -> f64 {
    match params {
        ErpParams::Normal { mean, sd } => {
            let Some(x) = v.num() else { return f64::NEG_INFINITY };
            let z = (x - mean) / sd;
            -0.5 * z * z - sd.ln() - 0.5 * LN_2PI
        }
        ErpParams::Gamma { shape, rate } => {
            let Some(x) = v.num() else { return f64::NEG_INFINITY };
            if x <= 0.0 {
                return f64::NEG_INFINITY;
            }
            shape * rate.ln() - ln_gamma(*shape) + (shape - 1.0) * x.ln() - rate * x
        }
        ErpParams::Poisson { lambda } => {
            let Some(x) = v.num() else { return f64::NEG_INFINITY };
            if x < 0.0 || x.fract() != 0.0 {
                return f64::NEG_INFINITY;
            }
            x * lambda.ln() - lambda - ln_gamma(x + 1.0)
        }
        ErpParams::Flip { p } => match v {
            Value::Bool(true) => p.ln(),
            Value::Bool(false) => (1.0 - p).ln(),
            _ => f64::NEG_INFINITY,
        },
        ErpParams::Discrete { weights } => {
            let Some(x) = v.num() else { return f64::NEG_INFINITY };
            if x < 0.0 || x.fract() != 0.0 || x as usize >= weights.len() {
                return f64::NEG_INFINITY;
            }
            let total: f64 = weights.iter().sum();
            let w = weights[x as usize];
            if w <= 0.0 {
                f64::NEG_INFINITY
            } else {
                (w / total).ln()
            }
        }
        ErpParams::Categorical { items } => {
            let total: f64 = items.iter().map(|p| p.1).sum();
            let w: f64 = items.iter().filter(|p| p.0.data_eq(v)).map(|p| p.1).sum();
            if w <= 0.0 {
                f64::NEG_INFINITY
            } else {
                (w / total).ln()
            }
        }
        ErpParams::UniformContinuous { lo, hi } => {
            let Some(x) = v.num() else { return f64::NEG_INFINITY };
            if x < *lo || x > *hi {
                f64::NEG_INFINITY
            } else {
                -(hi - lo).ln()
            }
        }
        ErpParams::Beta { a, b } => {
            let Some(x) = v.num() else { return f64::NEG_INFINITY };
            if x <= 0.0 || x >= 1.0 {
                return f64::NEG_INFINITY;
            }
            let ln_beta = ln_gamma(*a) + ln_gamma(*b) - ln_gamma(a + b);
            (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta
        }
    }
}

/// CDF for the continuous types (measure tests and KS metrics).
pub fn erp_cdf(params: &ErpParams, x: f64) -> f64 {
    match params {
        ErpParams::Normal { mean, sd } => normal_cdf(x, *mean, *sd),
        ErpParams::Gamma { shape, rate } => {
            if x <= 0.0 {
                0.0
            } else {
                reg_inc_gamma(*shape, rate * x)
            }
        }
        ErpParams::UniformContinuous { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
        ErpParams::Beta { a, b } => reg_inc_beta(*a, *b, x.clamp(0.0, 1.0)),
        _ => panic!("cdf undefined for {}", self_name(params)),
    }
}

fn self_name(p: &ErpParams) -> &'static str {
    p.erp_type().name()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(t: ErpType, args: &[Value]) -> ErpParams {
        ErpParams::from_args(t, args).unwrap()
    }

    #[test]
    fn test_normal_log_pdf_at_mean() {
        let p = params(ErpType::Normal, &[Value::Num(0.0), Value::Num(1.0)]);
        let lp = erp_log_pdf(&p, &Value::Num(0.0));
        assert!((lp - (-0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn test_poisson_log_pmf_frozen() {
        // poisson(4) at 6; reference value from an independent
        // arbitrary-precision evaluation of log(lambda^k e^-lambda / k!).
        let p = params(ErpType::Poisson, &[Value::Num(4.0)]);
        let lp = erp_log_pdf(&p, &Value::Num(6.0));
        assert!((lp - (-2.261_485_045_290_757_3)).abs() < 1e-9, "{lp}");
        assert_eq!(erp_log_pdf(&p, &Value::Num(2.5)), f64::NEG_INFINITY);
        assert_eq!(erp_log_pdf(&p, &Value::Num(-1.0)), f64::NEG_INFINITY);
    }

    #[test]
    fn test_discrete_log_pmf() {
        let w = Value::list([Value::Num(0.1), Value::Num(0.5), Value::Num(0.4)]);
        let p = params(ErpType::Discrete, &[w]);
        assert!((erp_log_pdf(&p, &Value::Num(1.0)) - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(erp_log_pdf(&p, &Value::Num(3.0)), f64::NEG_INFINITY);
    }

    #[test]
    fn test_flip_degenerate() {
        let p = params(ErpType::Flip, &[Value::Num(1.0)]);
        let mut rng = RngStream::new(0);
        for _ in 0..100 {
            assert!(matches!(erp_sample(&p, &mut rng), Value::Bool(true)));
        }
    }

    #[test]
    fn test_uniform_support() {
        let p = params(ErpType::UniformContinuous, &[Value::Num(-1.0), Value::Num(1.0)]);
        let mut rng = RngStream::new(1);
        for _ in 0..1000 {
            let x = erp_sample(&p, &mut rng).num().unwrap();
            assert!((-1.0..1.0).contains(&x));
        }
        assert!((erp_log_pdf(&p, &Value::Num(0.3)) - (-(2.0f64).ln())).abs() < 1e-12);
        assert_eq!(erp_log_pdf(&p, &Value::Num(1.5)), f64::NEG_INFINITY);
    }

    #[test]
    fn test_categorical_values() {
        let items = Value::list([
            Value::list([Value::Sym("a".into()), Value::Num(1.0)]),
            Value::list([Value::Sym("b".into()), Value::Num(3.0)]),
        ]);
        let p = params(ErpType::Categorical, &[items]);
        assert!((erp_log_pdf(&p, &Value::Sym("b".into())) - 0.75f64.ln()).abs() < 1e-12);
        assert_eq!(erp_log_pdf(&p, &Value::Sym("c".into())), f64::NEG_INFINITY);
        let mut rng = RngStream::new(2);
        let mut b = 0;
        let n = 20_000;
        for _ in 0..n {
            if erp_sample(&p, &mut rng).data_eq(&Value::Sym("b".into())) {
                b += 1;
            }
        }
        let frac = b as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.01, "{frac}");
    }

    #[test]
    fn test_param_validation_errors() {
        assert!(ErpParams::from_args(ErpType::Normal, &[Value::Num(0.0), Value::Num(0.0)]).is_err());
        assert!(ErpParams::from_args(ErpType::Poisson, &[Value::Num(-1.0)]).is_err());
        assert!(ErpParams::from_args(
            ErpType::UniformContinuous,
            &[Value::Num(1.0), Value::Num(1.0)]
        )
        .is_err());
        let w = Value::list([Value::Num(0.0), Value::Num(0.0)]);
        assert!(ErpParams::from_args(ErpType::Discrete, &[w]).is_err());
    }

    #[test]
    fn test_gamma_density_integrates_against_cdf() {
        // Trapezoid integral of exp(log_pdf) matches the cdf difference.
        let p = params(ErpType::Gamma, &[Value::Num(2.5), Value::Num(1.5)]);
        let (a, b) = (0.3, 4.0);
        let n = 4000;
        let h = (b - a) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let x = a + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * erp_log_pdf(&p, &Value::Num(x)).exp();
        }
        acc *= h;
        let want = erp_cdf(&p, b) - erp_cdf(&p, a);
        assert!((acc - want).abs() < 1e-6, "{acc} vs {want}");
    }
}
