//! Sequential Monte Carlo: propose from the prior directive-by-directive,
//! weight each particle by the observe likelihood it just scored, and
//! multinomially resample the whole population at every observe.

use super::{
    resample_indices, DirKind, Driver, EngineError, EngineReport, ForkMode, Particle,
};

pub(crate) struct PassOut {
    pub particles: Vec<Particle>,
    /// Σ_n [ log Σ_ℓ w̃_n^(ℓ) − log L ]; 0 when nothing was observed.
    pub log_evidence: f64,
}

/// One full SMC pass over the program. When `emit` is set, every particle
/// reports at every predict directive (sweep/sim fixed by the caller).
pub(crate) fn smc_pass(
    driver: &mut Driver,
    emit: Option<(u32, u64)>,
) -> Result<PassOut, EngineError> {
    let l = driver.cfg.particles;
    let mut particles: Vec<Particle> = (0..l)
        .map(|_| Particle::blank(&driver.prog, driver.alloc.next_stream()))
        .collect();
    let mut log_evidence = 0.0;
    for dir in 0..driver.n_directives() {
        let fork_fresh = driver.cfg.fork_mode == ForkMode::EveryDirective;
        let outs = driver.advance_all(&mut particles, dir, fork_fresh)?;
        match driver.dir_kind(dir) {
            DirKind::Assume => {}
            DirKind::Predict => {
                if let Some((sweep, sim)) = emit {
                    for out in &outs {
                        let (label, value) = out.predicted.as_ref().expect("predict emits");
                        driver.emit(sweep, sim, label, value);
                    }
                }
            }
            DirKind::Observe(observe_index) => {
                let weights: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
                let indices = resample_indices(l, &weights, &mut driver.rng)
                    .ok_or(EngineError::Degenerate { observe_index })?;
                let m = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = weights.iter().map(|w| (w - m).exp()).sum();
                log_evidence += m + sum.ln() - (l as f64).ln();
                particles = driver.materialize(&mut particles, &indices, &weights);
            }
        }
    }
    Ok(PassOut { particles, log_evidence })
}

pub(crate) fn run_smc(driver: &mut Driver) -> Result<EngineReport, EngineError> {
    let l = driver.cfg.particles as u64;
    let pass = smc_pass(driver, Some((1, l)))?;
    driver.sink.log_evidence(1, pass.log_evidence);
    Ok(EngineReport {
        sweeps: 1,
        simulations: l,
        applies: driver.applies,
        log_evidence: Some(pass.log_evidence),
        directive_forks: driver.directive_forks,
        ..EngineReport::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_engine, EngineConfig, EngineKind, VecSink};
    use crate::program::load_source;
    use crate::value::Value;

    fn cfg(l: usize, seed: u64) -> EngineConfig {
        EngineConfig {
            engine: EngineKind::Smc,
            particles: l,
            sweeps: 1,
            seed,
            ..EngineConfig::default()
        }
    }

    #[test]
    fn test_no_observes_evidence_zero_no_resampling() {
        let prog = load_source("[assume x (normal 0 1)] [predict x]", "t").unwrap();
        let mut sink = VecSink::default();
        let report = run_engine(&prog, &cfg(50, 1), &mut sink).unwrap();
        assert_eq!(report.log_evidence, Some(0.0));
        assert_eq!(sink.records.len(), 50);
        // Without resampling every particle keeps weight 0 and samples
        // independently: values are all distinct.
        let mut vals: Vec<f64> =
            sink.records.iter().map(|r| r.value.num().unwrap()).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        assert_eq!(vals.len(), 50);
    }

    #[test]
    fn test_conjugate_evidence_unbiasedness() {
        // [assume mu (normal 0 1)] [observe (normal mu 1) 0]:
        // marginal likelihood N(0; 0, sqrt 2), log = -1.2655121...
        let prog =
            load_source("[assume mu (normal 0 1)] [observe (normal mu 1) 0]", "t").unwrap();
        let truth = -0.5 * (4.0 * std::f64::consts::PI).ln();
        let mut sum = 0.0;
        let runs = 100;
        for seed in 0..runs {
            let mut sink = VecSink::default();
            let report = run_engine(&prog, &cfg(1000, seed), &mut sink).unwrap();
            sum += report.log_evidence.unwrap();
        }
        let mean = sum / runs as f64;
        assert!((mean - truth).abs() < 0.05, "mean {mean} truth {truth}");
    }

    #[test]
    fn test_degenerate_sweep_reports_observe_index() {
        // Second observe is impossible: flip(1.0) can only be true, and
        // the discrete weight on the observed value is zero.
        let prog = load_source(
            "[assume x (flip 1.0)]
             [observe (normal 0 1) 0]
             [observe (discrete (list (if x 0 1) (if x 0 1) 1)) 0]",
            "t",
        )
        .unwrap();
        let mut sink = VecSink::default();
        let err = run_engine(&prog, &cfg(20, 3), &mut sink).unwrap_err();
        match err {
            EngineError::Degenerate { observe_index } => assert_eq!(observe_index, 1),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn test_smc_is_seed_deterministic() {
        let prog = load_source(
            "[assume x (normal 0 1)] [observe (normal x 1) 1] [predict x]",
            "t",
        )
        .unwrap();
        let run = |seed| {
            let mut sink = VecSink::default();
            let report = run_engine(&prog, &cfg(64, seed), &mut sink).unwrap();
            (report.log_evidence, sink.records)
        };
        let (e1, r1) = run(5);
        let (e2, r2) = run(5);
        assert_eq!(e1, e2);
        assert_eq!(r1, r2);
        let (e3, _) = run(6);
        assert_ne!(e1, e3);
    }

    #[test]
    fn test_posterior_mean_of_conjugate_pair() {
        // Posterior of mu given y=2 under prior N(0,1), lik N(mu,1):
        // N(1, 1/2). SMC with resampling at the observe then predicting mu.
        let prog = load_source(
            "[assume mu (normal 0 1)] [observe (normal mu 1) 2] [predict mu]",
            "t",
        )
        .unwrap();
        let mut sink = VecSink::default();
        run_engine(&prog, &cfg(20_000, 11), &mut sink).unwrap();
        let vals: Vec<f64> = sink.records.iter().map(|r| r.value.num().unwrap()).collect();
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
        assert!((var - 0.5).abs() < 0.05, "var {var}");
    }

    #[test]
    fn test_sim_and_sweep_labels() {
        let prog = load_source("[predict (flip 0.5)]", "t").unwrap();
        let mut sink = VecSink::default();
        run_engine(&prog, &cfg(8, 0), &mut sink).unwrap();
        assert!(sink.records.iter().all(|r| r.sweep == 1 && r.sim == 8));
        assert!(sink
            .records
            .iter()
            .all(|r| matches!(r.value, Value::Bool(_)) && &*r.label == "(flip 0.5)"));
    }
}
