//! Particle independent MH: every sweep runs a fresh SMC pass and accepts
//! it against the incumbent with the ratio of evidence estimates. Output
//! follows one weight-drawn particle lineage of the accepted pass.

use std::sync::Arc;

use super::smc::smc_pass;
use super::{Driver, EngineError, EngineReport};
use crate::value::Value;

pub(crate) fn run_pimh(driver: &mut Driver) -> Result<EngineReport, EngineError> {
    let l = driver.cfg.particles;
    let s_total = driver.cfg.sweeps;
    let mut prev: Option<(f64, Vec<(Arc<str>, Value)>)> = None;
    let mut accepted = 0u64;
    for sweep in 1..=s_total {
        let pass = smc_pass(driver, None)?;
        let accept = match &prev {
            None => true,
            Some((incumbent_z, _)) => {
                driver.rng.uniform().ln() < pass.log_evidence - incumbent_z
            }
        };
        if accept {
            // The pass ends resampled, so particles are equally weighted
            // and the weight-proportional lineage draw is uniform.
            let j = driver.rng.below(l as u64) as usize;
            prev = Some((pass.log_evidence, pass.particles[j].records.clone()));
            accepted += 1;
        }
        let (z, records) = prev.as_ref().expect("first sweep always accepts");
        let sim = (l * sweep) as u64;
        for (label, value) in records {
            driver.emit(sweep as u32, sim, label, value);
        }
        driver.sink.log_evidence(sweep as u32, *z);
    }
    Ok(EngineReport {
        sweeps: s_total as u32,
        simulations: (l * s_total) as u64,
        applies: driver.applies,
        log_evidence: prev.map(|(z, _)| z),
        accepted,
        proposed: s_total as u64,
        ..EngineReport::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_engine, EngineConfig, EngineKind, VecSink};
    use crate::program::load_source;

    const FLIP_POSTERIOR: &str =
        "[assume x (flip 0.5)] [observe (normal (if x 1 0) 1) 1] [predict x]";

    fn cfg(l: usize, s: usize, seed: u64) -> EngineConfig {
        EngineConfig {
            engine: EngineKind::Pimh,
            particles: l,
            sweeps: s,
            seed,
            ..EngineConfig::default()
        }
    }

    #[test]
    fn test_deterministic_program_always_accepts() {
        let prog = load_source("[observe (normal 0 1) 0] [predict (+ 1 1)]", "t").unwrap();
        let mut sink = VecSink::default();
        let report = run_engine(&prog, &cfg(4, 50, 0), &mut sink).unwrap();
        assert_eq!(report.accepted, 50);
        assert_eq!(report.proposed, 50);
        let z = -0.918_938_533_204_672_7;
        assert!((report.log_evidence.unwrap() - z).abs() < 1e-12);
        assert!(sink.evidences.iter().all(|(_, v)| (v - z).abs() < 1e-12));
    }

    #[test]
    fn test_flip_posterior_rough_anchor() {
        let prog = load_source(FLIP_POSTERIOR, "t").unwrap();
        let mut sink = VecSink::default();
        let report = run_engine(&prog, &cfg(30, 800, 2), &mut sink).unwrap();
        let p = sink
            .records
            .iter()
            .filter(|r| matches!(r.value, Value::Bool(true)))
            .count() as f64
            / sink.records.len() as f64;
        assert!((p - 0.622_459).abs() < 0.04, "{p}");
        assert!(report.accepted > 1);
    }

    #[test]
    fn test_acceptance_rate_grows_with_particles() {
        let prog = load_source(FLIP_POSTERIOR, "t").unwrap();
        let rate = |l: usize| {
            let mut sink = VecSink::default();
            let report = run_engine(&prog, &cfg(l, 200, 3), &mut sink).unwrap();
            report.accepted as f64 / report.proposed as f64
        };
        let small = rate(2);
        let large = rate(512);
        assert!(large > small, "{small} vs {large}");
        assert!(large > 0.85, "{large}");
    }

    #[test]
    fn test_rejected_sweeps_re_emit_incumbent() {
        let prog = load_source(FLIP_POSTERIOR, "t").unwrap();
        let mut sink = VecSink::default();
        let report = run_engine(&prog, &cfg(3, 100, 5), &mut sink).unwrap();
        assert_eq!(sink.records.len(), 100);
        assert_eq!(sink.evidences.len(), 100);
        // Value changes between consecutive sweeps only on acceptance.
        let changes = sink
            .records
            .windows(2)
            .filter(|w| !w[0].value.data_eq(&w[1].value))
            .count() as u64;
        assert!(changes < report.accepted);
        assert!(report.accepted < report.proposed);
    }

    #[test]
    fn test_pimh_is_seed_deterministic() {
        let prog = load_source(FLIP_POSTERIOR, "t").unwrap();
        let run = |seed| {
            let mut sink = VecSink::default();
            run_engine(&prog, &cfg(6, 40, seed), &mut sink).unwrap();
            (sink.records, sink.evidences)
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn test_single_particle_is_allowed() {
        let prog = load_source(FLIP_POSTERIOR, "t").unwrap();
        let mut sink = VecSink::default();
        let report = run_engine(&prog, &cfg(1, 10, 1), &mut sink).unwrap();
        assert_eq!(report.simulations, 10);
        assert_eq!(sink.records.len(), 10);
    }
}
