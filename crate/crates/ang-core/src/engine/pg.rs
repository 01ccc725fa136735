//! Particle Gibbs: iterated conditional SMC. Sweep 1 is plain SMC; every
//! later sweep re-inserts one retained trace, advanced by deterministic
//! replay of its recorded random database, into each resampling step with
//! its stored observe weight, which guarantees the correct stationary
//! distribution.

use super::smc::smc_pass;
use super::{
    resample_indices, DirKind, Driver, EngineError, EngineReport, ForkMode, Particle,
};
use crate::trace::RandomDB;

pub(crate) fn run_pg(driver: &mut Driver) -> Result<EngineReport, EngineError> {
    let l = driver.cfg.particles;
    let s_total = driver.cfg.sweeps;
    let mut report = EngineReport::default();
    if s_total == 0 {
        return Ok(report);
    }
    let pass = smc_pass(driver, Some((1, l as u64)))?;
    let mut finals = pass.particles;
    for sweep in 2..=s_total {
        let pick = driver.rng.below(l as u64) as usize;
        let retained_db = finals[pick].state.db.clone();
        finals = pg_sweep(driver, sweep as u32, retained_db)?;
    }
    report.sweeps = s_total as u32;
    report.simulations = (l * s_total) as u64;
    report.applies = driver.applies;
    report.directive_forks = driver.directive_forks;
    Ok(report)
}

fn pg_sweep(
    driver: &mut Driver,
    sweep: u32,
    retained_db: RandomDB,
) -> Result<Vec<Particle>, EngineError> {
    let l = driver.cfg.particles;
    let sim = (l as u64) * (sweep as u64);
    let retained_lls = retained_db.observe_log_likes.clone();
    let mut particles: Vec<Particle> = (0..l - 1)
        .map(|_| Particle::blank(&driver.prog, driver.alloc.next_stream()))
        .collect();
    particles.push(Particle::retained_from(
        &driver.prog,
        driver.alloc.next_stream(),
        retained_db,
    ));
    for dir in 0..driver.n_directives() {
        let fork_fresh = driver.cfg.fork_mode == ForkMode::EveryDirective;
        let outs = driver.advance_all(&mut particles, dir, fork_fresh)?;
        match driver.dir_kind(dir) {
            DirKind::Assume => {}
            DirKind::Predict => {
                for out in &outs {
                    let (label, value) = out.predicted.as_ref().expect("predict emits");
                    driver.emit(sweep, sim, label, value);
                }
            }
            DirKind::Observe(observe_index) => {
                let n = observe_index as usize;
                // The retained particle enters the pool with the weight
                // recorded in its trace; replay recomputes the same number.
                let stored = retained_lls[n];
                debug_assert!(
                    (particles[l - 1].log_weight - stored).abs() < 1e-9,
                    "retained replay drifted: {} vs stored {stored}",
                    particles[l - 1].log_weight
                );
                particles[l - 1].log_weight = stored;
                let weights: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
                let indices = resample_indices(l - 1, &weights, &mut driver.rng)
                    .ok_or(EngineError::Degenerate { observe_index })?;
                let mut new_set = driver.materialize(&mut particles, &indices, &weights);
                let retained = particles.pop().expect("retained sits in the last slot");
                debug_assert!(retained.retained && new_set.iter().all(|p| !p.retained));
                new_set.push(retained);
                particles = new_set;
            }
        }
    }
    Ok(particles)
}
