//! Random-database MH: single-site proposals over the addressed store of
//! random choices. One uniformly chosen entry is resampled from its prior
//! predictive; the program is replayed reusing every still-valid choice;
//! the acceptance ratio corrects for the trace-size asymmetry and the
//! probability of the entries each trace does not share.

use std::sync::Arc;

use super::{Driver, EngineError, EngineReport};
use crate::interp::{DirectiveResult, InterpState, ReplayCtx};
use crate::trace::RandomDB;
use crate::value::Value;

/// Log acceptance ratio for a move old → new:
/// [p(y,x′)·|x|·p(x\x′|x∩x′)] / [p(y,x)·|x′|·p(x′\x|x′∩x)], in logs.
/// Shared entries are the reused (non-fresh) ones; each side's exclusive
/// entries contribute the prior-predictive scores recorded in its trace.
pub fn accept_log_ratio(old: &RandomDB, new: &RandomDB) -> f64 {
    let j_new = new.log_joint();
    if j_new == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let j_old = old.log_joint();
    let fresh_sum: f64 =
        new.entries.values().filter(|e| e.fresh).map(|e| e.log_p).sum();
    let stale_sum: f64 = old
        .entries
        .values()
        .filter(|e| new.entries.get(&e.addr.key()).is_none_or(|p| p.fresh))
        .map(|e| e.log_p)
        .sum();
    (j_new + (old.len() as f64).ln() + stale_sum)
        - (j_old + (new.len() as f64).ln() + fresh_sum)
}

fn predicts(results: &[DirectiveResult]) -> Vec<(Arc<str>, Value)> {
    results
        .iter()
        .filter_map(|r| match r {
            DirectiveResult::Predicted { label, value } => {
                Some((label.clone(), value.clone()))
            }
            _ => None,
        })
        .collect()
}

pub(crate) fn run_rdb(driver: &mut Driver) -> Result<EngineReport, EngineError> {
    let s_total = driver.cfg.sweeps;
    let mut current = InterpState::new(driver.prog.clone(), driver.alloc.next_stream());
    let results = current.run_all().map_err(EngineError::Eval)?;
    driver.applies += current.apply_count;
    let mut stored = predicts(&results);
    for (label, value) in &stored {
        driver.emit(0, 0, label, value);
    }
    let mut accepted = 0u64;
    let mut proposed = 0u64;
    for sweep in 1..=s_total {
        let n = current.db.len();
        if n > 0 {
            proposed += 1;
            let k = driver.rng.below(n as u64) as usize;
            let forced = current.db.entry_at(k).addr.key();
            let mut prop = InterpState::new(driver.prog.clone(), driver.alloc.next_stream());
            prop.replay = Some(ReplayCtx {
                source: current.db.clone(),
                forced: Some(forced),
                strict: false,
            });
            let res = prop.run_all().map_err(EngineError::Eval)?;
            driver.applies += prop.apply_count;
            let log_ratio = accept_log_ratio(&current.db, &prop.db);
            if driver.rng.uniform().ln() < log_ratio {
                current = prop;
                stored = predicts(&res);
                accepted += 1;
            }
        }
        for (label, value) in &stored {
            driver.emit(sweep as u32, sweep as u64, label, value);
        }
    }
    Ok(EngineReport {
        sweeps: s_total as u32,
        simulations: s_total as u64,
        applies: driver.applies,
        accepted,
        proposed,
        ..EngineReport::default()
    })
}
