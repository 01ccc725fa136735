//! Posterior samplers over execution traces and their shared machinery.
//!
//! Every engine advances whole interpreter states (particles are forked
//! copies, proposals are replays), reports predictions through a `Sink`,
//! and is bit-reproducible for a fixed seed: all randomness flows from one
//! splittable stream, and emission order is slot order.

pub mod pg;
pub mod pimh;
pub mod rdb;
pub mod smc;

use std::sync::Arc;
use std::time::Instant;

use crate::expr::{CDirective, CompiledProgram};
use crate::interp::{DirectiveResult, EvalError, InterpState, ReplayCtx};
use crate::rng::RngStream;
use crate::trace::RandomDB;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Smc,
    Pg,
    Rdb,
    Pimh,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Smc => "smc",
            EngineKind::Pg => "pg",
            EngineKind::Rdb => "rdb",
            EngineKind::Pimh => "pimh",
        }
    }

    pub fn by_name(s: &str) -> Option<EngineKind> {
        Some(match s {
            "smc" => EngineKind::Smc,
            "pg" => EngineKind::Pg,
            "rdb" => EngineKind::Rdb,
            "pimh" => EngineKind::Pimh,
            _ => return None,
        })
    }
}

/// When particle Gibbs re-seeds particle streams by forking.
///
/// `EveryDirective` is the literal loop structure: every non-retained
/// particle forks before every directive. `AtObserves` forks only while
/// materializing resampled copies, the single point where two particles
/// can alias; the two modes sample from identical distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForkMode {
    EveryDirective,
    #[default]
    AtObserves,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub engine: EngineKind,
    pub particles: usize,
    pub sweeps: usize,
    pub seed: u64,
    pub fork_mode: ForkMode,
    pub threads: usize,
    pub timing: bool,
}

impl Default for EngineConfig {
    fn default() -> EngineConfig {
        EngineConfig {
            engine: EngineKind::Pg,
            particles: 100,
            sweeps: 1000,
            seed: 0,
            fork_mode: ForkMode::default(),
            threads: 1,
            timing: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PredictRecord {
    pub sweep: u32,
    pub sim: u64,
    pub label: Arc<str>,
    pub value: Value,
    pub applies: u64,
    pub t_ns: u64,
}

impl PartialEq for PredictRecord {
    fn eq(&self, other: &PredictRecord) -> bool {
        self.sweep == other.sweep
            && self.sim == other.sim
            && self.label == other.label
            && self.value.data_eq(&other.value)
            && self.applies == other.applies
            && self.t_ns == other.t_ns
    }
}

/// Streaming consumer of engine output.
pub trait Sink {
    fn record(&mut self, rec: &PredictRecord);
    fn log_evidence(&mut self, _sweep: u32, _value: f64) {}
}

#[derive(Debug, Default)]
pub struct VecSink {
    pub records: Vec<PredictRecord>,
    pub evidences: Vec<(u32, f64)>,
}

impl Sink for VecSink {
    fn record(&mut self, rec: &PredictRecord) {
        self.records.push(rec.clone());
    }
    fn log_evidence(&mut self, sweep: u32, value: f64) {
        self.evidences.push((sweep, value));
    }
}

pub struct NullSink;

impl Sink for NullSink {
    fn record(&mut self, _rec: &PredictRecord) {}
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("degenerate sweep: every particle weight vanished at observation {observe_index}")]
    Degenerate { observe_index: u32 },
    #[error("engine configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Default)]
pub struct EngineReport {
    pub sweeps: u32,
    pub simulations: u64,
    pub applies: u64,
    pub log_evidence: Option<f64>,
    /// MH engines: accepted / proposed transition counts.
    pub accepted: u64,
    pub proposed: u64,
    /// Forks performed before directive interpretation (literal fork mode).
    pub directive_forks: u64,
}

/// One interpreter state advanced through the program with a weight.
#[derive(Debug, Clone)]
pub struct Particle {
    pub state: InterpState,
    /// After an observe step this is exactly that observe's log-likelihood.
    pub log_weight: f64,
    pub retained: bool,
    /// Lineage-correct predict history, carried through resampling.
    pub records: Vec<(Arc<str>, Value)>,
}

impl Particle {
    fn blank(prog: &Arc<CompiledProgram>, rng: RngStream) -> Particle {
        Particle {
            state: InterpState::new(prog.clone(), rng),
            log_weight: 0.0,
            retained: false,
            records: Vec::new(),
        }
    }

    fn retained_from(prog: &Arc<CompiledProgram>, rng: RngStream, db: RandomDB) -> Particle {
        let mut state = InterpState::new(prog.clone(), rng);
        state.replay = Some(ReplayCtx { source: db, forced: None, strict: true });
        Particle { state, log_weight: 0.0, retained: true, records: Vec::new() }
    }
}

/// Deterministic allocator of fresh independent streams.
pub(crate) struct StreamAlloc {
    master: RngStream,
    next: u64,
}

impl StreamAlloc {
    fn new(seed: u64) -> StreamAlloc {
        StreamAlloc { master: RngStream::new(seed), next: 0 }
    }

    pub(crate) fn next_stream(&mut self) -> RngStream {
        let s = self.master.split(self.next);
        self.next += 1;
        s
    }
}

/// N independent draws proportional to weights, identified by index.
/// Weights are logs; None when no weight is positive.
pub(crate) fn resample_indices(
    n: usize,
    log_weights: &[f64],
    rng: &mut RngStream,
) -> Option<Vec<usize>> {
    let m = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return None;
    }
    let mut cum = Vec::with_capacity(log_weights.len());
    let mut acc = 0.0;
    for &lw in log_weights {
        acc += (lw - m).exp();
        cum.push(acc);
    }
    let total = acc;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.uniform() * total;
        let i = cum.partition_point(|&c| c <= u);
        out.push(i.min(log_weights.len() - 1));
    }
    Some(out)
}

/// Multinomially sample N items proportional to (linear) weights; every
/// returned item carries its original unnormalized weight.
pub fn resample_multinomial<T: Clone>(
    n: usize,
    pairs: &[(f64, T)],
    rng: &mut RngStream,
) -> Option<Vec<(f64, T)>> {
    let lw: Vec<f64> = pairs
        .iter()
        .map(|(w, _)| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
        .collect();
    let idx = resample_indices(n, &lw, rng)?;
    Some(idx.into_iter().map(|i| pairs[i].clone()).collect())
}

/// Per-particle result of interpreting one directive.
pub(crate) struct AdvanceOut {
    pub scored: Option<(f64, u32)>,
    pub predicted: Option<(Arc<str>, Value)>,
}

/// Shared engine plumbing: stream allocation, emission, parallel particle
/// advancement, apply accounting.
pub(crate) struct Driver<'a> {
    pub prog: Arc<CompiledProgram>,
    pub cfg: EngineConfig,
    pub sink: &'a mut dyn Sink,
    pub alloc: StreamAlloc,
    /// Engine-level decisions (resampling, retained choice, MH accepts).
    pub rng: RngStream,
    pool: Option<rayon::ThreadPool>,
    start: Option<Instant>,
    pub applies: u64,
    pub directive_forks: u64,
}

impl<'a> Driver<'a> {
    pub(crate) fn new(
        prog: Arc<CompiledProgram>,
        cfg: EngineConfig,
        sink: &'a mut dyn Sink,
    ) -> Result<Driver<'a>, EngineError> {
        if cfg.particles == 0 {
            return Err(EngineError::Config("particle count must be positive".into()));
        }
        if cfg.engine == EngineKind::Pg && cfg.particles < 2 {
            return Err(EngineError::Config("pg needs at least 2 particles".into()));
        }
        let pool = if cfg.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.threads)
                    .build()
                    .map_err(|e| EngineError::Config(e.to_string()))?,
            )
        } else {
            None
        };
        let mut alloc = StreamAlloc::new(cfg.seed);
        let rng = alloc.next_stream();
        let start = cfg.timing.then(Instant::now);
        Ok(Driver {
            prog,
            cfg,
            sink,
            alloc,
            rng,
            pool,
            start,
            applies: 0,
            directive_forks: 0,
        })
    }

    fn t_ns(&self) -> u64 {
        self.start.map_or(0, |s| s.elapsed().as_nanos() as u64)
    }

    pub(crate) fn emit(&mut self, sweep: u32, sim: u64, label: &Arc<str>, value: &Value) {
        let rec = PredictRecord {
            sweep,
            sim,
            label: label.clone(),
            value: value.clone(),
            applies: self.applies,
            t_ns: self.t_ns(),
        };
        self.sink.record(&rec);
    }

    /// Interpret directive `dir` on every particle. `fork_fresh` first
    /// replaces each non-retained particle's state with a fork of itself
    /// (the literal per-directive re-seed).
    pub(crate) fn advance_all(
        &mut self,
        particles: &mut [Particle],
        dir: usize,
        fork_fresh: bool,
    ) -> Result<Vec<AdvanceOut>, EngineError> {
        if fork_fresh {
            for p in particles.iter_mut() {
                if !p.retained {
                    p.state = p.state.fork();
                    self.directive_forks += 1;
                }
            }
        }
        let step = |p: &mut Particle| -> Result<(AdvanceOut, u64), EvalError> {
            let before = p.state.apply_count;
            let res = p.state.run_directive(dir)?;
            let mut out = AdvanceOut { scored: None, predicted: None };
            match res {
                DirectiveResult::Bound { .. } => {}
                DirectiveResult::Scored { log_weight, observe_index } => {
                    p.log_weight = log_weight;
                    out.scored = Some((log_weight, observe_index));
                }
                DirectiveResult::Predicted { label, value } => {
                    p.records.push((label.clone(), value.clone()));
                    out.predicted = Some((label, value));
                }
            }
            Ok((out, p.state.apply_count - before))
        };
        let results: Result<Vec<(AdvanceOut, u64)>, EvalError> = match &self.pool {
            Some(pool) => pool.install(|| {
                use rayon::prelude::*;
                particles.par_iter_mut().map(step).collect()
            }),
            None => particles.iter_mut().map(step).collect(),
        };
        let results = results?;
        let mut outs = Vec::with_capacity(results.len());
        for (out, delta) in results {
            self.applies += delta;
            outs.push(out);
        }
        Ok(outs)
    }

    /// Materialize a resampled set: each selected particle is forked from
    /// its source (distinct fork ordinals keep duplicates independent) and
    /// carries the source's original unnormalized weight and lineage.
    pub(crate) fn materialize(
        &mut self,
        sources: &mut [Particle],
        indices: &[usize],
        weights: &[f64],
    ) -> Vec<Particle> {
        indices
            .iter()
            .map(|&i| {
                let mut state = sources[i].state.fork();
                state.replay = None;
                Particle {
                    state,
                    log_weight: weights[i],
                    retained: false,
                    records: sources[i].records.clone(),
                }
            })
            .collect()
    }

    pub(crate) fn dir_kind(&self, dir: usize) -> DirKind {
        match &self.prog.directives[dir] {
            CDirective::Assume { .. } => DirKind::Assume,
            CDirective::Predict { .. } => DirKind::Predict,
            CDirective::Observe { observe_index, .. } => DirKind::Observe(*observe_index),
        }
    }

    pub(crate) fn n_directives(&self) -> usize {
        self.prog.directives.len()
    }
}

/// Directive shape, detached from the program so engine loops can hold it
/// while mutating the driver.
#[derive(Debug, Clone, Copy)]
pub(crate) enum DirKind {
    Assume,
    Predict,
    Observe(u32),
}

/// Run the configured engine to completion, streaming output into `sink`.
pub fn run_engine(
    prog: &Arc<CompiledProgram>,
    cfg: &EngineConfig,
    sink: &mut dyn Sink,
) -> Result<EngineReport, EngineError> {
    let mut driver = Driver::new(prog.clone(), cfg.clone(), sink)?;
    match cfg.engine {
        EngineKind::Smc => smc::run_smc(&mut driver),
        EngineKind::Pg => pg::run_pg(&mut driver),
        EngineKind::Rdb => rdb::run_rdb(&mut driver),
        EngineKind::Pimh => pimh::run_pimh(&mut driver),
    }
}
