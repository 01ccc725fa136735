//! Core library for the ang probabilistic language: frontend, interpreter,
//! trace database, inference engines, exact oracles, and the convergence
//! measurement harness.

// Parameter checks are written `!(x > 0.0)` on purpose: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Frozen numeric anchors keep every digit of their reference derivations.
#![allow(clippy::excessive_precision)]

pub mod engine;
pub mod erp;
pub mod expr;
pub mod interp;
pub mod corpus;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod program;
pub mod rng;
pub mod sexpr;
pub mod special;
pub mod trace;
pub mod value;
pub mod xrp;

pub use engine::{
    run_engine, EngineConfig, EngineError, EngineKind, EngineReport, ForkMode,
    PredictRecord, Sink, VecSink,
};
pub use erp::{ErpParams, ErpType};
pub use interp::{DirectiveResult, EvalError, InterpState, ReplayCtx};
pub use harness::{
    battery, criterion_determinism, criterion_ladder, criterion_permutation, jsonl_line,
    median, percentile, permute_program, render_program, reverse_program, run_experiment,
    run_with_metric, BandPoint, CriterionResult, CurveRun, EngineSpec, ExperimentConfig,
    GoldenTruths, RunSummary, Scale, SeedRun, Tier, EXPECTED_STRUCTURAL,
};
pub use metrics::{
    final_metric, kl_discrete, kl_star, ks_statistic, running_curve, ConvergenceCurve,
    CurvePoint, CurveSink, EmpiricalDist, FinalStats, MetricError, MetricSpec,
};
pub use oracle::{
    branching_posterior, dp_cluster_count_posterior, gaussian_posterior, hmm_marginals,
    hmm_trailing_predictive, BranchingSpec, DpSpec, GaussPosterior, GaussSpec, HmmSpec,
};
pub use program::{load_source, parse_program, validate, Diagnostic, LoadError, Program};
pub use rng::RngStream;
pub use trace::{Addr, RandomDB, TraceEntry};
pub use value::Value;
