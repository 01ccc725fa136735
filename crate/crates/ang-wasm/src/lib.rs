//! Browser bindings: check a program, run an engine on it, and build a
//! convergence curve against the exact posteriors of the bundled
//! programs. Every entry point takes plain strings and numbers and
//! returns a JSON string, so the page needs no generated glue types.
//! Engines run single threaded with timing off; neither threads nor
//! monotonic clocks exist on the plain wasm target.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use ang_core::value::value_to_json;
use ang_core::{
    corpus, gaussian_posterior, load_source, parse_program, run_engine, run_with_metric,
    validate, EngineConfig, EngineKind, GaussSpec, GoldenTruths, MetricSpec, PredictRecord,
    Program, Sink, Value,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn engine_kind(name: &str) -> Result<EngineKind, String> {
    match name {
        "smc" => Ok(EngineKind::Smc),
        "pg" => Ok(EngineKind::Pg),
        "rdb" => Ok(EngineKind::Rdb),
        "pimh" => Ok(EngineKind::Pimh),
        other => Err(format!("unknown engine {other:?} (smc, pg, rdb, pimh)")),
    }
}

fn fail(error: impl std::fmt::Display) -> String {
    json!({ "ok": false, "error": error.to_string() }).to_string()
}

/// The bundled programs, as `[{name, source}]`.
#[wasm_bindgen]
pub fn bundled_programs() -> String {
    let items: Vec<serde_json::Value> = corpus::BUNDLED_NAMES
        .iter()
        .map(|name| json!({ "name": name, "source": corpus::bundled(name).unwrap() }))
        .collect();
    serde_json::Value::Array(items).to_string()
}

fn parse_text(source: &str) -> Result<Program, String> {
    let forms = ang_core::sexpr::read_source(source).map_err(|e| e.to_string())?;
    parse_program(&forms, "editor").map_err(|diags| {
        diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
    })
}

/// Parse and validate; reports the directive list or the diagnostics.
#[wasm_bindgen]
pub fn check_program(source: &str) -> String {
    let program = match parse_text(source) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let directives: Vec<serde_json::Value> = program
        .directives
        .iter()
        .map(|d| {
            let kind = match d {
                ang_core::program::Directive::Assume { .. } => "assume",
                ang_core::program::Directive::Observe { .. } => "observe",
                ang_core::program::Directive::Predict { .. } => "predict",
            };
            json!({ "kind": kind, "source": d.to_source() })
        })
        .collect();
    let diagnostics: Vec<serde_json::Value> = validate(&program)
        .iter()
        .map(|d| json!({ "directive": d.directive_index, "message": d.message }))
        .collect();
    json!({ "ok": diagnostics.is_empty(), "directives": directives, "diagnostics": diagnostics })
        .to_string()
}

const SAMPLE_CAP: usize = 20_000;
const DISCRETE_CAP: usize = 32;
const HIST_BINS: usize = 40;

/// Streaming per-label aggregate: count, mean, a stride-thinned numeric
/// sample for histograms, exact small-support counts, and a running
/// mean on a geometric grid. Nothing buffers the full record stream.
struct Agg {
    count: u64,
    numeric: u64,
    sum: f64,
    sample: Vec<f64>,
    stride: u64,
    discrete: BTreeMap<String, u64>,
    overflow: bool,
    running: Vec<(u64, f64)>,
    next_point: u64,
}

impl Agg {
    fn new() -> Agg {
        Agg {
            count: 0,
            numeric: 0,
            sum: 0.0,
            sample: Vec::new(),
            stride: 1,
            discrete: BTreeMap::new(),
            overflow: false,
            running: Vec::new(),
            next_point: 1,
        }
    }

    fn push(&mut self, value: &Value) {
        self.count += 1;
        if let Value::Num(x) = value {
            self.numeric += 1;
            self.sum += x;
            if (self.numeric - 1) % self.stride == 0 {
                self.sample.push(*x);
                if self.sample.len() >= SAMPLE_CAP {
                    let mut keep = 0;
                    for i in (0..self.sample.len()).step_by(2) {
                        self.sample[keep] = self.sample[i];
                        keep += 1;
                    }
                    self.sample.truncate(keep);
                    self.stride *= 2;
                }
            }
            if self.numeric >= self.next_point {
                self.running.push((self.count, self.sum / self.numeric as f64));
                self.next_point = (self.next_point as f64 * 1.3).ceil() as u64;
            }
        }
        if !self.overflow {
            let key = value_to_json(value);
            if self.discrete.len() < DISCRETE_CAP || self.discrete.contains_key(&key) {
                *self.discrete.entry(key).or_insert(0) += 1;
            } else {
                self.overflow = true;
            }
        }
    }

    fn histogram(&self) -> serde_json::Value {
        if !self.overflow {
            let bars: Vec<serde_json::Value> = self
                .discrete
                .iter()
                .map(|(k, n)| json!({ "value": k, "count": n }))
                .collect();
            return json!({ "kind": "discrete", "bars": bars });
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &x in &self.sample {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if !(lo < hi) {
            return json!({ "kind": "discrete", "bars": [{ "value": lo, "count": self.sample.len() }] });
        }
        let mut bins = vec![0u64; HIST_BINS];
        let w = (hi - lo) / HIST_BINS as f64;
        for &x in &self.sample {
            let b = (((x - lo) / w) as usize).min(HIST_BINS - 1);
            bins[b] += 1;
        }
        json!({ "kind": "binned", "lo": lo, "hi": hi, "bins": bins })
    }

    fn summary(&self, label: &str) -> serde_json::Value {
        let mean = (self.numeric > 0).then(|| self.sum / self.numeric as f64);
        let running: Vec<serde_json::Value> =
            self.running.iter().map(|(n, m)| json!([n, m])).collect();
        json!({
            "label": label,
            "count": self.count,
            "mean": mean,
            "histogram": self.histogram(),
            "running_mean": running,
        })
    }
}

/// Sink for the run entry point: per-label aggregates in first-seen
/// order plus the evidence trail.
struct AggSink {
    labels: Vec<String>,
    per: Vec<Agg>,
    evidence: Vec<(u32, f64)>,
}

impl AggSink {
    fn new() -> AggSink {
        AggSink { labels: Vec::new(), per: Vec::new(), evidence: Vec::new() }
    }
}

impl Sink for AggSink {
    fn record(&mut self, rec: &PredictRecord) {
        let label = rec.label.as_ref();
        let i = match self.labels.iter().position(|l| l == label) {
            Some(i) => i,
            None => {
                self.labels.push(label.to_string());
                self.per.push(Agg::new());
                self.labels.len() - 1
            }
        };
        self.per[i].push(&rec.value);
    }

    fn log_evidence(&mut self, sweep: u32, value: f64) {
        self.evidence.push((sweep, value));
    }
}

fn config(engine: &str, particles: u32, sweeps: u32, seed: u32) -> Result<EngineConfig, String> {
    Ok(EngineConfig {
        engine: engine_kind(engine)?,
        particles: particles as usize,
        sweeps: sweeps as usize,
        seed: seed as u64,
        ..EngineConfig::default()
    })
}

/// Run an engine over the program: per-label posterior summaries, the
/// run report, and the evidence trail.
#[wasm_bindgen]
pub fn run_program(source: &str, engine: &str, particles: u32, sweeps: u32, seed: u32) -> String {
    let prog = match load_source(source, "editor") {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let cfg = match config(engine, particles, sweeps, seed) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let mut sink = AggSink::new();
    let report = match run_engine(&prog, &cfg, &mut sink) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let labels: Vec<serde_json::Value> = sink
        .labels
        .iter()
        .zip(&sink.per)
        .map(|(label, agg)| agg.summary(label))
        .collect();
    let evidence: Vec<serde_json::Value> =
        sink.evidence.iter().map(|(s, v)| json!([s, v])).collect();
    json!({
        "ok": true,
        "report": {
            "engine": cfg.engine.name(),
            "sweeps": report.sweeps,
            "simulations": report.simulations,
            "applies": report.applies,
            "log_evidence": report.log_evidence,
            "accepted": report.accepted,
            "proposed": report.proposed,
        },
        "labels": labels,
        "evidence": evidence,
    })
    .to_string()
}

/// Exact-posterior tables are enumeration work; compute them once.
fn truths() -> &'static GoldenTruths {
    static TRUTHS: OnceLock<GoldenTruths> = OnceLock::new();
    TRUTHS.get_or_init(GoldenTruths::from_oracles)
}

fn metric_for(name: &str) -> Option<MetricSpec> {
    match name {
        "hmm" => Some(MetricSpec::KlStar {
            label_prefix: "get-state".into(),
            gammas: truths().hmm_gammas.clone(),
        }),
        "dp-mixture" => Some(MetricSpec::Kl { label: "(K)".into(), truth: truths().dp_k.clone() }),
        "branching" => Some(MetricSpec::Kl { label: "r".into(), truth: truths().branching_r.clone() }),
        "marsaglia" => Some(MetricSpec::Ks {
            label: "mu".into(),
            posterior: gaussian_posterior(&GaussSpec::default()),
        }),
        _ => None,
    }
}

/// Convergence curve for a bundled program: the divergence between the
/// running predict distribution and the exact posterior, on a geometric
/// simulation grid.
#[wasm_bindgen]
pub fn convergence_curve(name: &str, engine: &str, particles: u32, sweeps: u32, seed: u32) -> String {
    let source = match corpus::bundled(name) {
        Some(s) => s,
        None => return fail(format!("no bundled program {name:?}")),
    };
    let spec = match metric_for(name) {
        Some(s) => s,
        None => return fail(format!("no exact posterior for {name:?}")),
    };
    let prog = match load_source(source, name) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let cfg = match config(engine, particles, sweeps, seed) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let run = match run_with_metric(&prog, &cfg, &spec) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let points: Vec<serde_json::Value> =
        run.curve.points.iter().map(|p| json!([p.simulations, p.value])).collect();
    json!({
        "ok": true,
        "metric": run.curve.metric_name,
        "points": points,
        "final": run.stats.value,
        "simulations": run.report.simulations,
        "applies": run.report.applies,
        "log_evidence": run.report.log_evidence,
    })
    .to_string()
}
