//! Convergence measurement: running empirical distributions over predict
//! streams, KL / summed-KL / KS statistics against the exact oracles, and
//! curves of metric value against simulations, wall clock, and applies.

use std::collections::BTreeMap;

use crate::engine::PredictRecord;
use crate::oracle::GaussPosterior;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    /// A label the metric needs never appears (or has not appeared yet).
    MissingLabel(String),
    /// A predicted value has the wrong shape for the metric.
    TypeMismatch { label: String, got: String },
    /// Records are not grouped in nondecreasing simulation order.
    UnsortedStream,
}

impl std::fmt::Display for MetricError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricError::MissingLabel(l) => write!(f, "no predict records for label {l}"),
            MetricError::TypeMismatch { label, got } => {
                write!(f, "label {label}: expected a number, got {got}")
            }
            MetricError::UnsortedStream => write!(f, "records out of simulation order"),
        }
    }
}

impl std::error::Error for MetricError {}

/// Running empirical distribution: the indicator average (1/S)Σ δ over
/// emitted predict values, discrete or continuous.
#[derive(Debug, Clone)]
pub enum EmpiricalDist {
    Discrete { counts: BTreeMap<i64, u64>, total: u64 },
    Continuous { samples: Vec<f64> },
}

impl EmpiricalDist {
    pub fn discrete() -> EmpiricalDist {
        EmpiricalDist::Discrete { counts: BTreeMap::new(), total: 0 }
    }

    pub fn continuous() -> EmpiricalDist {
        EmpiricalDist::Continuous { samples: Vec::new() }
    }

    pub fn push_discrete(&mut self, v: i64) {
        match self {
            EmpiricalDist::Discrete { counts, total } => {
                *counts.entry(v).or_insert(0) += 1;
                *total += 1;
            }
            EmpiricalDist::Continuous { .. } => panic!("discrete push into continuous"),
        }
    }

    pub fn push_continuous(&mut self, x: f64) {
        match self {
            EmpiricalDist::Continuous { samples } => samples.push(x),
            EmpiricalDist::Discrete { .. } => panic!("continuous push into discrete"),
        }
    }

    pub fn total(&self) -> u64 {
        match self {
            EmpiricalDist::Discrete { total, .. } => *total,
            EmpiricalDist::Continuous { samples } => samples.len() as u64,
        }
    }

    /// Normalized point masses; empty when no samples.
    pub fn probs(&self) -> Vec<(i64, f64)> {
        match self {
            EmpiricalDist::Discrete { counts, total } => {
                let t = *total as f64;
                counts.iter().map(|(&v, &c)| (v, c as f64 / t)).collect()
            }
            EmpiricalDist::Continuous { .. } => panic!("probs of continuous"),
        }
    }

    /// Sample mean (discrete values weighted by counts).
    pub fn mean(&self) -> f64 {
        match self {
            EmpiricalDist::Discrete { counts, total } => {
                counts.iter().map(|(&v, &c)| v as f64 * c as f64).sum::<f64>() / *total as f64
            }
            EmpiricalDist::Continuous { samples } => {
                samples.iter().sum::<f64>() / samples.len() as f64
            }
        }
    }
}

/// Discrete value key: booleans count as 0/1, numbers must be integral.
pub fn discrete_key(label: &str, v: &Value) -> Result<i64, MetricError> {
    match v {
        Value::Bool(b) => Ok(i64::from(*b)),
        Value::Num(x) if x.fract() == 0.0 && x.abs() < 9e15 => Ok(*x as i64),
        other => Err(MetricError::TypeMismatch {
            label: label.to_string(),
            got: format!("{other}"),
        }),
    }
}

fn continuous_key(label: &str, v: &Value) -> Result<f64, MetricError> {
    match v {
        Value::Num(x) => Ok(*x),
        other => Err(MetricError::TypeMismatch {
            label: label.to_string(),
            got: format!("{other}"),
        }),
    }
}

/// D_KL(emp ‖ truth) with 0·log 0 = 0. Empirical mass where the truth has
/// none yields +infinity, never NaN.
pub fn kl_discrete(emp: &EmpiricalDist, truth: &[(i64, f64)]) -> f64 {
    let probs = emp.probs();
    let mut kl = 0.0;
    for (v, p) in probs {
        if p == 0.0 {
            continue;
        }
        let q = truth.iter().find(|&&(t, _)| t == v).map_or(0.0, |&(_, q)| q);
        if q <= 0.0 {
            return f64::INFINITY;
        }
        kl += p * (p / q).ln();
    }
    kl.max(0.0)
}

/// Summed KL across per-timestep state marginals.
pub fn kl_star(emps: &[EmpiricalDist], truths: &[[f64; 3]]) -> f64 {
    assert_eq!(emps.len(), truths.len(), "one empirical per timestep");
    emps.iter()
        .zip(truths)
        .map(|(e, g)| {
            let truth: Vec<(i64, f64)> =
                g.iter().enumerate().map(|(k, &p)| (k as i64, p)).collect();
            kl_discrete(e, &truth)
        })
        .sum()
}

/// sup_x |F_emp(x) − F(x)|, checking both sides of every empirical jump.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    assert!(!samples.is_empty(), "KS needs at least one sample");
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN samples"));
    let n = xs.len() as f64;
    let mut sup = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    sup
}

/// What to measure a predict stream against.
#[derive(Debug, Clone)]
pub enum MetricSpec {
    /// Summed KL over the per-timestep labels, e.g. "(get-state 0)"..
    KlStar { label_prefix: String, gammas: Vec<[f64; 3]> },
    /// KL of one discrete label against an exact posterior.
    Kl { label: String, truth: Vec<(i64, f64)> },
    /// KS of one continuous label against a normal posterior CDF.
    Ks { label: String, posterior: GaussPosterior },
}

impl MetricSpec {
    pub fn metric_name(&self) -> &'static str {
        match self {
            MetricSpec::KlStar { .. } => "KL*",
            MetricSpec::Kl { .. } => "KL",
            MetricSpec::Ks { .. } => "KS",
        }
    }

    /// The predict labels this metric consumes, in timestep order.
    fn labels(&self) -> Vec<String> {
        match self {
            MetricSpec::KlStar { label_prefix, gammas } => {
                (0..gammas.len()).map(|i| format!("({label_prefix} {i})")).collect()
            }
            MetricSpec::Kl { label, .. } | MetricSpec::Ks { label, .. } => {
                vec![label.clone()]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub simulations: u64,
    pub wall_clock_ns: u64,
    pub apply_count: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurve {
    pub metric_name: &'static str,
    pub points: Vec<CurvePoint>,
}

fn fresh_dists(spec: &MetricSpec, n: usize) -> Vec<EmpiricalDist> {
    (0..n)
        .map(|_| match spec {
            MetricSpec::Ks { .. } => EmpiricalDist::continuous(),
            _ => EmpiricalDist::discrete(),
        })
        .collect()
}

/// Route one record into the per-label distributions; foreign labels
/// are ignored. `labels` and `dists` are index-aligned.
fn absorb_record(
    spec: &MetricSpec,
    labels: &[String],
    dists: &mut [EmpiricalDist],
    rec: &PredictRecord,
) -> Result<(), MetricError> {
    let Some(i) = labels.iter().position(|l| **l == *rec.label) else {
        return Ok(());
    };
    match spec {
        MetricSpec::Ks { .. } => {
            dists[i].push_continuous(continuous_key(&rec.label, &rec.value)?);
        }
        _ => dists[i].push_discrete(discrete_key(&rec.label, &rec.value)?),
    }
    Ok(())
}

fn evaluate_dists(
    spec: &MetricSpec,
    labels: &[String],
    dists: &[EmpiricalDist],
) -> Result<f64, MetricError> {
    for (i, d) in dists.iter().enumerate() {
        if d.total() == 0 {
            return Err(MetricError::MissingLabel(labels[i].clone()));
        }
    }
    Ok(match spec {
        MetricSpec::KlStar { gammas, .. } => kl_star(dists, gammas),
        MetricSpec::Kl { truth, .. } => kl_discrete(&dists[0], truth),
        MetricSpec::Ks { posterior, .. } => {
            let EmpiricalDist::Continuous { samples } = &dists[0] else { unreachable!() };
            ks_statistic(samples, |x| posterior.cdf(x))
        }
    })
}

/// Metric over the full stream, one number.
pub fn final_metric(records: &[PredictRecord], spec: &MetricSpec) -> Result<f64, MetricError> {
    let labels = spec.labels();
    let mut dists = fresh_dists(spec, labels.len());
    for rec in records {
        absorb_record(spec, &labels, &mut dists, rec)?;
    }
    evaluate_dists(spec, &labels, &dists)
}

/// Everything left when a streamed run ends: the final metric value and
/// the per-label empirical distributions behind it.
pub struct FinalStats {
    pub value: f64,
    pub labels: Vec<String>,
    pub dists: Vec<EmpiricalDist>,
}

/// Streaming curve builder: absorbs predict records as an engine emits
/// them, closing a grid point whenever a simulation batch completes past
/// the geometric target. Avoids buffering the full record stream.
pub struct CurveSink {
    spec: MetricSpec,
    labels: Vec<String>,
    dists: Vec<EmpiricalDist>,
    points: Vec<CurvePoint>,
    next_target: u64,
    /// Open batch: (sim, max applies seen, max t_ns seen).
    cur: Option<(u64, u64, u64)>,
    error: Option<MetricError>,
}

impl CurveSink {
    pub fn new(spec: MetricSpec) -> CurveSink {
        let labels = spec.labels();
        let dists = fresh_dists(&spec, labels.len());
        CurveSink { spec, labels, dists, points: Vec::new(), next_target: 0, cur: None, error: None }
    }

    fn close_batch(&mut self) {
        let Some((sim, applies, t_ns)) = self.cur else { return };
        if sim >= self.next_target && self.error.is_none() {
            match evaluate_dists(&self.spec, &self.labels, &self.dists) {
                Ok(value) => {
                    self.points.push(CurvePoint {
                        simulations: sim,
                        wall_clock_ns: t_ns,
                        apply_count: applies,
                        value,
                    });
                    self.next_target = (sim + 1).max((sim as f64 * 1.5).ceil() as u64);
                }
                Err(e) => self.error = Some(e),
            }
        }
    }

    /// Final curve plus the end-of-stream statistics.
    pub fn finish(mut self) -> Result<(ConvergenceCurve, FinalStats), MetricError> {
        self.close_batch();
        if let Some(e) = self.error {
            return Err(e);
        }
        let value = evaluate_dists(&self.spec, &self.labels, &self.dists)?;
        let curve = ConvergenceCurve { metric_name: self.spec.metric_name(), points: self.points };
        Ok((curve, FinalStats { value, labels: self.labels, dists: self.dists }))
    }
}

impl crate::engine::Sink for CurveSink {
    fn record(&mut self, rec: &PredictRecord) {
        if self.error.is_some() {
            return;
        }
        match &mut self.cur {
            Some((sim, applies, t_ns)) if *sim == rec.sim => {
                *applies = (*applies).max(rec.applies);
                *t_ns = (*t_ns).max(rec.t_ns);
            }
            Some((sim, _, _)) if rec.sim < *sim => {
                self.error = Some(MetricError::UnsortedStream);
                return;
            }
            _ => {
                self.close_batch();
                self.cur = Some((rec.sim, rec.applies, rec.t_ns));
            }
        }
        if let Err(e) = absorb_record(&self.spec, &self.labels, &mut self.dists, rec) {
            self.error = Some(e);
        }
    }
}

/// Metric evaluated at a geometric (×1.5) grid of cumulative simulations.
/// Batches (shared `sim` value) are indivisible, so grid points land on
/// batch boundaries; the greedy thinning makes curves prefix-consistent.
pub fn running_curve(
    records: &[PredictRecord],
    spec: &MetricSpec,
) -> Result<ConvergenceCurve, MetricError> {
    let labels = spec.labels();
    let mut dists = fresh_dists(spec, labels.len());
    let mut points = Vec::new();
    let mut i = 0usize;
    let mut next_target = 0u64;
    while i < records.len() {
        let sim = records[i].sim;
        if i > 0 && sim < records[i - 1].sim {
            return Err(MetricError::UnsortedStream);
        }
        let mut applies = 0u64;
        let mut t_ns = 0u64;
        while i < records.len() && records[i].sim == sim {
            absorb_record(spec, &labels, &mut dists, &records[i])?;
            applies = applies.max(records[i].applies);
            t_ns = t_ns.max(records[i].t_ns);
            i += 1;
        }
        if sim >= next_target {
            points.push(CurvePoint {
                simulations: sim,
                wall_clock_ns: t_ns,
                apply_count: applies,
                value: evaluate_dists(spec, &labels, &dists)?,
            });
            next_target = (sim + 1).max((sim as f64 * 1.5).ceil() as u64);
        }
    }
    Ok(ConvergenceCurve { metric_name: spec.metric_name(), points })
}
