//! Exchangeable random primitives.
//!
//! An XRP instance owns mutable sufficient statistics; draws are scored
//! through the predictive distribution given everything absorbed so far.
//! Exchangeability is what inference relies on: unincorporating one draw
//! and rescoring it must not depend on absorption order, and the property
//! tests check exactly that.

use crate::rng::RngStream;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XrpKind {
    /// Chinese restaurant process with concentration `alpha`.
    /// Tables are numbered 0, 1, 2, ... in allocation order.
    Crp { alpha: f64 },
    /// Beta-Bernoulli with pseudocounts `a` (true) and `b` (false).
    BetaBernoulli { a: f64, b: f64 },
}

impl XrpKind {
    pub fn name(self) -> &'static str {
        match self {
            XrpKind::Crp { .. } => "crp",
            XrpKind::BetaBernoulli { .. } => "beta-bernoulli",
        }
    }
}

/// Mutable statistics for one XRP instance.
#[derive(Debug, Clone, PartialEq)]
pub enum XrpStats {
    Crp {
        /// counts[t] = customers at table t; 0 once a table empties.
        counts: Vec<u32>,
        total: u32,
    },
    BetaBernoulli {
        heads: u32,
        tails: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct XrpState {
    pub kind: XrpKind,
    pub stats: XrpStats,
}

impl XrpState {
    pub fn new(kind: XrpKind) -> XrpState {
        let stats = match kind {
            XrpKind::Crp { .. } => XrpStats::Crp { counts: Vec::new(), total: 0 },
            XrpKind::BetaBernoulli { .. } => XrpStats::BetaBernoulli { heads: 0, tails: 0 },
        };
        XrpState { kind, stats }
    }

    /// Predictive log-probability of `v` given current statistics.
    /// -inf outside the support (for CRP: ids above the next-new table).
    pub fn predictive_log_prob(&self, v: &Value) -> f64 {
        match (&self.kind, &self.stats) {
            (XrpKind::Crp { alpha }, XrpStats::Crp { counts, total }) => {
                let Some(x) = v.num() else { return f64::NEG_INFINITY };
                if x < 0.0 || x.fract() != 0.0 {
                    return f64::NEG_INFINITY;
                }
                let t = x as usize;
                let denom = *total as f64 + alpha;
                if t < counts.len() && counts[t] > 0 {
                    (counts[t] as f64 / denom).ln()
                } else if t == next_table(counts) {
                    (alpha / denom).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            (XrpKind::BetaBernoulli { a, b }, XrpStats::BetaBernoulli { heads, tails }) => {
                let denom = *heads as f64 + *tails as f64 + a + b;
                match v {
                    Value::Bool(true) => ((*heads as f64 + a) / denom).ln(),
                    Value::Bool(false) => ((*tails as f64 + b) / denom).ln(),
                    _ => f64::NEG_INFINITY,
                }
            }
            _ => unreachable!("kind/stats mismatch"),
        }
    }

    /// Sample from the predictive distribution without absorbing.
    pub fn sample(&self, rng: &mut RngStream) -> Value {
        match (&self.kind, &self.stats) {
            (XrpKind::Crp { alpha }, XrpStats::Crp { counts, total }) => {
                let mut u = rng.uniform() * (*total as f64 + alpha);
                for (t, &c) in counts.iter().enumerate() {
                    u -= c as f64;
                    if u < 0.0 {
                        return Value::Num(t as f64);
                    }
                }
                Value::Num(next_table(counts) as f64)
            }
            (XrpKind::BetaBernoulli { a, b }, XrpStats::BetaBernoulli { heads, tails }) => {
                let p = (*heads as f64 + a) / (*heads as f64 + *tails as f64 + a + b);
                Value::Bool(rng.uniform() < p)
            }
            _ => unreachable!("kind/stats mismatch"),
        }
    }

    /// Fold `v` into the statistics. Must be in the support.
    pub fn absorb(&mut self, v: &Value) {
        match (&self.kind, &mut self.stats) {
            (XrpKind::Crp { .. }, XrpStats::Crp { counts, total }) => {
                let t = v.num().expect("crp value is a table id") as usize;
                if t >= counts.len() {
                    counts.resize(t + 1, 0);
                }
                counts[t] += 1;
                *total += 1;
            }
            (XrpKind::BetaBernoulli { .. }, XrpStats::BetaBernoulli { heads, tails }) => {
                match v {
                    Value::Bool(true) => *heads += 1,
                    Value::Bool(false) => *tails += 1,
                    _ => panic!("beta-bernoulli value is a boolean"),
                }
            }
            _ => unreachable!("kind/stats mismatch"),
        }
    }

    /// Remove one previously absorbed `v` from the statistics.
    pub fn unabsorb(&mut self, v: &Value) {
        match (&self.kind, &mut self.stats) {
            (XrpKind::Crp { .. }, XrpStats::Crp { counts, total }) => {
                let t = v.num().expect("crp value is a table id") as usize;
                assert!(counts[t] > 0, "unabsorb of unseen table");
                counts[t] -= 1;
                *total -= 1;
                while counts.last() == Some(&0) {
                    counts.pop();
                }
            }
            (XrpKind::BetaBernoulli { .. }, XrpStats::BetaBernoulli { heads, tails }) => {
                match v {
                    Value::Bool(true) => {
                        assert!(*heads > 0, "unabsorb of unseen head");
                        *heads -= 1;
                    }
                    Value::Bool(false) => {
                        assert!(*tails > 0, "unabsorb of unseen tail");
                        *tails -= 1;
                    }
                    _ => panic!("beta-bernoulli value is a boolean"),
                }
            }
            _ => unreachable!("kind/stats mismatch"),
        }
    }

    /// Draw and absorb in one step; returns the value.
    pub fn produce(&mut self, rng: &mut RngStream) -> Value {
        let v = self.sample(rng);
        self.absorb(&v);
        v
    }
}

/// Lowest table id that counts as "new": one past the highest occupied.
/// Vacated ids below it are reusable, which `sample` never picks but
/// `predictive_log_prob` must not reject when a replayed trace holds one.
fn next_table(counts: &[u32]) -> usize {
    counts.len()
}
