//! The random database: every stochastic choice a program execution made,
//! keyed by structural address, in execution order.
//!
//! An address is (application site, occurrence). The site is assigned to
//! the application expression at compile time; the occurrence counter
//! distinguishes repeated visits (loops, recursion, mem misses). Two runs
//! of the same program that reach the same site for the k-th time agree on
//! the address, which is what lets single-site proposals rescore the rest
//! of the trace instead of discarding it.

use indexmap::IndexMap;

use crate::erp::ErpParams;
use crate::value::Value;
use crate::xrp::XrpKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Addr {
    pub site: u32,
    pub occ: u32,
}

impl Addr {
    #[inline]
    pub fn key(self) -> u64 {
        (self.site as u64) << 32 | self.occ as u64
    }

    pub fn from_key(k: u64) -> Addr {
        Addr { site: (k >> 32) as u32, occ: k as u32 }
    }
}

impl std::fmt::Display for Addr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.site, self.occ)
    }
}

/// What produced the recorded value, with enough detail to rescore it.
#[derive(Debug, Clone)]
pub enum EntryKind {
    Erp(ErpParams),
    /// XRP draw; `instance` indexes the interpreter's XRP table and
    /// `kind` is kept so type compatibility survives re-execution.
    Xrp { instance: u32, kind: XrpKind },
}

impl EntryKind {
    /// Same-type check for value reuse across executions: an address may
    /// only replay into a primitive of the same family.
    pub fn compatible(&self, other: &EntryKind) -> bool {
        match (self, other) {
            (EntryKind::Erp(a), EntryKind::Erp(b)) => a.erp_type() == b.erp_type(),
            (EntryKind::Xrp { kind: a, .. }, EntryKind::Xrp { kind: b, .. }) => {
                a.name() == b.name()
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub addr: Addr,
    pub kind: EntryKind,
    pub value: Value,
    /// Log-probability of `value` under `kind` at draw time. For XRPs this
    /// is the predictive given everything absorbed earlier in the trace,
    /// so the entry sum telescopes into the exchangeable joint.
    pub log_p: f64,
    /// True when this execution sampled the value anew (rather than
    /// replaying it from a previous trace). Drives acceptance ratios.
    pub fresh: bool,
}

/// All random choices of one execution, in the order they were made,
/// plus the log-likelihood each observation contributed.
#[derive(Debug, Clone, Default)]
pub struct RandomDB {
    pub entries: IndexMap<u64, TraceEntry>,
    pub observe_log_likes: Vec<f64>,
}

impl RandomDB {
    pub fn new() -> RandomDB {
        RandomDB::default()
    }

    /// Number of random choices |x| in the trace.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, addr: Addr) -> Option<&TraceEntry> {
        self.entries.get(&addr.key())
    }

    pub fn insert(&mut self, entry: TraceEntry) {
        let prev = self.entries.insert(entry.addr.key(), entry);
        debug_assert!(prev.is_none(), "duplicate address in one execution");
    }

    /// Entry by position in execution order; proposals pick uniformly.
    pub fn entry_at(&self, index: usize) -> &TraceEntry {
        self.entries.get_index(index).expect("index in bounds").1
    }

    /// Sum of recorded choice log-probabilities: log p(x | y-free part).
    pub fn log_prior(&self) -> f64 {
        self.entries.values().map(|e| e.log_p).sum()
    }

    /// Sum of observation log-likelihoods: log p(y | x).
    pub fn log_likelihood(&self) -> f64 {
        self.observe_log_likes.iter().sum()
    }

    /// Unnormalized log joint of the execution.
    pub fn log_joint(&self) -> f64 {
        self.log_prior() + self.log_likelihood()
    }

    /// Human-readable listing, one line per choice, for debugging traces.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        for e in self.entries.values() {
            let kind = match &e.kind {
                EntryKind::Erp(p) => p.describe(),
                EntryKind::Xrp { instance, kind } => format!("{}[{instance}]", kind.name()),
            };
            let _ = writeln!(
                s,
                "{addr:>10}  {kind:<28} {value}  log_p={lp:.6}{fresh}",
                addr = e.addr.to_string(),
                value = e.value,
                lp = e.log_p,
                fresh = if e.fresh { "  fresh" } else { "" },
            );
        }
        let _ = writeln!(s, "observations: {:?}", self.observe_log_likes);
        s
    }
}

/// Unnormalized log joint: choices plus observation likelihoods.
pub fn trace_log_joint(db: &RandomDB) -> f64 {
    db.log_joint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erp::ErpType;

    fn entry(site: u32, occ: u32, log_p: f64, fresh: bool) -> TraceEntry {
        TraceEntry {
            addr: Addr { site, occ },
            kind: EntryKind::Erp(
                ErpParams::from_args(ErpType::Flip, &[Value::Num(0.5)]).unwrap(),
            ),
            value: Value::Bool(true),
            log_p,
            fresh,
        }
    }

    #[test]
    fn test_addr_key_roundtrip() {
        let a = Addr { site: 0xDEAD, occ: 0xBEEF };
        assert_eq!(Addr::from_key(a.key()), a);
        assert_ne!(Addr { site: 1, occ: 0 }.key(), Addr { site: 0, occ: 1 }.key());
    }

    #[test]
    fn test_insertion_order_preserved() {
        let mut db = RandomDB::new();
        db.insert(entry(5, 0, -1.0, true));
        db.insert(entry(2, 0, -2.0, true));
        db.insert(entry(5, 1, -3.0, true));
        let sites: Vec<u32> = db.entries.values().map(|e| e.addr.site).collect();
        assert_eq!(sites, vec![5, 2, 5]);
        assert_eq!(db.entry_at(1).addr, Addr { site: 2, occ: 0 });
    }

    #[test]
    fn test_log_joint_decomposes() {
        let mut db = RandomDB::new();
        db.insert(entry(0, 0, -0.5, true));
        db.insert(entry(1, 0, -1.5, false));
        db.observe_log_likes.push(-2.0);
        db.observe_log_likes.push(-0.25);
        assert!((db.log_prior() - (-2.0)).abs() < 1e-12);
        assert!((db.log_likelihood() - (-2.25)).abs() < 1e-12);
        assert!((trace_log_joint(&db) - (-4.25)).abs() < 1e-12);
    }

    #[test]
    fn test_kind_compatibility() {
        let flip = EntryKind::Erp(
            ErpParams::from_args(ErpType::Flip, &[Value::Num(0.5)]).unwrap(),
        );
        let flip2 = EntryKind::Erp(
            ErpParams::from_args(ErpType::Flip, &[Value::Num(0.9)]).unwrap(),
        );
        let norm = EntryKind::Erp(
            ErpParams::from_args(ErpType::Normal, &[Value::Num(0.0), Value::Num(1.0)]).unwrap(),
        );
        assert!(flip.compatible(&flip2));
        assert!(!flip.compatible(&norm));
        let crp = EntryKind::Xrp { instance: 0, kind: XrpKind::Crp { alpha: 1.0 } };
        let crp2 = EntryKind::Xrp { instance: 3, kind: XrpKind::Crp { alpha: 2.0 } };
        assert!(crp.compatible(&crp2));
        assert!(!crp.compatible(&flip));
    }
}
