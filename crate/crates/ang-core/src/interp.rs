//! The interpreter: an eager eval/apply machine over forkable state.
//!
//! One `InterpState` is one execution in progress. Everything a program
//! can touch lives inside it (global slots, memo caches, exchangeable
//! primitive statistics, the random database, the rng stream), so `fork`
//! is a plain deep copy with a re-seeded stream and two forked states can
//! never observe each other. Random-primitive applications go through the
//! record-or-replay gate, which is the only place inference semantics and
//! language semantics meet.

use std::collections::HashMap;
use std::sync::Arc;

use crate::erp::{erp_log_pdf, erp_sample, ErpParams};
use crate::expr::{CDirective, CompiledProgram, Expr};
use crate::rng::RngStream;
use crate::trace::{Addr, EntryKind, RandomDB, TraceEntry};
use crate::value::{Builtin, ClosureVal, Frame, MemVal, MemoArg, Value};
use crate::xrp::{XrpKind, XrpState};

#[derive(Debug, Clone, thiserror::Error)]
#[error("{message}")]
pub struct EvalError {
    pub message: String,
}

pub type EvalResult<T> = Result<T, EvalError>;

fn err(message: impl Into<String>) -> EvalError {
    EvalError { message: message.into() }
}

/// Only #f is false.
pub fn is_truthy(v: &Value) -> bool {
    !matches!(v, Value::Bool(false))
}

/// Replay instructions for one execution.
#[derive(Debug, Clone)]
pub struct ReplayCtx {
    /// The previous trace whose values are reused where addresses match.
    pub source: RandomDB,
    /// Address forced to resample regardless of a match (the proposal site).
    pub forced: Option<u64>,
    /// Deterministic replay: every random application must hit `source`
    /// with a compatible type. Used to reconstruct a retained particle,
    /// where a miss means the replay diverged from its own trace.
    pub strict: bool,
}

#[derive(Debug, Clone)]
pub enum DirectiveResult {
    Bound { name: Arc<str> },
    Scored { log_weight: f64, observe_index: u32 },
    Predicted { label: Arc<str>, value: Value },
}

#[derive(Debug, Clone)]
pub struct InterpState {
    pub prog: Arc<CompiledProgram>,
    pub globals: Vec<Option<Value>>,
    memo: HashMap<(u32, Box<[MemoArg]>), Value>,
    next_memo_id: u32,
    pub xrps: Vec<XrpState>,
    pub db: RandomDB,
    pub replay: Option<ReplayCtx>,
    pub rng: RngStream,
    fork_seq: u64,
    pub apply_count: u64,
    site_occ: Vec<u32>,
    pub directive_cursor: usize,
}

impl InterpState {
    pub fn new(prog: Arc<CompiledProgram>, rng: RngStream) -> InterpState {
        let n_globals = prog.n_globals as usize;
        let n_sites = prog.n_sites as usize;
        InterpState {
            prog,
            globals: vec![None; n_globals],
            memo: HashMap::new(),
            next_memo_id: 0,
            xrps: Vec::new(),
            db: RandomDB::new(),
            replay: None,
            rng,
            fork_seq: 0,
            apply_count: 0,
            site_occ: vec![0; n_sites],
            directive_cursor: 0,
        }
    }

    /// Observationally independent copy: all memory duplicated, the child
    /// stream re-seeded from (parent stream, fork ordinal) so the two
    /// states draw independently but deterministically.
    pub fn fork(&mut self) -> InterpState {
        let child_rng = self.rng.split(self.fork_seq);
        self.fork_seq += 1;
        let mut child = self.clone();
        child.rng = child_rng;
        child.fork_seq = 0;
        child
    }

    pub fn trace_log_joint(&self) -> f64 {
        self.db.log_joint()
    }

    fn site_src(&self, site: u32) -> &str {
        &self.prog.site_sources[site as usize]
    }

    /// (site, occurrence) address for the current random application.
    fn address_of(&mut self, site: u32) -> Addr {
        let occ = self.site_occ[site as usize];
        self.site_occ[site as usize] += 1;
        Addr { site, occ }
    }

    pub fn run_directive(&mut self, index: usize) -> EvalResult<DirectiveResult> {
        let prog = self.prog.clone();
        match &prog.directives[index] {
            CDirective::Assume { slot, name, expr } => {
                let v = self.eval(expr, &None)?;
                self.globals[*slot as usize] = Some(v);
                Ok(DirectiveResult::Bound { name: name.clone() })
            }
            CDirective::Observe { erp, args, site, value, observe_index } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args.iter() {
                    vals.push(self.eval(a, &None)?);
                }
                let params = ErpParams::from_args(*erp, &vals)
                    .map_err(|e| err(format!("{e} in {}", self.site_src(*site))))?;
                // The outermost application scores instead of sampling;
                // it still counts as one application.
                self.apply_count += 1;
                let log_weight = erp_log_pdf(&params, value);
                debug_assert_eq!(self.db.observe_log_likes.len(), *observe_index as usize);
                self.db.observe_log_likes.push(log_weight);
                Ok(DirectiveResult::Scored { log_weight, observe_index: *observe_index })
            }
            CDirective::Predict { expr, label } => {
                // Predict randomness is trace randomness: one simulation
                // interprets the whole program, so draws made here enter
                // the store and replay like any other choice. Without
                // this, a predict preceding the observes would decouple
                // from the conditioned values of the same sites.
                let value = self.eval(expr, &None)?;
                Ok(DirectiveResult::Predicted { label: label.clone(), value })
            }
        }
    }

    /// Execute every directive in order (one full interpretation).
    pub fn run_all(&mut self) -> EvalResult<Vec<DirectiveResult>> {
        let n = self.prog.directives.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(self.run_directive(i)?);
            self.directive_cursor = i + 1;
        }
        Ok(out)
    }

    pub fn eval(&mut self, expr: &Expr, env: &Option<Arc<Frame>>) -> EvalResult<Value> {
        match expr {
            Expr::Const(v) => Ok(v.clone()),
            Expr::Global(slot) => {
                self.globals[*slot as usize].clone().ok_or_else(|| {
                    err(format!(
                        "global `{}` used before its assume completed",
                        self.prog.global_names[*slot as usize]
                    ))
                })
            }
            Expr::Local { depth, idx } => Ok(Frame::lookup(env, *depth, *idx).clone()),
            Expr::If { cond, then, els } => {
                if is_truthy(&self.eval(cond, env)?) {
                    self.eval(then, env)
                } else {
                    self.eval(els, env)
                }
            }
            Expr::Begin(items) => {
                let mut last = Value::Nil;
                for e in items.iter() {
                    last = self.eval(e, env)?;
                }
                Ok(last)
            }
            Expr::Let { inits, body } => {
                let mut vals = Vec::with_capacity(inits.len());
                for e in inits.iter() {
                    vals.push(self.eval(e, env)?);
                }
                let frame = Arc::new(Frame { values: vals.into(), parent: env.clone() });
                self.eval(body, &Some(frame))
            }
            Expr::Let1 { init, body } => {
                let v = self.eval(init, env)?;
                let frame = Arc::new(Frame { values: Box::new([v]), parent: env.clone() });
                self.eval(body, &Some(frame))
            }
            Expr::Lambda(spec) => Ok(Value::Closure(Arc::new(ClosureVal {
                spec: spec.clone(),
                env: env.clone(),
            }))),
            Expr::App { site, head, args } => {
                let h = self.eval(head, env)?;
                let mut vals = Vec::with_capacity(args.len());
                for a in args.iter() {
                    vals.push(self.eval(a, env)?);
                }
                self.apply(*site, h, vals)
            }
        }
    }

    pub fn apply(&mut self, site: u32, head: Value, args: Vec<Value>) -> EvalResult<Value> {
        self.apply_count += 1;
        match head {
            Value::Closure(c) => {
                if args.len() != c.spec.params.len() {
                    return Err(err(format!(
                        "arity mismatch: {} takes {} arguments, got {} in {}",
                        Value::Closure(c.clone()),
                        c.spec.params.len(),
                        args.len(),
                        self.site_src(site)
                    )));
                }
                let frame =
                    Arc::new(Frame { values: args.into(), parent: c.env.clone() });
                self.eval(&c.spec.body, &Some(frame))
            }
            Value::Builtin(b) => self.apply_builtin(site, b, args),
            Value::Erp(t) => {
                let params = ErpParams::from_args(t, &args)
                    .map_err(|e| err(format!("{e} in {}", self.site_src(site))))?;
                Ok(self.random_erp_apply(site, params))
            }
            Value::Xrp(id, _) => {
                if !args.is_empty() {
                    return Err(err(format!(
                        "an exchangeable process takes no arguments in {}",
                        self.site_src(site)
                    )));
                }
                Ok(self.random_xrp_apply(site, id))
            }
            Value::Mem(m) => {
                let key: Option<Vec<MemoArg>> = args.iter().map(|a| a.memo_key()).collect();
                let Some(key) = key else {
                    return Err(err(format!(
                        "memoized argument is not hashable in {}",
                        self.site_src(site)
                    )));
                };
                let k = (m.memo_id, key.into_boxed_slice());
                if let Some(v) = self.memo.get(&k) {
                    return Ok(v.clone());
                }
                let v = self.apply(site, m.inner.clone(), args)?;
                self.memo.insert(k, v.clone());
                Ok(v)
            }
            other => Err(err(format!(
                "not a procedure: {other} in {}",
                self.site_src(site)
            ))),
        }
    }

    /// Record-or-replay for an elementary random primitive.
    fn random_erp_apply(&mut self, site: u32, params: ErpParams) -> Value {
        let addr = self.address_of(site);
        let mut reuse = None;
        if let Some(ctx) = &self.replay {
            if ctx.forced == Some(addr.key()) {
                assert!(!ctx.strict, "strict replay cannot force addresses");
            } else {
                match ctx.source.entries.get(&addr.key()) {
                    Some(e)
                        if matches!(&e.kind, EntryKind::Erp(p)
                            if p.erp_type() == params.erp_type()) =>
                    {
                        reuse = Some(e.value.clone());
                    }
                    _ => assert!(
                        !ctx.strict,
                        "strict replay diverged at {addr} ({})",
                        self.site_src(site)
                    ),
                }
            }
        }
        let (value, fresh) = match reuse {
            Some(v) => (v, false),
            None => (erp_sample(&params, &mut self.rng), true),
        };
        let log_p = erp_log_pdf(&params, &value);
        self.db.insert(TraceEntry {
            addr,
            kind: EntryKind::Erp(params),
            value: value.clone(),
            log_p,
            fresh,
        });
        value
    }

    /// Record-or-replay for an exchangeable process draw. The predictive
    /// is scored against statistics rebuilt so far in this execution, so
    /// entry log_p values telescope into the exchangeable joint.
    fn random_xrp_apply(&mut self, site: u32, instance: u32) -> Value {
        let addr = self.address_of(site);
        let kind = self.xrps[instance as usize].kind;
        let mut reuse = None;
        if let Some(ctx) = &self.replay {
            if ctx.forced == Some(addr.key()) {
                assert!(!ctx.strict, "strict replay cannot force addresses");
            } else {
                match ctx.source.entries.get(&addr.key()) {
                    Some(e)
                        if matches!(&e.kind, EntryKind::Xrp { kind: k, .. }
                            if k.name() == kind.name()) =>
                    {
                        reuse = Some(e.value.clone());
                    }
                    _ => assert!(
                        !ctx.strict,
                        "strict replay diverged at {addr} ({})",
                        self.site_src(site)
                    ),
                }
            }
        }
        let InterpState { xrps, rng, .. } = self;
        let st = &mut xrps[instance as usize];
        let (value, fresh) = match reuse {
            Some(v) => (v, false),
            None => (st.sample(rng), true),
        };
        let log_p = st.predictive_log_prob(&value);
        if log_p > f64::NEG_INFINITY {
            st.absorb(&value);
        }
        self.db.insert(TraceEntry {
            addr,
            kind: EntryKind::Xrp { instance, kind },
            value: value.clone(),
            log_p,
            fresh,
        });
        value
    }

    fn apply_builtin(&mut self, site: u32, b: Builtin, args: Vec<Value>) -> EvalResult<Value> {
        use Builtin::*;
        let at = |this: &InterpState| format!("in {}", this.site_src(site));
        let nums = |this: &InterpState| -> EvalResult<Vec<f64>> {
            args.iter()
                .map(|v| {
                    v.num().ok_or_else(|| {
                        err(format!("{} expects numbers, got {v} {}", b.name(), at(this)))
                    })
                })
                .collect()
        };
        let exactly = |this: &InterpState, n: usize| -> EvalResult<()> {
            if args.len() != n {
                Err(err(format!(
                    "{} takes {n} argument{} {}",
                    b.name(),
                    if n == 1 { "" } else { "s" },
                    at(this)
                )))
            } else {
                Ok(())
            }
        };
        match b {
            Add => Ok(Value::Num(nums(self)?.iter().sum())),
            Mul => Ok(Value::Num(nums(self)?.iter().product())),
            Sub => {
                let a = nums(self)?;
                match a.len() {
                    0 => Err(err(format!("- needs at least one argument {}", at(self)))),
                    1 => Ok(Value::Num(-a[0])),
                    _ => Ok(Value::Num(a[1..].iter().fold(a[0], |x, y| x - y))),
                }
            }
            Div => {
                let a = nums(self)?;
                match a.len() {
                    0 => Err(err(format!("/ needs at least one argument {}", at(self)))),
                    1 => Ok(Value::Num(1.0 / a[0])),
                    _ => Ok(Value::Num(a[1..].iter().fold(a[0], |x, y| x / y))),
                }
            }
            NumEq | Lt | Gt | Le | Ge => {
                let a = nums(self)?;
                if a.len() < 2 {
                    return Err(err(format!(
                        "{} needs at least two arguments {}",
                        b.name(),
                        at(self)
                    )));
                }
                let ok = a.windows(2).all(|w| match b {
                    NumEq => w[0] == w[1],
                    Lt => w[0] < w[1],
                    Gt => w[0] > w[1],
                    Le => w[0] <= w[1],
                    _ => w[0] >= w[1],
                });
                Ok(Value::Bool(ok))
            }
            Sqrt | Log | Exp | Abs | Floor => {
                exactly(self, 1)?;
                let x = nums(self)?[0];
                Ok(Value::Num(match b {
                    Sqrt => x.sqrt(),
                    Log => x.ln(),
                    Exp => x.exp(),
                    Abs => x.abs(),
                    _ => x.floor(),
                }))
            }
            Pow => {
                exactly(self, 2)?;
                let a = nums(self)?;
                Ok(Value::Num(a[0].powf(a[1])))
            }
            Min | Max => {
                let a = nums(self)?;
                if a.is_empty() {
                    return Err(err(format!(
                        "{} needs at least one argument {}",
                        b.name(),
                        at(self)
                    )));
                }
                let x = a[1..].iter().fold(a[0], |x, &y| match b {
                    Min => x.min(y),
                    _ => x.max(y),
                });
                Ok(Value::Num(x))
            }
            Not => {
                exactly(self, 1)?;
                Ok(Value::Bool(!is_truthy(&args[0])))
            }
            List => Ok(Value::list(args)),
            Car | Cdr => {
                exactly(self, 1)?;
                match &args[0] {
                    Value::Pair(p) => Ok(if b == Car { p.0.clone() } else { p.1.clone() }),
                    other => Err(err(format!("{} of non-pair {other} {}", b.name(), at(self)))),
                }
            }
            Cons => {
                exactly(self, 2)?;
                Ok(Value::Pair(Arc::new((args[0].clone(), args[1].clone()))))
            }
            Count => {
                exactly(self, 1)?;
                let items = args[0].iter_list().ok_or_else(|| {
                    err(format!("count of non-list {} {}", args[0], at(self)))
                })?;
                Ok(Value::Num(items.len() as f64))
            }
            Unique => {
                exactly(self, 1)?;
                let items = args[0].iter_list().ok_or_else(|| {
                    err(format!("unique of non-list {} {}", args[0], at(self)))
                })?;
                let mut seen: Vec<Value> = Vec::new();
                for v in items {
                    if !seen.iter().any(|s| s.data_eq(v)) {
                        seen.push(v.clone());
                    }
                }
                Ok(Value::list(seen))
            }
            IsNull => {
                exactly(self, 1)?;
                Ok(Value::Bool(matches!(args[0], Value::Nil)))
            }
            Mem => {
                exactly(self, 1)?;
                if !args[0].is_procedure() {
                    return Err(err(format!("mem of non-procedure {} {}", args[0], at(self))));
                }
                let memo_id = self.next_memo_id;
                self.next_memo_id += 1;
                Ok(Value::Mem(Arc::new(MemVal { memo_id, inner: args[0].clone() })))
            }
            MakeCrp => {
                exactly(self, 1)?;
                let alpha = nums(self)?[0];
                if !(alpha > 0.0) {
                    return Err(err(format!("crp concentration must be > 0 {}", at(self))));
                }
                let id = self.xrps.len() as u32;
                let kind = XrpKind::Crp { alpha };
                self.xrps.push(XrpState::new(kind));
                Ok(Value::Xrp(id, kind))
            }
            MakeBetaBernoulli => {
                exactly(self, 2)?;
                let a = nums(self)?;
                if !(a[0] > 0.0 && a[1] > 0.0) {
                    return Err(err(format!(
                        "beta-bernoulli pseudocounts must be > 0 {}",
                        at(self)
                    )));
                }
                let id = self.xrps.len() as u32;
                let kind = XrpKind::BetaBernoulli { a: a[0], b: a[1] };
                self.xrps.push(XrpState::new(kind));
                Ok(Value::Xrp(id, kind))
            }
        }
    }
}

/// Convenience: one fresh forward execution of a source program.
#[cfg(test)]
pub(crate) fn run_source(src: &str, seed: u64) -> (InterpState, Vec<DirectiveResult>) {
    let prog = crate::program::load_source(src, "test").expect("valid program");
    let mut st = InterpState::new(prog, RngStream::new(seed));
    let results = st.run_all().expect("clean run");
    (st, results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::load_source;

    fn predict_values(results: &[DirectiveResult]) -> Vec<Value> {
        results
            .iter()
            .filter_map(|r| match r {
                DirectiveResult::Predicted { value, .. } => Some(value.clone()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn test_arithmetic_and_closures() {
        let (_, r) = run_source("[predict ((lambda (x) (* x x)) 3)]", 0);
        assert!(predict_values(&r)[0].data_eq(&Value::Num(9.0)));
        let (_, r) = run_source("[predict (/ 1 3)]", 0);
        assert!((predict_values(&r)[0].num().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let (_, r) = run_source(
            "[assume compose (lambda (f g) (lambda (x) (f (g x))))]
             [assume add1 (lambda (x) (+ x 1))]
             [predict ((compose add1 add1) 5)]",
            0,
        );
        assert!(predict_values(&r)[0].data_eq(&Value::Num(7.0)));
    }

    #[test]
    fn test_let_define_cond() {
        let (_, r) = run_source("[predict (let ((a 2) (b 3)) (+ a b))]", 0);
        assert!(predict_values(&r)[0].data_eq(&Value::Num(5.0)));
        let (_, r) = run_source(
            "[assume f (lambda (n)
               (define a (+ n 1))
               (define b (* a 2))
               (- b n))]
             [predict (f 10)]",
            0,
        );
        assert!(predict_values(&r)[0].data_eq(&Value::Num(12.0)));
        let (_, r) = run_source(
            "[assume sign (lambda (x) (cond ((< x 0) -1) ((> x 0) 1) (else 0)))]
             [predict (sign -3)] [predict (sign 0)] [predict (sign 9)]",
            0,
        );
        let v = predict_values(&r);
        assert!(v[0].data_eq(&Value::Num(-1.0)));
        assert!(v[1].data_eq(&Value::Num(0.0)));
        assert!(v[2].data_eq(&Value::Num(1.0)));
    }

    #[test]
    fn test_apply_count_hand_counted() {
        // One application: the +.
        let (st, _) = run_source("[predict (+ 1 2)]", 0);
        assert_eq!(st.apply_count, 1);
        // (f 3) and the inner (* x x).
        let (st, _) = run_source("[assume f (lambda (x) (* x x))] [predict (f 3)]", 0);
        assert_eq!(st.apply_count, 2);
        // mem: 1 (mem builtin) + miss 3 (m, inner, +) + hit 1 (m) + outer 1.
        let (st, r) = run_source(
            "[assume m (mem (lambda (i) (+ i 1)))] [predict (+ (m 1) (m 1))]",
            0,
        );
        assert_eq!(st.apply_count, 6);
        assert!(predict_values(&r)[0].data_eq(&Value::Num(4.0)));
    }

    #[test]
    fn test_observe_scores_without_sampling() {
        // Standard normal scored at its mean: one observation, no db entry.
        let (st, r) = run_source("[observe (normal 0 1) 0.0]", 0);
        assert_eq!(st.db.len(), 0);
        assert_eq!(st.db.observe_log_likes.len(), 1);
        match &r[0] {
            DirectiveResult::Scored { log_weight, .. } => {
                assert!((log_weight - (-0.918_938_533_204_672_7)).abs() < 1e-9);
            }
            _ => panic!(),
        }
        assert_eq!(st.apply_count, 1);
    }

    #[test]
    fn test_trace_log_joint_two_trace_program() {
        let src = "[assume x (flip 0.5)] [observe (normal (if x 1 0) 1) 1]";
        let (st, _) = run_source(src, 3);
        let x = match &st.db.entry_at(0).value {
            Value::Bool(b) => *b,
            _ => panic!(),
        };
        let mean: f64 = if x { 1.0 } else { 0.0 };
        let expect = 0.5f64.ln() - 0.5 * (1.0 - mean).powi(2) - 0.5 * crate::special::LN_2PI;
        assert!((st.trace_log_joint() - expect).abs() < 1e-12);
        if x {
            assert!((st.trace_log_joint() - (-1.612_085_713_764_618)).abs() < 1e-9);
        }
    }

    #[test]
    fn test_predict_draws_are_traced() {
        let src = "[assume x (normal 0 1)] [predict (normal x 1)] [predict x]";
        let (st, r) = run_source(src, 1);
        // The assume's draw and the predict's draw both live in the db.
        assert_eq!(st.db.len(), 2);
        // assume 1 + predict (normal x 1) 1.
        assert_eq!(st.apply_count, 2);
        let v = predict_values(&r);
        assert!(v[0].num().unwrap() != v[1].num().unwrap());
        // A full replay reproduces the predict's draw from the store.
        let mut rep = InterpState::new(st.prog.clone(), RngStream::new(777));
        rep.replay = Some(ReplayCtx { source: st.db.clone(), forced: None, strict: true });
        let r2 = rep.run_all().unwrap();
        let v2 = predict_values(&r2);
        assert!(v[0].data_eq(&v2[0]) && v[1].data_eq(&v2[1]));
    }

    #[test]
    fn test_fork_isolation() {
        let src = "[assume gen (crp 1.0)]
                   [assume g (mem (lambda (i) (gen)))]
                   [assume x (g 0)]";
        let prog = load_source(src, "t").unwrap();
        let mut parent = InterpState::new(prog, RngStream::new(5));
        parent.run_all().unwrap();
        let parent_db_len = parent.db.len();
        let parent_xrp = parent.xrps[0].clone();
        let mut child = parent.fork();
        // Child absorbs more customers and memoizes more entries.
        let more = "[assume y (+ (g 1) (g 2))]";
        let prog2 = load_source(&format!("{src} {more}"), "t2").unwrap();
        child.prog = prog2;
        child.globals.push(None);
        child.run_directive(3).unwrap();
        assert!(child.db.len() > parent_db_len);
        assert_eq!(parent.db.len(), parent_db_len);
        assert_eq!(parent.xrps[0], parent_xrp);
        assert_ne!(child.rng, parent.rng, "child stream re-seeded");
    }

    #[test]
    fn test_forked_children_diverge() {
        let prog = load_source("[assume x (normal 0 1)] [predict x]", "t").unwrap();
        let mut base = InterpState::new(prog, RngStream::new(9));
        let mut a = base.fork();
        let mut b = base.fork();
        let ra = a.run_all().unwrap();
        let rb = b.run_all().unwrap();
        let va = predict_values(&ra)[0].num().unwrap();
        let vb = predict_values(&rb)[0].num().unwrap();
        assert_ne!(va, vb, "distinct forks draw independently");
    }

    #[test]
    fn test_replay_determinism() {
        let src = std::fs::read_to_string(
            concat!(env!("CARGO_MANIFEST_DIR"), "/../../programs/hmm.ang"),
        )
        .unwrap();
        let prog = load_source(&src, "hmm").unwrap();
        let run = |seed| {
            let mut st = InterpState::new(prog.clone(), RngStream::new(seed));
            let r = st.run_all().unwrap();
            (st.apply_count, st.trace_log_joint(), predict_values(&r))
        };
        let (a1, j1, p1) = run(42);
        let (a2, j2, p2) = run(42);
        assert_eq!(a1, a2);
        assert_eq!(j1, j2);
        assert_eq!(p1.len(), 17);
        for (x, y) in p1.iter().zip(&p2) {
            assert!(x.data_eq(y));
        }
    }

    #[test]
    fn test_hmm_trace_has_seventeen_choices() {
        let src = std::fs::read_to_string(
            concat!(env!("CARGO_MANIFEST_DIR"), "/../../programs/hmm.ang"),
        )
        .unwrap();
        let (st, _) = run_source(&src, 7);
        // get-state memoized over indices 0..16: one initial draw plus 16
        // transitions, regardless of how many observes/predicts consult it.
        assert_eq!(st.db.len(), 17);
        assert_eq!(st.db.observe_log_likes.len(), 16);
    }

    #[test]
    fn test_branching_trace_cardinality() {
        let src = std::fs::read_to_string(
            concat!(env!("CARGO_MANIFEST_DIR"), "/../../programs/branching.ang"),
        )
        .unwrap();
        let prog = load_source(&src, "branching").unwrap();
        let mut seen_small = false;
        let mut seen_large = false;
        for seed in 0..200 {
            let mut st = InterpState::new(prog.clone(), RngStream::new(seed));
            st.run_all().unwrap();
            let r = st.db.entry_at(0).value.num().unwrap();
            if r > 4.0 {
                assert_eq!(st.db.len(), 1, "r > 4 takes the constant branch");
                seen_large = true;
            } else {
                assert_eq!(st.db.len(), 2, "r <= 4 draws the inner poisson");
                seen_small = true;
            }
            if seen_small && seen_large {
                break;
            }
        }
        assert!(seen_small && seen_large);
    }

    #[test]
    fn test_marsaglia_trace_cardinality_even() {
        let src = std::fs::read_to_string(
            concat!(env!("CARGO_MANIFEST_DIR"), "/../../programs/marsaglia.ang"),
        )
        .unwrap();
        let prog = load_source(&src, "marsaglia").unwrap();
        for seed in 0..50 {
            let mut st = InterpState::new(prog.clone(), RngStream::new(seed));
            st.run_all().unwrap();
            // Two uniforms per rejection round, nothing else is random.
            assert_eq!(st.db.len() % 2, 0);
            assert!(st.db.len() >= 2);
        }
    }

    #[test]
    fn test_strict_replay_reproduces_trace() {
        let src = std::fs::read_to_string(
            concat!(env!("CARGO_MANIFEST_DIR"), "/../../programs/dp-mixture.ang"),
        )
        .unwrap();
        let prog = load_source(&src, "dp").unwrap();
        let mut orig = InterpState::new(prog.clone(), RngStream::new(11));
        orig.run_all().unwrap();
        let mut replayed = InterpState::new(prog, RngStream::new(999));
        replayed.replay = Some(ReplayCtx {
            source: orig.db.clone(),
            forced: None,
            strict: true,
        });
        replayed.run_all().unwrap();
        assert_eq!(replayed.db.len(), orig.db.len());
        assert!((replayed.trace_log_joint() - orig.trace_log_joint()).abs() < 1e-10);
        for (k, e) in &orig.db.entries {
            let r = &replayed.db.entries[k];
            assert!(r.value.data_eq(&e.value));
            assert!(!r.fresh);
            assert!((r.log_p - e.log_p).abs() < 1e-10);
        }
    }

    #[test]
    fn test_replay_rescores_under_new_params() {
        // Build a trace, then replay it against a modified-parameter
        // program: the value is reused, the score changes.
        let p1 = load_source("[assume x (normal 0 1)]", "a").unwrap();
        let mut s1 = InterpState::new(p1, RngStream::new(2));
        s1.run_all().unwrap();
        let v = s1.db.entry_at(0).value.num().unwrap();
        let p2 = load_source("[assume x (normal 0 2)]", "b").unwrap();
        let mut s2 = InterpState::new(p2, RngStream::new(3));
        s2.replay = Some(ReplayCtx { source: s1.db.clone(), forced: None, strict: false });
        s2.run_all().unwrap();
        let e = s2.db.entry_at(0);
        assert_eq!(e.value.num().unwrap(), v);
        assert!(!e.fresh);
        let want = -0.5 * (v / 2.0) * (v / 2.0) - 2.0f64.ln() - 0.5 * crate::special::LN_2PI;
        assert!((e.log_p - want).abs() < 1e-12);
    }

    #[test]
    fn test_replay_type_change_samples_fresh() {
        let p1 = load_source("[assume x (normal 0 1)]", "a").unwrap();
        let mut s1 = InterpState::new(p1, RngStream::new(2));
        s1.run_all().unwrap();
        let p2 = load_source("[assume x (gamma 1 1)]", "b").unwrap();
        let mut s2 = InterpState::new(p2, RngStream::new(3));
        s2.replay = Some(ReplayCtx { source: s1.db.clone(), forced: None, strict: false });
        s2.run_all().unwrap();
        let e = s2.db.entry_at(0);
        assert!(e.fresh, "type change discards the stored value");
        assert!(e.value.num().unwrap() > 0.0);
    }

    #[test]
    fn test_forced_address_resamples() {
        let p = load_source("[assume x (normal 0 1)] [assume y (normal x 1)]", "a").unwrap();
        let mut s1 = InterpState::new(p.clone(), RngStream::new(4));
        s1.run_all().unwrap();
        let forced_key = s1.db.entry_at(0).addr.key();
        let x_old = s1.db.entry_at(0).value.num().unwrap();
        let y_old = s1.db.entry_at(1).value.num().unwrap();
        let mut s2 = InterpState::new(p, RngStream::new(77));
        s2.replay = Some(ReplayCtx {
            source: s1.db.clone(),
            forced: Some(forced_key),
            strict: false,
        });
        s2.run_all().unwrap();
        let x_new = s2.db.entry_at(0);
        let y_new = s2.db.entry_at(1);
        assert!(x_new.fresh);
        assert_ne!(x_new.value.num().unwrap(), x_old);
        // Downstream entry is reused but rescored under the new x.
        assert!(!y_new.fresh);
        assert_eq!(y_new.value.num().unwrap(), y_old);
        let want = -0.5 * (y_old - x_new.value.num().unwrap()).powi(2)
            - 0.5 * crate::special::LN_2PI;
        assert!((y_new.log_p - want).abs() < 1e-12);
    }

    #[test]
    fn test_runtime_errors_carry_expression() {
        let (prog, seed) = (load_source("[predict (car 3)]", "t").unwrap(), 0);
        let mut st = InterpState::new(prog, RngStream::new(seed));
        let e = st.run_all().unwrap_err();
        assert!(e.message.contains("(car 3)"), "{}", e.message);
        let prog = load_source("[predict (3 1)]", "t").unwrap();
        let e = InterpState::new(prog, RngStream::new(0)).run_all().unwrap_err();
        assert!(e.message.contains("not a procedure"), "{}", e.message);
        let prog = load_source("[assume x (+ x 1)]", "t").unwrap();
        let e = InterpState::new(prog, RngStream::new(0)).run_all().unwrap_err();
        assert!(e.message.contains("before its assume"), "{}", e.message);
    }

    #[test]
    fn test_mem_unhashable_argument_errors() {
        let src = "[assume m (mem (lambda (f) 1))] [predict (m (lambda (x) x))]";
        let prog = load_source(src, "t").unwrap();
        let e = InterpState::new(prog, RngStream::new(0)).run_all().unwrap_err();
        assert!(e.message.contains("hashable"), "{}", e.message);
    }

    #[test]
    fn test_list_builtins() {
        let (_, r) = run_source(
            "[predict (count (unique (list 1 2 1 3 2)))]
             [predict (car (cons 0 (list 1)))]
             [predict (null? (cdr (list 5)))]",
            0,
        );
        let v = predict_values(&r);
        assert!(v[0].data_eq(&Value::Num(3.0)));
        assert!(v[1].data_eq(&Value::Num(0.0)));
        assert!(v[2].data_eq(&Value::Bool(true)));
    }
}
