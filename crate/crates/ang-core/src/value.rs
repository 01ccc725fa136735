//! Runtime values.
//!
//! Lists are classic cons chains so `cons`/`car`/`cdr` are O(1) and shared
//! structure is never mutated. Procedure values carry `Arc`s, so cloning a
//! value (and with it a whole interpreter state) is cheap.

use std::fmt;
use std::sync::Arc;

use crate::erp::ErpType;
use crate::expr::LambdaSpec;
use crate::sexpr::format_num;
use crate::xrp::XrpKind;

#[derive(Debug, Clone)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Sym(Arc<str>),
    Str(Arc<str>),
    Nil,
    Pair(Arc<(Value, Value)>),
    Closure(Arc<ClosureVal>),
    Builtin(Builtin),
    /// A random primitive; applying it samples (or scores, as the outermost
    /// procedure of an observe).
    Erp(ErpType),
    /// Handle of an exchangeable-process instance in the owning state's store.
    Xrp(u32, XrpKind),
    /// Memoized procedure: cache id in the owning state plus the wrapped proc.
    Mem(Arc<MemVal>),
}

#[derive(Debug)]
pub struct ClosureVal {
    pub spec: Arc<LambdaSpec>,
    pub env: Option<Arc<Frame>>,
}

#[derive(Debug)]
pub struct MemVal {
    pub memo_id: u32,
    pub inner: Value,
}

/// One lexical frame: values for the binder that created it.
#[derive(Debug)]
pub struct Frame {
    pub values: Box<[Value]>,
    pub parent: Option<Arc<Frame>>,
}

impl Frame {
    pub fn lookup(frame: &Option<Arc<Frame>>, depth: u16, idx: u16) -> &Value {
        let mut cur = frame.as_ref().expect("local resolved outside any frame");
        for _ in 0..depth {
            cur = cur.parent.as_ref().expect("frame depth out of range");
        }
        &cur.values[idx as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Add,
    Sub,
    Mul,
    Div,
    NumEq,
    Lt,
    Gt,
    Le,
    Ge,
    Sqrt,
    Log,
    Exp,
    Pow,
    Abs,
    Floor,
    Min,
    Max,
    Not,
    List,
    Car,
    Cdr,
    Cons,
    Count,
    Unique,
    IsNull,
    Mem,
    MakeCrp,
    MakeBetaBernoulli,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        use Builtin::*;
        match self {
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            NumEq => "=",
            Lt => "<",
            Gt => ">",
            Le => "<=",
            Ge => ">=",
            Sqrt => "sqrt",
            Log => "log",
            Exp => "exp",
            Pow => "pow",
            Abs => "abs",
            Floor => "floor",
            Min => "min",
            Max => "max",
            Not => "not",
            List => "list",
            Car => "car",
            Cdr => "cdr",
            Cons => "cons",
            Count => "count",
            Unique => "unique",
            IsNull => "null?",
            Mem => "mem",
            MakeCrp => "crp",
            MakeBetaBernoulli => "beta-bernoulli",
        }
    }

    pub fn by_name(name: &str) -> Option<Builtin> {
        use Builtin::*;
        Some(match name {
            "+" => Add,
            "-" => Sub,
            "*" => Mul,
            "/" => Div,
            "=" => NumEq,
            "<" => Lt,
            ">" => Gt,
            "<=" => Le,
            ">=" => Ge,
            "sqrt" => Sqrt,
            "log" => Log,
            "exp" => Exp,
            "pow" => Pow,
            "abs" => Abs,
            "floor" => Floor,
            "min" => Min,
            "max" => Max,
            "not" => Not,
            "list" => List,
            "car" => Car,
            "cdr" => Cdr,
            "cons" => Cons,
            "count" => Count,
            "unique" => Unique,
            "null?" => IsNull,
            "mem" => Mem,
            "crp" => MakeCrp,
            "beta-bernoulli" => MakeBetaBernoulli,
            _ => return None,
        })
    }
}

impl Value {
    pub fn num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn list(items: impl IntoIterator<Item = Value, IntoIter: DoubleEndedIterator>) -> Value {
        let mut out = Value::Nil;
        for v in items.into_iter().rev() {
            out = Value::Pair(Arc::new((v, out)));
        }
        out
    }

    /// Iterate a proper list; returns None if the chain is improper.
    pub fn iter_list(&self) -> Option<Vec<&Value>> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Value::Nil => return Some(out),
                Value::Pair(p) => {
                    out.push(&p.0);
                    cur = &p.1;
                }
                _ => return None,
            }
        }
    }

    pub fn is_procedure(&self) -> bool {
        matches!(
            self,
            Value::Closure(_) | Value::Builtin(_) | Value::Erp(_) | Value::Xrp(..) | Value::Mem(_)
        )
    }

    /// Structural equality on data values; procedures compare false.
    pub fn data_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Sym(a), Value::Sym(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Nil, Value::Nil) => true,
            (Value::Pair(a), Value::Pair(b)) => a.0.data_eq(&b.0) && a.1.data_eq(&b.1),
            _ => false,
        }
    }

    /// Hashable key for memo tables; procedures are not hashable.
    pub fn memo_key(&self) -> Option<MemoArg> {
        Some(match self {
            Value::Num(x) => {
                let x = if *x == 0.0 { 0.0 } else { *x };
                debug_assert!(!x.is_nan());
                MemoArg::Num(x.to_bits())
            }
            Value::Bool(b) => MemoArg::Bool(*b),
            Value::Sym(s) => MemoArg::Sym(s.clone()),
            Value::Str(s) => MemoArg::Str(s.clone()),
            Value::Nil => MemoArg::Nil,
            Value::Pair(p) => MemoArg::Pair(Box::new((p.0.memo_key()?, p.1.memo_key()?))),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MemoArg {
    Num(u64),
    Bool(bool),
    Sym(Arc<str>),
    Str(Arc<str>),
    Nil,
    Pair(Box<(MemoArg, MemoArg)>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{}", format_num(*x)),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Sym(s) => write!(f, "{s}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Nil => write!(f, "()"),
            Value::Pair(_) => {
                write!(f, "(")?;
                let mut cur = self;
                let mut first = true;
                loop {
                    match cur {
                        Value::Pair(p) => {
                            if !first {
                                write!(f, " ")?;
                            }
                            write!(f, "{}", p.0)?;
                            first = false;
                            cur = &p.1;
                        }
                        Value::Nil => break,
                        other => {
                            write!(f, " . {other}")?;
                            break;
                        }
                    }
                }
                write!(f, ")")
            }
            Value::Closure(c) => match &c.spec.name {
                Some(n) => write!(f, "#<procedure {n}>"),
                None => write!(f, "#<procedure>"),
            },
            Value::Builtin(b) => write!(f, "#<builtin {}>", b.name()),
            Value::Erp(t) => write!(f, "#<random {}>", t.name()),
            Value::Xrp(id, k) => write!(f, "#<{} {id}>", k.name()),
            Value::Mem(_) => write!(f, "#<memoized>"),
        }
    }
}

/// Render a value as a JSON fragment (numbers, booleans, strings, arrays).
pub fn value_to_json(v: &Value) -> String {
    match v {
        Value::Num(x) => {
            if x.is_finite() {
                format_num(*x)
            } else {
                format!("\"{x}\"")
            }
        }
        Value::Bool(b) => b.to_string(),
        Value::Sym(s) => format!("{:?}", s.as_ref()),
        Value::Str(s) => format!("{:?}", s.as_ref()),
        Value::Nil => "[]".to_string(),
        Value::Pair(_) => match v.iter_list() {
            Some(items) => {
                let parts: Vec<String> = items.iter().map(|x| value_to_json(x)).collect();
                format!("[{}]", parts.join(","))
            }
            None => format!("{:?}", v.to_string()),
        },
        other => format!("{:?}", other.to_string()),
    }
}
