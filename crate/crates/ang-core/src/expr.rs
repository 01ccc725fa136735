//! Compilation of surface syntax into an executable form.
//!
//! Symbols are resolved statically: locals become frame-relative slots,
//! assume-bound names become global slots, and anything else must be a
//! builtin or a random primitive. Every application expression gets a
//! lexical site id; (site, occurrence) is the trace address scheme, so
//! site assignment is part of the language contract, not an optimization.

use std::collections::HashMap;
use std::sync::Arc;

use crate::erp::ErpType;
use crate::program::{Diagnostic, Directive, Program};
use crate::sexpr::SExpr;
use crate::value::{Builtin, Value};

#[derive(Debug)]
pub struct LambdaSpec {
    /// Binding name when the lambda was the direct right-hand side of an
    /// assume or define; display only.
    pub name: Option<Arc<str>>,
    pub params: Box<[Arc<str>]>,
    pub body: Expr,
}

#[derive(Debug, Clone)]
pub enum Expr {
    Const(Value),
    Global(u32),
    Local { depth: u16, idx: u16 },
    If { cond: Box<Expr>, then: Box<Expr>, els: Box<Expr> },
    Begin(Box<[Expr]>),
    /// Plain let: inits evaluated in the enclosing scope, then one frame.
    Let { inits: Box<[Expr]>, body: Box<Expr> },
    /// Internal define: one binding whose init sees the enclosing scope,
    /// body sees the binding. Chains compile define sequences.
    Let1 { init: Box<Expr>, body: Box<Expr> },
    Lambda(Arc<LambdaSpec>),
    App { site: u32, head: Box<Expr>, args: Box<[Expr]> },
}

#[derive(Debug)]
pub enum CDirective {
    Assume {
        slot: u32,
        name: Arc<str>,
        expr: Expr,
    },
    /// Observe stores the scoring primitive statically (validation requires
    /// the outermost procedure to name one) and the pre-evaluated constant.
    Observe {
        erp: ErpType,
        args: Box<[Expr]>,
        site: u32,
        value: Value,
        observe_index: u32,
    },
    Predict {
        expr: Expr,
        label: Arc<str>,
    },
}

#[derive(Debug)]
pub struct CompiledProgram {
    pub directives: Box<[CDirective]>,
    pub n_globals: u32,
    pub n_sites: u32,
    pub n_observes: u32,
    pub global_names: Box<[Arc<str>]>,
    /// Printed source of each application site, for runtime error context.
    pub site_sources: Box<[Arc<str>]>,
    pub source_name: String,
}

impl CompiledProgram {
    pub fn predict_labels(&self) -> Vec<Arc<str>> {
        self.directives
            .iter()
            .filter_map(|d| match d {
                CDirective::Predict { label, .. } => Some(label.clone()),
                _ => None,
            })
            .collect()
    }
}

const RESERVED: &[&str] = &["lambda", "if", "begin", "let", "define", "quote", "cond", "else"];

struct Compiler {
    globals: Vec<Arc<str>>,
    global_index: HashMap<Arc<str>, u32>,
    sites: Vec<Arc<str>>,
    diags: Vec<Diagnostic>,
    directive_index: usize,
}

impl Compiler {
    fn diag(&mut self, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            directive_index: Some(self.directive_index),
            message: message.into(),
        });
    }

    fn alloc_site(&mut self, source: &SExpr) -> u32 {
        let id = self.sites.len() as u32;
        self.sites.push(source.to_string().into());
        id
    }

    /// Resolve a symbol against the local scope stack, then globals, then
    /// builtins and random primitives.
    fn resolve(&mut self, name: &str, scope: &[Vec<Arc<str>>]) -> Expr {
        for (depth, frame) in scope.iter().rev().enumerate() {
            if let Some(idx) = frame.iter().position(|p| p.as_ref() == name) {
                return Expr::Local { depth: depth as u16, idx: idx as u16 };
            }
        }
        if let Some(&slot) = self.global_index.get(name) {
            return Expr::Global(slot);
        }
        if let Some(b) = Builtin::by_name(name) {
            return Expr::Const(Value::Builtin(b));
        }
        if let Some(t) = ErpType::by_name(name) {
            return Expr::Const(Value::Erp(t));
        }
        self.diag(format!("unbound symbol `{name}`"));
        Expr::Const(Value::Nil)
    }

    fn bindable(&mut self, name: &str) -> bool {
        if RESERVED.contains(&name) {
            self.diag(format!("`{name}` is reserved and cannot be bound"));
            false
        } else {
            true
        }
    }

    fn compile_expr(&mut self, sx: &SExpr, scope: &mut Vec<Vec<Arc<str>>>) -> Expr {
        match sx {
            SExpr::Number(x) => Expr::Const(Value::Num(*x)),
            SExpr::Boolean(b) => Expr::Const(Value::Bool(*b)),
            SExpr::Str(s) => Expr::Const(Value::Str(s.as_str().into())),
            SExpr::Symbol(s) => {
                if RESERVED.contains(&s.as_str()) {
                    self.diag(format!("`{s}` is a special form, not a value"));
                    return Expr::Const(Value::Nil);
                }
                self.resolve(s, scope)
            }
            SExpr::List(items) => {
                if items.is_empty() {
                    self.diag("() is not a valid expression");
                    return Expr::Const(Value::Nil);
                }
                if let SExpr::Symbol(head) = &items[0] {
                    match head.as_str() {
                        "lambda" => return self.compile_lambda(sx, items, scope, None),
                        "if" => return self.compile_if(items, scope),
                        "begin" => return self.compile_body(&items[1..], scope, "begin"),
                        "let" => return self.compile_let(items, scope),
                        "quote" => return self.compile_quote(items),
                        "cond" => return self.compile_cond(items, scope),
                        "define" => {
                            self.diag("define is only allowed at the start of a body");
                            return Expr::Const(Value::Nil);
                        }
                        _ => {}
                    }
                }
                let site = self.alloc_site(sx);
                let head = self.compile_expr(&items[0], scope);
                let args: Vec<Expr> =
                    items[1..].iter().map(|a| self.compile_expr(a, scope)).collect();
                Expr::App { site, head: Box::new(head), args: args.into() }
            }
        }
    }

    fn compile_lambda(
        &mut self,
        source: &SExpr,
        items: &[SExpr],
        scope: &mut Vec<Vec<Arc<str>>>,
        name: Option<Arc<str>>,
    ) -> Expr {
        if items.len() < 3 {
            self.diag(format!("lambda needs a parameter list and a body: {source}"));
            return Expr::Const(Value::Nil);
        }
        let mut params: Vec<Arc<str>> = Vec::new();
        match &items[1] {
            SExpr::List(ps) => {
                for p in ps {
                    match p {
                        SExpr::Symbol(s) if self.bindable(s) => {
                            if params.iter().any(|q| q.as_ref() == s.as_str()) {
                                self.diag(format!("duplicate parameter `{s}`"));
                            }
                            params.push(s.as_str().into());
                        }
                        SExpr::Symbol(_) => {}
                        other => self.diag(format!("parameter must be a symbol, got {other}")),
                    }
                }
            }
            other => self.diag(format!("lambda parameters must be a list, got {other}")),
        }
        scope.push(params.clone());
        let body = self.compile_body(&items[2..], scope, "lambda");
        scope.pop();
        Expr::Lambda(Arc::new(LambdaSpec { name, params: params.into(), body }))
    }

    fn compile_if(&mut self, items: &[SExpr], scope: &mut Vec<Vec<Arc<str>>>) -> Expr {
        if items.len() != 3 && items.len() != 4 {
            self.diag("if takes a condition, a consequent, and an optional alternative");
            return Expr::Const(Value::Nil);
        }
        let cond = self.compile_expr(&items[1], scope);
        let then = self.compile_expr(&items[2], scope);
        let els = if items.len() == 4 {
            self.compile_expr(&items[3], scope)
        } else {
            Expr::Const(Value::Nil)
        };
        Expr::If { cond: Box::new(cond), then: Box::new(then), els: Box::new(els) }
    }

    fn compile_let(&mut self, items: &[SExpr], scope: &mut Vec<Vec<Arc<str>>>) -> Expr {
        if items.len() < 3 {
            self.diag("let needs a binding list and a body");
            return Expr::Const(Value::Nil);
        }
        let SExpr::List(bindings) = &items[1] else {
            self.diag("let bindings must be a list");
            return Expr::Const(Value::Nil);
        };
        let mut names: Vec<Arc<str>> = Vec::new();
        let mut inits: Vec<Expr> = Vec::new();
        for b in bindings {
            match b {
                SExpr::List(pair) if pair.len() == 2 => {
                    if let SExpr::Symbol(s) = &pair[0] {
                        if self.bindable(s) {
                            names.push(s.as_str().into());
                            inits.push(self.compile_expr(&pair[1], scope));
                        }
                    } else {
                        self.diag("let binding name must be a symbol");
                    }
                }
                other => self.diag(format!("let binding must be (name expr), got {other}")),
            }
        }
        scope.push(names);
        let body = self.compile_body(&items[2..], scope, "let");
        scope.pop();
        Expr::Let { inits: inits.into(), body: Box::new(body) }
    }

    fn compile_quote(&mut self, items: &[SExpr]) -> Expr {
        if items.len() != 2 {
            self.diag("quote takes exactly one datum");
            return Expr::Const(Value::Nil);
        }
        Expr::Const(datum_to_value(&items[1]))
    }

    fn compile_cond(&mut self, items: &[SExpr], scope: &mut Vec<Vec<Arc<str>>>) -> Expr {
        // Right-fold the clauses into nested ifs; else must be last.
        let mut result = Expr::Const(Value::Nil);
        for (i, clause) in items[1..].iter().enumerate().rev() {
            let SExpr::List(parts) = clause else {
                self.diag(format!("cond clause must be a list, got {clause}"));
                continue;
            };
            if parts.len() < 2 {
                self.diag("cond clause needs a test and a result");
                continue;
            }
            if matches!(&parts[0], SExpr::Symbol(s) if s == "else") {
                if i != items.len() - 2 {
                    self.diag("else must be the last cond clause");
                }
                result = self.compile_body(&parts[1..], scope, "cond");
            } else {
                let test = self.compile_expr(&parts[0], scope);
                let then = self.compile_body(&parts[1..], scope, "cond");
                result = Expr::If {
                    cond: Box::new(test),
                    then: Box::new(then),
                    els: Box::new(result),
                };
            }
        }
        result
    }

    /// A body: internal defines bind for the remaining forms; the last
    /// form's value is the result.
    fn compile_body(
        &mut self,
        forms: &[SExpr],
        scope: &mut Vec<Vec<Arc<str>>>,
        what: &str,
    ) -> Expr {
        if forms.is_empty() {
            self.diag(format!("empty {what} body"));
            return Expr::Const(Value::Nil);
        }
        let form = &forms[0];
        if let SExpr::List(items) = form {
            if matches!(&items[..], [SExpr::Symbol(s), ..] if s == "define") {
                if items.len() != 3 {
                    self.diag(format!("define takes a name and an expression: {form}"));
                    return Expr::Const(Value::Nil);
                }
                let SExpr::Symbol(name) = &items[1] else {
                    self.diag(format!("define name must be a symbol: {form}"));
                    return Expr::Const(Value::Nil);
                };
                if forms.len() == 1 {
                    self.diag(format!("a body cannot end with a define: {form}"));
                }
                if !self.bindable(name) {
                    return Expr::Const(Value::Nil);
                }
                let name: Arc<str> = name.as_str().into();
                let init = if let SExpr::List(sub) = &items[2] {
                    // A defined lambda gets its name for display.
                    if matches!(&sub[..], [SExpr::Symbol(s), ..] if s == "lambda") {
                        self.compile_lambda(&items[2], sub, scope, Some(name.clone()))
                    } else {
                        self.compile_expr(&items[2], scope)
                    }
                } else {
                    self.compile_expr(&items[2], scope)
                };
                scope.push(vec![name]);
                let body = self.compile_body(&forms[1..], scope, what);
                scope.pop();
                return Expr::Let1 { init: Box::new(init), body: Box::new(body) };
            }
        }
        if forms.len() == 1 {
            return self.compile_expr(form, scope);
        }
        let first = self.compile_expr(form, scope);
        let rest = self.compile_body(&forms[1..], scope, what);
        // Flatten into one Begin so sequences stay shallow.
        let mut seq = vec![first];
        match rest {
            Expr::Begin(items) => seq.extend(items.into_vec()),
            other => seq.push(other),
        }
        Expr::Begin(seq.into())
    }
}

/// Quoted datum to runtime value.
pub fn datum_to_value(sx: &SExpr) -> Value {
    match sx {
        SExpr::Number(x) => Value::Num(*x),
        SExpr::Boolean(b) => Value::Bool(*b),
        SExpr::Str(s) => Value::Str(s.as_str().into()),
        SExpr::Symbol(s) => Value::Sym(s.as_str().into()),
        SExpr::List(items) => Value::list(items.iter().map(datum_to_value).collect::<Vec<_>>()),
    }
}

/// Evaluate an observation's constant expression: literals, quoted data,
/// and arithmetic (+ - * / sqrt log exp) over constants.
pub fn const_eval(sx: &SExpr) -> Option<Value> {
    match sx {
        SExpr::Number(x) => Some(Value::Num(*x)),
        SExpr::Boolean(b) => Some(Value::Bool(*b)),
        SExpr::Str(s) => Some(Value::Str(s.as_str().into())),
        SExpr::Symbol(_) => None,
        SExpr::List(items) => {
            if let [SExpr::Symbol(op), rest @ ..] = &items[..] {
                if op == "quote" && rest.len() == 1 {
                    return Some(datum_to_value(&rest[0]));
                }
                let args: Option<Vec<f64>> =
                    rest.iter().map(|a| const_eval(a)?.num()).collect();
                let a = args?;
                let x = match (op.as_str(), a.len()) {
                    ("+", _) => a.iter().sum(),
                    ("-", 1) => -a[0],
                    ("-", _) if !a.is_empty() => a[1..].iter().fold(a[0], |acc, v| acc - v),
                    ("*", _) => a.iter().product(),
                    ("/", 2) => a[0] / a[1],
                    ("sqrt", 1) => a[0].sqrt(),
                    ("log", 1) => a[0].ln(),
                    ("exp", 1) => a[0].exp(),
                    _ => return None,
                };
                Some(Value::Num(x))
            } else {
                None
            }
        }
    }
}

/// Resolve, check, and lower a parsed program. Diagnostics are collected
/// across all directives rather than stopping at the first.
pub fn compile(program: &Program) -> Result<Arc<CompiledProgram>, Vec<Diagnostic>> {
    let mut c = Compiler {
        globals: Vec::new(),
        global_index: HashMap::new(),
        sites: Vec::new(),
        diags: Vec::new(),
        directive_index: 0,
    };
    let mut out: Vec<CDirective> = Vec::new();
    let mut n_observes = 0u32;
    for (i, d) in program.directives.iter().enumerate() {
        c.directive_index = i;
        let mut scope: Vec<Vec<Arc<str>>> = Vec::new();
        match d {
            Directive::Assume { symbol, expr } => {
                if !c.bindable(symbol) {
                    continue;
                }
                let name: Arc<str> = symbol.as_str().into();
                if c.global_index.contains_key(&name) {
                    c.diag(format!("duplicate assume symbol `{symbol}`"));
                    continue;
                }
                // The slot exists while compiling its own expression so
                // recursive procedures can call themselves by name.
                let slot = c.globals.len() as u32;
                c.globals.push(name.clone());
                c.global_index.insert(name.clone(), slot);
                let compiled = if let SExpr::List(sub) = expr {
                    if matches!(&sub[..], [SExpr::Symbol(s), ..] if s == "lambda") {
                        c.compile_lambda(expr, sub, &mut scope, Some(name.clone()))
                    } else {
                        c.compile_expr(expr, &mut scope)
                    }
                } else {
                    c.compile_expr(expr, &mut scope)
                };
                out.push(CDirective::Assume { slot, name, expr: compiled });
            }
            Directive::Observe { expr, value } => {
                let Some(v) = const_eval(value) else {
                    c.diag(format!("observe value must be a constant expression, got {value}"));
                    continue;
                };
                if !matches!(v, Value::Num(_) | Value::Bool(_)) {
                    c.diag(format!("observe value must be a number or boolean, got {v}"));
                    continue;
                }
                let SExpr::List(items) = expr else {
                    c.diag(format!("observed expression must be an application, got {expr}"));
                    continue;
                };
                if items.is_empty() {
                    c.diag("observed expression must be an application, got ()");
                    continue;
                }
                let erp = match &items[0] {
                    SExpr::Symbol(h) => match ErpType::by_name(h) {
                        Some(t) if !c.global_index.contains_key(h.as_str()) => Some(t),
                        Some(_) => {
                            c.diag(format!(
                                "observed primitive `{h}` is shadowed by an assume"
                            ));
                            None
                        }
                        None => {
                            c.diag(format!(
                                "outermost procedure of an observe must be a random \
                                 primitive, got `{h}`"
                            ));
                            None
                        }
                    },
                    other => {
                        c.diag(format!(
                            "outermost procedure of an observe must be a random \
                             primitive name, got {other}"
                        ));
                        None
                    }
                };
                let site = c.alloc_site(expr);
                let args: Vec<Expr> =
                    items[1..].iter().map(|a| c.compile_expr(a, &mut scope)).collect();
                if let Some(erp) = erp {
                    out.push(CDirective::Observe {
                        erp,
                        args: args.into(),
                        site,
                        value: v,
                        observe_index: n_observes,
                    });
                    n_observes += 1;
                }
            }
            Directive::Predict { expr } => {
                let label: Arc<str> = expr.to_string().into();
                let compiled = c.compile_expr(expr, &mut scope);
                out.push(CDirective::Predict { expr: compiled, label });
            }
        }
    }
    if c.diags.is_empty() {
        Ok(Arc::new(CompiledProgram {
            directives: out.into(),
            n_globals: c.globals.len() as u32,
            n_sites: c.sites.len() as u32,
            n_observes,
            global_names: c.globals.into(),
            site_sources: c.sites.into(),
            source_name: program.source_name.clone(),
        }))
    } else {
        Err(c.diags)
    }
}
