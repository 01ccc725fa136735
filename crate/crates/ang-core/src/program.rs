//! Surface programs: directive extraction and validation.
//!
//! A program is a sequence of bracketed directives. `parse_program`
//! classifies the forms; `validate` resolves every symbol and checks the
//! observation rules by running the compiler, collecting all diagnostics
//! instead of stopping at the first.

use std::sync::Arc;

use crate::expr::{self, CompiledProgram};
use crate::sexpr::{read_source, SExpr, SyntaxError, TopForm};

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Assume { symbol: String, expr: SExpr },
    Observe { expr: SExpr, value: SExpr },
    Predict { expr: SExpr },
}

impl Directive {
    /// Re-render as the bracketed source form.
    pub fn to_source(&self) -> String {
        match self {
            Directive::Assume { symbol, expr } => format!("[assume {symbol} {expr}]"),
            Directive::Observe { expr, value } => format!("[observe {expr} {value}]"),
            Directive::Predict { expr } => format!("[predict {expr}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub directives: Vec<Directive>,
    pub source_name: String,
}

#[derive(Debug, Clone)]
pub struct Diagnostic {
    /// Directive ordinal the problem belongs to, when attributable.
    pub directive_index: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.directive_index {
            Some(i) => write!(f, "directive {}: {}", i, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Classify top-level forms into directives.
pub fn parse_program(forms: &[TopForm], source_name: &str) -> Result<Program, Vec<Diagnostic>> {
    let mut directives = Vec::new();
    let mut diags = Vec::new();
    for (i, form) in forms.iter().enumerate() {
        let mut fail = |msg: String| {
            diags.push(Diagnostic { directive_index: Some(i), message: msg });
        };
        if !form.directive {
            fail(format!(
                "top-level form at {} must be a bracketed directive",
                form.pos
            ));
            continue;
        }
        let SExpr::List(items) = &form.expr else {
            fail(format!("directive at {} must be a list form", form.pos));
            continue;
        };
        let head = match items.first() {
            Some(SExpr::Symbol(s)) => s.as_str(),
            _ => {
                fail(format!("directive at {} has no head symbol", form.pos));
                continue;
            }
        };
        match head {
            "assume" => {
                if items.len() != 3 {
                    fail("assume takes a symbol and an expression".into());
                    continue;
                }
                let SExpr::Symbol(symbol) = &items[1] else {
                    fail(format!("assume needs a symbol to bind, got {}", items[1]));
                    continue;
                };
                directives.push(Directive::Assume {
                    symbol: symbol.clone(),
                    expr: items[2].clone(),
                });
            }
            "observe" => {
                if items.len() != 3 {
                    fail("observe takes an expression and a constant value".into());
                    continue;
                }
                if expr::const_eval(&items[2]).is_none() {
                    fail(format!(
                        "observe value must be a constant expression, got {}",
                        items[2]
                    ));
                    continue;
                }
                directives.push(Directive::Observe {
                    expr: items[1].clone(),
                    value: items[2].clone(),
                });
            }
            "predict" => {
                if items.len() != 2 {
                    fail("predict takes exactly one expression".into());
                    continue;
                }
                directives.push(Directive::Predict { expr: items[1].clone() });
            }
            other => fail(format!("unknown directive `{other}`")),
        }
    }
    if diags.is_empty() {
        Ok(Program { directives, source_name: source_name.to_string() })
    } else {
        Err(diags)
    }
}

/// All validation diagnostics for a parsed program; empty means valid.
pub fn validate(program: &Program) -> Vec<Diagnostic> {
    match expr::compile(program) {
        Ok(_) => Vec::new(),
        Err(diags) => diags,
    }
}

/// Everything that can go wrong turning source text into a runnable program.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("syntax error at {}: {}", .0.pos, .0.message)]
    Syntax(#[from] SyntaxError),
    #[error("{}", render_diags(.0))]
    Invalid(Vec<Diagnostic>),
}

fn render_diags(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

/// Source text to compiled program: tokenize, read, parse, compile.
pub fn load_source(text: &str, source_name: &str) -> Result<Arc<CompiledProgram>, LoadError> {
    let forms = read_source(text)?;
    let program = parse_program(&forms, source_name).map_err(LoadError::Invalid)?;
    expr::compile(&program).map_err(LoadError::Invalid)
}
