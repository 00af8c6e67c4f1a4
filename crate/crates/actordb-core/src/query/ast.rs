//! Statement AST and the canonical pretty-printer.
//!
//! `print` emits a canonical form whose re-parse yields the identical AST
//! (the round-trip fixpoint the parser tests pin down).

use crate::expr::{Expression, Operand};
use crate::scalar::Scalar;
use crate::time::format_rfc3339_ms;

#[derive(Debug, Clone, PartialEq)]
pub enum SelectList {
    Star,
    Columns(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectStatement {
    pub projection: String,
    pub select_list: SelectList,
    /// Epoch milliseconds parsed from the `FOR TIMESTAMP AS OF` literal.
    pub as_of: Option<i64>,
    pub predicate: Option<Expression>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubscribeStatement {
    pub projection: String,
    pub predicate: Option<Expression>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryStatement {
    Select(SelectStatement),
    Subscribe(SubscribeStatement),
}

impl QueryStatement {
    pub fn projection(&self) -> &str {
        match self {
            QueryStatement::Select(s) => &s.projection,
            QueryStatement::Subscribe(s) => &s.projection,
        }
    }

    pub fn predicate(&self) -> Option<&Expression> {
        match self {
            QueryStatement::Select(s) => s.predicate.as_ref(),
            QueryStatement::Subscribe(s) => s.predicate.as_ref(),
        }
    }

    /// Canonical text form.
    pub fn print(&self) -> String {
        match self {
            QueryStatement::Select(s) => {
                let mut out = String::from("SELECT ");
                match &s.select_list {
                    SelectList::Star => out.push('*'),
                    SelectList::Columns(cols) => out.push_str(&cols.join(", ")),
                }
                out.push_str(" FROM projections.");
                out.push_str(&s.projection);
                if let Some(ms) = s.as_of {
                    out.push_str(" FOR TIMESTAMP AS OF '");
                    out.push_str(&format_rfc3339_ms(ms));
                    out.push('\'');
                }
                if let Some(pred) = &s.predicate {
                    out.push_str(" WHERE ");
                    print_expr(pred, &mut out);
                }
                if let Some(limit) = s.limit {
                    out.push_str(&format!(" LIMIT {limit}"));
                }
                out.push(';');
                out
            }
            QueryStatement::Subscribe(s) => {
                let mut out = String::from("SUBSCRIBE TO projections.");
                out.push_str(&s.projection);
                if let Some(pred) = &s.predicate {
                    out.push_str(" WHERE ");
                    print_expr(pred, &mut out);
                }
                out.push(';');
                out
            }
        }
    }
}

/// Precedence levels: OR (lowest), AND, NOT, primary.
fn expr_level(e: &Expression) -> u8 {
    match e {
        Expression::Or(_, _) => 0,
        Expression::And(_, _) => 1,
        Expression::Not(_) => 2,
        Expression::Comparison { .. } | Expression::Bool(_) => 3,
    }
}

pub fn print_expr(e: &Expression, out: &mut String) {
    print_expr_prec(e, 0, out);
}

fn print_expr_prec(e: &Expression, min_level: u8, out: &mut String) {
    let level = expr_level(e);
    let needs_parens = level < min_level;
    if needs_parens {
        out.push('(');
    }
    match e {
        Expression::Or(a, b) => {
            print_expr_prec(a, 0, out);
            out.push_str(" OR ");
            // Right operand one level up keeps the tree left-associative on
            // re-parse.
            print_expr_prec(b, 1, out);
        }
        Expression::And(a, b) => {
            print_expr_prec(a, 1, out);
            out.push_str(" AND ");
            print_expr_prec(b, 2, out);
        }
        Expression::Not(inner) => {
            out.push_str("NOT ");
            print_expr_prec(inner, 3, out);
        }
        Expression::Comparison { left, op, right } => {
            print_operand(left, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            print_operand(right, out);
        }
        Expression::Bool(true) => out.push_str("TRUE"),
        Expression::Bool(false) => out.push_str("FALSE"),
    }
    if needs_parens {
        out.push(')');
    }
}

fn print_operand(op: &Operand, out: &mut String) {
    match op {
        Operand::Column(name) => out.push_str(name),
        Operand::PrincipalRef(attr) => {
            out.push_str("principal.");
            out.push_str(attr);
        }
        Operand::Literal(value) => print_literal(value, out),
    }
}

fn print_literal(value: &Scalar, out: &mut String) {
    match value {
        Scalar::Str(s) => {
            out.push('\'');
            out.push_str(&s.replace('\'', "''"));
            out.push('\'');
        }
        Scalar::Int(v) => out.push_str(&v.to_string()),
        Scalar::Float(v) => {
            // Keep a decimal point so the literal re-lexes as a float.
            if v.fract() == 0.0 && v.is_finite() {
                out.push_str(&format!("{v:.1}"));
            } else {
                out.push_str(&v.to_string());
            }
        }
        Scalar::Bool(true) => out.push_str("TRUE"),
        Scalar::Bool(false) => out.push_str("FALSE"),
        Scalar::Null => out.push_str("''"), // unreachable from the parser
    }
}

