//! Boolean filter expressions over row documents.
//!
//! Shared by the query language (WHERE clauses), row-level security
//! predicates, and subscription filters. Evaluation follows a simplified
//! three-valued rule: a comparison against a null or absent column, or
//! between incomparable types, is false — never an error.

use serde::{Deserialize, Serialize};

use crate::scalar::{Document, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CompOp::Eq => "=",
            CompOp::Ne => "!=",
            CompOp::Lt => "<",
            CompOp::Le => "<=",
            CompOp::Gt => ">",
            CompOp::Ge => ">=",
        }
    }
}

/// One side of a comparison: a row column, a `principal.<attr>` reference,
/// or a literal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Column(String),
    /// Reference to an attribute of the calling principal. `sub` and `id`
    /// resolve to the principal id itself.
    PrincipalRef(String),
    Literal(Scalar),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expression {
    Comparison {
        left: Operand,
        op: CompOp,
        right: Operand,
    },
    And(Box<Expression>, Box<Expression>),
    Or(Box<Expression>, Box<Expression>),
    Not(Box<Expression>),
    Bool(bool),
}

/// Identity of the caller for `principal.<attr>` resolution.
#[derive(Debug, Clone, Copy)]
pub struct PrincipalCtx<'a> {
    pub id: &'a str,
    pub attributes: &'a Document,
}

impl Expression {
    pub fn and(self, other: Expression) -> Expression {
        Expression::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Expression) -> Expression {
        Expression::Or(Box::new(self), Box::new(other))
    }

    pub fn eval(&self, row: &Document, principal: Option<PrincipalCtx<'_>>) -> bool {
        match self {
            Expression::Bool(v) => *v,
            Expression::Not(inner) => !inner.eval(row, principal),
            Expression::And(a, b) => a.eval(row, principal) && b.eval(row, principal),
            Expression::Or(a, b) => a.eval(row, principal) || b.eval(row, principal),
            Expression::Comparison { left, op, right } => {
                let lv = resolve(left, row, principal);
                let rv = resolve(right, row, principal);
                match (lv, rv) {
                    (Some(a), Some(b)) => compare_scalars(&a, &b, *op),
                    _ => false,
                }
            }
        }
    }

    /// Column names referenced anywhere in the expression.
    pub fn column_refs(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns(&self, out: &mut Vec<String>) {
        match self {
            Expression::Comparison { left, right, .. } => {
                for side in [left, right] {
                    if let Operand::Column(name) = side {
                        out.push(name.clone());
                    }
                }
            }
            Expression::And(a, b) | Expression::Or(a, b) => {
                a.collect_columns(out);
                b.collect_columns(out);
            }
            Expression::Not(inner) => inner.collect_columns(out),
            Expression::Bool(_) => {}
        }
    }
}

fn resolve(op: &Operand, row: &Document, principal: Option<PrincipalCtx<'_>>) -> Option<Scalar> {
    match op {
        Operand::Literal(v) => Some(v.clone()),
        Operand::Column(name) => row.get(name).cloned(),
        Operand::PrincipalRef(attr) => {
            let p = principal?;
            if attr == "sub" || attr == "id" {
                Some(Scalar::Str(p.id.to_string()))
            } else {
                p.attributes.get(attr).cloned()
            }
        }
    }
}

/// Compare two scalars under an operator. Ints and floats compare
/// numerically across types; strings with strings; bools with bools
/// (false < true). Nulls and mixed types never match.
pub fn compare_scalars(a: &Scalar, b: &Scalar, op: CompOp) -> bool {
    use std::cmp::Ordering;
    let ord = match (a, b) {
        (Scalar::Int(x), Scalar::Int(y)) => Some(x.cmp(y)),
        (Scalar::Str(x), Scalar::Str(y)) => Some(x.cmp(y)),
        (Scalar::Bool(x), Scalar::Bool(y)) => Some(x.cmp(y)),
        _ if a.is_numeric() && b.is_numeric() => {
            a.as_f64().unwrap().partial_cmp(&b.as_f64().unwrap())
        }
        _ => None,
    };
    let Some(ord) = ord else { return false };
    match op {
        CompOp::Eq => ord == Ordering::Equal,
        CompOp::Ne => ord != Ordering::Equal,
        CompOp::Lt => ord == Ordering::Less,
        CompOp::Le => ord != Ordering::Greater,
        CompOp::Gt => ord == Ordering::Greater,
        CompOp::Ge => ord != Ordering::Less,
    }
}

/// Shorthand for a `column <op> literal` comparison.
pub fn col_cmp(column: &str, op: CompOp, lit: impl Into<Scalar>) -> Expression {
    Expression::Comparison {
        left: Operand::Column(column.to_string()),
        op,
        right: Operand::Literal(lit.into()),
    }
}
