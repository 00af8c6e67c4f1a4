//! SQL-subset query interface: tokenizer, recursive-descent parser,
//! planner with transparent RLS injection, executor, and subscriptions.

mod ast;
mod lexer;
mod parser;
mod service;

pub use ast::{print_expr, QueryStatement, SelectList, SelectStatement, SubscribeStatement};
pub use lexer::{tokenize, Keyword, Tok, Token};
pub use parser::{parse, parse_expression};
pub use service::{LatencySink, QueryPlan, QueryRoute, QueryService};

use thiserror::Error;

use crate::projection::ProjectionError;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("lex error at {pos}: {message}")]
    LexError { pos: usize, message: String },

    #[error("parse error at {pos}: {expected}")]
    ParseError { pos: usize, expected: String },

    #[error("bad timestamp: {0}")]
    BadTimestamp(String),

    #[error("access denied")]
    AccessDenied,

    #[error("unknown projection {0:?}")]
    UnknownProjection(String),

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("expression error: {0}")]
    ExpressionError(String),

    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

impl QueryError {
    /// Stable machine-readable code for wire responses and exit codes.
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::LexError { .. } => "LexError",
            QueryError::ParseError { .. } => "ParseError",
            QueryError::BadTimestamp(_) => "BadTimestamp",
            QueryError::AccessDenied => "AccessDenied",
            QueryError::UnknownProjection(_) => "UnknownProjection",
            QueryError::UnknownColumn(_) => "UnknownColumn",
            QueryError::ExpressionError(_) => "ExpressionError",
            QueryError::Projection(ProjectionError::Busy(_)) => "Busy",
            QueryError::Projection(ProjectionError::UnknownProjection(_)) => "UnknownProjection",
            QueryError::Projection(_) => "ProjectionError",
        }
    }
}
