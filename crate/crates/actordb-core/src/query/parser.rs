//! Recursive-descent parser.
//!
//! Grammar (AND binds tighter than OR; `AS OF` strings must be RFC 3339):
//!
//! ```text
//! statement  = select | subscribe , [";"] ;
//! select     = "SELECT" selectList "FROM" qname [temporal] ["WHERE" expr] ["LIMIT" int] ;
//! subscribe  = "SUBSCRIBE" "TO" qname ["WHERE" expr] ;
//! temporal   = "FOR" "TIMESTAMP" "AS" "OF" stringLit ;
//! selectList = "*" | ident {"," ident} ;
//! qname      = "projections" "." ident ;
//! expr       = orExpr ; orExpr = andExpr {"OR" andExpr} ; andExpr = notExpr {"AND" notExpr} ;
//! notExpr    = ["NOT"] primary ; primary = "(" expr ")" | comparison | "TRUE" | "FALSE" ;
//! comparison = operand compOp operand ; operand = ident ["." ident] | literal ;
//! ```
//!
//! The only qualified operand namespace is `principal.<attr>`, used by
//! row-level-security policy predicates.

use super::ast::{QueryStatement, SelectList, SelectStatement, SubscribeStatement};
use super::lexer::{tokenize, Keyword, Tok, Token};
use super::QueryError;
use crate::expr::{Expression, Operand};
use crate::scalar::Scalar;
use crate::time::parse_rfc3339_ms;

pub fn parse(text: &str) -> Result<QueryStatement, QueryError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, at: 0 };
    let statement = parser.statement()?;
    parser.finish()?;
    Ok(statement)
}

/// Parse a bare boolean expression (used for policy row predicates).
pub fn parse_expression(text: &str) -> Result<Expression, QueryError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, at: 0 };
    let expr = parser.expr()?;
    parser.finish()?;
    Ok(expr)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.at).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.tokens
            .get(self.at)
            .or_else(|| self.tokens.last())
            .map(|t| t.pos)
            .unwrap_or(0)
    }

    fn bump(&mut self) -> Option<Tok> {
        let tok = self.tokens.get(self.at).map(|t| t.tok.clone());
        self.at += 1;
        tok
    }

    fn error(&self, expected: &str) -> QueryError {
        let found = match self.peek() {
            Some(tok) => format!("{tok:?}"),
            None => "end of input".to_string(),
        };
        QueryError::ParseError {
            pos: self.pos(),
            expected: format!("expected {expected}, found {found}"),
        }
    }

    fn expect_keyword(&mut self, kw: Keyword, what: &str) -> Result<(), QueryError> {
        match self.peek() {
            Some(Tok::Keyword(k)) if *k == kw => {
                self.bump();
                Ok(())
            }
            _ => Err(self.error(what)),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, QueryError> {
        match self.peek() {
            Some(Tok::Ident(_)) => {
                let Some(Tok::Ident(name)) = self.bump() else { unreachable!() };
                Ok(name)
            }
            _ => Err(self.error(what)),
        }
    }

    fn statement(&mut self) -> Result<QueryStatement, QueryError> {
        let statement = match self.peek() {
            Some(Tok::Keyword(Keyword::Select)) => QueryStatement::Select(self.select()?),
            Some(Tok::Keyword(Keyword::Subscribe)) => QueryStatement::Subscribe(self.subscribe()?),
            _ => return Err(self.error("SELECT or SUBSCRIBE")),
        };
        if matches!(self.peek(), Some(Tok::Semi)) {
            self.bump();
        }
        Ok(statement)
    }

    fn finish(&self) -> Result<(), QueryError> {
        if self.at < self.tokens.len() {
            return Err(self.error("end of statement"));
        }
        Ok(())
    }

    fn select(&mut self) -> Result<SelectStatement, QueryError> {
        self.expect_keyword(Keyword::Select, "SELECT")?;
        let select_list = self.select_list()?;
        self.expect_keyword(Keyword::From, "FROM")?;
        let projection = self.qname()?;

        let mut as_of = None;
        if matches!(self.peek(), Some(Tok::Keyword(Keyword::For))) {
            self.bump();
            self.expect_keyword(Keyword::Timestamp, "TIMESTAMP")?;
            self.expect_keyword(Keyword::As, "AS")?;
            self.expect_keyword(Keyword::Of, "OF")?;
            let literal = match self.peek() {
                Some(Tok::Str(_)) => {
                    let Some(Tok::Str(s)) = self.bump() else { unreachable!() };
                    s
                }
                _ => return Err(self.error("a timestamp string literal")),
            };
            as_of = Some(parse_rfc3339_ms(&literal).map_err(QueryError::BadTimestamp)?);
        }

        let predicate = self.optional_where()?;

        let mut limit = None;
        if matches!(self.peek(), Some(Tok::Keyword(Keyword::Limit))) {
            self.bump();
            match self.peek() {
                Some(Tok::Int(n)) if *n >= 1 => {
                    limit = Some(*n as u64);
                    self.bump();
                }
                _ => return Err(self.error("a positive integer after LIMIT")),
            }
        }

        Ok(SelectStatement {
            projection,
            select_list,
            as_of,
            predicate,
            limit,
        })
    }

    fn subscribe(&mut self) -> Result<SubscribeStatement, QueryError> {
        self.expect_keyword(Keyword::Subscribe, "SUBSCRIBE")?;
        self.expect_keyword(Keyword::To, "TO")?;
        let projection = self.qname()?;
        let predicate = self.optional_where()?;
        Ok(SubscribeStatement {
            projection,
            predicate,
        })
    }

    fn optional_where(&mut self) -> Result<Option<Expression>, QueryError> {
        if matches!(self.peek(), Some(Tok::Keyword(Keyword::Where))) {
            self.bump();
            Ok(Some(self.expr()?))
        } else {
            Ok(None)
        }
    }

    fn select_list(&mut self) -> Result<SelectList, QueryError> {
        if matches!(self.peek(), Some(Tok::Star)) {
            self.bump();
            return Ok(SelectList::Star);
        }
        let mut columns = vec![self.expect_ident("'*' or a column name")?];
        while matches!(self.peek(), Some(Tok::Comma)) {
            self.bump();
            columns.push(self.expect_ident("a column name after ','")?);
        }
        Ok(SelectList::Columns(columns))
    }

    fn qname(&mut self) -> Result<String, QueryError> {
        let namespace = self.expect_ident("a qualified name like projections.<name>")?;
        if namespace != "projections" {
            return Err(QueryError::ParseError {
                pos: self.pos(),
                expected: format!("expected namespace 'projections', found {namespace:?}"),
            });
        }
        match self.peek() {
            Some(Tok::Dot) => {
                self.bump();
            }
            _ => return Err(self.error("'.' after 'projections'")),
        }
        self.expect_ident("a projection name")
    }

    fn expr(&mut self) -> Result<Expression, QueryError> {
        let mut left = self.and_expr()?;
        while matches!(self.peek(), Some(Tok::Keyword(Keyword::Or))) {
            self.bump();
            let right = self.and_expr()?;
            left = left.or(right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expression, QueryError> {
        let mut left = self.not_expr()?;
        while matches!(self.peek(), Some(Tok::Keyword(Keyword::And))) {
            self.bump();
            let right = self.not_expr()?;
            left = left.and(right);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<Expression, QueryError> {
        if matches!(self.peek(), Some(Tok::Keyword(Keyword::Not))) {
            self.bump();
            Ok(Expression::Not(Box::new(self.not_expr()?)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Expression, QueryError> {
        match self.peek() {
            Some(Tok::LParen) => {
                self.bump();
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.bump();
                        Ok(inner)
                    }
                    _ => Err(self.error("')'")),
                }
            }
            Some(Tok::Keyword(Keyword::True)) => {
                self.bump();
                Ok(Expression::Bool(true))
            }
            Some(Tok::Keyword(Keyword::False)) => {
                self.bump();
                Ok(Expression::Bool(false))
            }
            _ => self.comparison(),
        }
    }

    fn comparison(&mut self) -> Result<Expression, QueryError> {
        let left = self.operand()?;
        let op = match self.peek() {
            Some(Tok::Op(op)) => {
                let op = *op;
                self.bump();
                op
            }
            _ => return Err(self.error("a comparison operator")),
        };
        let right = self.operand()?;
        Ok(Expression::Comparison { left, op, right })
    }

    fn operand(&mut self) -> Result<Operand, QueryError> {
        match self.peek() {
            Some(Tok::Ident(_)) => {
                let Some(Tok::Ident(name)) = self.bump() else { unreachable!() };
                if matches!(self.peek(), Some(Tok::Dot)) {
                    self.bump();
                    let attr = self.expect_ident("an attribute after '.'")?;
                    if name != "principal" {
                        return Err(QueryError::ParseError {
                            pos: self.pos(),
                            expected: format!(
                                "only principal.<attr> references may be qualified, found {name:?}"
                            ),
                        });
                    }
                    Ok(Operand::PrincipalRef(attr))
                } else {
                    Ok(Operand::Column(name))
                }
            }
            Some(Tok::Str(_)) => {
                let Some(Tok::Str(s)) = self.bump() else { unreachable!() };
                Ok(Operand::Literal(Scalar::Str(s)))
            }
            Some(Tok::Int(_)) => {
                let Some(Tok::Int(n)) = self.bump() else { unreachable!() };
                Ok(Operand::Literal(Scalar::Int(n)))
            }
            Some(Tok::Float(_)) => {
                let Some(Tok::Float(f)) = self.bump() else { unreachable!() };
                Ok(Operand::Literal(Scalar::Float(f)))
            }
            Some(Tok::Keyword(Keyword::True)) => {
                self.bump();
                Ok(Operand::Literal(Scalar::Bool(true)))
            }
            Some(Tok::Keyword(Keyword::False)) => {
                self.bump();
                Ok(Operand::Literal(Scalar::Bool(false)))
            }
            _ => Err(self.error("a column, principal.<attr>, or literal")),
        }
    }
}
