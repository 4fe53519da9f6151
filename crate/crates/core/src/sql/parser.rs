use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::{ParseError, SqlError};

const UNSUPPORTED_STATEMENTS: [&str; 12] = [
    "insert", "update", "delete", "create", "drop", "alter", "replace", "pragma", "attach", "vacuum", "with", "explain",
];

/// Parses one SELECT-form statement (compound selects included).
pub fn parse_statement(text: &str) -> Result<Query, SqlError> {
    let tokens = tokenize(text)?;
    if let Some(first) = tokens.first() {
        if let TokenKind::Word(w) = &first.kind {
            if UNSUPPORTED_STATEMENTS.iter().any(|k| k.eq_ignore_ascii_case(w)) {
                return Err(SqlError::UnsupportedSyntax(format!("{} statements", w.to_uppercase())));
            }
        }
    } else {
        return Err(ParseError::new(0, "empty statement").into());
    }
    let mut parser = Parser { tokens, pos: 0, text_len: text.len() };
    let query = parser.query()?;
    while parser.eat(&TokenKind::Semicolon) {}
    if let Some(tok) = parser.peek() {
        return Err(ParseError::new(tok.start, format!("unexpected trailing input {:?}", describe(tok))).into());
    }
    Ok(query)
}

fn describe(tok: &Token) -> String {
    match &tok.kind {
        TokenKind::Word(w) | TokenKind::QuotedIdent(w) | TokenKind::DoubleQuoted(w) => w.clone(),
        TokenKind::String(s) => format!("'{s}'"),
        other => format!("{other:?}"),
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    text_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.pos + offset)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.text_len, |t| t.start)
    }

    /// End offset of the last consumed token.
    fn last_end(&self) -> usize {
        if self.pos == 0 {
            0
        } else {
            self.tokens[self.pos - 1].end
        }
    }

    fn error(&self, message: impl Into<String>) -> SqlError {
        ParseError::new(self.here(), message).into()
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek().is_some_and(|t| &t.kind == kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: &TokenKind) -> Result<(), SqlError> {
        if self.eat(kind) {
            Ok(())
        } else {
            Err(self.error(format!("expected {kind:?}")))
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(kw))
    }

    fn at_keyword_n(&self, offset: usize, kw: &str) -> bool {
        self.peek_at(offset).is_some_and(|t| t.is_keyword(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SqlError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected {}", kw.to_uppercase())))
        }
    }

    fn identifier(&mut self) -> Result<String, SqlError> {
        match self.peek().map(|t| t.kind.clone()) {
            Some(TokenKind::Word(w)) if !is_reserved(&w) => {
                self.pos += 1;
                Ok(w)
            }
            Some(TokenKind::QuotedIdent(w)) | Some(TokenKind::DoubleQuoted(w)) => {
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn optional_alias(&mut self) -> Result<Option<String>, SqlError> {
        if self.eat_keyword("as") {
            return match self.peek().map(|t| t.kind.clone()) {
                Some(TokenKind::String(s)) => {
                    self.pos += 1;
                    Ok(Some(s))
                }
                _ => self.identifier().map(Some),
            };
        }
        match self.peek().map(|t| t.kind.clone()) {
            Some(TokenKind::Word(w)) if !is_reserved(&w) => {
                self.pos += 1;
                Ok(Some(w))
            }
            Some(TokenKind::QuotedIdent(w)) => {
                self.pos += 1;
                Ok(Some(w))
            }
            _ => Ok(None),
        }
    }

    fn query(&mut self) -> Result<Query, SqlError> {
        let start = self.here();
        let body = self.set_expr()?;
        let mut layout = QueryLayout::default();
        let mut order_by = Vec::new();
        if self.at_keyword("order") {
            let s = self.here();
            self.pos += 1;
            self.expect_keyword("by")?;
            loop {
                let expr = self.expr(0)?;
                let descending = if self.eat_keyword("desc") {
                    Some(true)
                } else if self.eat_keyword("asc") {
                    Some(false)
                } else {
                    None
                };
                order_by.push(OrderByItem { expr, descending });
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            layout.order_by = Some(Span { start: s, end: self.last_end() });
        }
        let mut limit = None;
        if self.at_keyword("limit") {
            let s = self.here();
            self.pos += 1;
            let first = self.integer()?;
            let parsed = if self.eat_keyword("offset") {
                Limit { count: first, offset: Some(self.integer()?) }
            } else if self.eat(&TokenKind::Comma) {
                Limit { count: self.integer()?, offset: Some(first) }
            } else {
                Limit { count: first, offset: None }
            };
            limit = Some(parsed);
            layout.limit = Some(Span { start: s, end: self.last_end() });
        }
        layout.span = Span { start, end: self.last_end() };
        Ok(Query { body, order_by, limit, layout })
    }

    fn integer(&mut self) -> Result<i64, SqlError> {
        let negative = self.eat(&TokenKind::Minus);
        match self.peek().map(|t| t.kind.clone()) {
            Some(TokenKind::Integer(v)) => {
                self.pos += 1;
                Ok(if negative { -v } else { v })
            }
            _ => Err(self.error("expected integer")),
        }
    }

    fn set_expr(&mut self) -> Result<SetExpr, SqlError> {
        let mut left = SetExpr::Select(Box::new(self.select()?));
        loop {
            let op = if self.at_keyword("union") {
                SetOperator::Union
            } else if self.at_keyword("intersect") {
                SetOperator::Intersect
            } else if self.at_keyword("except") {
                SetOperator::Except
            } else {
                break;
            };
            self.pos += 1;
            let all = self.eat_keyword("all");
            let right = SetExpr::Select(Box::new(self.select()?));
            left = SetExpr::SetOperation { op, all, left: Box::new(left), right: Box::new(right) };
        }
        Ok(left)
    }

    fn select(&mut self) -> Result<Select, SqlError> {
        let start = self.here();
        self.expect_keyword("select")?;
        let distinct = if self.eat_keyword("distinct") {
            true
        } else {
            self.eat_keyword("all");
            false
        };
        let mut projection = Vec::new();
        loop {
            let expr = self.expr(0)?;
            let alias = self.optional_alias()?;
            projection.push(SelectItem { expr, alias });
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        let mut layout = SelectLayout::default();
        let mut from = None;
        if self.at_keyword("from") {
            let s = self.here();
            self.pos += 1;
            let first = self.table_factor()?;
            layout.from = Some(Span { start: s, end: self.last_end() });
            let mut joins = Vec::new();
            loop {
                let s = self.here();
                let operator = if self.eat(&TokenKind::Comma) {
                    JoinOperator::Comma
                } else if self.eat_keyword("join") {
                    JoinOperator::Inner
                } else if self.at_keyword("inner") && self.at_keyword_n(1, "join") {
                    self.pos += 2;
                    JoinOperator::Inner
                } else if self.at_keyword("cross") && self.at_keyword_n(1, "join") {
                    self.pos += 2;
                    JoinOperator::Cross
                } else if self.at_keyword("left") {
                    self.pos += 1;
                    self.eat_keyword("outer");
                    self.expect_keyword("join")?;
                    JoinOperator::Left
                } else if self.at_keyword("natural") || self.at_keyword("right") || self.at_keyword("full") {
                    return Err(SqlError::UnsupportedSyntax(format!(
                        "{} JOIN",
                        describe(self.peek().expect("peeked")).to_uppercase()
                    )));
                } else {
                    break;
                };
                let factor = self.table_factor()?;
                let constraint = if self.eat_keyword("on") {
                    Some(self.expr(0)?)
                } else if self.at_keyword("using") {
                    return Err(SqlError::UnsupportedSyntax("JOIN ... USING".into()));
                } else {
                    None
                };
                joins.push(Join { operator, factor, constraint });
                layout.joins.push(Span { start: s, end: self.last_end() });
            }
            from = Some(FromClause { first, joins });
        }
        let mut selection = None;
        if self.at_keyword("where") {
            let s = self.here();
            self.pos += 1;
            selection = Some(self.expr(0)?);
            layout.selection = Some(Span { start: s, end: self.last_end() });
        }
        let mut group_by = Vec::new();
        if self.at_keyword("group") {
            let s = self.here();
            self.pos += 1;
            self.expect_keyword("by")?;
            loop {
                group_by.push(self.expr(0)?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            layout.group_by = Some(Span { start: s, end: self.last_end() });
        }
        let mut having = None;
        if self.at_keyword("having") {
            let s = self.here();
            self.pos += 1;
            having = Some(self.expr(0)?);
            layout.having = Some(Span { start: s, end: self.last_end() });
        }
        if self.at_keyword("window") {
            return Err(SqlError::UnsupportedSyntax("WINDOW clause".into()));
        }
        layout.span = Span { start, end: self.last_end() };
        Ok(Select { distinct, projection, from, selection, group_by, having, layout })
    }

    fn table_factor(&mut self) -> Result<TableFactor, SqlError> {
        if self.eat(&TokenKind::LParen) {
            if !self.at_keyword("select") {
                return Err(SqlError::UnsupportedSyntax("parenthesised join".into()));
            }
            let subquery = self.query()?;
            self.expect(&TokenKind::RParen)?;
            let alias = self.optional_alias()?;
            return Ok(TableFactor::Derived { subquery: Box::new(subquery), alias });
        }
        let name = self.identifier()?;
        let alias = self.optional_alias()?;
        Ok(TableFactor::Table { name, alias })
    }

    /// Precedence-climbing expression parser; accepts operators binding at
    /// least as tightly as `min`.
    fn expr(&mut self, min: u8) -> Result<Expr, SqlError> {
        let mut left = self.prefix()?;
        loop {
            let Some(tok) = self.peek() else { break };
            let negated_next = tok.is_keyword("not");
            let (op_prec, kind) = if negated_next {
                if self.at_keyword_n(1, "in") || self.at_keyword_n(1, "between") || self.at_keyword_n(1, "like") {
                    (4, self.peek_at(1).map(|t| describe(t).to_lowercase()).unwrap_or_default())
                } else {
                    break;
                }
            } else {
                match &tok.kind {
                    TokenKind::Word(w) => {
                        let w = w.to_lowercase();
                        match w.as_str() {
                            "or" => (1, w),
                            "and" => (2, w),
                            "in" | "like" | "between" | "is" => (4, w),
                            "over" => return Err(SqlError::UnsupportedSyntax("window functions".into())),
                            "glob" | "regexp" | "match" | "escape" | "collate" => {
                                return Err(SqlError::UnsupportedSyntax(w.to_uppercase()))
                            }
                            _ => break,
                        }
                    }
                    TokenKind::Eq => (4, "=".into()),
                    TokenKind::NotEq => (4, "!=".into()),
                    TokenKind::Lt => (5, "<".into()),
                    TokenKind::LtEq => (5, "<=".into()),
                    TokenKind::Gt => (5, ">".into()),
                    TokenKind::GtEq => (5, ">=".into()),
                    TokenKind::Plus => (6, "+".into()),
                    TokenKind::Minus => (6, "-".into()),
                    TokenKind::Star => (7, "*".into()),
                    TokenKind::Slash => (7, "/".into()),
                    TokenKind::Percent => (7, "%".into()),
                    TokenKind::Concat => (8, "||".into()),
                    _ => break,
                }
            };
            if op_prec < min {
                break;
            }
            self.pos += if negated_next { 2 } else { 1 };
            left = match kind.as_str() {
                "in" => {
                    self.expect(&TokenKind::LParen)?;
                    if self.at_keyword("select") {
                        let subquery = self.query()?;
                        self.expect(&TokenKind::RParen)?;
                        Expr::InSubquery { expr: Box::new(left), subquery: Box::new(subquery), negated: negated_next }
                    } else {
                        let mut list = Vec::new();
                        if !self.eat(&TokenKind::RParen) {
                            loop {
                                list.push(self.expr(0)?);
                                if !self.eat(&TokenKind::Comma) {
                                    break;
                                }
                            }
                            self.expect(&TokenKind::RParen)?;
                        }
                        Expr::InList { expr: Box::new(left), list, negated: negated_next }
                    }
                }
                "between" => {
                    let low = self.expr(5)?;
                    self.expect_keyword("and")?;
                    let high = self.expr(5)?;
                    Expr::Between {
                        expr: Box::new(left),
                        low: Box::new(low),
                        high: Box::new(high),
                        negated: negated_next,
                    }
                }
                "is" => {
                    let negated = self.eat_keyword("not");
                    self.expect_keyword("null")?;
                    Expr::IsNull { expr: Box::new(left), negated }
                }
                other => {
                    let op = match other {
                        "or" => BinaryOperator::Or,
                        "and" => BinaryOperator::And,
                        "like" if negated_next => BinaryOperator::NotLike,
                        "like" => BinaryOperator::Like,
                        "=" => BinaryOperator::Eq,
                        "!=" => BinaryOperator::NotEq,
                        "<" => BinaryOperator::Lt,
                        "<=" => BinaryOperator::LtEq,
                        ">" => BinaryOperator::Gt,
                        ">=" => BinaryOperator::GtEq,
                        "+" => BinaryOperator::Plus,
                        "-" => BinaryOperator::Minus,
                        "*" => BinaryOperator::Multiply,
                        "/" => BinaryOperator::Divide,
                        "%" => BinaryOperator::Modulo,
                        "||" => BinaryOperator::Concat,
                        _ => unreachable!("operator table above"),
                    };
                    let right = self.expr(op_prec + 1)?;
                    Expr::binary(left, op, right)
                }
            };
        }
        Ok(left)
    }

    fn prefix(&mut self) -> Result<Expr, SqlError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error("unexpected end of input"));
        };
        match tok.kind {
            TokenKind::Word(ref w) if w.eq_ignore_ascii_case("not") => {
                self.pos += 1;
                if self.eat_keyword("exists") {
                    let subquery = self.parenthesised_query()?;
                    return Ok(Expr::Exists { subquery: Box::new(subquery), negated: true });
                }
                let expr = self.expr(3)?;
                Ok(Expr::Unary { op: UnaryOperator::Not, expr: Box::new(expr) })
            }
            TokenKind::Minus => {
                self.pos += 1;
                let expr = self.expr(9)?;
                Ok(match expr {
                    Expr::Literal(Literal::Integer(v)) => Expr::Literal(Literal::Integer(-v)),
                    Expr::Literal(Literal::Float(v)) => Expr::Literal(Literal::Float(-v)),
                    other => Expr::Unary { op: UnaryOperator::Minus, expr: Box::new(other) },
                })
            }
            TokenKind::Plus => {
                self.pos += 1;
                self.expr(9)
            }
            TokenKind::LParen => {
                self.pos += 1;
                if self.at_keyword("select") {
                    let q = self.query()?;
                    self.expect(&TokenKind::RParen)?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                let inner = self.expr(0)?;
                self.expect(&TokenKind::RParen)?;
                Ok(Expr::Nested(Box::new(inner)))
            }
            TokenKind::Integer(v) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Integer(v)))
            }
            TokenKind::Float(v) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Float(v)))
            }
            TokenKind::String(s) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::String(s)))
            }
            TokenKind::Star => {
                self.pos += 1;
                Ok(Expr::Wildcard)
            }
            TokenKind::DoubleQuoted(name) => {
                self.pos += 1;
                if self.eat(&TokenKind::Dot) {
                    return self.qualified(name);
                }
                Ok(Expr::Column(ColumnExpr { qualifier: None, name, quoted: true, resolved: None }))
            }
            TokenKind::QuotedIdent(name) => {
                self.pos += 1;
                if self.eat(&TokenKind::Dot) {
                    return self.qualified(name);
                }
                Ok(Expr::column(None, &name))
            }
            TokenKind::Word(w) => {
                let lower = w.to_lowercase();
                match lower.as_str() {
                    "null" => {
                        self.pos += 1;
                        Ok(Expr::Literal(Literal::Null))
                    }
                    "exists" => {
                        self.pos += 1;
                        let subquery = self.parenthesised_query()?;
                        Ok(Expr::Exists { subquery: Box::new(subquery), negated: false })
                    }
                    "case" | "cast" => Err(SqlError::UnsupportedSyntax(lower.to_uppercase())),
                    _ if is_reserved(&lower) => Err(self.error(format!("unexpected keyword {}", w.to_uppercase()))),
                    _ => {
                        self.pos += 1;
                        if self.eat(&TokenKind::LParen) {
                            return self.function(lower);
                        }
                        if self.eat(&TokenKind::Dot) {
                            return self.qualified(w);
                        }
                        Ok(Expr::column(None, &w))
                    }
                }
            }
            _ => Err(self.error(format!("unexpected token {}", describe(&tok)))),
        }
    }

    fn qualified(&mut self, qualifier: String) -> Result<Expr, SqlError> {
        if self.eat(&TokenKind::Star) {
            return Ok(Expr::QualifiedWildcard(qualifier));
        }
        let quoted = matches!(self.peek().map(|t| &t.kind), Some(TokenKind::DoubleQuoted(_)));
        let name = self.identifier()?;
        Ok(Expr::Column(ColumnExpr { qualifier: Some(qualifier), name, quoted, resolved: None }))
    }

    fn parenthesised_query(&mut self) -> Result<Query, SqlError> {
        self.expect(&TokenKind::LParen)?;
        let q = self.query()?;
        self.expect(&TokenKind::RParen)?;
        Ok(q)
    }

    fn function(&mut self, name: String) -> Result<Expr, SqlError> {
        let mut distinct = false;
        let mut args = Vec::new();
        if !self.eat(&TokenKind::RParen) {
            distinct = self.eat_keyword("distinct");
            loop {
                args.push(self.expr(0)?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
            self.expect(&TokenKind::RParen)?;
        }
        if self.at_keyword("over") || self.at_keyword("filter") {
            return Err(SqlError::UnsupportedSyntax("window functions".into()));
        }
        Ok(Expr::Function(FunctionCall { name, distinct, args }))
    }
}
