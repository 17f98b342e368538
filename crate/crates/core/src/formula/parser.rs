//! Pratt parser for the formula grammar.
//!
//! Precedence, weakest to strongest: comparisons; `&`; `+ -`; `* /`; `^`
//! (left-associative); unary `-`; postfix `%`. The range `:` binds at the
//! atom level, tighter than any operator and than function-call commas.
//! Unary minus binds tighter than `^`, so `-2^2` is `(-2)^2 = 4`.

use thiserror::Error;

use super::lexer::{lex, Spanned, Token};
use super::{BinaryOp, FormulaNode, RangeEndpoint, RangeNode, UnaryOp};
use crate::addr::{letters_to_col, A1Ref};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message} at offset {offset}")]
pub struct ParseError {
    pub message: String,
    pub offset: usize,
}

/// Parse a formula. The text must begin with `=`.
pub fn parse_formula(text: &str) -> Result<FormulaNode, ParseError> {
    let body = text
        .strip_prefix('=')
        .ok_or_else(|| ParseError { message: "formula must begin with `=`".into(), offset: 0 })?;
    let tokens = lex(body, 1)?;
    let mut parser = Parser { tokens, pos: 0, len: text.len() };
    let node = parser.parse_expr(0)?;
    if let Some(t) = parser.peek() {
        return Err(parser.err_at(format!("unexpected `{}`", describe(&t.token)), t.offset));
    }
    Ok(node)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    len: usize,
}

/// An atom that may serve as a range endpoint.
enum Atom {
    Node(FormulaNode),
    Cell { sheet: Option<String>, col: u32, row: u32, abs_col: bool, abs_row: bool },
    Column { sheet: Option<String>, col: u32, abs: bool },
}

const UNARY_BP: u8 = 13;
const PERCENT_BP: u8 = 15;

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Spanned> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, message: String, offset: usize) -> ParseError {
        ParseError { message, offset }
    }

    fn err_eof(&self, expected: &str) -> ParseError {
        ParseError { message: format!("expected {expected}, found end of formula"), offset: self.len }
    }

    fn expect(&mut self, token: Token, what: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t.token == token => Ok(()),
            Some(t) => Err(self.err_at(format!("expected {what}, found `{}`", describe(&t.token)), t.offset)),
            None => Err(self.err_eof(what)),
        }
    }

    fn parse_expr(&mut self, min_bp: u8) -> Result<FormulaNode, ParseError> {
        let mut lhs = match self.peek().map(|t| t.token.clone()) {
            Some(Token::Minus) => {
                self.next();
                let operand = self.parse_expr(UNARY_BP)?;
                FormulaNode::Unary(UnaryOp::Neg, Box::new(operand))
            }
            Some(Token::Plus) => {
                // Unary plus is accepted and dropped.
                self.next();
                self.parse_expr(UNARY_BP)?
            }
            _ => self.parse_atom()?,
        };
        while let Some(t) = self.peek() {
            match binary_of(&t.token) {
                Some(op) if op.lbp() >= min_bp => {
                    self.next();
                    let rhs = self.parse_expr(op.lbp() + 1)?;
                    lhs = FormulaNode::Binary(op, Box::new(lhs), Box::new(rhs));
                }
                Some(_) => break,
                None => match t.token {
                    Token::Percent if PERCENT_BP >= min_bp => {
                        self.next();
                        lhs = FormulaNode::Unary(UnaryOp::Percent, Box::new(lhs));
                    }
                    _ => break,
                },
            }
        }
        Ok(lhs)
    }

    fn parse_atom(&mut self) -> Result<FormulaNode, ParseError> {
        let first = self.parse_endpoint_atom(false)?;
        if matches!(self.peek().map(|t| &t.token), Some(Token::Colon)) {
            let colon = self.next().expect("peeked");
            let second = self.parse_endpoint_atom(true)?;
            let node = self.build_range(first, second, colon.offset)?;
            if let Some(t) = self.peek() {
                if t.token == Token::Colon {
                    return Err(self.err_at("unexpected `:` after range".into(), t.offset));
                }
            }
            return Ok(node);
        }
        match first {
            Atom::Node(n) => Ok(n),
            Atom::Cell { sheet, col, row, abs_col, abs_row } => {
                Ok(FormulaNode::Ref(A1Ref { sheet, col, row, abs_col, abs_row }))
            }
            Atom::Column { .. } => unreachable!("columns only parsed in range position"),
        }
    }

    fn parse_endpoint_atom(&mut self, range_end: bool) -> Result<Atom, ParseError> {
        let Some(t) = self.next() else {
            return Err(self.err_eof("an expression"));
        };
        match t.token {
            Token::Number(n) => Ok(Atom::Node(FormulaNode::Number(n))),
            Token::Text(s) => Ok(Atom::Node(FormulaNode::Text(s))),
            Token::LParen => {
                let inner = self.parse_expr(0)?;
                self.expect(Token::RParen, "`)`")?;
                Ok(Atom::Node(FormulaNode::Paren(Box::new(inner))))
            }
            Token::CellRef { col, row, abs_col, abs_row } => {
                Ok(Atom::Cell { sheet: None, col, row, abs_col, abs_row })
            }
            Token::QuotedSheet(name) => {
                self.expect(Token::Bang, "`!` after sheet name")?;
                self.parse_after_sheet(Some(name), t.offset)
            }
            Token::Ident(name) => {
                if matches!(self.peek().map(|x| &x.token), Some(Token::Bang)) {
                    self.next();
                    return self.parse_after_sheet(Some(name), t.offset);
                }
                if matches!(self.peek().map(|x| &x.token), Some(Token::LParen)) {
                    self.next();
                    let args = self.parse_args()?;
                    return Ok(Atom::Node(FormulaNode::Call(name.to_ascii_uppercase(), args)));
                }
                if name.eq_ignore_ascii_case("TRUE") {
                    return Ok(Atom::Node(FormulaNode::Bool(true)));
                }
                if name.eq_ignore_ascii_case("FALSE") {
                    return Ok(Atom::Node(FormulaNode::Bool(false)));
                }
                self.column_atom(None, &name, range_end, t.offset)
            }
            other => Err(self.err_at(format!("unexpected `{}`", describe(&other)), t.offset)),
        }
    }

    /// After `Sheet!`: a cell reference or a whole-column letter.
    fn parse_after_sheet(&mut self, sheet: Option<String>, offset: usize) -> Result<Atom, ParseError> {
        let Some(t) = self.next() else {
            return Err(self.err_eof("a reference after `!`"));
        };
        match t.token {
            Token::CellRef { col, row, abs_col, abs_row } => {
                Ok(Atom::Cell { sheet, col, row, abs_col, abs_row })
            }
            Token::Ident(name) => self.column_atom(sheet, &name, true, offset),
            other => {
                Err(self.err_at(format!("expected a reference after `!`, found `{}`", describe(&other)), t.offset))
            }
        }
    }

    fn column_atom(
        &mut self,
        sheet: Option<String>,
        name: &str,
        range_end: bool,
        offset: usize,
    ) -> Result<Atom, ParseError> {
        let (abs, letters) = match name.strip_prefix('$') {
            Some(rest) => (true, rest),
            None => (false, name),
        };
        let col = letters_to_col(letters);
        let next_is_colon = matches!(self.peek().map(|x| &x.token), Some(Token::Colon));
        if let Some(col) = col {
            if range_end || next_is_colon {
                return Ok(Atom::Column { sheet, col, abs });
            }
        }
        Err(self.err_at(format!("unexpected name `{name}`"), offset))
    }

    fn parse_args(&mut self) -> Result<Vec<FormulaNode>, ParseError> {
        let mut args = Vec::new();
        if matches!(self.peek().map(|t| &t.token), Some(Token::RParen)) {
            self.next();
            return Ok(args);
        }
        loop {
            if let Some(t) = self.peek() {
                if t.token == Token::Comma {
                    return Err(self.err_at("empty argument".into(), t.offset));
                }
            }
            args.push(self.parse_expr(0)?);
            match self.next() {
                Some(t) if t.token == Token::Comma => {
                    if let Some(n) = self.peek() {
                        if n.token == Token::RParen {
                            return Err(self.err_at("empty argument".into(), n.offset));
                        }
                    }
                }
                Some(t) if t.token == Token::RParen => return Ok(args),
                Some(t) => {
                    return Err(self.err_at(format!("expected `,` or `)`, found `{}`", describe(&t.token)), t.offset))
                }
                None => return Err(self.err_eof("`)`")),
            }
        }
    }

    fn build_range(&self, start: Atom, end: Atom, colon_offset: usize) -> Result<FormulaNode, ParseError> {
        let mut sheet: Option<String> = None;
        let mut to_endpoint = |atom: Atom, is_start: bool| -> Result<RangeEndpoint, ParseError> {
            match atom {
                Atom::Cell { sheet: s, col, row, abs_col, abs_row } => {
                    merge_sheet(&mut sheet, s, is_start, colon_offset)?;
                    Ok(RangeEndpoint::Cell { col, row, abs_col, abs_row })
                }
                Atom::Column { sheet: s, col, abs } => {
                    merge_sheet(&mut sheet, s, is_start, colon_offset)?;
                    Ok(RangeEndpoint::Column { col, abs })
                }
                Atom::Node(node) => match node {
                    FormulaNode::Call(..) => Ok(RangeEndpoint::Dynamic(Box::new(node))),
                    _ => Err(ParseError { message: "invalid range endpoint".into(), offset: colon_offset }),
                },
            }
        };
        let start = to_endpoint(start, true)?;
        let end = to_endpoint(end, false)?;
        let mixed = matches!(
            (&start, &end),
            (RangeEndpoint::Column { .. }, RangeEndpoint::Cell { .. })
                | (RangeEndpoint::Cell { .. }, RangeEndpoint::Column { .. })
                | (RangeEndpoint::Column { .. }, RangeEndpoint::Dynamic(_))
                | (RangeEndpoint::Dynamic(_), RangeEndpoint::Column { .. })
        );
        if mixed {
            return Err(ParseError {
                message: "mismatched range endpoints: whole columns pair only with whole columns".into(),
                offset: colon_offset,
            });
        }
        Ok(FormulaNode::Range(RangeNode { sheet, start, end }))
    }
}

fn merge_sheet(
    sheet: &mut Option<String>,
    found: Option<String>,
    is_start: bool,
    offset: usize,
) -> Result<(), ParseError> {
    match found {
        None => Ok(()),
        Some(s) => {
            if is_start {
                *sheet = Some(s);
                Ok(())
            } else {
                match sheet {
                    Some(existing) if existing.eq_ignore_ascii_case(&s) => Ok(()),
                    None => {
                        // `B2:Data!B5` without a start qualifier is not supported.
                        Err(ParseError { message: "unexpected sheet qualifier on range end".into(), offset })
                    }
                    Some(_) => Err(ParseError { message: "range endpoints on different sheets".into(), offset }),
                }
            }
        }
    }
}

fn binary_of(token: &Token) -> Option<BinaryOp> {
    Some(match token {
        Token::Plus => BinaryOp::Add,
        Token::Minus => BinaryOp::Sub,
        Token::Star => BinaryOp::Mul,
        Token::Slash => BinaryOp::Div,
        Token::Caret => BinaryOp::Pow,
        Token::Amp => BinaryOp::Concat,
        Token::Eq => BinaryOp::Eq,
        Token::Ne => BinaryOp::Ne,
        Token::Lt => BinaryOp::Lt,
        Token::Le => BinaryOp::Le,
        Token::Gt => BinaryOp::Gt,
        Token::Ge => BinaryOp::Ge,
        _ => return None,
    })
}

fn describe(token: &Token) -> String {
    match token {
        Token::Number(n) => crate::value::fmt_number(*n),
        Token::Text(s) => format!("\"{s}\""),
        Token::Ident(s) => s.clone(),
        Token::CellRef { col, row, .. } => format!("{}{}", crate::addr::col_to_letters(*col), row),
        Token::QuotedSheet(s) => format!("'{s}'"),
        Token::Plus => "+".into(),
        Token::Minus => "-".into(),
        Token::Star => "*".into(),
        Token::Slash => "/".into(),
        Token::Caret => "^".into(),
        Token::Amp => "&".into(),
        Token::Percent => "%".into(),
        Token::Eq => "=".into(),
        Token::Ne => "<>".into(),
        Token::Lt => "<".into(),
        Token::Le => "<=".into(),
        Token::Gt => ">".into(),
        Token::Ge => ">=".into(),
        Token::LParen => "(".into(),
        Token::RParen => ")".into(),
        Token::Comma => ",".into(),
        Token::Colon => ":".into(),
        Token::Bang => "!".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::RangeEndpoint;

    fn parse(text: &str) -> FormulaNode {
        parse_formula(text).unwrap()
    }

    #[test]
    fn chained_plus_is_left_leaning() {
        let node = parse("=B11+B17+B27+B37+B48+B67");
        // Left-leaning chain of six references: five nested Add nodes.
        let mut depth = 0;
        let mut cur = &node;
        while let FormulaNode::Binary(BinaryOp::Add, left, right) = cur {
            assert!(matches!(**right, FormulaNode::Ref(_)));
            depth += 1;
            cur = left;
        }
        assert!(matches!(cur, FormulaNode::Ref(_)));
        assert_eq!(depth, 5);
    }

    #[test]
    fn number_literal() {
        assert_eq!(parse("=1"), FormulaNode::Number(1.0));
    }

    #[test]
    fn subtotal_with_index_endpoint() {
        let node = parse("=SUBTOTAL(9,B51:INDEX(B:B,ROW()-1))");
        let FormulaNode::Call(name, args) = node else { panic!("expected call") };
        assert_eq!(name, "SUBTOTAL");
        assert_eq!(args[0], FormulaNode::Number(9.0));
        let FormulaNode::Range(range) = &args[1] else { panic!("expected range") };
        assert!(matches!(range.start, RangeEndpoint::Cell { col: 2, row: 51, .. }));
        let RangeEndpoint::Dynamic(end) = &range.end else { panic!("expected dynamic end") };
        assert!(end.is_call("INDEX"));
    }

    #[test]
    fn unary_minus_binds_tighter_than_pow() {
        let node = parse("=-2^2");
        let FormulaNode::Binary(BinaryOp::Pow, left, _) = node else { panic!("expected ^ at root") };
        assert!(matches!(*left, FormulaNode::Unary(UnaryOp::Neg, _)));
    }

    #[test]
    fn pow_associates_left() {
        let node = parse("=2^3^2");
        let FormulaNode::Binary(BinaryOp::Pow, left, right) = node else { panic!() };
        assert!(matches!(*left, FormulaNode::Binary(BinaryOp::Pow, _, _)));
        assert_eq!(*right, FormulaNode::Number(2.0));
    }

    #[test]
    fn whole_column_range() {
        let node = parse("=SUM(B:B)");
        let FormulaNode::Call(_, args) = node else { panic!() };
        let FormulaNode::Range(r) = &args[0] else { panic!() };
        assert!(matches!(r.start, RangeEndpoint::Column { col: 2, .. }));
        assert!(matches!(r.end, RangeEndpoint::Column { col: 2, .. }));
    }

    #[test]
    fn sheet_qualified_range_keeps_one_sheet() {
        let node = parse("=SUM(Data!B2:B5)");
        let FormulaNode::Call(_, args) = node else { panic!() };
        let FormulaNode::Range(r) = &args[0] else { panic!() };
        assert_eq!(r.sheet.as_deref(), Some("Data"));
        assert!(parse_formula("=SUM(Data!B2:Other!B5)").is_err());
    }

    #[test]
    fn errors_carry_offsets() {
        let err = parse_formula("=SUM(,2)").unwrap_err();
        assert_eq!(err.message, "empty argument");
        assert_eq!(err.offset, 5);
        assert!(parse_formula("=1+").is_err());
        assert!(parse_formula("=(1").is_err());
        assert!(parse_formula("=foo").is_err());
        assert!(parse_formula("1+2").is_err());
        assert!(parse_formula("=SUM(2,)").is_err());
        assert!(parse_formula("=B51:B").is_err());
    }

    #[test]
    fn percent_is_postfix() {
        let node = parse("=50%");
        assert!(matches!(node, FormulaNode::Unary(UnaryOp::Percent, _)));
        let neg = parse("=-50%");
        let FormulaNode::Unary(UnaryOp::Neg, inner) = neg else { panic!() };
        assert!(matches!(*inner, FormulaNode::Unary(UnaryOp::Percent, _)));
    }

    #[test]
    fn true_false_literals() {
        assert_eq!(parse("=TRUE"), FormulaNode::Bool(true));
        assert_eq!(parse("=false"), FormulaNode::Bool(false));
        assert!(matches!(parse("=TRUE()"), FormulaNode::Call(name, _) if name == "TRUE"));
    }
}
