//! Formula language: lexer, parser, printer, and reference extraction.
//!
//! The grammar covers the subset of Excel formulas the audit rules reason
//! about: literals, cell and range references (including whole columns and
//! ranges with computed endpoints such as `B51:OFFSET(B67,-1,0)`), the
//! arithmetic/comparison/concatenation operators, postfix `%`, and function
//! calls with an open set of names. Locale is fixed: `.` decimal separator,
//! `,` argument separator.

mod lexer;
mod parser;
mod printer;
mod refs;

pub use parser::{parse_formula, ParseError};
pub use printer::print_formula;
pub use refs::{extract_references, RefSet};

use serde::Serialize;

use crate::addr::{A1Ref, CellRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UnaryOp {
    Neg,
    Percent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Concat,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinaryOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Concat => "&",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
        }
    }

    pub fn is_comparison(&self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }

    pub fn is_arithmetic(&self) -> bool {
        matches!(
            self,
            BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Pow
        )
    }

    /// Left binding power; weakest binds loosest. All binary operators are
    /// left-associative, including `^`.
    pub(crate) fn lbp(&self) -> u8 {
        match self {
            op if op.is_comparison() => 3,
            BinaryOp::Concat => 5,
            BinaryOp::Add | BinaryOp::Sub => 7,
            BinaryOp::Mul | BinaryOp::Div => 9,
            BinaryOp::Pow => 11,
            _ => unreachable!(),
        }
    }
}

/// One endpoint of a range expression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RangeEndpoint {
    Cell { col: u32, row: u32, abs_col: bool, abs_row: bool },
    Column { col: u32, abs: bool },
    /// A computed endpoint, always a function call (`OFFSET`, `INDEX`, ...).
    Dynamic(Box<FormulaNode>),
}

impl RangeEndpoint {
    pub fn is_dynamic(&self) -> bool {
        matches!(self, RangeEndpoint::Dynamic(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeNode {
    pub sheet: Option<String>,
    pub start: RangeEndpoint,
    pub end: RangeEndpoint,
}

impl RangeNode {
    pub fn has_dynamic_endpoint(&self) -> bool {
        self.start.is_dynamic() || self.end.is_dynamic()
    }

    /// Resolve to a static range when both endpoints are literal.
    pub fn as_static(&self, current_sheet: &str) -> Option<CellRange> {
        let sheet = self.sheet.clone().unwrap_or_else(|| current_sheet.to_string());
        match (&self.start, &self.end) {
            (
                RangeEndpoint::Cell { col: c1, row: r1, .. },
                RangeEndpoint::Cell { col: c2, row: r2, .. },
            ) => Some(CellRange::cells(sheet, *c1, *r1, *c2, *r2)),
            (RangeEndpoint::Column { col: c1, .. }, RangeEndpoint::Column { col: c2, .. }) => {
                Some(CellRange::whole_columns(sheet, *c1, *c2))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FormulaNode {
    Number(f64),
    Text(String),
    Bool(bool),
    Ref(A1Ref),
    Range(RangeNode),
    Unary(UnaryOp, Box<FormulaNode>),
    Binary(BinaryOp, Box<FormulaNode>, Box<FormulaNode>),
    Call(String, Vec<FormulaNode>),
    Paren(Box<FormulaNode>),
}

impl FormulaNode {
    /// The node with any explicit parentheses peeled off.
    pub fn strip_parens(&self) -> &FormulaNode {
        let mut node = self;
        while let FormulaNode::Paren(inner) = node {
            node = inner;
        }
        node
    }

    /// True when the (paren-stripped) root is a call to `name` (uppercase).
    pub fn is_call(&self, name: &str) -> bool {
        matches!(self.strip_parens(), FormulaNode::Call(n, _) if n == name)
    }

    /// Structural equality that ignores explicit parentheses on both sides.
    /// Grouping still matters: `1+(2*3)` and `(1+2)*3` stay different.
    pub fn eq_ignoring_parens(&self, other: &FormulaNode) -> bool {
        use FormulaNode::*;
        match (self.strip_parens(), other.strip_parens()) {
            (Number(a), Number(b)) => a == b,
            (Text(a), Text(b)) => a == b,
            (Bool(a), Bool(b)) => a == b,
            (Ref(a), Ref(b)) => a == b,
            (Range(a), Range(b)) => range_eq_ignoring_parens(a, b),
            (Unary(op1, a), Unary(op2, b)) => op1 == op2 && a.eq_ignoring_parens(b),
            (Binary(op1, a1, b1), Binary(op2, a2, b2)) => {
                op1 == op2 && a1.eq_ignoring_parens(a2) && b1.eq_ignoring_parens(b2)
            }
            (Call(n1, args1), Call(n2, args2)) => {
                n1 == n2
                    && args1.len() == args2.len()
                    && args1.iter().zip(args2).all(|(a, b)| a.eq_ignoring_parens(b))
            }
            _ => false,
        }
    }
}

fn range_eq_ignoring_parens(a: &RangeNode, b: &RangeNode) -> bool {
    if a.sheet != b.sheet {
        return false;
    }
    let ep_eq = |x: &RangeEndpoint, y: &RangeEndpoint| match (x, y) {
        (RangeEndpoint::Dynamic(m), RangeEndpoint::Dynamic(n)) => m.eq_ignoring_parens(n),
        _ => x == y,
    };
    ep_eq(&a.start, &b.start) && ep_eq(&a.end, &b.end)
}
