//! Canonical formula printing.
//!
//! The printer is deterministic, drops insignificant whitespace, keeps
//! explicit `Paren` nodes, and adds parentheses only where precedence would
//! otherwise regroup the tree on re-parse.

use super::{FormulaNode, RangeEndpoint, RangeNode, UnaryOp};
use crate::addr::{col_to_letters, quote_sheet};
use crate::value::fmt_number;

const UNARY_BP: u8 = 13;
const PERCENT_BP: u8 = 15;
const ATOM_BP: u8 = 100;

/// Render a formula with its leading `=`.
pub fn print_formula(node: &FormulaNode) -> String {
    let mut out = String::with_capacity(32);
    out.push('=');
    write_node(&mut out, node, 0);
    out
}

fn bp(node: &FormulaNode) -> u8 {
    match node {
        FormulaNode::Binary(op, ..) => op.lbp(),
        FormulaNode::Unary(UnaryOp::Neg, _) => UNARY_BP,
        FormulaNode::Unary(UnaryOp::Percent, _) => PERCENT_BP,
        _ => ATOM_BP,
    }
}

fn write_node(out: &mut String, node: &FormulaNode, min_bp: u8) {
    let needs_parens = bp(node) < min_bp;
    if needs_parens {
        out.push('(');
    }
    match node {
        FormulaNode::Number(n) => out.push_str(&fmt_number(*n)),
        FormulaNode::Text(s) => {
            out.push('"');
            out.push_str(&s.replace('"', "\"\""));
            out.push('"');
        }
        FormulaNode::Bool(b) => out.push_str(if *b { "TRUE" } else { "FALSE" }),
        FormulaNode::Ref(r) => out.push_str(&r.to_a1()),
        FormulaNode::Range(r) => write_range(out, r),
        FormulaNode::Unary(UnaryOp::Neg, operand) => {
            out.push('-');
            write_node(out, operand, UNARY_BP);
        }
        FormulaNode::Unary(UnaryOp::Percent, operand) => {
            write_node(out, operand, PERCENT_BP);
            out.push('%');
        }
        FormulaNode::Binary(op, left, right) => {
            // Left-associative: equal precedence needs parentheses on the right.
            write_node(out, left, op.lbp());
            out.push_str(op.symbol());
            write_node(out, right, op.lbp() + 1);
        }
        FormulaNode::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_node(out, arg, 0);
            }
            out.push(')');
        }
        FormulaNode::Paren(inner) => {
            out.push('(');
            write_node(out, inner, 0);
            out.push(')');
        }
    }
    if needs_parens {
        out.push(')');
    }
}

fn write_range(out: &mut String, range: &RangeNode) {
    if let Some(sheet) = &range.sheet {
        out.push_str(&quote_sheet(sheet));
        out.push('!');
    }
    write_endpoint(out, &range.start);
    out.push(':');
    write_endpoint(out, &range.end);
}

fn write_endpoint(out: &mut String, ep: &RangeEndpoint) {
    match ep {
        RangeEndpoint::Cell { col, row, abs_col, abs_row } => {
            if *abs_col {
                out.push('$');
            }
            out.push_str(&col_to_letters(*col));
            if *abs_row {
                out.push('$');
            }
            out.push_str(&row.to_string());
        }
        RangeEndpoint::Column { col, abs } => {
            if *abs {
                out.push('$');
            }
            out.push_str(&col_to_letters(*col));
        }
        RangeEndpoint::Dynamic(node) => write_node(out, node, 0),
    }
}
