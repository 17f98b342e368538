//! Reference extraction for dependency analysis and audit rules.

use std::collections::BTreeSet;

use super::{FormulaNode, RangeEndpoint, RangeNode};
use crate::addr::{CellAddress, CellRange};

/// The references a formula draws on. Ranges with computed endpoints are
/// listed under `dynamic` rather than silently dropped; their static anchor
/// cells (literal endpoints plus any cell referenced inside the endpoint
/// expressions) are included in `cells`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefSet {
    pub cells: BTreeSet<CellAddress>,
    pub ranges: BTreeSet<CellRange>,
    pub dynamic: Vec<RangeNode>,
}

impl RefSet {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty() && self.ranges.is_empty() && self.dynamic.is_empty()
    }

    /// True when the set references `addr` directly or through a static range.
    pub fn touches(&self, addr: &CellAddress) -> bool {
        self.cells.contains(addr) || self.ranges.iter().any(|r| r.contains(addr))
    }
}

/// Collect every cell and range reference in `node`, resolving unqualified
/// sheets against `current_sheet`.
pub fn extract_references(node: &FormulaNode, current_sheet: &str) -> RefSet {
    let mut out = RefSet::default();
    walk(node, current_sheet, &mut out);
    out
}

fn walk(node: &FormulaNode, sheet: &str, out: &mut RefSet) {
    match node {
        FormulaNode::Number(_) | FormulaNode::Text(_) | FormulaNode::Bool(_) => {}
        FormulaNode::Ref(r) => {
            out.cells.insert(r.address(sheet));
        }
        FormulaNode::Range(range) => {
            if let Some(static_range) = range.as_static(sheet) {
                out.ranges.insert(static_range);
            } else {
                let range_sheet = range.sheet.clone().unwrap_or_else(|| sheet.to_string());
                for ep in [&range.start, &range.end] {
                    match ep {
                        RangeEndpoint::Cell { col, row, .. } => {
                            out.cells.insert(CellAddress::new(range_sheet.clone(), *col, *row));
                        }
                        RangeEndpoint::Column { .. } => {}
                        RangeEndpoint::Dynamic(expr) => anchor_cells(expr, &range_sheet, out),
                    }
                }
                out.dynamic.push(range.clone());
            }
        }
        FormulaNode::Unary(_, operand) => walk(operand, sheet, out),
        FormulaNode::Binary(_, left, right) => {
            walk(left, sheet, out);
            walk(right, sheet, out);
        }
        FormulaNode::Call(_, args) => {
            for arg in args {
                walk(arg, sheet, out);
            }
        }
        FormulaNode::Paren(inner) => walk(inner, sheet, out),
    }
}

/// Inside a dynamic endpoint only the anchor cells matter: bare references and
/// the literal endpoints of nested ranges. The geometry is re-resolved at
/// evaluation time.
fn anchor_cells(node: &FormulaNode, sheet: &str, out: &mut RefSet) {
    match node {
        FormulaNode::Ref(r) => {
            out.cells.insert(r.address(sheet));
        }
        FormulaNode::Range(range) => {
            let range_sheet = range.sheet.clone().unwrap_or_else(|| sheet.to_string());
            for ep in [&range.start, &range.end] {
                match ep {
                    RangeEndpoint::Cell { col, row, .. } => {
                        out.cells.insert(CellAddress::new(range_sheet.clone(), *col, *row));
                    }
                    RangeEndpoint::Column { .. } => {}
                    RangeEndpoint::Dynamic(expr) => anchor_cells(expr, &range_sheet, out),
                }
            }
        }
        FormulaNode::Unary(_, operand) => anchor_cells(operand, sheet, out),
        FormulaNode::Binary(_, left, right) => {
            anchor_cells(left, sheet, out);
            anchor_cells(right, sheet, out);
        }
        FormulaNode::Call(_, args) => {
            for arg in args {
                anchor_cells(arg, sheet, out);
            }
        }
        FormulaNode::Paren(inner) => anchor_cells(inner, sheet, out),
        _ => {}
    }
}
