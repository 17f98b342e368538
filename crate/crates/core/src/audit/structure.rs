//! Structural hazard rules: R2 chained plus, R3 insertion risk, R4 double
//! counting, R6 text-number coercion.

use std::collections::{BTreeMap, BTreeSet};

use crate::addr::{CellAddress, CellRange, MAX_ROW};
use crate::engine::ValueMap;
use crate::formula::{BinaryOp, FormulaNode, RangeEndpoint, RangeNode, UnaryOp};
use crate::workbook::Workbook;

use super::tables::TableRegion;
use super::{AuditConfig, Finding, Severity, RULE_CHAIN, RULE_DOUBLE_COUNT, RULE_INSERTION, RULE_TEXT_NUMBER};

/// Leaves of a pure +/- chain of references; `None` if any leaf is not a
/// plain cell reference.
pub(crate) fn chain_refs(node: &FormulaNode) -> Option<Vec<&crate::addr::A1Ref>> {
    fn collect<'n>(node: &'n FormulaNode, out: &mut Vec<&'n crate::addr::A1Ref>) -> bool {
        match node.strip_parens() {
            FormulaNode::Binary(BinaryOp::Add | BinaryOp::Sub, left, right) => {
                collect(left, out) && collect(right, out)
            }
            FormulaNode::Ref(r) => {
                out.push(r);
                true
            }
            _ => false,
        }
    }
    let mut out = Vec::new();
    if collect(node, &mut out) && out.len() >= 2 {
        Some(out)
    } else {
        None
    }
}

/// R2: a total assembled by individually pointing at many cells is one
/// mispointed reference away from being wrong.
pub fn detect_chained_plus(wb: &Workbook, config: &AuditConfig) -> Vec<Finding> {
    let mut findings = Vec::new();
    for sheet in wb.sheets() {
        for cell in sheet.cells() {
            let Some(ast) = &cell.formula else { continue };
            let Some(refs) = chain_refs(ast) else { continue };
            let distinct: BTreeSet<CellAddress> =
                refs.iter().map(|r| r.address(sheet.name())).collect();
            if distinct.len() < config.chain_plus_min {
                continue;
            }
            let suggestion = crate::checks::suggest_total_rewrite(wb, &cell.address).primary();
            findings.push(Finding {
                rule: RULE_CHAIN.into(),
                severity: Severity::Warning,
                cells: vec![cell.address.clone()],
                message: format!(
                    "total assembled from {} individually pointed references; one pointing error breaks it silently",
                    distinct.len()
                ),
                measured: Some(distinct.len() as f64),
                threshold: Some(config.chain_plus_min as f64),
                suggestion,
            });
        }
    }
    findings
}

enum RangeUnderSum {
    Static(CellRange),
    /// Bottom endpoint anchored on the formula's own row; only the top end
    /// needs a blank guard.
    BottomAnchored { top: CellAddress },
}

/// R3: a summed range whose outside neighbors are occupied gives inserted
/// rows or columns nowhere safe to land. Ranges anchored with
/// `OFFSET(self,-1,0)` or `INDEX(col,ROW()-1)` are protected at the bottom
/// only. Ranges inside a detected table are exempt; the cross-foot rule
/// covers those.
pub fn detect_insertion_risk(
    wb: &Workbook,
    vm: &ValueMap,
    tables: &BTreeMap<String, Vec<TableRegion>>,
    _config: &AuditConfig,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut seen: BTreeSet<(CellAddress, String, &'static str)> = BTreeSet::new();
    for sheet in wb.sheets() {
        for cell in sheet.cells() {
            let Some(ast) = &cell.formula else { continue };
            let mut ranges = Vec::new();
            collect_summed_ranges(ast, &mut ranges);
            for range_node in ranges {
                let parsed = classify_range(range_node, sheet.name(), &cell.address);
                let (ends, range_text) = match parsed {
                    None => continue,
                    Some(RangeUnderSum::Static(range)) => {
                        if inside_any_table(&range, tables) {
                            continue;
                        }
                        (static_ends(&range), range.local_a1())
                    }
                    Some(RangeUnderSum::BottomAnchored { top }) => {
                        let end = neighbor_above(&top);
                        (vec![("begin", end)], format!("{}:<anchored>", top.local_a1()))
                    }
                };
                for (side, neighbor) in ends {
                    let Some(neighbor) = neighbor else { continue };
                    // A formula cell counts as occupied even when its value
                    // passes a blank through.
                    let occupied = match wb.cell(&neighbor) {
                        None => false,
                        Some(c) => c.formula.is_some() || !vm.value(&neighbor).is_blank(),
                    };
                    if !occupied {
                        continue;
                    }
                    let key = (cell.address.clone(), range_text.clone(), side);
                    if !seen.insert(key) {
                        continue;
                    }
                    findings.push(Finding {
                        rule: RULE_INSERTION.into(),
                        severity: Severity::Warning,
                        cells: vec![cell.address.clone()],
                        message: format!(
                            "summed range {} does not {} at a blank cell: {} is occupied, so an insertion there falls outside the total",
                            range_text,
                            side,
                            neighbor.local_a1()
                        ),
                        measured: None,
                        threshold: None,
                        suggestion: None,
                    });
                }
            }
        }
    }
    findings
}

fn inside_any_table(range: &CellRange, tables: &BTreeMap<String, Vec<TableRegion>>) -> bool {
    tables.iter().any(|(sheet, list)| {
        sheet.eq_ignore_ascii_case(&range.sheet)
            && list.iter().any(|t| t.bounds.to_range(&t.sheet).contains_range(range))
    })
}

fn static_ends(range: &CellRange) -> Vec<(&'static str, Option<CellAddress>)> {
    let Some((r1, r2)) = range.rows else { return Vec::new() };
    if range.start_col == range.end_col {
        // Vertical (includes single cells).
        let col = range.start_col;
        vec![
            ("begin", (r1 > 1).then(|| CellAddress::new(range.sheet.clone(), col, r1 - 1))),
            ("end", (r2 < MAX_ROW).then(|| CellAddress::new(range.sheet.clone(), col, r2 + 1))),
        ]
    } else if r1 == r2 {
        vec![
            ("begin", (range.start_col > 1).then(|| CellAddress::new(range.sheet.clone(), range.start_col - 1, r1))),
            ("end", (range.end_col < crate::addr::MAX_COL).then(|| CellAddress::new(range.sheet.clone(), range.end_col + 1, r1))),
        ]
    } else {
        Vec::new()
    }
}

fn neighbor_above(top: &CellAddress) -> Option<CellAddress> {
    (top.row > 1).then(|| CellAddress::new(top.sheet.clone(), top.col, top.row - 1))
}

fn classify_range(range: &RangeNode, sheet: &str, host: &CellAddress) -> Option<RangeUnderSum> {
    if let Some(static_range) = range.as_static(sheet) {
        if static_range.is_whole_column() {
            return None;
        }
        return Some(RangeUnderSum::Static(static_range));
    }
    // Only the two self-anchored idioms are recognized; other computed
    // endpoints cannot be reasoned about statically.
    let range_sheet = range.sheet.clone().unwrap_or_else(|| sheet.to_string());
    let RangeEndpoint::Cell { col, row, .. } = range.start else { return None };
    let RangeEndpoint::Dynamic(end) = &range.end else { return None };
    if is_self_offset_anchor(end, &range_sheet, host) || is_index_row_anchor(end, &range_sheet, host) {
        Some(RangeUnderSum::BottomAnchored { top: CellAddress::new(range_sheet, col, row) })
    } else {
        None
    }
}

/// `OFFSET(<host>,-1,0)`.
fn is_self_offset_anchor(expr: &FormulaNode, sheet: &str, host: &CellAddress) -> bool {
    let FormulaNode::Call(name, args) = expr.strip_parens() else { return false };
    if name != "OFFSET" || args.len() != 3 {
        return false;
    }
    let FormulaNode::Ref(base) = args[0].strip_parens() else { return false };
    base.address(sheet) == *host && small_const(&args[1]) == Some(-1) && small_const(&args[2]) == Some(0)
}

/// `INDEX(<host column>,ROW()-1)`.
fn is_index_row_anchor(expr: &FormulaNode, sheet: &str, host: &CellAddress) -> bool {
    let FormulaNode::Call(name, args) = expr.strip_parens() else { return false };
    if name != "INDEX" || args.len() != 2 {
        return false;
    }
    let FormulaNode::Range(inner) = args[0].strip_parens() else { return false };
    let whole_host_column = matches!(
        (&inner.start, &inner.end),
        (RangeEndpoint::Column { col: c1, .. }, RangeEndpoint::Column { col: c2, .. })
            if *c1 == host.col && *c2 == host.col
    ) && inner.sheet.as_deref().map(|s| s.eq_ignore_ascii_case(sheet)).unwrap_or(true);
    if !whole_host_column {
        return false;
    }
    let FormulaNode::Binary(BinaryOp::Sub, left, right) = args[1].strip_parens() else { return false };
    matches!(left.strip_parens(), FormulaNode::Call(n, a) if n == "ROW" && a.is_empty())
        && matches!(right.strip_parens(), FormulaNode::Number(n) if *n == 1.0)
}

fn small_const(node: &FormulaNode) -> Option<i64> {
    match node.strip_parens() {
        FormulaNode::Number(n) if n.fract() == 0.0 => Some(*n as i64),
        FormulaNode::Unary(UnaryOp::Neg, inner) => small_const(inner).map(|v| -v),
        _ => None,
    }
}

fn collect_summed_ranges<'n>(node: &'n FormulaNode, out: &mut Vec<&'n RangeNode>) {
    match node {
        FormulaNode::Call(name, args) => {
            let range_args: &[FormulaNode] = match name.as_str() {
                "SUM" => args,
                "SUBTOTAL" if args.len() >= 2 => &args[1..],
                _ => &[],
            };
            for arg in range_args {
                if let FormulaNode::Range(r) = arg.strip_parens() {
                    out.push(r);
                }
            }
            for arg in args {
                collect_summed_ranges(arg, out);
            }
        }
        FormulaNode::Binary(_, left, right) => {
            collect_summed_ranges(left, out);
            collect_summed_ranges(right, out);
        }
        FormulaNode::Unary(_, inner) | FormulaNode::Paren(inner) => collect_summed_ranges(inner, out),
        FormulaNode::Range(range) => {
            for ep in [&range.start, &range.end] {
                if let RangeEndpoint::Dynamic(expr) = ep {
                    collect_summed_ranges(expr, out);
                }
            }
        }
        _ => {}
    }
}

/// R4: `SUM` over a range that contains its own subtotals counts every figure
/// twice, unless the formula divides by two on purpose.
pub fn detect_double_count(wb: &Workbook, _config: &AuditConfig) -> Vec<Finding> {
    let mut findings = Vec::new();
    for sheet in wb.sheets() {
        for cell in sheet.cells() {
            let Some(ast) = &cell.formula else { continue };
            let mut sums = Vec::new();
            collect_unhalved_sums(ast, &mut sums);
            for range_node in sums {
                let Some(range) = range_node.as_static(sheet.name()) else { continue };
                if range.is_whole_column() {
                    continue;
                }
                let inner = inner_aggregates(wb, &range, &cell.address);
                if inner.is_empty() {
                    continue;
                }
                let suggestion = crate::checks::suggest_total_rewrite(wb, &cell.address).primary();
                let listed: Vec<String> = inner.iter().take(6).map(|a| a.local_a1()).collect();
                findings.push(Finding {
                    rule: RULE_DOUBLE_COUNT.into(),
                    severity: Severity::Error,
                    cells: vec![cell.address.clone()],
                    message: format!(
                        "SUM over {} includes {} subtotal cell(s) ({}) whose inputs are also in the range, so figures count twice",
                        range.local_a1(),
                        inner.len(),
                        listed.join(", ")
                    ),
                    measured: None,
                    threshold: None,
                    suggestion,
                });
            }
        }
    }
    findings
}

/// `SUM(...)` call nodes that are not immediately divided by two.
fn collect_unhalved_sums<'n>(node: &'n FormulaNode, out: &mut Vec<&'n RangeNode>) {
    match node.strip_parens() {
        FormulaNode::Binary(BinaryOp::Div, left, right) => {
            let halved = matches!(right.strip_parens(), FormulaNode::Number(n) if *n == 2.0)
                && matches!(left.strip_parens(), FormulaNode::Call(name, _) if name == "SUM");
            if !halved {
                collect_unhalved_sums(left, out);
            }
            collect_unhalved_sums(right, out);
        }
        FormulaNode::Call(name, args) => {
            if name == "SUM" && args.len() == 1 {
                if let FormulaNode::Range(r) = args[0].strip_parens() {
                    out.push(r);
                }
            }
            for arg in args {
                collect_unhalved_sums(arg, out);
            }
        }
        FormulaNode::Binary(_, left, right) => {
            collect_unhalved_sums(left, out);
            collect_unhalved_sums(right, out);
        }
        FormulaNode::Unary(_, inner) => collect_unhalved_sums(inner, out),
        _ => {}
    }
}

/// Cells inside `range` whose formulas aggregate a sub-range of `range`.
pub(crate) fn inner_aggregates(wb: &Workbook, range: &CellRange, host: &CellAddress) -> Vec<CellAddress> {
    let Some(sheet) = wb.sheet(&range.sheet) else { return Vec::new() };
    let Some((r1, r2)) = range.rows else { return Vec::new() };
    sheet
        .cells_in_rect(range.start_col, range.end_col, r1, r2)
        .filter(|cell| cell.address != *host)
        .filter(|cell| {
            cell.formula
                .as_ref()
                .and_then(|ast| aggregate_range_of(ast, &range.sheet))
                .map(|inner| range.contains_range(&inner))
                .unwrap_or(false)
        })
        .map(|cell| cell.address.clone())
        .collect()
}

/// The single static range a `SUM`/`SUBTOTAL` formula aggregates, if that is
/// what the formula is.
pub(crate) fn aggregate_range_of(ast: &FormulaNode, sheet: &str) -> Option<CellRange> {
    let FormulaNode::Call(name, args) = ast.strip_parens() else { return None };
    let range_arg = match name.as_str() {
        "SUM" if args.len() == 1 => &args[0],
        "SUBTOTAL" if args.len() == 2 => &args[1],
        _ => return None,
    };
    let FormulaNode::Range(range) = range_arg.strip_parens() else { return None };
    range.as_static(sheet)
}

/// R6: arithmetic directly on a cell rendered by FIXED/DOLLAR. The text is
/// excluded from SUM totals yet coerces back to a number here, which is easy
/// to misread.
pub fn detect_text_number_hazard(wb: &Workbook, _config: &AuditConfig) -> Vec<Finding> {
    let mut findings = Vec::new();
    for sheet in wb.sheets() {
        for cell in sheet.cells() {
            let Some(ast) = &cell.formula else { continue };
            let mut targets: BTreeSet<CellAddress> = BTreeSet::new();
            collect_arith_refs(ast, sheet.name(), wb, &mut targets);
            if targets.is_empty() {
                continue;
            }
            let listed: Vec<String> = targets.iter().map(|a| a.local_a1()).collect();
            findings.push(Finding {
                rule: RULE_TEXT_NUMBER.into(),
                severity: Severity::Warning,
                cells: vec![cell.address.clone()],
                message: format!(
                    "arithmetic on FIXED/DOLLAR text cell(s) {}: the text is skipped by SUM but treated as a number here",
                    listed.join(", ")
                ),
                measured: None,
                threshold: None,
                suggestion: None,
            });
        }
    }
    findings
}

fn collect_arith_refs(node: &FormulaNode, sheet: &str, wb: &Workbook, out: &mut BTreeSet<CellAddress>) {
    let check_operand = |operand: &FormulaNode, out: &mut BTreeSet<CellAddress>| {
        if let FormulaNode::Ref(r) = operand.strip_parens() {
            let addr = r.address(sheet);
            let is_fixed_text = wb
                .cell(&addr)
                .and_then(|c| c.formula.as_ref())
                .map(|ast| ast.is_call("FIXED") || ast.is_call("DOLLAR"))
                .unwrap_or(false);
            if is_fixed_text {
                out.insert(addr);
            }
        }
    };
    match node {
        FormulaNode::Binary(op, left, right) => {
            if op.is_arithmetic() {
                check_operand(left, out);
                check_operand(right, out);
            }
            collect_arith_refs(left, sheet, wb, out);
            collect_arith_refs(right, sheet, wb, out);
        }
        FormulaNode::Unary(_, inner) => {
            check_operand(inner, out);
            collect_arith_refs(inner, sheet, wb, out);
        }
        FormulaNode::Call(_, args) => {
            for arg in args {
                collect_arith_refs(arg, sheet, wb, out);
            }
        }
        FormulaNode::Paren(inner) => collect_arith_refs(inner, sheet, wb, out),
        FormulaNode::Range(range) => {
            for ep in [&range.start, &range.end] {
                if let RangeEndpoint::Dynamic(expr) = ep {
                    collect_arith_refs(expr, sheet, wb, out);
                }
            }
        }
        _ => {}
    }
}
