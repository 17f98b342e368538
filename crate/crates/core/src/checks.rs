//! Check-formula generation, total rewrites, and patch application.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::addr::{CellAddress, CellRange, MAX_COL, MAX_ROW};
use crate::audit::tables::TableRegion;
use crate::audit::{structure_helpers, AuditConfig, RULE_CROSSFOOT};
use crate::engine::ValueMap;
use crate::formula::{parse_formula, FormulaNode};
use crate::value::{fmt_number, CellValue};
use crate::workbook::{Cell, Workbook};

/// A generated check formula and the blank cell it should be placed in.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckPatch {
    pub target: CellAddress,
    pub formula: String,
    /// Rule the patch realizes.
    pub rule: String,
    /// Bounds of the table the check watches.
    pub table: Option<CellRange>,
}

impl Serialize for CheckPatch {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let len = if self.table.is_some() { 4 } else { 3 };
        let mut s = serializer.serialize_struct("CheckPatch", len)?;
        s.serialize_field("target", &self.target)?;
        s.serialize_field("formula", &self.formula)?;
        s.serialize_field("rule", &self.rule)?;
        if let Some(t) = &self.table {
            s.serialize_field("table", t)?;
        }
        s.end()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckGenError {
    #[error("table has no totals lines to verify")]
    NoTotals,
    #[error("no blank cell within 3 cells of the grand total {0}; place the check manually")]
    NoBlankTarget(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot apply patches: {}", problems.join("; "))]
pub struct ApplyError {
    pub problems: Vec<String>,
}

/// Instantiate the cross-foot check formula for a table:
/// `=IF(ABS(<row totals>-<column totals>)<tol,"","message")`. When cells
/// already summing each totals line exist they are referenced directly,
/// otherwise the sums are inlined. The target is the first blank cell below
/// the grand total, falling back to the right of it.
pub fn generate_crossfoot_check(
    wb: &Workbook,
    vm: &ValueMap,
    table: &TableRegion,
    config: &AuditConfig,
) -> Result<CheckPatch, CheckGenError> {
    let (Some(row_totals), Some(col_totals), Some(grand)) =
        (table.row_totals_range(), table.column_totals_range(), table.grand_total.as_ref())
    else {
        return Err(CheckGenError::NoTotals);
    };

    let row_side = existing_sum_cell(wb, &row_totals)
        .map(|a| a.local_a1())
        .unwrap_or_else(|| format!("SUM({})", row_totals.local_a1()));
    let col_side = existing_sum_cell(wb, &col_totals)
        .map(|a| a.local_a1())
        .unwrap_or_else(|| format!("SUM({})", col_totals.local_a1()));

    let formula = format!(
        "=IF(ABS({row_side}-{col_side})<{},\"\",\"{}\")",
        fmt_number(config.tolerance_abs),
        config.check_message.replace('"', "\"\""),
    );
    debug_assert!(parse_formula(&formula).is_ok());

    let target = find_blank_target(wb, vm, grand)
        .ok_or_else(|| CheckGenError::NoBlankTarget(grand.to_a1()))?;
    Ok(CheckPatch {
        target,
        formula,
        rule: RULE_CROSSFOOT.to_string(),
        table: Some(table.bounds.to_range(&table.sheet)),
    })
}

/// A cell whose whole formula is `SUM`/`SUBTOTAL` over exactly this range.
fn existing_sum_cell(wb: &Workbook, range: &CellRange) -> Option<CellAddress> {
    let sheet = wb.sheet(&range.sheet)?;
    sheet
        .cells()
        .filter(|cell| cell.formula.is_some())
        .find(|cell| {
            cell.formula
                .as_ref()
                .and_then(|ast| structure_helpers::aggregate_range_of(ast, &range.sheet))
                .map(|r| r == *range)
                .unwrap_or(false)
        })
        .map(|cell| cell.address.clone())
}

fn find_blank_target(wb: &Workbook, vm: &ValueMap, grand: &CellAddress) -> Option<CellAddress> {
    let below = (1..=3u32)
        .filter(|d| grand.row + d <= MAX_ROW)
        .map(|d| CellAddress::new(grand.sheet.clone(), grand.col, grand.row + d));
    let right = (1..=3u32)
        .filter(|d| grand.col + d <= MAX_COL)
        .map(|d| CellAddress::new(grand.sheet.clone(), grand.col + d, grand.row));
    below.chain(right).find(|addr| is_blank_cell(wb, vm, addr))
}

fn is_blank_cell(wb: &Workbook, vm: &ValueMap, addr: &CellAddress) -> bool {
    match wb.cell(addr) {
        None => true,
        Some(c) => c.formula.is_none() && c.formula_text.is_none() && vm.value(addr).is_blank(),
    }
}

/// Generate cross-foot checks for every table that has both totals lines and
/// no check cell watching it. Tables where no blank target exists are
/// reported as errors alongside the successful patches.
pub fn generate_all_checks(
    wb: &Workbook,
    vm: &ValueMap,
    config: &AuditConfig,
) -> (Vec<CheckPatch>, Vec<(CellRange, CheckGenError)>) {
    let tables = crate::audit::detect_all_tables(wb, vm, config);
    let checks = crate::audit::CheckIndex::build(wb);
    let mut patches = Vec::new();
    let mut errors = Vec::new();
    for list in tables.values() {
        for table in list {
            if !table.has_both_totals() || table.grand_total.is_none() {
                continue;
            }
            if checks.watches_table(table) {
                continue;
            }
            match generate_crossfoot_check(wb, vm, table, config) {
                Ok(patch) => patches.push(patch),
                Err(e) => errors.push((table.bounds.to_range(&table.sheet), e)),
            }
        }
    }
    (patches, errors)
}

/// Alternative formulas for a flagged total, most specific first, plus the
/// per-cell rewrites that make the outer `SUBTOTAL` form sound.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewriteSuggestion {
    /// Replacement formulas for the flagged cell itself.
    pub outer: Vec<String>,
    /// `SUM` cells inside the total that should become `SUBTOTAL(9,...)`.
    pub inner_rewrites: Vec<(CellAddress, String)>,
}

impl RewriteSuggestion {
    pub fn is_empty(&self) -> bool {
        self.outer.is_empty()
    }

    pub fn primary(&self) -> Option<String> {
        self.outer.first().cloned()
    }
}

/// Suggest a robust replacement for a cell flagged by the chained-plus or
/// double-count rules. Nothing is applied; the result is advice.
pub fn suggest_total_rewrite(wb: &Workbook, cell: &CellAddress) -> RewriteSuggestion {
    let Some(cell_data) = wb.cell(cell) else { return RewriteSuggestion::default() };
    let Some(ast) = &cell_data.formula else { return RewriteSuggestion::default() };
    let sheet = &cell_data.address.sheet;

    // Targets: the chain's references, or the cells inside a flagged SUM.
    let (targets, own_range): (Vec<CellAddress>, Option<CellRange>) =
        if let Some(refs) = structure_helpers::chain_refs(ast) {
            (refs.iter().map(|r| r.address(sheet)).collect(), None)
        } else if let Some(range) = structure_helpers::aggregate_range_of(ast, sheet) {
            let inner = structure_helpers::inner_aggregates(wb, &range, &cell_data.address);
            if inner.is_empty() {
                return RewriteSuggestion::default();
            }
            (inner, Some(range))
        } else {
            return RewriteSuggestion::default();
        };

    let mut covered: Vec<CellRange> = Vec::new();
    let mut inner_rewrites = Vec::new();
    let mut all_aggregate = !targets.is_empty();
    for target in &targets {
        covered.push(CellRange::single(target));
        let target_ast = wb.cell(target).and_then(|c| c.formula.as_ref());
        match target_ast.and_then(|ast| structure_helpers::aggregate_range_of(ast, &target.sheet)) {
            Some(range) => {
                if target_ast.map(|a| a.is_call("SUM")).unwrap_or(false) {
                    inner_rewrites
                        .push((target.clone(), format!("=SUBTOTAL(9,{})", range.local_a1())));
                }
                covered.push(range);
            }
            None => all_aggregate = false,
        }
    }

    let from_sum = own_range.is_some();
    let full_range = own_range.or_else(|| enclosing_range(&covered)).unwrap_or_else(|| {
        CellRange::single(cell)
    });
    let mut outer = Vec::new();
    if all_aggregate || from_sum {
        if tiles_exactly(&covered, &full_range) {
            outer.push(format!("=SUM({})/2", full_range.local_a1()));
        }
        outer.push(format!("=SUBTOTAL(9,{})", full_range.local_a1()));
    } else if inner_rewrites.is_empty() {
        // A chain of raw inputs: the smallest enclosing rectangle under SUM.
        outer.push(format!("=SUM({})", full_range.local_a1()));
    } else {
        outer.push(format!("=SUBTOTAL(9,{})", full_range.local_a1()));
    }
    RewriteSuggestion { outer, inner_rewrites }
}

/// Smallest rectangle containing every listed range (all on one sheet).
fn enclosing_range(ranges: &[CellRange]) -> Option<CellRange> {
    let first = ranges.first()?;
    let sheet = first.sheet.clone();
    let mut min_col = u32::MAX;
    let mut max_col = 0;
    let mut min_row = u32::MAX;
    let mut max_row = 0;
    for r in ranges {
        if !r.sheet.eq_ignore_ascii_case(&sheet) {
            return None;
        }
        let (r1, r2) = r.rows?;
        min_col = min_col.min(r.start_col);
        max_col = max_col.max(r.end_col);
        min_row = min_row.min(r1);
        max_row = max_row.max(r2);
    }
    Some(CellRange::cells(sheet, min_col, min_row, max_col, max_row))
}

/// Every cell of `full` covered exactly once by the listed ranges: the layout
/// where detail rows and their one layer of subtotals fill the whole block,
/// which is what makes `SUM(range)/2` exact.
fn tiles_exactly(covered: &[CellRange], full: &CellRange) -> bool {
    let Some((f1, f2)) = full.rows else { return false };
    let width = (full.end_col - full.start_col + 1) as u64;
    let total = width * (f2 - f1 + 1) as u64;
    if total > 200_000 {
        return false;
    }
    let mut counts = vec![0u8; total as usize];
    for range in covered {
        let Some((r1, r2)) = range.rows else { return false };
        if !full.contains_range(range) {
            return false;
        }
        for row in r1..=r2 {
            for col in range.start_col..=range.end_col {
                let idx = ((row - f1) as u64 * width + (col - full.start_col) as u64) as usize;
                counts[idx] += 1;
                if counts[idx] > 1 {
                    return false;
                }
            }
        }
    }
    counts.iter().all(|&c| c == 1)
}

/// Insert patch formulas into blank cells, returning a new workbook. The
/// original is untouched; if anything is wrong (occupied target, duplicate
/// target, formula that does not parse), nothing is applied.
pub fn apply_patches(wb: &Workbook, patches: &[CheckPatch]) -> Result<Workbook, ApplyError> {
    let vm = crate::engine::recalculate(wb);
    let mut problems = Vec::new();
    let mut seen: Vec<&CellAddress> = Vec::new();
    let mut parsed: Vec<(CellAddress, FormulaNode, String)> = Vec::new();
    for patch in patches {
        if wb.sheet(&patch.target.sheet).is_none() {
            problems.push(format!("{}: no such sheet", patch.target));
            continue;
        }
        if seen.contains(&&patch.target) {
            problems.push(format!("{}: two patches target the same cell", patch.target));
            continue;
        }
        seen.push(&patch.target);
        if !is_blank_cell(wb, &vm, &patch.target) {
            problems.push(format!("{}: target cell is not blank", patch.target));
            continue;
        }
        match parse_formula(&patch.formula) {
            Ok(ast) => parsed.push((patch.target.clone(), ast, patch.formula.clone())),
            Err(e) => problems.push(format!("{}: formula does not parse: {e}", patch.target)),
        }
    }
    if !problems.is_empty() {
        return Err(ApplyError { problems });
    }
    let mut out = wb.clone();
    for (target, ast, text) in parsed {
        let canonical_sheet = out.sheet(&target.sheet).expect("validated").name().to_string();
        let address = CellAddress::new(canonical_sheet, target.col, target.row);
        out.insert_cell(Cell { address, value: CellValue::Blank, formula: Some(ast), formula_text: Some(text) })
            .expect("validated sheet");
    }
    Ok(out)
}
