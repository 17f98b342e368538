//! Table detection: rectangular numeric blocks and their totals lines.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::addr::{CellAddress, CellRange};
use crate::engine::ValueMap;
use crate::formula::{BinaryOp, FormulaNode};
use crate::value::CellValue;
use crate::workbook::Sheet;

use super::AuditConfig;

/// Inclusive cell rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rect {
    pub top: u32,
    pub left: u32,
    pub bottom: u32,
    pub right: u32,
}

impl Rect {
    pub fn area(&self) -> u64 {
        (self.bottom - self.top + 1) as u64 * (self.right - self.left + 1) as u64
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.left <= other.right && other.left <= self.right && self.top <= other.bottom && other.top <= self.bottom
    }

    pub fn contains(&self, col: u32, row: u32) -> bool {
        col >= self.left && col <= self.right && row >= self.top && row <= self.bottom
    }

    pub fn to_range(&self, sheet: &str) -> CellRange {
        CellRange::cells(sheet, self.left, self.top, self.right, self.bottom)
    }
}

/// A detected data block. `totals_row`/`totals_col` sit on the last row/column
/// of `bounds` when classified; `grand_total` is their intersection when both
/// exist and holds a number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRegion {
    pub sheet: String,
    pub bounds: Rect,
    pub body: Rect,
    pub totals_row: Option<u32>,
    pub totals_col: Option<u32>,
    pub grand_total: Option<CellAddress>,
}

impl TableRegion {
    pub fn has_both_totals(&self) -> bool {
        self.totals_row.is_some() && self.totals_col.is_some()
    }

    /// The totals-column cells over the body rows (the row-totals line).
    pub fn row_totals_range(&self) -> Option<CellRange> {
        let col = self.totals_col?;
        Some(CellRange::cells(self.sheet.clone(), col, self.body.top, col, self.body.bottom))
    }

    /// The totals-row cells over the body columns (the column-totals line).
    pub fn column_totals_range(&self) -> Option<CellRange> {
        let row = self.totals_row?;
        Some(CellRange::cells(self.sheet.clone(), self.body.left, row, self.body.right, row))
    }

    /// Every cell on a totals line or the grand total.
    pub fn totals_cell(&self, addr: &CellAddress) -> bool {
        if !addr.same_sheet(&self.sheet) || !self.bounds.contains(addr.col, addr.row) {
            return false;
        }
        Some(addr.row) == self.totals_row || Some(addr.col) == self.totals_col
    }
}

/// Detect tables on one sheet: connected blocks of numeric cells at least 2x2,
/// with a bounding row/column classified as a totals line when at least
/// `totals_formula_fraction` of its formula cells aggregate the body in the
/// matching direction. A bounding line holding only numbers (pasted values)
/// also counts as totals when the opposite line is formula-classified and its
/// values track the matching aggregates within `totals_value_band`.
/// Overlapping candidates resolve to the larger area, then topmost-leftmost.
pub fn detect_tables(sheet: &Sheet, vm: &ValueMap, config: &AuditConfig) -> Vec<TableRegion> {
    let numeric: BTreeSet<(u32, u32)> = sheet
        .cells()
        .filter(|c| matches!(vm.value(&c.address), CellValue::Number(_)))
        .map(|c| (c.address.row, c.address.col))
        .collect();

    let mut rects = component_boxes(&numeric);
    rects.retain(|r| r.bottom > r.top && r.right > r.left);
    rects.sort_by(|a, b| b.area().cmp(&a.area()).then(a.top.cmp(&b.top)).then(a.left.cmp(&b.left)));
    let mut kept: Vec<Rect> = Vec::new();
    for rect in rects {
        if kept.iter().all(|k| !k.intersects(&rect)) {
            kept.push(rect);
        }
    }
    kept.sort_by_key(|r| (r.top, r.left));

    kept.into_iter().map(|bounds| classify(sheet, vm, config, bounds)).collect()
}

/// Bounding boxes of 4-connected components of numeric cells.
fn component_boxes(numeric: &BTreeSet<(u32, u32)>) -> Vec<Rect> {
    let mut seen: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut boxes = Vec::new();
    for start in numeric {
        if seen.contains(start) {
            continue;
        }
        let mut stack = vec![*start];
        seen.insert(*start);
        let (mut top, mut left, mut bottom, mut right) = (start.0, start.1, start.0, start.1);
        while let Some((row, col)) = stack.pop() {
            top = top.min(row);
            bottom = bottom.max(row);
            left = left.min(col);
            right = right.max(col);
            let neighbors = [
                (row.wrapping_sub(1), col),
                (row + 1, col),
                (row, col.wrapping_sub(1)),
                (row, col + 1),
            ];
            for n in neighbors {
                if numeric.contains(&n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        boxes.push(Rect { top, left, bottom, right });
    }
    boxes
}

fn classify(sheet: &Sheet, vm: &ValueMap, config: &AuditConfig, bounds: Rect) -> TableRegion {
    let last_row = bounds.bottom;
    let last_col = bounds.right;

    // Pass one: lines classified by their aggregating formulas.
    let row_by_formula = formula_line_aggregates(sheet, config, bounds, Line::Row(last_row));
    let col_by_formula = formula_line_aggregates(sheet, config, bounds, Line::Col(last_col));

    // Pass two: a pasted-values line opposite a formula-classified line.
    let row_as_constants = !row_by_formula
        && col_by_formula
        && constants_line_matches(sheet, vm, config, bounds, Line::Row(last_row));
    let col_as_constants = !col_by_formula
        && row_by_formula
        && constants_line_matches(sheet, vm, config, bounds, Line::Col(last_col));

    let totals_row = (row_by_formula || row_as_constants).then_some(last_row);
    let totals_col = (col_by_formula || col_as_constants).then_some(last_col);

    let body = Rect {
        top: bounds.top,
        left: bounds.left,
        bottom: if totals_row.is_some() { last_row - 1 } else { last_row },
        right: if totals_col.is_some() { last_col - 1 } else { last_col },
    };

    let grand_total = match (totals_row, totals_col) {
        (Some(row), Some(col)) => {
            let addr = CellAddress::new(sheet.name().to_string(), col, row);
            matches!(vm.value(&addr), CellValue::Number(_)).then_some(addr)
        }
        _ => None,
    };

    TableRegion { sheet: sheet.name().to_string(), bounds, body, totals_row, totals_col, grand_total }
}

#[derive(Clone, Copy)]
enum Line {
    Row(u32),
    Col(u32),
}

fn line_cells(sheet: &Sheet, bounds: Rect, line: Line) -> Vec<&crate::workbook::Cell> {
    match line {
        Line::Row(row) => sheet.cells_in_rect(bounds.left, bounds.right, row, row).collect(),
        Line::Col(col) => sheet.cells_in_rect(col, col, bounds.top, bounds.bottom).collect(),
    }
}

fn formula_line_aggregates(sheet: &Sheet, config: &AuditConfig, bounds: Rect, line: Line) -> bool {
    let cells = line_cells(sheet, bounds, line);
    let corner = (bounds.bottom, bounds.right);
    let formulas: Vec<_> = cells.iter().filter(|c| c.formula.is_some()).collect();
    if formulas.is_empty() {
        return false;
    }
    let mut aggregating = 0usize;
    let mut non_corner_aggregating = 0usize;
    for cell in &formulas {
        let ast = cell.formula.as_ref().expect("filtered");
        let vertical = aggregates_body(ast, sheet.name(), cell.address.col, bounds, true);
        let horizontal = aggregates_body(ast, sheet.name(), cell.address.row, bounds, false);
        let is_corner = (cell.address.row, cell.address.col) == corner;
        let counts = match line {
            // The corner cell is the grand total; summing either line counts.
            Line::Row(_) => vertical || (is_corner && horizontal),
            Line::Col(_) => horizontal || (is_corner && vertical),
        };
        if counts {
            aggregating += 1;
            if !is_corner {
                non_corner_aggregating += 1;
            }
        }
    }
    // A lone grand-total formula does not make its row or column a totals
    // line; at least one plain totals formula must sit on it.
    non_corner_aggregating >= 1
        && aggregating as f64 / formulas.len() as f64 >= config.totals_formula_fraction
}

/// Does this formula sum a run of cells toward the body? `lane` is the
/// formula's own column (vertical) or row (horizontal).
fn aggregates_body(ast: &FormulaNode, sheet_name: &str, lane: u32, bounds: Rect, vertical: bool) -> bool {
    match ast.strip_parens() {
        FormulaNode::Call(name, args) => {
            let range_arg = match name.as_str() {
                "SUM" if args.len() == 1 => &args[0],
                "SUBTOTAL" if args.len() == 2 => &args[1],
                _ => return false,
            };
            let FormulaNode::Range(range) = range_arg.strip_parens() else { return false };
            let Some(range) = range.as_static(sheet_name) else { return false };
            let Some((r1, r2)) = range.rows else { return false };
            if !range.sheet.eq_ignore_ascii_case(sheet_name) {
                return false;
            }
            if vertical {
                range.start_col == lane
                    && range.end_col == lane
                    && r2 > r1
                    && r1 >= bounds.top
                    && r2 < bounds.bottom
            } else {
                r1 == lane && r2 == lane && range.end_col > range.start_col
                    && range.start_col >= bounds.left
                    && range.end_col < bounds.right
            }
        }
        root => {
            // A chain of two or more +/- references down (or across) the lane.
            let mut refs = Vec::new();
            if !collect_chain(root, &mut refs) || refs.len() < 2 {
                return false;
            }
            refs.iter().all(|(col, row)| {
                if vertical {
                    *col == lane && *row >= bounds.top && *row < bounds.bottom
                } else {
                    *row == lane && *col >= bounds.left && *col < bounds.right
                }
            })
        }
    }
}

fn collect_chain(node: &FormulaNode, out: &mut Vec<(u32, u32)>) -> bool {
    match node.strip_parens() {
        FormulaNode::Binary(BinaryOp::Add | BinaryOp::Sub, left, right) => {
            collect_chain(left, out) && collect_chain(right, out)
        }
        FormulaNode::Ref(r) if r.sheet.is_none() => {
            out.push((r.col, r.row));
            true
        }
        _ => false,
    }
}

fn constants_line_matches(sheet: &Sheet, vm: &ValueMap, config: &AuditConfig, bounds: Rect, line: Line) -> bool {
    let cells = line_cells(sheet, bounds, line);
    if cells.is_empty() || cells.iter().any(|c| c.formula.is_some()) {
        return false;
    }
    let band_floor = 10.0 * config.tolerance_abs;
    cells.iter().all(|cell| {
        let Some(value) = vm.value(&cell.address).as_number() else { return false };
        let expected = match line {
            Line::Row(row) => lane_sum(sheet, vm, bounds.top, row - 1, cell.address.col, true),
            Line::Col(col) => lane_sum(sheet, vm, bounds.left, col - 1, cell.address.row, false),
        };
        let band = (config.totals_value_band * expected.abs()).max(band_floor);
        (value - expected).abs() <= band
    })
}

fn lane_sum(sheet: &Sheet, vm: &ValueMap, from: u32, to: u32, lane: u32, vertical: bool) -> f64 {
    if to < from {
        return 0.0;
    }
    let cells: Vec<_> = if vertical {
        sheet.cells_in_rect(lane, lane, from, to).collect()
    } else {
        sheet.cells_in_rect(from, to, lane, lane).collect()
    };
    cells.iter().filter_map(|c| vm.value(&c.address).as_number()).sum()
}

/// Sum of the computed numbers in a range (text, blanks, and booleans ignored).
/// Returns `None` when any covered cell holds an error.
pub(super) fn sum_range(sheet: &Sheet, vm: &ValueMap, range: &CellRange) -> Option<f64> {
    let Some((r1, r2)) = range.rows else { return Some(0.0) };
    let mut sum = 0.0;
    for cell in sheet.cells_in_rect(range.start_col, range.end_col, r1, r2) {
        match vm.value(&cell.address) {
            CellValue::Number(n) => sum += n,
            CellValue::Error(_) => return None,
            _ => {}
        }
    }
    Some(sum)
}

/// Map from sheet name to detected tables, in sheet order.
pub fn detect_all_tables(
    wb: &crate::workbook::Workbook,
    vm: &ValueMap,
    config: &AuditConfig,
) -> BTreeMap<String, Vec<TableRegion>> {
    wb.sheets()
        .iter()
        .map(|s| (s.name().to_string(), detect_tables(s, vm, config)))
        .collect()
}
