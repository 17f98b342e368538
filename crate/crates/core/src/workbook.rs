//! The in-memory workbook model.
//!
//! Workbooks are immutable after load; every operation that "changes" one
//! ([`Workbook::with_value`], [`crate::checks::apply_patches`]) returns a new
//! workbook and leaves the original untouched.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::addr::{CellAddress, CellRange, MAX_COL, MAX_ROW};
use crate::formula::{parse_formula, FormulaNode};
use crate::value::CellValue;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RangeError {
    #[error("unknown sheet `{0}`")]
    UnknownSheet(String),
}

/// One cell: the value as stored in the file, plus the parsed formula when the
/// cell has one. Formula cells keep their cached stored value so a
/// recalculation can be diffed against it.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub address: CellAddress,
    pub value: CellValue,
    pub formula: Option<FormulaNode>,
    /// Original formula text as loaded. Present whenever the source carried a
    /// formula, even if it failed to parse.
    pub formula_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sheet {
    name: String,
    /// Keyed by (row, col) so iteration is row-major.
    cells: BTreeMap<(u32, u32), Cell>,
}

impl Sheet {
    pub(crate) fn new(name: String) -> Self {
        Sheet { name, cells: BTreeMap::new() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cell(&self, col: u32, row: u32) -> Option<&Cell> {
        self.cells.get(&(row, col))
    }

    /// Row-major iteration over present cells.
    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.values()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `(max_row, max_col)` over present cells.
    pub fn used_extent(&self) -> Option<(u32, u32)> {
        let max_row = self.cells.keys().next_back()?.0;
        let max_col = self.cells.keys().map(|(_, c)| *c).max()?;
        Some((max_row, max_col))
    }

    /// Present cells inside a rectangle, row-major.
    pub fn cells_in_rect(
        &self,
        col_start: u32,
        col_end: u32,
        row_start: u32,
        row_end: u32,
    ) -> impl Iterator<Item = &Cell> {
        self.cells
            .range((row_start, 0)..=(row_end, u32::MAX))
            .map(|(_, cell)| cell)
            .filter(move |cell| cell.address.col >= col_start && cell.address.col <= col_end)
    }

    pub(crate) fn insert(&mut self, cell: Cell) {
        self.cells.insert((cell.address.row, cell.address.col), cell);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workbook {
    sheets: Vec<Sheet>,
    front_sheet: String,
    warnings: Vec<String>,
}

impl Workbook {
    pub fn sheets(&self) -> &[Sheet] {
        &self.sheets
    }

    pub fn sheet(&self, name: &str) -> Option<&Sheet> {
        self.sheets.iter().find(|s| s.name.eq_ignore_ascii_case(name))
    }

    /// The sheet that is always printed; error indicators from every other
    /// sheet should be carried forward onto it. Defaults to the first sheet.
    pub fn front_sheet(&self) -> &str {
        &self.front_sheet
    }

    /// Non-fatal notes gathered while loading (skipped parts, formulas that
    /// did not parse, ...).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn cell(&self, addr: &CellAddress) -> Option<&Cell> {
        self.sheet(&addr.sheet)?.cell(addr.col, addr.row)
    }

    /// Stored value at `addr`; absent cells read as blank.
    pub fn stored_value(&self, addr: &CellAddress) -> CellValue {
        self.cell(addr).map(|c| c.value.clone()).unwrap_or(CellValue::Blank)
    }

    /// All cells covered by `range` in row-major order, with `Blank` entries
    /// for absent cells inside the rectangle. Whole-column ranges clip to the
    /// sheet's used extent.
    pub fn cells_in_range(&self, range: &CellRange) -> Result<Vec<(CellAddress, CellValue)>, RangeError> {
        let sheet = self
            .sheet(&range.sheet)
            .ok_or_else(|| RangeError::UnknownSheet(range.sheet.clone()))?;
        let (row_start, row_end) = match range.rows {
            Some(bounds) => bounds,
            None => match sheet.used_extent() {
                Some((max_row, _)) => (1, max_row),
                None => return Ok(Vec::new()),
            },
        };
        let mut out = Vec::new();
        for row in row_start..=row_end {
            for col in range.start_col..=range.end_col {
                let value = sheet.cell(col, row).map(|c| c.value.clone()).unwrap_or(CellValue::Blank);
                out.push((CellAddress::new(sheet.name.clone(), col, row), value));
            }
        }
        Ok(out)
    }

    /// A copy of the workbook with one cell overwritten by a plain value. Any
    /// formula on that cell is dropped, the way hand-editing a cell would.
    pub fn with_value(&self, addr: &CellAddress, value: CellValue) -> Result<Workbook, RangeError> {
        let mut wb = self.clone();
        let sheet = wb
            .sheets
            .iter_mut()
            .find(|s| s.name.eq_ignore_ascii_case(&addr.sheet))
            .ok_or_else(|| RangeError::UnknownSheet(addr.sheet.clone()))?;
        let canonical = CellAddress::new(sheet.name.clone(), addr.col, addr.row);
        sheet.insert(Cell { address: canonical, value, formula: None, formula_text: None });
        Ok(wb)
    }

    pub(crate) fn insert_cell(&mut self, cell: Cell) -> Result<(), RangeError> {
        let sheet = self
            .sheets
            .iter_mut()
            .find(|s| s.name.eq_ignore_ascii_case(&cell.address.sheet))
            .ok_or_else(|| RangeError::UnknownSheet(cell.address.sheet.clone()))?;
        sheet.insert(cell);
        Ok(())
    }
}

/// Builder used by tests, fixtures, and the loaders.
#[derive(Debug, Default)]
pub struct WorkbookBuilder {
    sheets: Vec<Sheet>,
    current: Option<usize>,
    front_sheet: Option<String>,
    warnings: Vec<String>,
    errors: Vec<String>,
}

impl WorkbookBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Start (or switch back to) a sheet. Sheet names must be unique under
    /// case-insensitive comparison; only an exact-name repeat switches back.
    pub fn sheet(mut self, name: &str) -> Self {
        if let Some(i) = self.sheets.iter().position(|s| s.name.eq_ignore_ascii_case(name)) {
            if self.sheets[i].name == name {
                self.current = Some(i);
            } else {
                self.errors.push(format!("duplicate sheet name `{name}`"));
            }
            return self;
        }
        self.sheets.push(Sheet::new(name.to_string()));
        self.current = Some(self.sheets.len() - 1);
        self
    }

    pub fn front_sheet(mut self, name: &str) -> Self {
        self.front_sheet = Some(name.to_string());
        self
    }

    /// Set a plain value on the current sheet.
    pub fn value(mut self, reference: &str, value: impl Into<CellValue>) -> Self {
        self.put(reference, value.into(), None);
        self
    }

    /// Set a formula (with optional cached stored value) on the current sheet.
    pub fn formula(mut self, reference: &str, text: &str) -> Self {
        self.put(reference, CellValue::Blank, Some(text.to_string()));
        self
    }

    pub fn formula_with_value(mut self, reference: &str, text: &str, cached: impl Into<CellValue>) -> Self {
        self.put(reference, cached.into(), Some(text.to_string()));
        self
    }

    fn put(&mut self, reference: &str, value: CellValue, formula_text: Option<String>) {
        let Some(sheet) = self.current.and_then(|i| self.sheets.get_mut(i)) else {
            self.errors.push(format!("cell `{reference}` set before any sheet"));
            return;
        };
        let sheet_name = sheet.name.clone();
        let addr = match crate::addr::parse_address(reference, &sheet_name) {
            Ok(a) => a,
            Err(e) => {
                self.errors.push(format!("bad cell reference `{reference}`: {e}"));
                return;
            }
        };
        if !addr.same_sheet(&sheet_name) {
            self.errors.push(format!("cell `{reference}` does not belong to sheet `{sheet_name}`"));
            return;
        }
        if addr.col > MAX_COL || addr.row > MAX_ROW {
            self.errors.push(format!("cell `{reference}` outside the grid"));
            return;
        }
        let (value, formula, formula_text) = match formula_text {
            None => (value, None, None),
            Some(text) => match parse_formula(&text) {
                Ok(ast) => (value, Some(ast), Some(text)),
                Err(e) => {
                    self.warnings.push(format!(
                        "{}!{}: formula did not parse ({e}); cell loaded as #NAME?",
                        sheet_name,
                        addr.local_a1()
                    ));
                    (CellValue::Error(crate::value::ErrorCode::Name), None, Some(text))
                }
            },
        };
        sheet.insert(Cell { address: addr, value, formula, formula_text });
    }

    pub(crate) fn warning(mut self, text: String) -> Self {
        self.warnings.push(text);
        self
    }

    pub fn build(self) -> Result<Workbook, String> {
        if let Some(err) = self.errors.into_iter().next() {
            return Err(err);
        }
        if self.sheets.is_empty() {
            return Err("workbook has no sheets".to_string());
        }
        let front = match self.front_sheet {
            Some(name) => {
                if !self.sheets.iter().any(|s| s.name.eq_ignore_ascii_case(&name)) {
                    return Err(format!("front sheet `{name}` is not a sheet in the workbook"));
                }
                name
            }
            None => self.sheets[0].name.clone(),
        };
        Ok(Workbook { sheets: self.sheets, front_sheet: front, warnings: self.warnings })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::parse_range;

    fn sample() -> Workbook {
        let mut b = WorkbookBuilder::new().sheet("Data");
        for row in 51..=66 {
            b = b.value(&format!("B{row}"), (row - 50) as f64);
        }
        b.build().unwrap()
    }

    #[test]
    fn bounded_range_is_row_major_with_blanks() {
        let wb = sample();
        let cells = wb.cells_in_range(&parse_range("B51:B66", "Data").unwrap()).unwrap();
        assert_eq!(cells.len(), 16);
        assert_eq!(cells[0].0, CellAddress::new("Data", 2, 51));
        let with_gap = wb.cells_in_range(&parse_range("A51:B52", "Data").unwrap()).unwrap();
        assert_eq!(with_gap.len(), 4);
        assert_eq!(with_gap[0].1, CellValue::Blank); // A51
        assert_eq!(with_gap[1].1, CellValue::Number(1.0)); // B51
        assert_eq!(with_gap[2].1, CellValue::Blank); // A52
    }

    #[test]
    fn single_cell_range() {
        let wb = sample();
        let cells = wb.cells_in_range(&parse_range("B51:B51", "Data").unwrap()).unwrap();
        assert_eq!(cells.len(), 1);
    }

    #[test]
    fn whole_column_clips_to_used_extent() {
        let wb = WorkbookBuilder::new()
            .sheet("Data")
            .value("B3", 1.0)
            .value("C67", 2.0)
            .build()
            .unwrap();
        let cells = wb.cells_in_range(&parse_range("B:B", "Data").unwrap()).unwrap();
        // Last used row anywhere on the sheet is 67, so B:B covers rows 1..=67.
        assert_eq!(cells.len(), 67);
        // Cross-check against direct iteration over the cell map.
        let direct: Vec<_> = wb
            .sheet("Data")
            .unwrap()
            .cells()
            .filter(|c| c.address.col == 2)
            .map(|c| c.value.clone())
            .collect();
        let non_blank: Vec<_> = cells.iter().map(|(_, v)| v.clone()).filter(|v| !v.is_blank()).collect();
        assert_eq!(direct, non_blank);
    }

    #[test]
    fn unknown_sheet_is_an_error() {
        let wb = sample();
        let err = wb.cells_in_range(&CellRange::cells("Nope", 1, 1, 1, 1)).unwrap_err();
        assert_eq!(err, RangeError::UnknownSheet("Nope".into()));
    }

    #[test]
    fn duplicate_sheet_names_rejected_case_insensitively() {
        let err = WorkbookBuilder::new().sheet("Data").sheet("DATA").build().unwrap_err();
        assert!(err.contains("duplicate sheet"));
    }

    #[test]
    fn with_value_overwrites_and_drops_formula() {
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .value("A1", 1.0)
            .formula("A2", "=A1+1")
            .build()
            .unwrap();
        let addr = CellAddress::new("S", 1, 2);
        let wb2 = wb.with_value(&addr, CellValue::Number(9.0)).unwrap();
        assert!(wb2.cell(&addr).unwrap().formula.is_none());
        assert_eq!(wb2.stored_value(&addr), CellValue::Number(9.0));
        // Original untouched.
        assert!(wb.cell(&addr).unwrap().formula.is_some());
    }
}
