//! Recalculation: deterministic, demand-driven evaluation of formula cells.
//!
//! Cells are evaluated in address order with memoization, so every precedent
//! is computed before its dependents (an implicit topological order) and two
//! runs over the same workbook produce bit-identical results. True static
//! cycles are classified up front and forced to `#CIRC!`; re-entry during
//! dynamic range resolution is caught at evaluation time as a backstop.

mod functions;
mod graph;

pub use functions::{apply_function, Operand};
pub use graph::{build_graph, DepGraph};

use std::collections::{BTreeMap, BTreeSet};

use crate::addr::CellAddress;
use crate::formula::{FormulaNode, RangeEndpoint, RangeNode};
use crate::value::{CellValue, ErrorCode};
use crate::workbook::Workbook;

use functions::{binary_op, deref_operand, resolve_ref_call, unary_op};

/// Mismatch threshold for [`recalc_diff`].
pub const DIFF_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Value passed through from the file (no formula).
    Stored,
    /// Value produced by evaluating the cell's formula.
    Computed,
}

/// Every cell's value after recalculation. Formula cells carry computed
/// values; plain cells pass their stored values through.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueMap {
    values: BTreeMap<CellAddress, (CellValue, Provenance)>,
}

impl ValueMap {
    const BLANK: CellValue = CellValue::Blank;

    pub fn value(&self, addr: &CellAddress) -> &CellValue {
        self.values.get(addr).map(|(v, _)| v).unwrap_or(&Self::BLANK)
    }

    pub fn provenance(&self, addr: &CellAddress) -> Option<Provenance> {
        self.values.get(addr).map(|(_, p)| *p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellAddress, &CellValue, Provenance)> {
        self.values.iter().map(|(a, (v, p))| (a, v, *p))
    }
}

/// Recalculate every formula cell of the workbook.
pub fn recalculate(wb: &Workbook) -> ValueMap {
    let mut ev = Evaluator::new(wb);
    for sheet in wb.sheets() {
        for cell in sheet.cells() {
            if cell.formula.is_some() {
                ev.cell_value(&cell.address);
            }
        }
    }
    let mut values = BTreeMap::new();
    for sheet in wb.sheets() {
        for cell in sheet.cells() {
            let entry = if cell.formula.is_some() {
                (ev.cell_value(&cell.address), Provenance::Computed)
            } else {
                (cell.value.clone(), Provenance::Stored)
            };
            values.insert(cell.address.clone(), entry);
        }
    }
    ValueMap { values }
}

/// Demand-driven evaluator over one workbook.
pub struct Evaluator<'wb> {
    wb: &'wb Workbook,
    graph: DepGraph,
    memo: BTreeMap<CellAddress, CellValue>,
    in_progress: BTreeSet<CellAddress>,
}

impl<'wb> Evaluator<'wb> {
    pub fn new(wb: &'wb Workbook) -> Self {
        Evaluator { wb, graph: build_graph(wb), memo: BTreeMap::new(), in_progress: BTreeSet::new() }
    }

    pub fn workbook(&self) -> &'wb Workbook {
        self.wb
    }

    pub fn graph(&self) -> &DepGraph {
        &self.graph
    }

    /// The value of a cell, evaluating its formula on demand.
    pub fn cell_value(&mut self, addr: &CellAddress) -> CellValue {
        if let Some(v) = self.memo.get(addr) {
            return v.clone();
        }
        let Some(cell) = self.wb.cell(addr) else {
            return CellValue::Blank;
        };
        let Some(ast) = cell.formula.clone() else {
            return cell.value.clone();
        };
        let canonical = cell.address.clone();
        if self.graph.in_cycle(&canonical) {
            let v = CellValue::Error(ErrorCode::Circ);
            self.memo.insert(canonical, v.clone());
            return v;
        }
        if !self.in_progress.insert(canonical.clone()) {
            // Re-entered through a dynamically resolved range.
            return CellValue::Error(ErrorCode::Circ);
        }
        let operand = self.eval_expr(&ast, &canonical);
        let value = deref_operand(&operand, self);
        self.in_progress.remove(&canonical);
        self.memo.insert(canonical, value.clone());
        value
    }

    fn eval_expr(&mut self, node: &FormulaNode, current: &CellAddress) -> Operand {
        match node {
            FormulaNode::Number(n) => Operand::Value(CellValue::Number(*n)),
            FormulaNode::Text(s) => Operand::Value(CellValue::Text(s.clone())),
            FormulaNode::Bool(b) => Operand::Value(CellValue::Boolean(*b)),
            FormulaNode::Ref(r) => {
                let addr = r.address(&current.sheet);
                if self.wb.sheet(&addr.sheet).is_none() {
                    Operand::error(ErrorCode::Ref)
                } else {
                    Operand::Reference(addr)
                }
            }
            FormulaNode::Range(range) => match self.resolve_range(range, current) {
                Ok(r) => Operand::Range(r),
                Err(e) => Operand::error(e),
            },
            FormulaNode::Paren(inner) => self.eval_expr(inner, current),
            FormulaNode::Unary(op, operand) => {
                let v = {
                    let o = self.eval_expr(operand, current);
                    deref_operand(&o, self)
                };
                Operand::Value(unary_op(*op, v))
            }
            FormulaNode::Binary(op, left, right) => {
                let l = {
                    let o = self.eval_expr(left, current);
                    deref_operand(&o, self)
                };
                let r = {
                    let o = self.eval_expr(right, current);
                    deref_operand(&o, self)
                };
                Operand::Value(binary_op(*op, l, r))
            }
            FormulaNode::Call(name, args) => {
                let operands: Vec<Operand> =
                    args.iter().map(|arg| self.eval_expr(arg, current)).collect();
                match name.as_str() {
                    "OFFSET" | "INDEX" => match resolve_ref_call(name, &operands, self, current) {
                        Ok(op) => op,
                        Err(e) => Operand::error(e),
                    },
                    _ => Operand::Value(apply_function(name, &operands, self, current)),
                }
            }
        }
    }

    /// Resolve a range node, evaluating dynamic endpoints as references.
    fn resolve_range(
        &mut self,
        range: &RangeNode,
        current: &CellAddress,
    ) -> Result<crate::addr::CellRange, ErrorCode> {
        let sheet = range.sheet.clone().unwrap_or_else(|| current.sheet.clone());
        if self.wb.sheet(&sheet).is_none() {
            return Err(ErrorCode::Ref);
        }
        enum Endpoint {
            Cell(u32, u32),
            Col(u32),
        }
        let mut resolve = |ep: &RangeEndpoint| -> Result<Endpoint, ErrorCode> {
            match ep {
                RangeEndpoint::Cell { col, row, .. } => Ok(Endpoint::Cell(*col, *row)),
                RangeEndpoint::Column { col, .. } => Ok(Endpoint::Col(*col)),
                RangeEndpoint::Dynamic(expr) => match self.eval_expr(expr, current) {
                    Operand::Reference(addr) => {
                        if addr.same_sheet(&sheet) {
                            Ok(Endpoint::Cell(addr.col, addr.row))
                        } else {
                            Err(ErrorCode::Value)
                        }
                    }
                    Operand::Range(r) => match r.single_cell() {
                        Some(addr) if addr.same_sheet(&sheet) => Ok(Endpoint::Cell(addr.col, addr.row)),
                        _ => Err(ErrorCode::Value),
                    },
                    Operand::Value(CellValue::Error(e)) => Err(e),
                    Operand::Value(_) => Err(ErrorCode::Value),
                },
            }
        };
        match (resolve(&range.start)?, resolve(&range.end)?) {
            (Endpoint::Cell(c1, r1), Endpoint::Cell(c2, r2)) => {
                Ok(crate::addr::CellRange::cells(sheet, c1, r1, c2, r2))
            }
            (Endpoint::Col(c1), Endpoint::Col(c2)) => {
                Ok(crate::addr::CellRange::whole_columns(sheet, c1, c2))
            }
            _ => Err(ErrorCode::Value),
        }
    }
}

/// One stored-vs-computed divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffEntry {
    pub address: CellAddress,
    pub stored: CellValue,
    pub computed: CellValue,
    /// Absolute difference when both sides are numbers.
    pub delta: Option<f64>,
}

/// Result of comparing cached stored values against a fresh recalculation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecalcDiff {
    pub mismatches: Vec<DiffEntry>,
    /// Formula cells the engine cannot verify: unsupported functions
    /// (`#NAME?`) or formulas that did not parse.
    pub unverifiable: Vec<CellAddress>,
}

impl RecalcDiff {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty() && self.unverifiable.is_empty()
    }
}

/// Compare every formula cell's cached stored value against recalculation.
/// Entries appear only where the difference exceeds [`DIFF_TOLERANCE`] or the
/// type changed; cells without a cached value are skipped.
pub fn recalc_diff(wb: &Workbook) -> RecalcDiff {
    let vm = recalculate(wb);
    let mut out = RecalcDiff::default();
    for sheet in wb.sheets() {
        for cell in sheet.cells() {
            if cell.formula_text.is_none() {
                continue;
            }
            if cell.formula.is_none() {
                out.unverifiable.push(cell.address.clone());
                continue;
            }
            let computed = vm.value(&cell.address).clone();
            if computed == CellValue::Error(ErrorCode::Name) {
                out.unverifiable.push(cell.address.clone());
                continue;
            }
            let stored = &cell.value;
            if stored.is_blank() {
                continue;
            }
            match (stored, &computed) {
                (CellValue::Number(s), CellValue::Number(c)) => {
                    let delta = (s - c).abs();
                    if delta > DIFF_TOLERANCE {
                        out.mismatches.push(DiffEntry {
                            address: cell.address.clone(),
                            stored: stored.clone(),
                            computed,
                            delta: Some(delta),
                        });
                    }
                }
                (s, c) if s == c => {}
                _ => out.mismatches.push(DiffEntry {
                    address: cell.address.clone(),
                    stored: stored.clone(),
                    computed,
                    delta: None,
                }),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::addr::parse_address;
    use crate::workbook::WorkbookBuilder;

    fn value_at(wb: &Workbook, reference: &str) -> CellValue {
        let sheet = wb.sheets()[0].name().to_string();
        let vm = recalculate(wb);
        vm.value(&parse_address(reference, &sheet).unwrap()).clone()
    }

    #[test]
    fn sum_matches_brute_force() {
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .value("B2", 1.0)
            .value("B3", 2.0)
            .value("B4", 3.0)
            .value("B5", 4.0)
            .formula("B6", "=SUM(B2:B5)")
            .build()
            .unwrap();
        // Brute-force oracle: direct iteration over the inputs.
        let oracle: f64 = [1.0, 2.0, 3.0, 4.0].iter().sum();
        assert_eq!(value_at(&wb, "B6"), CellValue::Number(oracle));
    }

    #[test]
    fn self_reference_is_circular() {
        let wb = WorkbookBuilder::new().sheet("S").formula("A1", "=A1").build().unwrap();
        assert_eq!(value_at(&wb, "A1"), CellValue::Error(ErrorCode::Circ));
    }

    #[test]
    fn mutual_cycle_marks_every_member_and_propagates() {
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .formula("A1", "=B1+1")
            .formula("B1", "=A1+1")
            .formula("C1", "=SUM(A1:B1)")
            .build()
            .unwrap();
        let vm = recalculate(&wb);
        for reference in ["A1", "B1", "C1"] {
            assert_eq!(
                vm.value(&parse_address(reference, "S").unwrap()),
                &CellValue::Error(ErrorCode::Circ),
                "{reference}"
            );
        }
    }

    #[test]
    fn check_formula_blank_within_tolerance() {
        let check = "=IF(ABS(H10-J10)<0.01,\"\",\"Totals across and down do not match\")";
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .value("H10", 100.0)
            .value("J10", 100.005)
            .formula("K10", check)
            .build()
            .unwrap();
        assert_eq!(value_at(&wb, "K10"), CellValue::Text(String::new()));
        let wb2 = WorkbookBuilder::new()
            .sheet("S")
            .value("H10", 100.0)
            .value("J10", 101.0)
            .formula("K10", check)
            .build()
            .unwrap();
        assert_eq!(
            value_at(&wb2, "K10"),
            CellValue::Text("Totals across and down do not match".into())
        );
    }

    #[test]
    fn tiny_float_residue_stays_blank() {
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .formula("H10", "=0.1+0.2")
            .formula("J10", "=0.3")
            .formula("K10", "=ABS(H10-J10)")
            .formula("L10", "=IF(ABS(H10-J10)<0.01,\"\",\"Totals across and down do not match\")")
            .build()
            .unwrap();
        let residue = value_at(&wb, "K10").as_number().unwrap();
        assert!(residue > 0.0 && residue < 1e-12, "residue {residue}");
        assert_eq!(value_at(&wb, "L10"), CellValue::Text(String::new()));
    }

    #[test]
    fn subtotal_skips_nested_subtotals() {
        // Oracle: direct sum excluding SUBTOTAL cells = 1 + 2 + 4 + 5 = 12.
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .value("B2", 1.0)
            .value("B3", 2.0)
            .formula("B4", "=SUBTOTAL(9,B2:B3)")
            .value("B5", 4.0)
            .value("B6", 5.0)
            .formula("B8", "=SUBTOTAL(9,B2:B7)")
            .build()
            .unwrap();
        assert_eq!(value_at(&wb, "B4"), CellValue::Number(3.0));
        assert_eq!(value_at(&wb, "B8"), CellValue::Number(12.0));
    }

    #[test]
    fn subtotal_codes_other_than_nine_error() {
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .value("B2", 1.0)
            .formula("B3", "=SUBTOTAL(5,B2:B2)")
            .build()
            .unwrap();
        assert_eq!(value_at(&wb, "B3"), CellValue::Error(ErrorCode::Value));
    }

    #[test]
    fn abs_of_negative_zero() {
        let wb = WorkbookBuilder::new().sheet("S").formula("A1", "=ABS(-0)").build().unwrap();
        assert_eq!(value_at(&wb, "A1"), CellValue::Number(0.0));
    }

    #[test]
    fn fixed_text_excluded_from_sum_but_coerced_individually() {
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .formula("C1", "=FIXED(1234.5,1)")
            .formula("D1", "=SUM(C1:C1)")
            .formula("E1", "=C1*2")
            .build()
            .unwrap();
        assert_eq!(value_at(&wb, "C1"), CellValue::Text("1,234.5".into()));
        assert_eq!(value_at(&wb, "D1"), CellValue::Number(0.0));
        assert_eq!(value_at(&wb, "E1"), CellValue::Number(2469.0));
    }

    #[test]
    fn precedence_example() {
        let wb = WorkbookBuilder::new().sheet("S").formula("A1", "=2+3*4^2").build().unwrap();
        assert_eq!(value_at(&wb, "A1"), CellValue::Number(50.0));
    }

    #[test]
    fn percent_and_concat() {
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .formula("A1", "=50%")
            .formula("A2", "=\"a\"&1&TRUE")
            .build()
            .unwrap();
        assert_eq!(value_at(&wb, "A1"), CellValue::Number(0.5));
        assert_eq!(value_at(&wb, "A2"), CellValue::Text("a1TRUE".into()));
    }

    #[test]
    fn unknown_function_is_name_error() {
        let wb = WorkbookBuilder::new().sheet("S").formula("A1", "=NPV(0.1,1,2)").build().unwrap();
        assert_eq!(value_at(&wb, "A1"), CellValue::Error(ErrorCode::Name));
    }

    #[test]
    fn anchored_variants_match_static_subtotal() {
        let mut values = Vec::new();
        for formula in [
            "=SUBTOTAL(9,B51:B66)",
            "=SUBTOTAL(9,B51:OFFSET(B67,-1,0))",
            "=SUBTOTAL(9,B51:INDEX(B:B,ROW()-1))",
        ] {
            let mut b = WorkbookBuilder::new().sheet("Data");
            for row in 51..=66 {
                b = b.value(&format!("B{row}"), 0.1 * row as f64);
            }
            let wb = b.formula("B67", formula).build().unwrap();
            values.push(value_at(&wb, "B67").as_number().unwrap());
        }
        let oracle: f64 = (51..=66).map(|r| 0.1 * r as f64).sum();
        assert!(values.iter().all(|v| v.to_bits() == oracle.to_bits()), "{values:?} vs {oracle}");
    }

    #[test]
    fn offset_out_of_grid_errors() {
        let wb = WorkbookBuilder::new().sheet("S").formula("A1", "=OFFSET(B2,-5,0)").build().unwrap();
        assert_eq!(value_at(&wb, "A1"), CellValue::Error(ErrorCode::Ref));
    }

    #[test]
    fn index_out_of_extent_errors() {
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .value("B1", 5.0)
            .formula("A1", "=INDEX(B1:B3,4)")
            .formula("A2", "=INDEX(B1:B3,0)")
            .formula("A3", "=INDEX(B1:B3,1)")
            .build()
            .unwrap();
        assert_eq!(value_at(&wb, "A1"), CellValue::Error(ErrorCode::Ref));
        assert_eq!(value_at(&wb, "A2"), CellValue::Error(ErrorCode::Ref));
        assert_eq!(value_at(&wb, "A3"), CellValue::Number(5.0));
    }

    #[test]
    fn recalculation_is_deterministic() {
        let mut b = WorkbookBuilder::new().sheet("S");
        for row in 1..=20 {
            b = b.value(&format!("A{row}"), row as f64 * 0.017);
        }
        let wb = b
            .formula("B1", "=SUM(A1:A20)")
            .formula("B2", "=B1*3.14159/7")
            .formula("B3", "=FIXED(B2,3)")
            .build()
            .unwrap();
        let vm1 = recalculate(&wb);
        let vm2 = recalculate(&wb);
        for ((a1, v1, _), (a2, v2, _)) in vm1.iter().zip(vm2.iter()) {
            assert_eq!(a1, a2);
            match (v1, v2) {
                (CellValue::Number(x), CellValue::Number(y)) => assert_eq!(x.to_bits(), y.to_bits()),
                (x, y) => assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn recalc_diff_flags_divergence_and_unverifiable() {
        let clean = WorkbookBuilder::new()
            .sheet("S")
            .value("B2", 4.0)
            .formula_with_value("B3", "=B2+6", 10.0)
            .build()
            .unwrap();
        assert!(recalc_diff(&clean).is_clean());

        let stale = WorkbookBuilder::new()
            .sheet("S")
            .value("B2", 4.0)
            .formula_with_value("B3", "=B2+6", 11.0)
            .build()
            .unwrap();
        let diff = recalc_diff(&stale);
        assert_eq!(diff.mismatches.len(), 1);
        assert_eq!(diff.mismatches[0].delta, Some(1.0));

        let unsupported = WorkbookBuilder::new()
            .sheet("S")
            .formula_with_value("B1", "=NPV(0.1,1)", 0.9)
            .build()
            .unwrap();
        let diff = recalc_diff(&unsupported);
        assert!(diff.mismatches.is_empty());
        assert_eq!(diff.unverifiable.len(), 1);
    }

    #[test]
    fn value_map_provenance() {
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .value("A1", 1.0)
            .formula("A2", "=A1")
            .build()
            .unwrap();
        let vm = recalculate(&wb);
        assert_eq!(vm.provenance(&parse_address("A1", "S").unwrap()), Some(Provenance::Stored));
        assert_eq!(vm.provenance(&parse_address("A2", "S").unwrap()), Some(Provenance::Computed));
    }
}
