//! R1 cross-foot verification and R5 front-sheet indicator propagation.

use crate::addr::{CellAddress, CellRange};
use crate::engine::ValueMap;
use crate::formula::{extract_references, FormulaNode, RefSet};
use crate::value::fmt_number;
use crate::workbook::Workbook;

use super::tables::{sum_range, TableRegion};
use super::{AuditConfig, Finding, Severity, RULE_CROSSFOOT, RULE_INDICATOR};

/// A check cell displays a message when an integrity condition fails and is
/// blank otherwise: `IF(<comparison>, "", "message")`, typically
/// `IF(ABS(x-y)<t, "", "...")`. Recognition is purely syntactic.
pub fn is_check_cell(ast: &FormulaNode) -> bool {
    let FormulaNode::Call(name, args) = ast.strip_parens() else { return false };
    if name != "IF" || args.len() != 3 {
        return false;
    }
    let condition_is_comparison =
        matches!(args[0].strip_parens(), FormulaNode::Binary(op, _, _) if op.is_comparison());
    let blank_when_ok = matches!(args[1].strip_parens(), FormulaNode::Text(s) if s.is_empty());
    let message_when_bad = matches!(args[2].strip_parens(), FormulaNode::Text(s) if !s.is_empty());
    condition_is_comparison && blank_when_ok && message_when_bad
}

/// Check cells across the workbook plus the reference sets needed by R1
/// (does any check watch this table?) and R5 (does the front sheet reference
/// each sheet's checks?).
pub struct CheckIndex {
    checks: Vec<(CellAddress, RefSet)>,
    front_refs: Vec<RefSet>,
}

impl CheckIndex {
    pub fn build(wb: &Workbook) -> Self {
        let mut checks = Vec::new();
        let mut front_refs = Vec::new();
        for sheet in wb.sheets() {
            let is_front = sheet.name().eq_ignore_ascii_case(wb.front_sheet());
            for cell in sheet.cells() {
                let Some(ast) = &cell.formula else { continue };
                let refs = extract_references(ast, sheet.name());
                if is_check_cell(ast) {
                    checks.push((cell.address.clone(), refs.clone()));
                }
                if is_front {
                    front_refs.push(refs);
                }
            }
        }
        CheckIndex { checks, front_refs }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }

    pub(crate) fn checks_on_sheet(&self, sheet: &str) -> Vec<&CellAddress> {
        self.checks
            .iter()
            .map(|(addr, _)| addr)
            .filter(|addr| addr.same_sheet(sheet))
            .collect()
    }

    /// Does any check cell reference a totals cell of this table?
    pub fn watches_table(&self, table: &TableRegion) -> bool {
        self.checks.iter().any(|(_, refs)| {
            refs.cells.iter().any(|c| table.totals_cell(c))
                || refs.ranges.iter().any(|r| range_touches_totals(r, table))
        })
    }

    fn front_references(&self, addr: &CellAddress) -> bool {
        self.front_refs.iter().any(|refs| refs.touches(addr))
    }
}

fn range_touches_totals(range: &CellRange, table: &TableRegion) -> bool {
    if !range.sheet.eq_ignore_ascii_case(&table.sheet) {
        return false;
    }
    let covers_row = |row: u32| match range.rows {
        Some((r1, r2)) => row >= r1 && row <= r2,
        None => true,
    };
    if let Some(row) = table.totals_row {
        if covers_row(row) && range.start_col <= table.bounds.right && range.end_col >= table.bounds.left {
            return true;
        }
    }
    if let Some(col) = table.totals_col {
        if col >= range.start_col && col <= range.end_col {
            let overlaps_rows = match range.rows {
                Some((r1, r2)) => r1 <= table.bounds.bottom && r2 >= table.bounds.top,
                None => true,
            };
            if overlaps_rows {
                return true;
            }
        }
    }
    false
}

/// R1: compare the two grand totals of a cross-foot table and verify the
/// divide-by-four identity over the whole block; flag tables no check cell
/// watches.
pub fn check_crossfoot(
    wb: &Workbook,
    vm: &ValueMap,
    table: &TableRegion,
    config: &AuditConfig,
    checks: &CheckIndex,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    let (Some(row_totals), Some(col_totals), Some(grand_addr)) =
        (table.row_totals_range(), table.column_totals_range(), table.grand_total.as_ref())
    else {
        return findings;
    };
    let sheet = wb.sheet(&table.sheet).expect("table sheet exists");
    let sums = (
        sum_range(sheet, vm, &col_totals),
        sum_range(sheet, vm, &row_totals),
        sum_range(sheet, vm, &table.bounds.to_range(&table.sheet)),
        vm.value(grand_addr).as_number(),
    );
    let bounds_range = table.bounds.to_range(&table.sheet).local_a1();
    match sums {
        (Some(col_sum), Some(row_sum), Some(bounds_sum), Some(grand)) => {
            let d1 = (col_sum - row_sum).abs();
            if d1 > config.tolerance_abs {
                findings.push(Finding {
                    rule: RULE_CROSSFOOT.into(),
                    severity: Severity::Error,
                    cells: vec![grand_addr.clone()],
                    message: format!(
                        "cross-foot mismatch on {}: column totals {} sum to {} but row totals {} sum to {}",
                        bounds_range,
                        col_totals.local_a1(),
                        fmt_number(col_sum),
                        row_totals.local_a1(),
                        fmt_number(row_sum),
                    ),
                    measured: Some(d1),
                    threshold: Some(config.tolerance_abs),
                    suggestion: None,
                });
            }
            let d2 = (bounds_sum / 4.0 - grand).abs();
            if d2 > config.tolerance_abs {
                findings.push(Finding {
                    rule: RULE_CROSSFOOT.into(),
                    severity: Severity::Error,
                    cells: vec![grand_addr.clone()],
                    message: format!(
                        "grand total disagrees with the table: sum of {} divided by four is {} but {} holds {}",
                        bounds_range,
                        fmt_number(bounds_sum / 4.0),
                        grand_addr.local_a1(),
                        fmt_number(grand),
                    ),
                    measured: Some(d2),
                    threshold: Some(config.tolerance_abs),
                    suggestion: None,
                });
            }
        }
        _ => {
            findings.push(Finding {
                rule: RULE_CROSSFOOT.into(),
                severity: Severity::Info,
                cells: vec![grand_addr.clone()],
                message: format!("cross-foot on {bounds_range} not verifiable: error values inside the table"),
                measured: None,
                threshold: None,
                suggestion: None,
            });
            return findings;
        }
    }

    if !checks.watches_table(table) {
        let suggestion =
            crate::checks::generate_crossfoot_check(wb, vm, table, config).ok().map(|p| p.formula);
        findings.push(Finding {
            rule: RULE_CROSSFOOT.into(),
            severity: Severity::Info,
            cells: vec![grand_addr.clone()],
            message: format!("missing check cell: no formula verifies the totals of {bounds_range}"),
            measured: None,
            threshold: None,
            suggestion,
        });
    }
    findings
}

/// R5: every sheet that carries check cells must have at least one of them
/// referenced from the front sheet, so a printout cannot hide a failed check.
pub fn check_indicator_propagation(wb: &Workbook, checks: &CheckIndex) -> Vec<Finding> {
    if checks.is_empty() {
        return vec![Finding {
            rule: RULE_INDICATOR.into(),
            severity: Severity::Info,
            cells: Vec::new(),
            message: "no self-checks found in this workbook".into(),
            measured: None,
            threshold: None,
            suggestion: None,
        }];
    }
    let mut findings = Vec::new();
    for sheet in wb.sheets() {
        if sheet.name().eq_ignore_ascii_case(wb.front_sheet()) {
            continue;
        }
        let sheet_checks = checks.checks_on_sheet(sheet.name());
        if sheet_checks.is_empty() {
            continue;
        }
        let carried = sheet_checks.iter().any(|addr| checks.front_references(addr));
        if !carried {
            findings.push(Finding {
                rule: RULE_INDICATOR.into(),
                severity: Severity::Warning,
                cells: sheet_checks.into_iter().cloned().collect(),
                message: format!(
                    "front sheet `{}` does not carry forward any error indicator from sheet `{}`",
                    wb.front_sheet(),
                    sheet.name()
                ),
                measured: None,
                threshold: None,
                suggestion: None,
            });
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    #[test]
    fn recognizes_check_cells() {
        let yes = [
            "=IF(ABS(H10-J10)<0.01,\"\",\"Totals across and down do not match\")",
            "=IF(B2=B3,\"\",\"mismatch\")",
            "=IF((SUM(B2:B4)-1)<=0.001,\"\",\"off\")",
        ];
        for text in yes {
            assert!(is_check_cell(&parse_formula(text).unwrap()), "{text}");
        }
        let no = [
            "=IF(ABS(H10-J10)<0.01,0,1)",
            "=IF(B2,\"\",\"msg\")",
            "=SUM(B2:B4)",
            "=IF(B2=B3,\"\",\"\")",
            "=IF(B2=B3,\"x\",\"msg\")",
        ];
        for text in no {
            assert!(!is_check_cell(&parse_formula(text).unwrap()), "{text}");
        }
    }
}
