//! User-declared assertions: R7 balance checks and R8 proportion bands.
//!
//! Which totals must balance, which figures carry a sign, and what ratio is
//! "normal" is domain knowledge; the workbook cannot reveal it. Assertions
//! come from the audit config and the rules only evaluate them.

use serde::{Deserialize, Serialize};

use crate::addr::parse_range;
use crate::engine::ValueMap;
use crate::value::{fmt_number, CellValue};
use crate::workbook::Workbook;

use super::{Finding, Severity, RULE_BALANCE, RULE_PROPORTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssertionKind {
    /// `|sum(lhs) - sum(rhs)| <= tolerance`
    Equality,
    /// `|sum(lhs) - constant| <= tolerance`
    SumToConstant,
    /// every number in `lhs` carries the sign of the constant `rhs`
    Sign,
    /// every number in `lhs` lies within `[lo, hi]` (rhs bounds)
    Range,
    /// `|value(lhs) - value(rhs)| <= tolerance`
    Convergence,
}

/// The right-hand side of an assertion: a constant, a `[lo, hi]` pair, or a
/// cell/range reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssertionOperand {
    Constant(f64),
    Bounds([f64; 2]),
    Reference(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssertionSpec {
    pub kind: AssertionKind,
    pub lhs: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<AssertionOperand>,
    #[serde(default)]
    pub tolerance: f64,
    pub label: String,
}

/// One configured ratio comparison: `|num/den - reference| within
/// band_fraction * |reference|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioBand {
    pub numerator: String,
    pub denominator: String,
    pub reference_ratio: f64,
    pub band_fraction: f64,
    #[serde(default)]
    pub label: String,
}

enum OperandError {
    Missing(String),
    ErrorValue(String),
}

/// Sum of the numbers a reference covers (single cells are 1x1 ranges).
fn eval_reference(wb: &Workbook, vm: &ValueMap, text: &str) -> Result<f64, OperandError> {
    let range = parse_range(text, wb.front_sheet())
        .map_err(|e| OperandError::Missing(format!("`{text}` is not a valid reference: {e}")))?;
    let cells = wb
        .cells_in_range(&range)
        .map_err(|_| OperandError::Missing(format!("`{text}` names a sheet this workbook does not have")))?;
    let mut sum = 0.0;
    for (addr, _) in &cells {
        match vm.value(addr) {
            CellValue::Number(n) => sum += n,
            CellValue::Error(e) => {
                return Err(OperandError::ErrorValue(format!("{} holds {}", addr.local_a1(), e)))
            }
            _ => {}
        }
    }
    Ok(sum)
}

fn numbers_in(wb: &Workbook, vm: &ValueMap, text: &str) -> Result<Vec<(String, f64)>, OperandError> {
    let range = parse_range(text, wb.front_sheet())
        .map_err(|e| OperandError::Missing(format!("`{text}` is not a valid reference: {e}")))?;
    let cells = wb
        .cells_in_range(&range)
        .map_err(|_| OperandError::Missing(format!("`{text}` names a sheet this workbook does not have")))?;
    let mut out = Vec::new();
    for (addr, _) in &cells {
        match vm.value(addr) {
            CellValue::Number(n) => out.push((addr.local_a1(), *n)),
            CellValue::Error(e) => {
                return Err(OperandError::ErrorValue(format!("{} holds {}", addr.local_a1(), e)))
            }
            _ => {}
        }
    }
    Ok(out)
}

fn config_error(rule: &str, label: &str, detail: String) -> Finding {
    Finding {
        rule: rule.into(),
        severity: Severity::Error,
        cells: Vec::new(),
        message: format!("assertion `{label}` cannot be evaluated: {detail}"),
        measured: None,
        threshold: None,
        suggestion: None,
    }
}

/// Run every configured assertion (R7) and ratio band (R8).
pub fn check_assertions(
    wb: &Workbook,
    vm: &ValueMap,
    assertions: &[AssertionSpec],
    bands: &[RatioBand],
) -> Vec<Finding> {
    let mut findings = Vec::new();
    for spec in assertions {
        match run_assertion(wb, vm, spec) {
            Ok(Some(finding)) => findings.push(finding),
            Ok(None) => {}
            Err(OperandError::Missing(d)) | Err(OperandError::ErrorValue(d)) => {
                findings.push(config_error(RULE_BALANCE, &spec.label, d))
            }
        }
    }
    for band in bands {
        match run_band(wb, vm, band) {
            Ok(Some(finding)) => findings.push(finding),
            Ok(None) => {}
            Err(OperandError::Missing(d)) | Err(OperandError::ErrorValue(d)) => {
                findings.push(config_error(RULE_PROPORTION, &band.label, d))
            }
        }
    }
    findings
}

fn fail(spec: &AssertionSpec, message: String, measured: f64, threshold: f64) -> Finding {
    Finding {
        rule: RULE_BALANCE.into(),
        severity: Severity::Error,
        cells: Vec::new(),
        message: format!("assertion `{}` failed: {}", spec.label, message),
        measured: Some(measured),
        threshold: Some(threshold),
        suggestion: None,
    }
}

fn run_assertion(
    wb: &Workbook,
    vm: &ValueMap,
    spec: &AssertionSpec,
) -> Result<Option<Finding>, OperandError> {
    let rhs_sum = |rhs: &Option<AssertionOperand>| -> Result<f64, OperandError> {
        match rhs {
            Some(AssertionOperand::Constant(c)) => Ok(*c),
            Some(AssertionOperand::Reference(r)) => eval_reference(wb, vm, r),
            Some(AssertionOperand::Bounds(_)) => {
                Err(OperandError::Missing("bounds are only valid for `range` assertions".into()))
            }
            None => Err(OperandError::Missing("missing `rhs`".into())),
        }
    };
    match spec.kind {
        AssertionKind::Equality | AssertionKind::Convergence => {
            let lhs = eval_reference(wb, vm, &spec.lhs)?;
            let rhs = rhs_sum(&spec.rhs)?;
            if (lhs - rhs).abs() > spec.tolerance {
                return Ok(Some(fail(
                    spec,
                    format!("{} differs from {} by {}", fmt_number(lhs), fmt_number(rhs), fmt_number((lhs - rhs).abs())),
                    lhs,
                    rhs,
                )));
            }
            Ok(None)
        }
        AssertionKind::SumToConstant => {
            let lhs = eval_reference(wb, vm, &spec.lhs)?;
            let Some(AssertionOperand::Constant(c)) = spec.rhs else {
                return Err(OperandError::Missing("sum_to_constant needs a constant `rhs`".into()));
            };
            if (lhs - c).abs() > spec.tolerance {
                return Ok(Some(fail(
                    spec,
                    format!("sum is {} instead of {}", fmt_number(lhs), fmt_number(c)),
                    lhs,
                    c,
                )));
            }
            Ok(None)
        }
        AssertionKind::Sign => {
            let Some(AssertionOperand::Constant(sign)) = spec.rhs else {
                return Err(OperandError::Missing("sign needs a constant `rhs` (+1 or -1)".into()));
            };
            let values = numbers_in(wb, vm, &spec.lhs)?;
            let offender = values.iter().find(|(_, v)| if sign >= 0.0 { *v < 0.0 } else { *v > 0.0 });
            match offender {
                Some((addr, v)) => Ok(Some(fail(
                    spec,
                    format!("{addr} holds {} which has the wrong sign", fmt_number(*v)),
                    *v,
                    0.0,
                ))),
                None => Ok(None),
            }
        }
        AssertionKind::Range => {
            let Some(AssertionOperand::Bounds([lo, hi])) = spec.rhs else {
                return Err(OperandError::Missing("range needs `rhs` bounds [lo, hi]".into()));
            };
            let values = numbers_in(wb, vm, &spec.lhs)?;
            let offender = values
                .iter()
                .find(|(_, v)| *v < lo - spec.tolerance || *v > hi + spec.tolerance);
            match offender {
                Some((addr, v)) => {
                    let bound = if *v < lo { lo } else { hi };
                    Ok(Some(fail(
                        spec,
                        format!("{addr} holds {} outside [{}, {}]", fmt_number(*v), fmt_number(lo), fmt_number(hi)),
                        *v,
                        bound,
                    )))
                }
                None => Ok(None),
            }
        }
    }
}

fn run_band(wb: &Workbook, vm: &ValueMap, band: &RatioBand) -> Result<Option<Finding>, OperandError> {
    let num = eval_reference(wb, vm, &band.numerator)?;
    let den = eval_reference(wb, vm, &band.denominator)?;
    if den == 0.0 {
        return Err(OperandError::Missing(format!("denominator `{}` sums to zero", band.denominator)));
    }
    let ratio = num / den;
    let allowed = band.band_fraction * band.reference_ratio.abs();
    if (ratio - band.reference_ratio).abs() > allowed {
        return Ok(Some(Finding {
            rule: RULE_PROPORTION.into(),
            severity: Severity::Error,
            cells: Vec::new(),
            message: format!(
                "ratio `{}` is {} but the reference is {} (band {}%)",
                band.label,
                fmt_number(ratio),
                fmt_number(band.reference_ratio),
                fmt_number(band.band_fraction * 100.0),
            ),
            measured: Some(ratio),
            threshold: Some(band.reference_ratio),
            suggestion: None,
        }));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::recalculate;
    use crate::workbook::WorkbookBuilder;

    fn assertion(kind: AssertionKind, lhs: &str, rhs: Option<AssertionOperand>, tol: f64) -> AssertionSpec {
        AssertionSpec { kind, lhs: lhs.into(), rhs, tolerance: tol, label: "t".into() }
    }

    #[test]
    fn percentages_summing_to_one_pass() {
        let wb = WorkbookBuilder::new()
            .sheet("Data")
            .value("B2", 0.4)
            .value("B3", 0.35)
            .value("B4", 0.25)
            .build()
            .unwrap();
        let vm = recalculate(&wb);
        let spec = assertion(
            AssertionKind::SumToConstant,
            "Data!B2:B4",
            Some(AssertionOperand::Constant(1.0)),
            1e-9,
        );
        assert!(check_assertions(&wb, &vm, &[spec], &[]).is_empty());
    }

    #[test]
    fn allocation_mismatch_reports_measured_sum() {
        let wb = WorkbookBuilder::new()
            .sheet("Data")
            .value("B2", 10.0)
            .value("B3", 20.0)
            .value("B4", 30.0)
            .value("D2", 70.0)
            .build()
            .unwrap();
        let vm = recalculate(&wb);
        let spec = assertion(
            AssertionKind::Equality,
            "Data!B2:B4",
            Some(AssertionOperand::Reference("Data!D2".into())),
            1e-9,
        );
        let findings = check_assertions(&wb, &vm, &[spec], &[]);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].measured, Some(60.0));
        assert_eq!(findings[0].threshold, Some(70.0));
        assert_eq!(findings[0].severity, Severity::Error);
    }

    #[test]
    fn ratio_band_pass_and_fail() {
        // 105/100 vs reference 1.0: within a 10% band, outside a 2% band.
        let wb = WorkbookBuilder::new().sheet("Data").value("B2", 105.0).value("C2", 100.0).build().unwrap();
        let vm = recalculate(&wb);
        let mut band = RatioBand {
            numerator: "Data!B2".into(),
            denominator: "Data!C2".into(),
            reference_ratio: 1.0,
            band_fraction: 0.10,
            label: "yoy".into(),
        };
        assert!((105.0 / 100.0f64 - 1.0).abs() <= 0.10);
        assert!(check_assertions(&wb, &vm, &[], &[band.clone()]).is_empty());
        band.band_fraction = 0.02;
        assert!((105.0 / 100.0f64 - 1.0).abs() > 0.02);
        let findings = check_assertions(&wb, &vm, &[], &[band]);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].measured, Some(1.05));
    }

    #[test]
    fn missing_reference_is_a_config_error() {
        let wb = WorkbookBuilder::new().sheet("Data").value("B2", 1.0).build().unwrap();
        let vm = recalculate(&wb);
        let spec = assertion(
            AssertionKind::Equality,
            "Nope!B2",
            Some(AssertionOperand::Constant(1.0)),
            0.0,
        );
        let findings = check_assertions(&wb, &vm, &[spec], &[]);
        assert_eq!(findings.len(), 1);
        assert!(findings[0].message.contains("cannot be evaluated"));
    }

    #[test]
    fn sign_and_range_assertions() {
        let wb = WorkbookBuilder::new()
            .sheet("Data")
            .value("B2", 5.0)
            .value("B3", -1.0)
            .build()
            .unwrap();
        let vm = recalculate(&wb);
        let sign = assertion(AssertionKind::Sign, "Data!B2:B3", Some(AssertionOperand::Constant(1.0)), 0.0);
        let findings = check_assertions(&wb, &vm, &[sign], &[]);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].measured, Some(-1.0));

        let range = assertion(
            AssertionKind::Range,
            "Data!B2:B3",
            Some(AssertionOperand::Bounds([-2.0, 4.0])),
            0.0,
        );
        let findings = check_assertions(&wb, &vm, &[range], &[]);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].measured, Some(5.0));
    }
}
