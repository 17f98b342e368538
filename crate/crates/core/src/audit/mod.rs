//! The audit rule catalog and report assembly.
//!
//! Rules:
//! - R1 cross-foot: totals lines of a table must agree with each other and
//!   with the divide-by-four identity, and a check cell should watch them.
//! - R2 chained plus: long `+`-chains of individual references.
//! - R3 insertion risk: summed ranges not bounded by blank cells.
//! - R4 double count: `SUM` over a range containing its own subtotals.
//! - R5 indicator propagation: the front sheet carries every sheet's checks.
//! - R6 text-number hazard: arithmetic directly on FIXED/DOLLAR text.
//! - R7 balance assertions and R8 proportion bands from the config.

mod assertions;
mod crossfoot;
mod structure;
pub mod tables;

pub use assertions::{check_assertions, AssertionKind, AssertionOperand, AssertionSpec, RatioBand};
pub use crossfoot::{check_crossfoot, check_indicator_propagation, is_check_cell};
pub use structure::{
    detect_chained_plus, detect_double_count, detect_insertion_risk, detect_text_number_hazard,
};
pub use tables::{detect_all_tables, detect_tables, Rect, TableRegion};

/// Helpers shared with the check generator.
pub(crate) mod structure_helpers {
    pub(crate) use super::structure::{aggregate_range_of, chain_refs, inner_aggregates};
}

pub use crossfoot::CheckIndex;

use std::collections::{BTreeMap, BTreeSet};

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::addr::CellAddress;
use crate::engine::recalculate;
use crate::value::fmt_number;
use crate::workbook::Workbook;

pub const RULE_CROSSFOOT: &str = "R1";
pub const RULE_CHAIN: &str = "R2";
pub const RULE_INSERTION: &str = "R3";
pub const RULE_DOUBLE_COUNT: &str = "R4";
pub const RULE_INDICATOR: &str = "R5";
pub const RULE_TEXT_NUMBER: &str = "R6";
pub const RULE_BALANCE: &str = "R7";
pub const RULE_PROPORTION: &str = "R8";

pub const ALL_RULES: [&str; 8] = [
    RULE_CROSSFOOT,
    RULE_CHAIN,
    RULE_INSERTION,
    RULE_DOUBLE_COUNT,
    RULE_INDICATOR,
    RULE_TEXT_NUMBER,
    RULE_BALANCE,
    RULE_PROPORTION,
];

/// Default message shown by generated check formulas.
pub const DEFAULT_CHECK_MESSAGE: &str = "Totals across and down do not match";

/// Fixed footer for every report: confirming an expectation is not the same
/// as confirming correctness.
pub const REPORT_CAVEAT: &str = "Caveat: a passing check only means this test raised no questions; \
beware getting the answer you expect instead of the correct answer.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        }
    }
}

/// One audit observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub rule: String,
    pub severity: Severity,
    pub cells: Vec<CellAddress>,
    pub message: String,
    pub measured: Option<f64>,
    pub threshold: Option<f64>,
    pub suggestion: Option<String>,
}

impl Finding {
    pub fn sheet(&self) -> &str {
        self.cells.first().map(|c| c.sheet.as_str()).unwrap_or("")
    }

    fn sort_key(&self) -> (String, u32, u32, String) {
        let (row, col) = self.cells.first().map(|c| (c.row, c.col)).unwrap_or((0, 0));
        (self.sheet().to_ascii_lowercase(), row, col, self.rule.clone())
    }
}

impl Serialize for Finding {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut len = 5;
        if self.measured.is_some() {
            len += 1;
        }
        if self.threshold.is_some() {
            len += 1;
        }
        if self.suggestion.is_some() {
            len += 1;
        }
        let mut s = serializer.serialize_struct("Finding", len)?;
        s.serialize_field("rule", &self.rule)?;
        s.serialize_field("severity", &self.severity)?;
        s.serialize_field("sheet", self.sheet())?;
        let cells: Vec<String> = self.cells.iter().map(|c| c.local_a1()).collect();
        s.serialize_field("cells", &cells)?;
        s.serialize_field("message", &self.message)?;
        if let Some(m) = self.measured {
            s.serialize_field("measured", &m)?;
        }
        if let Some(t) = self.threshold {
            s.serialize_field("threshold", &t)?;
        }
        if let Some(sug) = &self.suggestion {
            s.serialize_field("suggestion", sug)?;
        }
        s.end()
    }
}

fn default_tolerance() -> f64 {
    0.01
}
fn default_chain_min() -> usize {
    4
}
fn default_totals_fraction() -> f64 {
    0.8
}
fn default_value_band() -> f64 {
    0.05
}
fn default_rules() -> BTreeSet<String> {
    ALL_RULES.iter().map(|r| r.to_string()).collect()
}
fn default_check_message() -> String {
    DEFAULT_CHECK_MESSAGE.to_string()
}

/// Audit configuration; every rule threshold lives here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    /// Absolute difference treated as significant (pick a number that suits
    /// the scale of the workbook).
    pub tolerance_abs: f64,
    /// Minimum distinct references before a +/- chain is flagged.
    pub chain_plus_min: usize,
    /// Fraction of a bounding line's formulas that must aggregate the body
    /// before the line classifies as totals.
    pub totals_formula_fraction: f64,
    /// Relative band for accepting a pasted-values totals line.
    pub totals_value_band: f64,
    pub assertions: Vec<AssertionSpec>,
    pub ratio_bands: Vec<RatioBand>,
    pub enabled_rules: BTreeSet<String>,
    pub severity_overrides: BTreeMap<String, Severity>,
    /// Message placed in generated check formulas.
    pub check_message: String,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            tolerance_abs: default_tolerance(),
            chain_plus_min: default_chain_min(),
            totals_formula_fraction: default_totals_fraction(),
            totals_value_band: default_value_band(),
            assertions: Vec::new(),
            ratio_bands: Vec::new(),
            enabled_rules: default_rules(),
            severity_overrides: BTreeMap::new(),
            check_message: default_check_message(),
        }
    }
}

impl AuditConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ConfigError> {
        let config: AuditConfig = serde_json::from_slice(bytes)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.tolerance_abs.is_finite() || self.tolerance_abs < 0.0 {
            return Err(ConfigError::Invalid("tolerance_abs must be a finite non-negative number".into()));
        }
        for spec in &self.assertions {
            if !spec.tolerance.is_finite() || spec.tolerance < 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "assertion `{}`: tolerance must be finite and non-negative",
                    spec.label
                )));
            }
        }
        for band in &self.ratio_bands {
            if !(band.band_fraction > 0.0 && band.band_fraction <= 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "ratio band `{}`: band_fraction must be in (0, 1]",
                    band.label
                )));
            }
        }
        for rule in self.enabled_rules.iter().chain(self.severity_overrides.keys()) {
            if !ALL_RULES.contains(&rule.as_str()) {
                return Err(ConfigError::Invalid(format!("unknown rule id `{rule}`")));
            }
        }
        Ok(())
    }

    pub fn rule_enabled(&self, rule: &str) -> bool {
        self.enabled_rules.contains(rule)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("malformed config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub error: usize,
    pub warning: usize,
    pub info: usize,
}

/// The full audit result for one workbook.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub tool: String,
    pub version: String,
    pub config: AuditConfig,
    pub findings: Vec<Finding>,
    pub counts: Counts,
    pub footer: String,
}

impl AuditReport {
    /// Findings at or above a severity.
    pub fn count_at_or_above(&self, severity: Severity) -> usize {
        self.findings.iter().filter(|f| f.severity >= severity).count()
    }

    /// Deterministic pretty JSON (no timestamps, stable ordering).
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        out.push('\n');
        out
    }

    /// Human-readable rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.tool, self.version));
        if self.findings.is_empty() {
            out.push_str("no findings\n");
        } else {
            for f in &self.findings {
                let place = if f.cells.is_empty() {
                    "-".to_string()
                } else {
                    let cells: Vec<String> = f.cells.iter().map(|c| c.local_a1()).collect();
                    format!("{}!{}", f.sheet(), cells.join(","))
                };
                out.push_str(&format!("{:7} {:3} {}: {}\n", f.severity.as_str(), f.rule, place, f.message));
                if let (Some(m), Some(t)) = (f.measured, f.threshold) {
                    out.push_str(&format!("        measured {} vs threshold {}\n", fmt_number(m), fmt_number(t)));
                }
                if let Some(s) = &f.suggestion {
                    out.push_str(&format!("        suggestion: {s}\n"));
                }
            }
        }
        out.push_str(&format!(
            "counts: {} error(s), {} warning(s), {} info\n{}\n",
            self.counts.error, self.counts.warning, self.counts.info, self.footer
        ));
        out
    }
}

/// Evaluate the workbook and run every enabled rule in id order. Findings are
/// sorted by (sheet, row, col, rule); the report embeds the tool version and
/// the config so runs can be reproduced.
pub fn run_audit(wb: &Workbook, config: &AuditConfig) -> AuditReport {
    let vm = recalculate(wb);
    let tables = detect_all_tables(wb, &vm, config);
    let checks = crossfoot::CheckIndex::build(wb);

    let mut findings: Vec<Finding> = Vec::new();
    if config.rule_enabled(RULE_CROSSFOOT) {
        for list in tables.values() {
            for table in list {
                if table.has_both_totals() && table.grand_total.is_some() {
                    findings.extend(check_crossfoot(wb, &vm, table, config, &checks));
                }
            }
        }
    }
    if config.rule_enabled(RULE_CHAIN) {
        findings.extend(detect_chained_plus(wb, config));
    }
    if config.rule_enabled(RULE_INSERTION) {
        findings.extend(detect_insertion_risk(wb, &vm, &tables, config));
    }
    if config.rule_enabled(RULE_DOUBLE_COUNT) {
        findings.extend(detect_double_count(wb, config));
    }
    if config.rule_enabled(RULE_INDICATOR) {
        findings.extend(check_indicator_propagation(wb, &checks));
    }
    if config.rule_enabled(RULE_TEXT_NUMBER) {
        findings.extend(detect_text_number_hazard(wb, config));
    }
    if config.rule_enabled(RULE_BALANCE) || config.rule_enabled(RULE_PROPORTION) {
        let assertions: &[AssertionSpec] =
            if config.rule_enabled(RULE_BALANCE) { &config.assertions } else { &[] };
        let bands: &[RatioBand] =
            if config.rule_enabled(RULE_PROPORTION) { &config.ratio_bands } else { &[] };
        findings.extend(check_assertions(wb, &vm, assertions, bands));
    }

    for finding in &mut findings {
        if let Some(severity) = config.severity_overrides.get(&finding.rule) {
            finding.severity = *severity;
        }
    }
    findings.sort_by_key(|f| f.sort_key());

    let mut counts = Counts::default();
    for f in &findings {
        match f.severity {
            Severity::Error => counts.error += 1,
            Severity::Warning => counts.warning += 1,
            Severity::Info => counts.info += 1,
        }
    }

    AuditReport {
        tool: "crossfoot".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        findings,
        counts,
        footer: REPORT_CAVEAT.to_string(),
    }
}
