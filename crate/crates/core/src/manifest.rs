//! Governance manifest: a JSON sidecar answering the ten ownership questions
//! for a workbook (`<workbook>.manifest.json`).
//!
//! Validation reports one finding per unanswered question. Only a missing
//! purpose (q1) is an error; everything else warns. When the workbook is
//! supplied, the internal checks declared under q8 are cross-checked against
//! the actual cells.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::parse_address;
use crate::audit::{is_check_cell, Finding, Severity};
use crate::workbook::Workbook;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("malformed manifest JSON: {0}")]
    Json(#[from] serde_json::Error),
}

macro_rules! question {
    ($name:ident { $($field:ident),+ $(; $($list:ident),+)? }) => {
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields, default)]
        pub struct $name {
            $(pub $field: Option<String>,)+
            $($(pub $list: Vec<String>,)+)?
        }
    };
}

question!(Purpose { purpose, criticality });
question!(Location { location, version_id; data_sources, dependents });
question!(Usage { usage_doc });
question!(Audience { audience });
question!(Periodicity { periodicity });
question!(Review { reviewer, test_evidence });
question!(Controls { signoff, reconciliation });

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InternalChecks {
    pub internal_checks: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConformity {
    pub design_conformity: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PainPoints {
    pub pain_points: Vec<String>,
}

/// The ten questions, keyed `q1`..`q10`. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Manifest {
    pub q1: Option<Purpose>,
    pub q2: Option<Location>,
    pub q3: Option<Usage>,
    pub q4: Option<Audience>,
    pub q5: Option<Periodicity>,
    pub q6: Option<Review>,
    pub q7: Option<Controls>,
    pub q8: Option<InternalChecks>,
    pub q9: Option<DesignConformity>,
    pub q10: Option<PainPoints>,
}

impl Manifest {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ManifestError> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

fn blank(field: &Option<String>) -> bool {
    field.as_deref().map(|s| s.trim().is_empty()).unwrap_or(true)
}

fn question_finding(id: &str, severity: Severity, message: String) -> Finding {
    Finding {
        rule: id.to_string(),
        severity,
        cells: Vec::new(),
        message,
        measured: None,
        threshold: None,
        suggestion: None,
    }
}

/// Validate a parsed manifest, optionally cross-checking q8 against a
/// workbook.
pub fn validate_manifest(manifest: &Manifest, workbook: Option<&Workbook>) -> Vec<Finding> {
    let mut findings = Vec::new();

    // q1: purpose is the one hard requirement.
    let purpose_missing = manifest.q1.as_ref().map(|q| blank(&q.purpose)).unwrap_or(true);
    if purpose_missing {
        findings.push(question_finding(
            "q1",
            Severity::Error,
            "q1: the purpose of the spreadsheet is not stated".into(),
        ));
    } else if blank(&manifest.q1.as_ref().expect("checked").criticality) {
        findings.push(question_finding("q1", Severity::Warning, "q1: criticality not answered".into()));
    }

    let mut warn_missing = |id: &str, missing: Vec<&str>, absent: bool| {
        if absent {
            findings.push(question_finding(id, Severity::Warning, format!("{id}: not answered")));
        } else if !missing.is_empty() {
            findings.push(question_finding(
                id,
                Severity::Warning,
                format!("{id}: missing {}", missing.join(", ")),
            ));
        }
    };

    match &manifest.q2 {
        None => warn_missing("q2", vec![], true),
        Some(q) => {
            let mut missing = Vec::new();
            if blank(&q.location) {
                missing.push("location");
            }
            if blank(&q.version_id) {
                missing.push("version_id");
            }
            warn_missing("q2", missing, false);
        }
    }
    match &manifest.q3 {
        None => warn_missing("q3", vec![], true),
        Some(q) => warn_missing("q3", if blank(&q.usage_doc) { vec!["usage_doc"] } else { vec![] }, false),
    }
    match &manifest.q4 {
        None => warn_missing("q4", vec![], true),
        Some(q) => warn_missing("q4", if blank(&q.audience) { vec!["audience"] } else { vec![] }, false),
    }
    match &manifest.q5 {
        None => warn_missing("q5", vec![], true),
        Some(q) => {
            warn_missing("q5", if blank(&q.periodicity) { vec!["periodicity"] } else { vec![] }, false)
        }
    }
    match &manifest.q6 {
        None => warn_missing("q6", vec![], true),
        Some(q) => {
            let mut missing = Vec::new();
            if blank(&q.reviewer) {
                missing.push("reviewer");
            }
            if blank(&q.test_evidence) {
                missing.push("test_evidence");
            }
            warn_missing("q6", missing, false);
        }
    }
    match &manifest.q7 {
        None => warn_missing("q7", vec![], true),
        Some(q) => {
            let mut missing = Vec::new();
            if blank(&q.signoff) {
                missing.push("signoff");
            }
            if blank(&q.reconciliation) {
                missing.push("reconciliation");
            }
            warn_missing("q7", missing, false);
        }
    }
    if manifest.q8.is_none() {
        warn_missing("q8", vec![], true);
    }
    if manifest.q9.is_none() {
        warn_missing("q9", vec![], true);
    }
    if manifest.q10.is_none() {
        warn_missing("q10", vec![], true);
    }

    if let (Some(q8), Some(wb)) = (&manifest.q8, workbook) {
        for entry in &q8.internal_checks {
            findings.extend(check_declared_check(wb, entry));
        }
    }
    findings
}

fn check_declared_check(wb: &Workbook, entry: &str) -> Option<Finding> {
    let addr = match parse_address(entry, wb.front_sheet()) {
        Ok(a) => a,
        Err(e) => {
            return Some(question_finding(
                "q8",
                Severity::Warning,
                format!("q8: `{entry}` is not a valid cell reference: {e}"),
            ))
        }
    };
    let cell = match wb.cell(&addr) {
        Some(c) => c,
        None => {
            return Some(Finding {
                rule: "q8".into(),
                severity: Severity::Warning,
                cells: vec![addr.clone()],
                message: format!("q8: declared check not found: {} is blank", addr.to_a1()),
                measured: None,
                threshold: None,
                suggestion: None,
            })
        }
    };
    let is_check = cell.formula.as_ref().map(is_check_cell).unwrap_or(false);
    if !is_check {
        return Some(Finding {
            rule: "q8".into(),
            severity: Severity::Warning,
            cells: vec![addr.clone()],
            message: format!("q8: {} does not hold a check formula", addr.to_a1()),
            measured: None,
            threshold: None,
            suggestion: None,
        });
    }
    None
}

/// Conventional sidecar path for a workbook file.
pub fn manifest_path_for(workbook_path: &std::path::Path) -> std::path::PathBuf {
    let mut name = workbook_path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    workbook_path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workbook::WorkbookBuilder;

    fn complete_manifest() -> Manifest {
        serde_json::from_value(serde_json::json!({
            "q1": {"purpose": "budget allocation", "criticality": "rebuild takes a week"},
            "q2": {"location": "finance share", "version_id": "v12", "data_sources": ["ledger.csv"], "dependents": ["board pack"]},
            "q3": {"usage_doc": "see runbook"},
            "q4": {"audience": "finance team"},
            "q5": {"periodicity": "monthly"},
            "q6": {"reviewer": "controller", "test_evidence": "signed test sheet"},
            "q7": {"signoff": "CFO", "reconciliation": "ledger totals"},
            "q8": {"internal_checks": []},
            "q9": {"design_conformity": ["block layout"]},
            "q10": {"pain_points": []}
        }))
        .unwrap()
    }

    #[test]
    fn complete_manifest_is_clean() {
        assert!(validate_manifest(&complete_manifest(), None).is_empty());
    }

    #[test]
    fn missing_purpose_is_an_error() {
        let mut m = complete_manifest();
        m.q1 = None;
        let findings = validate_manifest(&m, None);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].severity, Severity::Error);
        assert_eq!(findings[0].rule, "q1");
    }

    #[test]
    fn unanswered_questions_warn() {
        let m = Manifest {
            q1: Some(Purpose { purpose: Some("x".into()), criticality: Some("y".into()) }),
            ..Manifest::default()
        };
        let findings = validate_manifest(&m, None);
        assert_eq!(findings.len(), 9);
        assert!(findings.iter().all(|f| f.severity == Severity::Warning));
        let ids: Vec<&str> = findings.iter().map(|f| f.rule.as_str()).collect();
        assert_eq!(ids, ["q2", "q3", "q4", "q5", "q6", "q7", "q8", "q9", "q10"]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Manifest::from_json(br#"{"q11": {}}"#).is_err());
        assert!(Manifest::from_json(br#"{"q1": {"extra": "x"}}"#).is_err());
    }

    #[test]
    fn declared_check_cross_checked_against_workbook() {
        let wb = WorkbookBuilder::new()
            .sheet("Data")
            .value("A1", 5.0)
            .formula("J11", "=IF(A1=5,\"\",\"off\")")
            .build()
            .unwrap();
        let mut m = complete_manifest();
        m.q8 = Some(InternalChecks {
            internal_checks: vec!["Data!J11".into(), "Data!J12".into(), "Data!A1".into()],
        });
        let findings = validate_manifest(&m, Some(&wb));
        assert_eq!(findings.len(), 2);
        assert!(findings[0].message.contains("declared check not found"));
        assert!(findings[1].message.contains("does not hold a check formula"));
    }
}
