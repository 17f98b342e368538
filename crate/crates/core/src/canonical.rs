//! The canonical JSON workbook format.
//!
//! ```json
//! {
//!   "front_sheet": "S1",
//!   "sheets": [
//!     {"name": "S1", "cells": [
//!       {"ref": "B2", "v": 5},
//!       {"ref": "B3", "v": "label"},
//!       {"ref": "B4", "v": "#DIV/0!", "t": "e"},
//!       {"ref": "B6", "f": "=SUM(B2:B5)", "v": 5}
//!     ]}
//!   ]
//! }
//! ```
//!
//! `t` is one of `n|s|b|e` and defaults to the type inferred from `v`.
//! Formulas that fail to parse load as `#NAME?` cells with a warning. Saving
//! prints formulas in canonical form, so a load/save round trip normalizes
//! key ordering and formula whitespace but nothing else.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::parse_address;
use crate::value::{number_json, CellValue, ErrorCode};
use crate::workbook::{Workbook, WorkbookBuilder};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate sheet name `{0}`")]
    DuplicateSheet(String),
    #[error("duplicate cell `{reference}` on sheet `{sheet}`")]
    DuplicateCell { sheet: String, reference: String },
    #[error("sheet `{sheet}`, cell `{reference}`: {message}")]
    BadCell { sheet: String, reference: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonWorkbook {
    #[serde(skip_serializing_if = "Option::is_none")]
    front_sheet: Option<String>,
    sheets: Vec<CanonSheet>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonSheet {
    name: String,
    cells: Vec<CanonCell>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanonCell {
    #[serde(rename = "ref")]
    reference: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    v: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f: Option<String>,
}

/// Load a workbook from canonical JSON bytes.
pub fn load_canonical(bytes: &[u8]) -> Result<Workbook, LoadError> {
    let doc: CanonWorkbook = serde_json::from_slice(bytes)?;
    let mut builder = WorkbookBuilder::new();
    let mut seen_sheets: Vec<String> = Vec::new();
    for sheet in &doc.sheets {
        if seen_sheets.iter().any(|s| s.eq_ignore_ascii_case(&sheet.name)) {
            return Err(LoadError::DuplicateSheet(sheet.name.clone()));
        }
        seen_sheets.push(sheet.name.clone());
        builder = builder.sheet(&sheet.name);
        let mut seen_refs: Vec<(u32, u32)> = Vec::new();
        for cell in &sheet.cells {
            let addr = parse_address(&cell.reference, &sheet.name).map_err(|e| LoadError::BadCell {
                sheet: sheet.name.clone(),
                reference: cell.reference.clone(),
                message: e.to_string(),
            })?;
            if !addr.same_sheet(&sheet.name) {
                return Err(LoadError::BadCell {
                    sheet: sheet.name.clone(),
                    reference: cell.reference.clone(),
                    message: "cell ref is qualified with a different sheet".into(),
                });
            }
            if seen_refs.contains(&(addr.row, addr.col)) {
                return Err(LoadError::DuplicateCell {
                    sheet: sheet.name.clone(),
                    reference: cell.reference.clone(),
                });
            }
            seen_refs.push((addr.row, addr.col));
            let value = decode_value(cell).map_err(|message| LoadError::BadCell {
                sheet: sheet.name.clone(),
                reference: cell.reference.clone(),
                message,
            })?;
            builder = match (&cell.f, value) {
                (Some(f), value) => match value {
                    CellValue::Blank => builder.formula(&cell.reference, f),
                    cached => builder.formula_with_value(&cell.reference, f, cached),
                },
                (None, value) => builder.value(&cell.reference, value),
            };
        }
    }
    if let Some(front) = &doc.front_sheet {
        builder = builder.front_sheet(front);
    }
    builder.build().map_err(LoadError::Invalid)
}

fn decode_value(cell: &CanonCell) -> Result<CellValue, String> {
    use serde_json::Value as J;
    match (cell.t.as_deref(), &cell.v) {
        (None, None) => Ok(CellValue::Blank),
        (None, Some(J::Number(n))) => {
            Ok(CellValue::Number(n.as_f64().ok_or("number does not fit in a double")?))
        }
        (None, Some(J::String(s))) => Ok(CellValue::Text(s.clone())),
        (None, Some(J::Bool(b))) => Ok(CellValue::Boolean(*b)),
        (None, Some(other)) => Err(format!("unsupported value {other}")),
        (Some("n"), Some(J::Number(n))) => {
            Ok(CellValue::Number(n.as_f64().ok_or("number does not fit in a double")?))
        }
        (Some("s"), Some(J::String(s))) => Ok(CellValue::Text(s.clone())),
        (Some("b"), Some(J::Bool(b))) => Ok(CellValue::Boolean(*b)),
        (Some("e"), Some(J::String(s))) => match ErrorCode::parse(s) {
            Some(code) => Ok(CellValue::Error(code)),
            None => Err(format!("unknown error code `{s}`")),
        },
        (Some(t @ ("n" | "s" | "b" | "e")), v) => {
            Err(format!("value {v:?} does not match type tag `{t}`"))
        }
        (Some(t), _) => Err(format!("unknown type tag `{t}`")),
    }
}

/// Serialize a workbook to canonical JSON (pretty, deterministic).
pub fn save_canonical(wb: &Workbook) -> Vec<u8> {
    let first = wb.sheets().first().map(|s| s.name().to_string()).unwrap_or_default();
    let doc = CanonWorkbook {
        front_sheet: if wb.front_sheet().eq_ignore_ascii_case(&first) {
            None
        } else {
            Some(wb.front_sheet().to_string())
        },
        sheets: wb
            .sheets()
            .iter()
            .map(|sheet| CanonSheet {
                name: sheet.name().to_string(),
                cells: sheet
                    .cells()
                    .map(|cell| {
                        let (v, t) = match &cell.value {
                            CellValue::Blank => (None, None),
                            CellValue::Number(n) => (Some(number_json(*n)), None),
                            CellValue::Text(s) => (Some(serde_json::Value::String(s.clone())), None),
                            CellValue::Boolean(b) => (Some(serde_json::Value::Bool(*b)), None),
                            CellValue::Error(e) => {
                                (Some(serde_json::Value::String(e.as_str().to_string())), Some("e".to_string()))
                            }
                        };
                        let f = match (&cell.formula, &cell.formula_text) {
                            (Some(ast), _) => Some(crate::formula::print_formula(ast)),
                            (None, Some(raw)) => Some(raw.clone()),
                            (None, None) => None,
                        };
                        CanonCell { reference: cell.address.local_a1(), v, t, f }
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("canonical serialization cannot fail");
    bytes.push(b'\n');
    bytes
}
