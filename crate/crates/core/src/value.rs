//! Cell values and error codes.

use std::fmt;

use serde::Serialize;

/// The closed set of error codes a cell can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ErrorCode {
    Div0,
    Value,
    Ref,
    Name,
    Num,
    Circ,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 6] = [
        ErrorCode::Div0,
        ErrorCode::Value,
        ErrorCode::Ref,
        ErrorCode::Name,
        ErrorCode::Num,
        ErrorCode::Circ,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::Div0 => "#DIV/0!",
            ErrorCode::Value => "#VALUE!",
            ErrorCode::Ref => "#REF!",
            ErrorCode::Name => "#NAME?",
            ErrorCode::Num => "#NUM!",
            ErrorCode::Circ => "#CIRC!",
        }
    }

    pub fn parse(text: &str) -> Option<ErrorCode> {
        Self::ALL.iter().copied().find(|c| c.as_str() == text)
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A stored or computed cell value. `Blank` is distinct from `Number(0)` and
/// from `Text("")`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CellValue {
    Number(f64),
    Text(String),
    Boolean(bool),
    Error(ErrorCode),
    #[default]
    Blank,
}

impl CellValue {
    pub fn is_blank(&self) -> bool {
        matches!(self, CellValue::Blank)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            CellValue::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            CellValue::Number(_) => "number",
            CellValue::Text(_) => "text",
            CellValue::Boolean(_) => "boolean",
            CellValue::Error(_) => "error",
            CellValue::Blank => "blank",
        }
    }

    /// JSON representation used in reports: numbers, strings, and booleans map
    /// directly, errors become `{"error": code}`, blanks become `null`.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CellValue::Number(n) => number_json(*n),
            CellValue::Text(s) => serde_json::Value::String(s.clone()),
            CellValue::Boolean(b) => serde_json::Value::Bool(*b),
            CellValue::Error(e) => serde_json::json!({ "error": e.as_str() }),
            CellValue::Blank => serde_json::Value::Null,
        }
    }
}

impl From<f64> for CellValue {
    fn from(n: f64) -> Self {
        CellValue::Number(n)
    }
}

impl From<i32> for CellValue {
    fn from(n: i32) -> Self {
        CellValue::Number(n as f64)
    }
}

impl From<&str> for CellValue {
    fn from(s: &str) -> Self {
        CellValue::Text(s.to_string())
    }
}

impl From<String> for CellValue {
    fn from(s: String) -> Self {
        CellValue::Text(s)
    }
}

impl From<bool> for CellValue {
    fn from(b: bool) -> Self {
        CellValue::Boolean(b)
    }
}

impl From<ErrorCode> for CellValue {
    fn from(e: ErrorCode) -> Self {
        CellValue::Error(e)
    }
}

impl fmt::Display for CellValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellValue::Number(n) => f.write_str(&fmt_number(*n)),
            CellValue::Text(s) => f.write_str(s),
            CellValue::Boolean(b) => f.write_str(if *b { "TRUE" } else { "FALSE" }),
            CellValue::Error(e) => f.write_str(e.as_str()),
            CellValue::Blank => Ok(()),
        }
    }
}

/// Shortest decimal text that parses back to exactly the same double.
pub fn fmt_number(x: f64) -> String {
    format!("{x}")
}

/// Emit an f64 as a JSON number, preferring the integer form when exact.
pub fn number_json(n: f64) -> serde_json::Value {
    if n.fract() == 0.0 && n.abs() < 9.007_199_254_740_992e15 {
        serde_json::Value::from(n as i64)
    } else {
        serde_json::Value::from(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_distinct_from_zero_and_empty_text() {
        assert_ne!(CellValue::Blank, CellValue::Number(0.0));
        assert_ne!(CellValue::Blank, CellValue::Text(String::new()));
    }

    #[test]
    fn error_codes_round_trip() {
        for code in ErrorCode::ALL {
            assert_eq!(ErrorCode::parse(code.as_str()), Some(code));
        }
        assert_eq!(ErrorCode::parse("#N/A"), None);
    }

    #[test]
    fn number_formatting_round_trips() {
        for x in [0.0, 1.0, 0.1, 0.30000000000000004, 1234.5, 5e-13, 1e15] {
            assert_eq!(fmt_number(x).parse::<f64>().unwrap(), x);
        }
    }
}
