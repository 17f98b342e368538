//! Cell addressing: A1-style references, resolved addresses, and rectangular ranges.
//!
//! Sheet names compare case-insensitively everywhere; `Data!B2` and `data!B2`
//! are the same address. Absolute markers (`$H$10`) are accepted and recorded
//! on [`A1Ref`] but do not change the identity of the resolved [`CellAddress`].

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Serialize, Serializer};
use thiserror::Error;

/// Largest addressable column (`XFD`).
pub const MAX_COL: u32 = 16_384;
/// Largest addressable row.
pub const MAX_ROW: u32 = 1_048_576;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AddressError {
    #[error("empty reference")]
    Empty,
    #[error("invalid column letters `{0}`")]
    InvalidColumn(String),
    #[error("invalid row number `{0}`")]
    InvalidRow(String),
    #[error("column out of range in `{0}`")]
    ColumnOutOfRange(String),
    #[error("row out of range in `{0}`")]
    RowOutOfRange(String),
    #[error("invalid sheet name `{0}`")]
    InvalidSheet(String),
    #[error("unexpected trailing text `{0}`")]
    Trailing(String),
    #[error("`{0}` is not a cell or range reference")]
    NotARange(String),
    #[error("range endpoints on different sheets in `{0}`")]
    CrossSheet(String),
}

/// A fully resolved cell location. Equality, ordering, and hashing treat the
/// sheet name case-insensitively.
#[derive(Debug, Clone)]
pub struct CellAddress {
    pub sheet: String,
    pub col: u32,
    pub row: u32,
}

impl CellAddress {
    pub fn new(sheet: impl Into<String>, col: u32, row: u32) -> Self {
        CellAddress { sheet: sheet.into(), col, row }
    }

    /// `Sheet!B2` form, quoting the sheet name when needed.
    pub fn to_a1(&self) -> String {
        format!("{}!{}", quote_sheet(&self.sheet), self.local_a1())
    }

    /// `B2` form without the sheet qualifier.
    pub fn local_a1(&self) -> String {
        format!("{}{}", col_to_letters(self.col), self.row)
    }

    pub fn same_sheet(&self, name: &str) -> bool {
        self.sheet.eq_ignore_ascii_case(name)
    }
}

impl PartialEq for CellAddress {
    fn eq(&self, other: &Self) -> bool {
        self.col == other.col && self.row == other.row && self.sheet.eq_ignore_ascii_case(&other.sheet)
    }
}

impl Eq for CellAddress {}

impl Hash for CellAddress {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for b in self.sheet.bytes() {
            state.write_u8(b.to_ascii_lowercase());
        }
        state.write_u32(self.col);
        state.write_u32(self.row);
    }
}

impl Ord for CellAddress {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_sheet(&self.sheet, &other.sheet)
            .then(self.row.cmp(&other.row))
            .then(self.col.cmp(&other.col))
    }
}

impl PartialOrd for CellAddress {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_a1())
    }
}

impl Serialize for CellAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_a1())
    }
}

fn cmp_sheet(a: &str, b: &str) -> Ordering {
    let ai = a.bytes().map(|c| c.to_ascii_lowercase());
    let bi = b.bytes().map(|c| c.to_ascii_lowercase());
    ai.cmp(bi)
}

/// An A1-style reference as written in a formula, before sheet resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct A1Ref {
    pub sheet: Option<String>,
    pub col: u32,
    pub row: u32,
    pub abs_col: bool,
    pub abs_row: bool,
}

impl A1Ref {
    pub fn new(col: u32, row: u32) -> Self {
        A1Ref { sheet: None, col, row, abs_col: false, abs_row: false }
    }

    /// Resolve against the sheet the formula lives on.
    pub fn address(&self, current_sheet: &str) -> CellAddress {
        CellAddress::new(self.sheet.clone().unwrap_or_else(|| current_sheet.to_string()), self.col, self.row)
    }

    pub fn to_a1(&self) -> String {
        let mut out = String::new();
        if let Some(s) = &self.sheet {
            out.push_str(&quote_sheet(s));
            out.push('!');
        }
        if self.abs_col {
            out.push('$');
        }
        out.push_str(&col_to_letters(self.col));
        if self.abs_row {
            out.push('$');
        }
        out.push_str(&self.row.to_string());
        out
    }
}

impl fmt::Display for A1Ref {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_a1())
    }
}

/// A resolved rectangular range on a single sheet. `rows` of `None` marks a
/// whole-column range such as `B:B`, which clips to the sheet's used extent
/// when iterated.
#[derive(Debug, Clone)]
pub struct CellRange {
    pub sheet: String,
    pub start_col: u32,
    pub end_col: u32,
    /// `Some((start_row, end_row))` for bounded ranges, `None` for whole columns.
    pub rows: Option<(u32, u32)>,
}

impl CellRange {
    pub fn cells(sheet: impl Into<String>, c1: u32, r1: u32, c2: u32, r2: u32) -> Self {
        CellRange {
            sheet: sheet.into(),
            start_col: c1.min(c2),
            end_col: c1.max(c2),
            rows: Some((r1.min(r2), r1.max(r2))),
        }
    }

    pub fn whole_columns(sheet: impl Into<String>, c1: u32, c2: u32) -> Self {
        CellRange { sheet: sheet.into(), start_col: c1.min(c2), end_col: c1.max(c2), rows: None }
    }

    pub fn single(addr: &CellAddress) -> Self {
        CellRange::cells(addr.sheet.clone(), addr.col, addr.row, addr.col, addr.row)
    }

    pub fn is_whole_column(&self) -> bool {
        self.rows.is_none()
    }

    /// Single column of cells (includes 1x1 ranges).
    pub fn is_vertical(&self) -> bool {
        self.start_col == self.end_col
    }

    /// Single row of cells, more than one column wide.
    pub fn is_horizontal(&self) -> bool {
        matches!(self.rows, Some((r1, r2)) if r1 == r2) && self.start_col != self.end_col
    }

    pub fn single_cell(&self) -> Option<CellAddress> {
        match self.rows {
            Some((r1, r2)) if r1 == r2 && self.start_col == self.end_col => {
                Some(CellAddress::new(self.sheet.clone(), self.start_col, r1))
            }
            _ => None,
        }
    }

    pub fn contains(&self, addr: &CellAddress) -> bool {
        if !addr.same_sheet(&self.sheet) || addr.col < self.start_col || addr.col > self.end_col {
            return false;
        }
        match self.rows {
            Some((r1, r2)) => addr.row >= r1 && addr.row <= r2,
            None => true,
        }
    }

    /// True when `other` lies fully inside `self` (same sheet).
    pub fn contains_range(&self, other: &CellRange) -> bool {
        if !other.sheet.eq_ignore_ascii_case(&self.sheet) {
            return false;
        }
        if other.start_col < self.start_col || other.end_col > self.end_col {
            return false;
        }
        match (self.rows, other.rows) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some((a1, a2)), Some((b1, b2))) => b1 >= a1 && b2 <= a2,
        }
    }

    pub fn cell_count(&self) -> Option<u64> {
        self.rows.map(|(r1, r2)| {
            (self.end_col - self.start_col + 1) as u64 * (r2 - r1 + 1) as u64
        })
    }

    /// `B51:B66`, `B5`, or `B:B` without the sheet qualifier.
    pub fn local_a1(&self) -> String {
        match self.rows {
            Some((r1, r2)) => {
                let start = format!("{}{}", col_to_letters(self.start_col), r1);
                if r1 == r2 && self.start_col == self.end_col {
                    start
                } else {
                    format!("{}:{}{}", start, col_to_letters(self.end_col), r2)
                }
            }
            None => format!("{}:{}", col_to_letters(self.start_col), col_to_letters(self.end_col)),
        }
    }

    pub fn to_a1(&self) -> String {
        format!("{}!{}", quote_sheet(&self.sheet), self.local_a1())
    }
}

impl PartialEq for CellRange {
    fn eq(&self, other: &Self) -> bool {
        self.start_col == other.start_col
            && self.end_col == other.end_col
            && self.rows == other.rows
            && self.sheet.eq_ignore_ascii_case(&other.sheet)
    }
}

impl Eq for CellRange {}

impl Ord for CellRange {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_sheet(&self.sheet, &other.sheet)
            .then(self.start_col.cmp(&other.start_col))
            .then(self.rows.cmp(&other.rows))
            .then(self.end_col.cmp(&other.end_col))
    }
}

impl PartialOrd for CellRange {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for CellRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_a1())
    }
}

impl Serialize for CellRange {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_a1())
    }
}

pub fn col_to_letters(mut col: u32) -> String {
    debug_assert!(col >= 1);
    let mut out = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        out.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

pub fn letters_to_col(letters: &str) -> Option<u32> {
    if letters.is_empty() || letters.len() > 3 {
        return None;
    }
    let mut col: u32 = 0;
    for c in letters.chars() {
        if !c.is_ascii_alphabetic() {
            return None;
        }
        col = col * 26 + (c.to_ascii_uppercase() as u32 - 'A' as u32 + 1);
    }
    if (1..=MAX_COL).contains(&col) {
        Some(col)
    } else {
        None
    }
}

/// Render a sheet name for use in a reference, quoting when it is not a plain
/// identifier.
pub fn quote_sheet(name: &str) -> String {
    let plain = !name.is_empty()
        && name.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_').unwrap_or(false)
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}

/// Split an optional `Sheet!` prefix off a reference. Returns the sheet name
/// (unquoted) and the remainder.
pub(crate) fn split_sheet(text: &str) -> Result<(Option<String>, &str), AddressError> {
    if let Some(rest) = text.strip_prefix('\'') {
        // Quoted sheet name; '' is an escaped quote.
        let mut name = String::new();
        let mut chars = rest.char_indices();
        loop {
            match chars.next() {
                Some((i, '\'')) => {
                    if rest[i + 1..].starts_with('\'') {
                        name.push('\'');
                        chars.next();
                    } else {
                        let after = &rest[i + 1..];
                        let tail = after
                            .strip_prefix('!')
                            .ok_or_else(|| AddressError::InvalidSheet(text.to_string()))?;
                        if name.is_empty() {
                            return Err(AddressError::InvalidSheet(text.to_string()));
                        }
                        return Ok((Some(name), tail));
                    }
                }
                Some((_, c)) => name.push(c),
                None => return Err(AddressError::InvalidSheet(text.to_string())),
            }
        }
    }
    match text.find('!') {
        Some(pos) => {
            let name = &text[..pos];
            let valid = !name.is_empty()
                && name.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_').unwrap_or(false)
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid {
                return Err(AddressError::InvalidSheet(name.to_string()));
            }
            Ok((Some(name.to_string()), &text[pos + 1..]))
        }
        None => Ok((None, text)),
    }
}

/// Parse an A1-style reference with optional sheet qualifier and `$` markers.
pub fn parse_a1(text: &str) -> Result<A1Ref, AddressError> {
    if text.is_empty() {
        return Err(AddressError::Empty);
    }
    let (sheet, rest) = split_sheet(text)?;
    let (abs_col, rest) = match rest.strip_prefix('$') {
        Some(r) => (true, r),
        None => (false, rest),
    };
    let letters_end = rest.find(|c: char| !c.is_ascii_alphabetic()).unwrap_or(rest.len());
    let letters = &rest[..letters_end];
    if letters.is_empty() {
        return Err(AddressError::InvalidColumn(rest.to_string()));
    }
    let col = letters_to_col(letters).ok_or_else(|| {
        if letters.len() > 3 || letters_to_col(&letters[..letters.len().min(3)]).is_none() {
            AddressError::InvalidColumn(letters.to_string())
        } else {
            AddressError::ColumnOutOfRange(letters.to_string())
        }
    })?;
    let rest = &rest[letters_end..];
    let (abs_row, rest) = match rest.strip_prefix('$') {
        Some(r) => (true, r),
        None => (false, rest),
    };
    let digits_end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    let digits = &rest[..digits_end];
    if digits.is_empty() {
        return Err(AddressError::InvalidRow(rest.to_string()));
    }
    if !rest[digits_end..].is_empty() {
        return Err(AddressError::Trailing(rest[digits_end..].to_string()));
    }
    let row: u32 = digits.parse().map_err(|_| AddressError::InvalidRow(digits.to_string()))?;
    if !(1..=MAX_ROW).contains(&row) {
        return Err(AddressError::RowOutOfRange(digits.to_string()));
    }
    Ok(A1Ref { sheet, col, row, abs_col, abs_row })
}

/// Parse an A1 reference into a resolved address, defaulting the sheet to
/// `current_sheet` when the text carries no qualifier.
pub fn parse_address(text: &str, current_sheet: &str) -> Result<CellAddress, AddressError> {
    Ok(parse_a1(text)?.address(current_sheet))
}

/// Parse a cell or range reference (`B2`, `B2:D4`, `B:B`, optionally
/// sheet-qualified) into a [`CellRange`]. Single cells become 1x1 ranges.
pub fn parse_range(text: &str, current_sheet: &str) -> Result<CellRange, AddressError> {
    if text.is_empty() {
        return Err(AddressError::Empty);
    }
    let (sheet, rest) = split_sheet(text)?;
    let sheet = sheet.unwrap_or_else(|| current_sheet.to_string());
    match rest.split_once(':') {
        None => {
            let r = parse_a1(rest)?;
            if r.sheet.is_some() {
                return Err(AddressError::NotARange(text.to_string()));
            }
            Ok(CellRange::cells(sheet, r.col, r.row, r.col, r.row))
        }
        Some((a, b)) => {
            let strip = |s: &str| s.strip_prefix('$').unwrap_or(s).to_string();
            let (a, b) = (strip(a), strip(b));
            let col_only = |s: &str| s.chars().all(|c| c.is_ascii_alphabetic()) && !s.is_empty();
            if col_only(&a) && col_only(&b) {
                let c1 = letters_to_col(&a).ok_or_else(|| AddressError::InvalidColumn(a.clone()))?;
                let c2 = letters_to_col(&b).ok_or_else(|| AddressError::InvalidColumn(b.clone()))?;
                return Ok(CellRange::whole_columns(sheet, c1, c2));
            }
            let ra = parse_a1(&a)?;
            let rb = parse_a1(&b)?;
            if ra.sheet.is_some() || rb.sheet.is_some() {
                return Err(AddressError::CrossSheet(text.to_string()));
            }
            Ok(CellRange::cells(sheet, ra.col, ra.row, rb.col, rb.row))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_reference_with_default_sheet() {
        let a = parse_address("B67", "Data").unwrap();
        assert_eq!(a, CellAddress::new("Data", 2, 67));
    }

    #[test]
    fn smallest_address() {
        let a = parse_address("A1", "S").unwrap();
        assert_eq!((a.col, a.row), (1, 1));
    }

    #[test]
    fn absolute_markers_recorded_but_identity_unchanged() {
        // Column H is the 8th letter: enumerate A..H to confirm.
        let expected = "ABCDEFGH".chars().position(|c| c == 'H').unwrap() as u32 + 1;
        let r = parse_a1("$H$10").unwrap();
        assert!(r.abs_col && r.abs_row);
        assert_eq!((r.col, r.row), (expected, 10));
        assert_eq!(parse_address("$H$10", "S").unwrap(), parse_address("H10", "S").unwrap());
    }

    #[test]
    fn sheet_qualifiers() {
        let a = parse_address("Data!C3", "Other").unwrap();
        assert_eq!(a.sheet, "Data");
        let q = parse_address("'My Sheet'!C3", "Other").unwrap();
        assert_eq!(q.sheet, "My Sheet");
        assert_eq!(q.to_a1(), "'My Sheet'!C3");
    }

    #[test]
    fn sheet_comparison_is_case_insensitive() {
        assert_eq!(CellAddress::new("DATA", 1, 1), CellAddress::new("data", 1, 1));
    }

    #[test]
    fn rejects_malformed_references() {
        assert!(parse_address("", "S").is_err());
        assert!(parse_address("12B", "S").is_err());
        assert!(parse_address("B", "S").is_err());
        assert!(parse_address("B0", "S").is_err());
        assert!(parse_address("B1x", "S").is_err());
        assert!(parse_address("XFE1", "S").is_err());
        assert!(parse_address("A1048577", "S").is_err());
        assert!(parse_address("R[1]C[2]", "S").is_err());
    }

    #[test]
    fn grid_limits() {
        assert_eq!(letters_to_col("XFD"), Some(MAX_COL));
        assert_eq!(letters_to_col("XFE"), None);
        assert_eq!(col_to_letters(MAX_COL), "XFD");
        assert_eq!(col_to_letters(27), "AA");
    }

    #[test]
    fn column_letter_round_trip() {
        for col in [1, 2, 25, 26, 27, 52, 53, 701, 702, 703, 16_384] {
            assert_eq!(letters_to_col(&col_to_letters(col)), Some(col));
        }
    }

    #[test]
    fn range_parsing() {
        let r = parse_range("B51:B66", "Data").unwrap();
        assert_eq!(r, CellRange::cells("Data", 2, 51, 2, 66));
        let whole = parse_range("B:B", "Data").unwrap();
        assert!(whole.is_whole_column());
        let single = parse_range("B5", "Data").unwrap();
        assert!(single.single_cell().is_some());
        assert!(parse_range("B51:B", "Data").is_err());
    }

    #[test]
    fn range_containment() {
        let outer = CellRange::cells("S", 2, 2, 2, 67);
        let inner = CellRange::cells("S", 2, 10, 2, 20);
        assert!(outer.contains_range(&inner));
        assert!(!inner.contains_range(&outer));
        let whole = CellRange::whole_columns("S", 2, 2);
        assert!(whole.contains_range(&outer));
    }
}
