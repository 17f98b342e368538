//! Spreadsheet audit toolkit: workbook model, formula engine, and self-check analysis.
//!
//! The crate is organized around a small pipeline:
//!
//! 1. [`workbook`] loads a workbook, either from the canonical JSON format
//!    ([`canonical::load_canonical`]) or from a `.xlsx` file ([`xlsx::read_xlsx`]).
//! 2. [`formula`] parses cell formulas into an AST, prints them back in a
//!    canonical form, and extracts the cell/range references they use.
//! 3. [`engine`] builds the dependency graph and recalculates every formula
//!    cell with deterministic semantics for `SUM`, `SUBTOTAL`, `OFFSET`,
//!    `INDEX`, `FIXED`/`DOLLAR`, and friends.
//! 4. [`audit`] detects tables with totals lines and runs the rule catalog
//!    (R1..R8) over the recalculated workbook, producing an [`audit::AuditReport`].
//! 5. [`checks`] generates cross-foot check formulas as patches and suggests
//!    rewrites for hazardous totals.
//! 6. [`manifest`] validates the governance sidecar document that answers the
//!    ten ownership questions for a workbook.

pub mod addr;
pub mod audit;
pub mod canonical;
pub mod checks;
pub mod engine;
pub mod formula;
pub mod manifest;
pub mod value;
pub mod workbook;
pub mod xlsx;

pub use addr::{parse_address, parse_range, A1Ref, AddressError, CellAddress, CellRange};
pub use audit::{run_audit, AuditConfig, AuditReport, Finding, Severity};
pub use canonical::{load_canonical, save_canonical, LoadError};
pub use checks::{apply_patches, generate_crossfoot_check, suggest_total_rewrite, CheckPatch};
pub use engine::{build_graph, recalc_diff, recalculate, DepGraph, RecalcDiff, ValueMap};
pub use formula::{extract_references, parse_formula, print_formula, FormulaNode, RefSet};
pub use manifest::{validate_manifest, Manifest};
pub use value::{CellValue, ErrorCode};
pub use workbook::{Cell, Sheet, Workbook, WorkbookBuilder};
pub use xlsx::read_xlsx;
