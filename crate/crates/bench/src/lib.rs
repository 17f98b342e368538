//! Workbook generators shared by the benchmarks.

use crossfoot_core::addr::col_to_letters;
use crossfoot_core::workbook::{Workbook, WorkbookBuilder};

/// A cross-foot table with `n` x `n` body cells and live totals on both lines.
pub fn crossfoot_table(n: u32) -> Workbook {
    let mut b = WorkbookBuilder::new().sheet("Data");
    let totals_row = n + 2;
    let totals_col = n + 2;
    for r in 0..n {
        let row = r + 2;
        for c in 0..n {
            let col = c + 2;
            let v = ((r * 31 + c * 17) % 97) as f64 + 0.25;
            b = b.value(&format!("{}{row}", col_to_letters(col)), v);
        }
        let letters = col_to_letters(totals_col);
        b = b.formula(
            &format!("{letters}{row}"),
            &format!("=SUM(B{row}:{}{row})", col_to_letters(n + 1)),
        );
    }
    for c in 0..=n {
        let letters = col_to_letters(c + 2);
        b = b.formula(
            &format!("{letters}{totals_row}"),
            &format!("=SUM({letters}2:{letters}{})", totals_row - 1),
        );
    }
    b.build().unwrap()
}

/// A single-column ledger with detail groups and one subtotal per group.
pub fn subtotal_ladder(groups: u32, group_size: u32) -> Workbook {
    let mut b = WorkbookBuilder::new().sheet("Data");
    let mut row = 2u32;
    for g in 0..groups {
        let start = row;
        for i in 0..group_size {
            b = b.value(&format!("B{row}"), (g * group_size + i) as f64 * 1.5);
            row += 1;
        }
        b = b.formula(&format!("B{row}"), &format!("=SUBTOTAL(9,B{start}:B{})", row - 1));
        row += 1;
    }
    b = b.formula(&format!("B{row}"), &format!("=SUBTOTAL(9,B2:B{})", row - 1));
    b.build().unwrap()
}
