//! The supported function catalog and operator semantics.
//!
//! Aggregation over ranges includes numbers and skips text, blanks, and
//! booleans; errors propagate. Binary arithmetic coerces numeric-looking text
//! (including `1,234.5` and `$5.00` renderings), which is exactly the
//! asymmetry that makes `FIXED`/`DOLLAR` cells invisible to `SUM` but live
//! again when referenced individually.

use crate::addr::{CellAddress, CellRange, MAX_COL, MAX_ROW};
use crate::formula::{BinaryOp, UnaryOp};
use crate::value::{fmt_number, CellValue, ErrorCode};

use super::Evaluator;

/// An evaluated argument. References and ranges keep their shape so functions
/// like `SUM`, `SUBTOTAL`, `OFFSET`, and `INDEX` can apply reference
/// semantics; everything else arrives as a plain value.
#[derive(Debug, Clone)]
pub enum Operand {
    Value(CellValue),
    Reference(CellAddress),
    Range(CellRange),
}

impl Operand {
    pub fn error(code: ErrorCode) -> Operand {
        Operand::Value(CellValue::Error(code))
    }
}

pub(crate) fn deref_operand(op: &Operand, ev: &mut Evaluator) -> CellValue {
    match op {
        Operand::Value(v) => v.clone(),
        Operand::Reference(addr) => ev.cell_value(addr),
        Operand::Range(r) => match r.single_cell() {
            Some(addr) => ev.cell_value(&addr),
            None => CellValue::Error(ErrorCode::Value),
        },
    }
}

/// Apply a catalog function to already-evaluated arguments. `OFFSET`, `INDEX`,
/// and `ROW` receive reference forms; in value position their result is
/// dereferenced here.
pub fn apply_function(
    name: &str,
    args: &[Operand],
    ev: &mut Evaluator,
    current: &CellAddress,
) -> CellValue {
    match name {
        "SUM" => fold_numbers(args, ev).map(|(sum, _)| CellValue::Number(sum)).unwrap_or_else(CellValue::Error),
        "AVERAGE" => match fold_numbers(args, ev) {
            Ok((_, 0)) => CellValue::Error(ErrorCode::Div0),
            Ok((sum, count)) => CellValue::Number(sum / count as f64),
            Err(e) => CellValue::Error(e),
        },
        "COUNT" => match count_numbers(args, ev) {
            Ok(n) => CellValue::Number(n as f64),
            Err(e) => CellValue::Error(e),
        },
        "SUBTOTAL" => subtotal(args, ev),
        "IF" => eval_if(args, ev),
        "ABS" => one_number(args, ev).map(|x| CellValue::Number(x.abs())).unwrap_or_else(CellValue::Error),
        "ROUND" => round(args, ev),
        "FIXED" => fixed_or_dollar(args, ev, false),
        "DOLLAR" => fixed_or_dollar(args, ev, true),
        "OFFSET" | "INDEX" => match resolve_ref_call(name, args, ev, current) {
            Ok(op) => deref_operand(&op, ev),
            Err(e) => CellValue::Error(e),
        },
        "ROW" => row_fn(args, current),
        _ => CellValue::Error(ErrorCode::Name),
    }
}

/// `OFFSET` and `INDEX` in reference position: resolve to the cell they name.
pub(crate) fn resolve_ref_call(
    name: &str,
    args: &[Operand],
    ev: &mut Evaluator,
    _current: &CellAddress,
) -> Result<Operand, ErrorCode> {
    match name {
        "OFFSET" => {
            if args.len() != 3 {
                return Err(ErrorCode::Value);
            }
            let base = match &args[0] {
                Operand::Reference(a) => a.clone(),
                Operand::Range(r) => r.single_cell().ok_or(ErrorCode::Value)?,
                Operand::Value(CellValue::Error(e)) => return Err(*e),
                Operand::Value(_) => return Err(ErrorCode::Value),
            };
            let rows = int_arg(&args[1], ev)?;
            let cols = int_arg(&args[2], ev)?;
            let col = base.col as i64 + cols;
            let row = base.row as i64 + rows;
            if col < 1 || col > MAX_COL as i64 || row < 1 || row > MAX_ROW as i64 {
                return Err(ErrorCode::Ref);
            }
            Ok(Operand::Reference(CellAddress::new(base.sheet, col as u32, row as u32)))
        }
        "INDEX" => {
            if args.len() != 2 {
                return Err(ErrorCode::Value);
            }
            let range = match &args[0] {
                Operand::Range(r) => r.clone(),
                Operand::Reference(a) => CellRange::single(a),
                Operand::Value(CellValue::Error(e)) => return Err(*e),
                Operand::Value(_) => return Err(ErrorCode::Value),
            };
            let n = int_arg(&args[1], ev)?;
            index_cell(&range, n).map(Operand::Reference).ok_or(ErrorCode::Ref)
        }
        _ => Err(ErrorCode::Name),
    }
}

/// The `n`-th cell of a range in row-major order. Whole-column ranges address
/// row `n` directly.
pub(crate) fn index_cell(range: &CellRange, n: i64) -> Option<CellAddress> {
    if n < 1 {
        return None;
    }
    match range.rows {
        None => {
            if range.start_col != range.end_col || n > MAX_ROW as i64 {
                return None;
            }
            Some(CellAddress::new(range.sheet.clone(), range.start_col, n as u32))
        }
        Some((r1, r2)) => {
            let width = (range.end_col - range.start_col + 1) as i64;
            let height = (r2 - r1 + 1) as i64;
            if n > width * height {
                return None;
            }
            let row = r1 as i64 + (n - 1) / width;
            let col = range.start_col as i64 + (n - 1) % width;
            Some(CellAddress::new(range.sheet.clone(), col as u32, row as u32))
        }
    }
}

fn row_fn(args: &[Operand], current: &CellAddress) -> CellValue {
    match args {
        [] => CellValue::Number(current.row as f64),
        [Operand::Reference(a)] => CellValue::Number(a.row as f64),
        [Operand::Range(r)] => match r.rows {
            Some((r1, _)) => CellValue::Number(r1 as f64),
            None => CellValue::Number(1.0),
        },
        _ => CellValue::Error(ErrorCode::Value),
    }
}

/// Addresses of the cells actually present in a range, row-major.
/// Whole-column ranges clip to the sheet's used extent. Absent cells are
/// blank and never contribute to an aggregate, so they are not materialized.
pub(crate) fn present_range_cells(ev: &Evaluator, range: &CellRange) -> Result<Vec<CellAddress>, ErrorCode> {
    let sheet = ev.workbook().sheet(&range.sheet).ok_or(ErrorCode::Ref)?;
    let (row_start, row_end) = match range.rows {
        Some(bounds) => bounds,
        None => match sheet.used_extent() {
            Some((max_row, _)) => (1, max_row),
            None => return Ok(Vec::new()),
        },
    };
    Ok(sheet
        .cells_in_rect(range.start_col, range.end_col, row_start, row_end)
        .map(|c| c.address.clone())
        .collect())
}

fn fold_numbers(args: &[Operand], ev: &mut Evaluator) -> Result<(f64, usize), ErrorCode> {
    fn visit(v: CellValue, sum: &mut f64, count: &mut usize) -> Result<(), ErrorCode> {
        match v {
            CellValue::Number(n) => {
                *sum += n;
                *count += 1;
                Ok(())
            }
            CellValue::Error(e) => Err(e),
            _ => Ok(()),
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for arg in args {
        match arg {
            Operand::Range(r) => {
                for addr in present_range_cells(ev, r)? {
                    visit(ev.cell_value(&addr), &mut sum, &mut count)?;
                }
            }
            Operand::Reference(a) => visit(ev.cell_value(a), &mut sum, &mut count)?,
            Operand::Value(v) => match v {
                CellValue::Error(e) => return Err(*e),
                CellValue::Blank => {}
                other => {
                    let n = to_number(other)?;
                    sum += n;
                    count += 1;
                }
            },
        }
    }
    Ok((sum, count))
}

fn count_numbers(args: &[Operand], ev: &mut Evaluator) -> Result<usize, ErrorCode> {
    let mut count = 0usize;
    for arg in args {
        match arg {
            Operand::Range(r) => {
                for addr in present_range_cells(ev, r)? {
                    match ev.cell_value(&addr) {
                        CellValue::Number(_) => count += 1,
                        CellValue::Error(e) => return Err(e),
                        _ => {}
                    }
                }
            }
            Operand::Reference(a) => {
                if let CellValue::Number(_) = ev.cell_value(a) {
                    count += 1;
                }
            }
            Operand::Value(v) => match v {
                CellValue::Error(e) => return Err(*e),
                CellValue::Number(_) | CellValue::Boolean(_) => count += 1,
                CellValue::Text(s) if lenient_number(s).is_some() => count += 1,
                _ => {}
            },
        }
    }
    Ok(count)
}

/// `SUBTOTAL(9, range...)`: like `SUM` over the ranges, but any cell whose own
/// formula is rooted in a `SUBTOTAL` call is skipped entirely, so nested
/// subtotals are not double counted. Function codes other than 9 error.
fn subtotal(args: &[Operand], ev: &mut Evaluator) -> CellValue {
    if args.len() < 2 {
        return CellValue::Error(ErrorCode::Value);
    }
    let code = match number_operand(&args[0], ev) {
        Ok(n) => n,
        Err(e) => return CellValue::Error(e),
    };
    if code != 9.0 {
        return CellValue::Error(ErrorCode::Value);
    }
    let mut sum = 0.0;
    for arg in &args[1..] {
        let cells = match arg {
            Operand::Range(r) => match present_range_cells(ev, r) {
                Ok(c) => c,
                Err(e) => return CellValue::Error(e),
            },
            Operand::Reference(a) => vec![a.clone()],
            Operand::Value(_) => return CellValue::Error(ErrorCode::Value),
        };
        for addr in cells {
            if is_subtotal_cell(ev, &addr) {
                continue;
            }
            match ev.cell_value(&addr) {
                CellValue::Number(n) => sum += n,
                CellValue::Error(e) => return CellValue::Error(e),
                _ => {}
            }
        }
    }
    CellValue::Number(sum)
}

pub(crate) fn is_subtotal_cell(ev: &Evaluator, addr: &CellAddress) -> bool {
    ev.workbook()
        .cell(addr)
        .and_then(|c| c.formula.as_ref())
        .map(|ast| ast.is_call("SUBTOTAL"))
        .unwrap_or(false)
}

fn eval_if(args: &[Operand], ev: &mut Evaluator) -> CellValue {
    if args.len() < 2 || args.len() > 3 {
        return CellValue::Error(ErrorCode::Value);
    }
    let cond = match to_condition(&deref_operand(&args[0], ev)) {
        Ok(b) => b,
        Err(e) => return CellValue::Error(e),
    };
    if cond {
        deref_operand(&args[1], ev)
    } else if let Some(arg) = args.get(2) {
        deref_operand(arg, ev)
    } else {
        CellValue::Boolean(false)
    }
}

fn one_number(args: &[Operand], ev: &mut Evaluator) -> Result<f64, ErrorCode> {
    if args.len() != 1 {
        return Err(ErrorCode::Value);
    }
    number_operand(&args[0], ev)
}

fn round(args: &[Operand], ev: &mut Evaluator) -> CellValue {
    if args.len() != 2 {
        return CellValue::Error(ErrorCode::Value);
    }
    let x = match number_operand(&args[0], ev) {
        Ok(n) => n,
        Err(e) => return CellValue::Error(e),
    };
    let digits = match number_operand(&args[1], ev) {
        Ok(n) => n.trunc() as i32,
        Err(e) => return CellValue::Error(e),
    };
    let scale = 10f64.powi(digits);
    let rounded = (x * scale).round() / scale;
    if rounded.is_finite() {
        CellValue::Number(rounded)
    } else {
        CellValue::Error(ErrorCode::Num)
    }
}

fn fixed_or_dollar(args: &[Operand], ev: &mut Evaluator, dollar: bool) -> CellValue {
    if args.is_empty() || args.len() > 2 {
        return CellValue::Error(ErrorCode::Value);
    }
    let x = match number_operand(&args[0], ev) {
        Ok(n) => n,
        Err(e) => return CellValue::Error(e),
    };
    let decimals = match args.get(1) {
        None => 2,
        Some(arg) => match number_operand(arg, ev) {
            Ok(n) => n.trunc() as i64,
            Err(e) => return CellValue::Error(e),
        },
    };
    match fixed_text(x, decimals, dollar) {
        Ok(text) => CellValue::Text(text),
        Err(e) => CellValue::Error(e),
    }
}

/// Render a number with thousands separators and a fixed decimal count,
/// rounding half away from zero. Negative `decimals` rounds left of the
/// decimal point.
pub(crate) fn fixed_text(x: f64, decimals: i64, dollar: bool) -> Result<String, ErrorCode> {
    if !(-127..=127).contains(&decimals) || !x.is_finite() {
        return Err(ErrorCode::Value);
    }
    let d = decimals.clamp(-18, 18);
    let negative = x < 0.0;
    let ax = x.abs();
    let (int_digits, frac_digits) = if d >= 0 {
        let scaled = ax * 10f64.powi(d as i32);
        if scaled >= 1e18 {
            return Err(ErrorCode::Num);
        }
        let n = scaled.round() as u128;
        let pow = 10u128.pow(d as u32);
        let frac = if d == 0 { String::new() } else { format!("{:0width$}", n % pow, width = d as usize) };
        (n / pow, frac)
    } else {
        let pow_f = 10f64.powi((-d) as i32);
        let scaled = ax / pow_f;
        if scaled >= 1e18 {
            return Err(ErrorCode::Num);
        }
        let n = scaled.round() as u128 * 10u128.pow((-d) as u32);
        (n, String::new())
    };
    let grouped = group_thousands(int_digits);
    let mut out = String::new();
    if negative && (int_digits > 0 || frac_digits.bytes().any(|b| b != b'0')) {
        out.push('-');
    }
    if dollar {
        out.push('$');
    }
    out.push_str(&grouped);
    if !frac_digits.is_empty() {
        out.push('.');
        out.push_str(&frac_digits);
    }
    Ok(out)
}

fn group_thousands(mut n: u128) -> String {
    if n == 0 {
        return "0".to_string();
    }
    let mut groups = Vec::new();
    while n > 0 {
        groups.push((n % 1000) as u16);
        n /= 1000;
    }
    let mut out = groups.pop().map(|g| g.to_string()).unwrap_or_default();
    while let Some(g) = groups.pop() {
        out.push(',');
        out.push_str(&format!("{g:03}"));
    }
    out
}

fn number_operand(arg: &Operand, ev: &mut Evaluator) -> Result<f64, ErrorCode> {
    to_number(&deref_operand(arg, ev))
}

fn int_arg(arg: &Operand, ev: &mut Evaluator) -> Result<i64, ErrorCode> {
    Ok(number_operand(arg, ev)?.trunc() as i64)
}

/// Arithmetic coercion: numbers pass through, booleans become 0/1, blanks
/// become 0, and text is parsed leniently (thousands separators and a leading
/// `$` are accepted). Non-numeric text is an error.
pub(crate) fn to_number(v: &CellValue) -> Result<f64, ErrorCode> {
    match v {
        CellValue::Number(n) => Ok(*n),
        CellValue::Boolean(b) => Ok(if *b { 1.0 } else { 0.0 }),
        CellValue::Blank => Ok(0.0),
        CellValue::Text(s) => lenient_number(s).ok_or(ErrorCode::Value),
        CellValue::Error(e) => Err(*e),
    }
}

pub(crate) fn to_condition(v: &CellValue) -> Result<bool, ErrorCode> {
    match v {
        CellValue::Boolean(b) => Ok(*b),
        CellValue::Number(n) => Ok(*n != 0.0),
        CellValue::Blank => Ok(false),
        CellValue::Text(_) => Err(ErrorCode::Value),
        CellValue::Error(e) => Err(*e),
    }
}

fn to_text(v: &CellValue) -> String {
    match v {
        CellValue::Number(n) => fmt_number(*n),
        CellValue::Text(s) => s.clone(),
        CellValue::Boolean(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
        CellValue::Blank => String::new(),
        CellValue::Error(_) => unreachable!("errors propagate before rendering"),
    }
}

pub(crate) fn lenient_number(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    let (negative, t) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let t = t.strip_prefix('$').unwrap_or(t);
    let parse_plain = |txt: &str| txt.parse::<f64>().ok().filter(|v| v.is_finite());
    let value = if t.contains(',') {
        let (int_part, frac) = match t.split_once('.') {
            Some((i, f)) => (i, Some(f)),
            None => (t, None),
        };
        let groups: Vec<&str> = int_part.split(',').collect();
        let digits = |g: &str| !g.is_empty() && g.bytes().all(|b| b.is_ascii_digit());
        if groups.len() < 2 || groups[0].is_empty() || groups[0].len() > 3 || !digits(groups[0]) {
            return None;
        }
        if groups[1..].iter().any(|g| g.len() != 3 || !digits(g)) {
            return None;
        }
        if let Some(f) = frac {
            if !f.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
        }
        let mut joined: String = groups.concat();
        if let Some(f) = frac {
            joined.push('.');
            joined.push_str(f);
        }
        parse_plain(&joined)?
    } else {
        parse_plain(t)?
    };
    Some(if negative { -value } else { value })
}

pub(crate) fn binary_op(op: BinaryOp, a: CellValue, b: CellValue) -> CellValue {
    if let CellValue::Error(e) = a {
        return CellValue::Error(e);
    }
    if let CellValue::Error(e) = b {
        return CellValue::Error(e);
    }
    if op.is_comparison() {
        return match compare(&a, &b) {
            Ok(ord) => CellValue::Boolean(match op {
                BinaryOp::Eq => ord == std::cmp::Ordering::Equal,
                BinaryOp::Ne => ord != std::cmp::Ordering::Equal,
                BinaryOp::Lt => ord == std::cmp::Ordering::Less,
                BinaryOp::Le => ord != std::cmp::Ordering::Greater,
                BinaryOp::Gt => ord == std::cmp::Ordering::Greater,
                BinaryOp::Ge => ord != std::cmp::Ordering::Less,
                _ => unreachable!(),
            }),
            Err(e) => CellValue::Error(e),
        };
    }
    if op == BinaryOp::Concat {
        return CellValue::Text(format!("{}{}", to_text(&a), to_text(&b)));
    }
    let (x, y) = match (to_number(&a), to_number(&b)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return CellValue::Error(e),
    };
    let result = match op {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => {
            if y == 0.0 {
                return CellValue::Error(ErrorCode::Div0);
            }
            x / y
        }
        BinaryOp::Pow => {
            if x == 0.0 && y == 0.0 {
                return CellValue::Error(ErrorCode::Num);
            }
            x.powf(y)
        }
        _ => unreachable!(),
    };
    if result.is_finite() {
        CellValue::Number(result)
    } else {
        CellValue::Error(ErrorCode::Num)
    }
}

pub(crate) fn unary_op(op: UnaryOp, v: CellValue) -> CellValue {
    if let CellValue::Error(e) = v {
        return CellValue::Error(e);
    }
    match to_number(&v) {
        Ok(n) => CellValue::Number(match op {
            UnaryOp::Neg => -n,
            UnaryOp::Percent => n / 100.0,
        }),
        Err(e) => CellValue::Error(e),
    }
}

/// Ordering for comparison operators. Blank coerces to the other side's zero
/// value; across types, numbers sort before text before booleans; text
/// compares case-insensitively.
fn compare(a: &CellValue, b: &CellValue) -> Result<std::cmp::Ordering, ErrorCode> {
    use std::cmp::Ordering;
    use CellValue::*;
    let ord = match (a, b) {
        (Blank, Blank) => Ordering::Equal,
        (Blank, Number(n)) => cmp_f64(0.0, *n),
        (Number(n), Blank) => cmp_f64(*n, 0.0),
        (Blank, Text(s)) => cmp_text("", s),
        (Text(s), Blank) => cmp_text(s, ""),
        (Blank, Boolean(x)) => false.cmp(x),
        (Boolean(x), Blank) => x.cmp(&false),
        (Number(x), Number(y)) => cmp_f64(*x, *y),
        (Text(x), Text(y)) => cmp_text(x, y),
        (Boolean(x), Boolean(y)) => x.cmp(y),
        (x, y) => rank(x).cmp(&rank(y)),
    };
    Ok(ord)
}

fn cmp_f64(x: f64, y: f64) -> std::cmp::Ordering {
    x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal)
}

fn cmp_text(x: &str, y: &str) -> std::cmp::Ordering {
    x.to_lowercase().cmp(&y.to_lowercase())
}

fn rank(v: &CellValue) -> u8 {
    match v {
        CellValue::Number(_) => 0,
        CellValue::Text(_) => 1,
        CellValue::Boolean(_) => 2,
        CellValue::Blank => 0,
        CellValue::Error(_) => 3,
    }
}
