//! Dependency graph construction and static cycle classification.
//!
//! Computed range endpoints are resolved before cycle classification: a range
//! end like `OFFSET(B67,-1,0)` written in B67 names B66, not B67, so it is not
//! a cycle even though the anchor cell appears in the formula. Anchor cells of
//! endpoints that cannot be resolved statically are still listed as
//! precedents, but only value dependencies participate in cycle detection.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::addr::{CellAddress, CellRange, MAX_COL, MAX_ROW};
use crate::formula::{extract_references, BinaryOp, FormulaNode, RangeEndpoint, RangeNode, UnaryOp};
use crate::workbook::Workbook;

use super::functions::index_cell;

#[derive(Debug, Clone, Default)]
pub struct DepGraph {
    edges: BTreeMap<CellAddress, BTreeSet<CellAddress>>,
    dynamic_nodes: BTreeSet<CellAddress>,
    cycle_cells: BTreeSet<CellAddress>,
}

impl DepGraph {
    /// Precedents of a formula cell (cells it reads or is anchored on).
    pub fn precedents(&self, addr: &CellAddress) -> Option<&BTreeSet<CellAddress>> {
        self.edges.get(addr)
    }

    pub fn edges(&self) -> &BTreeMap<CellAddress, BTreeSet<CellAddress>> {
        &self.edges
    }

    /// Cells whose precedents include a range endpoint that is re-resolved at
    /// evaluation time.
    pub fn dynamic_nodes(&self) -> &BTreeSet<CellAddress> {
        &self.dynamic_nodes
    }

    /// Members of true static cycles; they evaluate to `#CIRC!`.
    pub fn cycle_cells(&self) -> &BTreeSet<CellAddress> {
        &self.cycle_cells
    }

    pub fn in_cycle(&self, addr: &CellAddress) -> bool {
        self.cycle_cells.contains(addr)
    }
}

/// Build the dependency graph for every formula cell in the workbook.
pub fn build_graph(wb: &Workbook) -> DepGraph {
    let mut graph = DepGraph::default();
    // Value dependencies only, for cycle classification.
    let mut value_deps: BTreeMap<CellAddress, BTreeSet<CellAddress>> = BTreeMap::new();

    for sheet in wb.sheets() {
        for cell in sheet.cells() {
            let Some(ast) = &cell.formula else { continue };
            let host = &cell.address;
            let refs = extract_references(ast, sheet.name());

            let mut precedents: BTreeSet<CellAddress> = refs.cells.clone();
            for range in &refs.ranges {
                expand_range(wb, range, &mut precedents);
            }
            let mut deps: BTreeSet<CellAddress> = BTreeSet::new();
            collect_value_deps(ast, sheet.name(), host, wb, &mut deps);
            for range in &refs.dynamic {
                if let Some(resolved) = resolve_dynamic_range(range, sheet.name(), host) {
                    expand_range(wb, &resolved, &mut precedents);
                }
                graph.dynamic_nodes.insert(host.clone());
            }
            graph.edges.insert(host.clone(), precedents);
            value_deps.insert(host.clone(), deps);
        }
    }

    graph.cycle_cells = find_cycles(&value_deps);
    graph
}

fn expand_range(wb: &Workbook, range: &CellRange, out: &mut BTreeSet<CellAddress>) {
    let Some(sheet) = wb.sheet(&range.sheet) else { return };
    let (row_start, row_end) = match range.rows {
        Some(bounds) => bounds,
        None => match sheet.used_extent() {
            Some((max_row, _)) => (1, max_row),
            None => return,
        },
    };
    for cell in sheet.cells_in_rect(range.start_col, range.end_col, row_start, row_end) {
        out.insert(cell.address.clone());
    }
}

/// Cells whose *values* this formula reads: bare references, static ranges,
/// and statically resolvable dynamic ranges. Reference-position arguments of
/// `OFFSET`/`INDEX` are geometry, not value reads.
fn collect_value_deps(
    node: &FormulaNode,
    sheet: &str,
    host: &CellAddress,
    wb: &Workbook,
    out: &mut BTreeSet<CellAddress>,
) {
    match node {
        FormulaNode::Number(_) | FormulaNode::Text(_) | FormulaNode::Bool(_) => {}
        FormulaNode::Ref(r) => {
            out.insert(r.address(sheet));
        }
        FormulaNode::Range(range) => {
            let resolved = range
                .as_static(sheet)
                .or_else(|| resolve_dynamic_range(range, sheet, host));
            if let Some(r) = resolved {
                expand_range(wb, &r, out);
            } else {
                // Endpoint expressions may still read cell values for their
                // offsets or positions.
                for ep in [&range.start, &range.end] {
                    if let RangeEndpoint::Dynamic(expr) = ep {
                        dynamic_endpoint_value_deps(expr, sheet, host, wb, out);
                    }
                }
            }
        }
        FormulaNode::Unary(_, operand) => collect_value_deps(operand, sheet, host, wb, out),
        FormulaNode::Binary(_, left, right) => {
            collect_value_deps(left, sheet, host, wb, out);
            collect_value_deps(right, sheet, host, wb, out);
        }
        FormulaNode::Call(name, args) => {
            let skip_first = matches!(name.as_str(), "OFFSET" | "INDEX");
            for (i, arg) in args.iter().enumerate() {
                if skip_first && i == 0 {
                    continue;
                }
                collect_value_deps(arg, sheet, host, wb, out);
            }
        }
        FormulaNode::Paren(inner) => collect_value_deps(inner, sheet, host, wb, out),
    }
}

fn dynamic_endpoint_value_deps(
    expr: &FormulaNode,
    sheet: &str,
    host: &CellAddress,
    wb: &Workbook,
    out: &mut BTreeSet<CellAddress>,
) {
    if let FormulaNode::Call(name, args) = expr.strip_parens() {
        let skip_first = matches!(name.as_str(), "OFFSET" | "INDEX");
        for (i, arg) in args.iter().enumerate() {
            if skip_first && i == 0 {
                continue;
            }
            collect_value_deps(arg, sheet, host, wb, out);
        }
    }
}

/// Resolve a dynamic range against its host cell without evaluating any cell
/// values. Returns `None` when an endpoint depends on cell contents.
pub(crate) fn resolve_dynamic_range(
    range: &RangeNode,
    current_sheet: &str,
    host: &CellAddress,
) -> Option<CellRange> {
    let sheet = range.sheet.clone().unwrap_or_else(|| current_sheet.to_string());
    #[derive(Clone, Copy)]
    enum Resolved {
        Cell(u32, u32),
        Col(u32),
    }
    let resolve = |ep: &RangeEndpoint| -> Option<Resolved> {
        match ep {
            RangeEndpoint::Cell { col, row, .. } => Some(Resolved::Cell(*col, *row)),
            RangeEndpoint::Column { col, .. } => Some(Resolved::Col(*col)),
            RangeEndpoint::Dynamic(expr) => {
                let (col, row) = resolve_ref_expr_static(expr, &sheet, host)?;
                Some(Resolved::Cell(col, row))
            }
        }
    };
    match (resolve(&range.start)?, resolve(&range.end)?) {
        (Resolved::Cell(c1, r1), Resolved::Cell(c2, r2)) => {
            Some(CellRange::cells(sheet, c1, r1, c2, r2))
        }
        (Resolved::Col(c1), Resolved::Col(c2)) => Some(CellRange::whole_columns(sheet, c1, c2)),
        _ => None,
    }
}

fn resolve_ref_expr_static(expr: &FormulaNode, sheet: &str, host: &CellAddress) -> Option<(u32, u32)> {
    let FormulaNode::Call(name, args) = expr.strip_parens() else { return None };
    match name.as_str() {
        "OFFSET" => {
            if args.len() != 3 {
                return None;
            }
            let FormulaNode::Ref(base) = args[0].strip_parens() else { return None };
            if let Some(s) = &base.sheet {
                if !s.eq_ignore_ascii_case(sheet) {
                    return None;
                }
            }
            let rows = const_int(&args[1], host)?;
            let cols = const_int(&args[2], host)?;
            let col = base.col as i64 + cols;
            let row = base.row as i64 + rows;
            if col < 1 || col > MAX_COL as i64 || row < 1 || row > MAX_ROW as i64 {
                return None;
            }
            Some((col as u32, row as u32))
        }
        "INDEX" => {
            if args.len() != 2 {
                return None;
            }
            let FormulaNode::Range(inner) = args[0].strip_parens() else { return None };
            let inner = inner.as_static(sheet)?;
            if !inner.sheet.eq_ignore_ascii_case(sheet) {
                return None;
            }
            let n = const_int(&args[1], host)?;
            index_cell(&inner, n).map(|a| (a.col, a.row))
        }
        _ => None,
    }
}

fn const_int(expr: &FormulaNode, host: &CellAddress) -> Option<i64> {
    const_num(expr, host).map(|v| v.trunc() as i64)
}

fn const_num(expr: &FormulaNode, host: &CellAddress) -> Option<f64> {
    match expr {
        FormulaNode::Number(n) => Some(*n),
        FormulaNode::Paren(inner) => const_num(inner, host),
        FormulaNode::Unary(UnaryOp::Neg, inner) => const_num(inner, host).map(|v| -v),
        FormulaNode::Unary(UnaryOp::Percent, inner) => const_num(inner, host).map(|v| v / 100.0),
        FormulaNode::Binary(op, left, right) => {
            let x = const_num(left, host)?;
            let y = const_num(right, host)?;
            let v = match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div => {
                    if y == 0.0 {
                        return None;
                    }
                    x / y
                }
                _ => return None,
            };
            v.is_finite().then_some(v)
        }
        FormulaNode::Call(name, args) if name == "ROW" && args.is_empty() => Some(host.row as f64),
        _ => None,
    }
}

/// Strongly connected components of size > 1, plus self-loops.
fn find_cycles(deps: &BTreeMap<CellAddress, BTreeSet<CellAddress>>) -> BTreeSet<CellAddress> {
    let nodes: Vec<&CellAddress> = deps.keys().collect();
    let index_of: HashMap<&CellAddress, usize> = nodes.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let adjacency: Vec<Vec<usize>> = nodes
        .iter()
        .map(|addr| {
            deps[*addr]
                .iter()
                .filter_map(|dep| index_of.get(dep).copied())
                .collect()
        })
        .collect();

    // Iterative Tarjan.
    let n = nodes.len();
    let mut index = vec![usize::MAX; n];
    let mut lowlink = vec![usize::MAX; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut cyclic: BTreeSet<CellAddress> = BTreeSet::new();

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // (node, next child position)
        let mut call_stack: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut child)) = call_stack.last_mut() {
            if *child == 0 {
                index[v] = next_index;
                lowlink[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *child < adjacency[v].len() {
                let w = adjacency[v][*child];
                *child += 1;
                if index[w] == usize::MAX {
                    call_stack.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            } else {
                call_stack.pop();
                if let Some(&mut (parent, _)) = call_stack.last_mut() {
                    lowlink[parent] = lowlink[parent].min(lowlink[v]);
                }
                if lowlink[v] == index[v] {
                    let mut component = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    let self_loop = component.len() == 1 && adjacency[v].contains(&v);
                    if component.len() > 1 || self_loop {
                        for w in component {
                            cyclic.insert(nodes[w].clone());
                        }
                    }
                }
            }
        }
    }
    cyclic
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workbook::WorkbookBuilder;

    fn ladder(formula: &str) -> Workbook {
        let mut b = WorkbookBuilder::new().sheet("Data");
        for row in 51..=66 {
            b = b.value(&format!("B{row}"), (row - 50) as f64);
        }
        b.formula("B67", formula).build().unwrap()
    }

    #[test]
    fn static_subtotal_precedents() {
        let wb = ladder("=SUBTOTAL(9,B51:B66)");
        let graph = build_graph(&wb);
        let host = CellAddress::new("Data", 2, 67);
        let precedents = graph.precedents(&host).unwrap();
        assert_eq!(precedents.len(), 16);
        assert!(precedents.contains(&CellAddress::new("Data", 2, 51)));
        assert!(precedents.contains(&CellAddress::new("Data", 2, 66)));
        assert!(graph.cycle_cells().is_empty());
    }

    #[test]
    fn constants_only_has_no_edges() {
        let wb = WorkbookBuilder::new().sheet("S").value("A1", 1.0).value("A2", 2.0).build().unwrap();
        let graph = build_graph(&wb);
        assert!(graph.edges().is_empty());
    }

    #[test]
    fn offset_anchor_in_own_cell_is_not_a_cycle() {
        let wb = ladder("=SUBTOTAL(9,B51:OFFSET(B67,-1,0))");
        let graph = build_graph(&wb);
        let host = CellAddress::new("Data", 2, 67);
        assert!(!graph.in_cycle(&host));
        assert!(graph.dynamic_nodes().contains(&host));
        // The resolved endpoint is B66, so B66 is a precedent and B67 is not
        // a value dependency of itself.
        let precedents = graph.precedents(&host).unwrap();
        assert!(precedents.contains(&CellAddress::new("Data", 2, 66)));
    }

    #[test]
    fn index_row_endpoint_resolves() {
        let wb = ladder("=SUBTOTAL(9,B51:INDEX(B:B,ROW()-1))");
        let graph = build_graph(&wb);
        let host = CellAddress::new("Data", 2, 67);
        assert!(!graph.in_cycle(&host));
        let range = RangeNode {
            sheet: None,
            start: RangeEndpoint::Cell { col: 2, row: 51, abs_col: false, abs_row: false },
            end: RangeEndpoint::Dynamic(Box::new(FormulaNode::Call(
                "INDEX".into(),
                vec![
                    FormulaNode::Range(RangeNode {
                        sheet: None,
                        start: RangeEndpoint::Column { col: 2, abs: false },
                        end: RangeEndpoint::Column { col: 2, abs: false },
                    }),
                    FormulaNode::Binary(
                        BinaryOp::Sub,
                        Box::new(FormulaNode::Call("ROW".into(), vec![])),
                        Box::new(FormulaNode::Number(1.0)),
                    ),
                ],
            ))),
        };
        let resolved = resolve_dynamic_range(&range, "Data", &host).unwrap();
        assert_eq!(resolved, CellRange::cells("Data", 2, 51, 2, 66));
    }

    #[test]
    fn direct_and_mutual_cycles_detected() {
        let wb = WorkbookBuilder::new()
            .sheet("S")
            .formula("A1", "=A1")
            .formula("B1", "=C1+1")
            .formula("C1", "=B1+1")
            .formula("D1", "=B1")
            .build()
            .unwrap();
        let graph = build_graph(&wb);
        assert!(graph.in_cycle(&CellAddress::new("S", 1, 1)));
        assert!(graph.in_cycle(&CellAddress::new("S", 2, 1)));
        assert!(graph.in_cycle(&CellAddress::new("S", 3, 1)));
        // Dependents of a cycle are not themselves cycle members.
        assert!(!graph.in_cycle(&CellAddress::new("S", 4, 1)));
    }
}
