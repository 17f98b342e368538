//! Property tests: parser/printer round trips, address grammar totality,
//! canonical save/load fixpoint, and recalculation against a brute-force
//! oracle.

use proptest::prelude::*;

use crossfoot_core::addr::{col_to_letters, parse_a1, parse_address, A1Ref};
use crossfoot_core::canonical::{load_canonical, save_canonical};
use crossfoot_core::engine::recalculate;
use crossfoot_core::formula::{
    parse_formula, print_formula, BinaryOp, FormulaNode, RangeEndpoint, RangeNode, UnaryOp,
};
use crossfoot_core::value::CellValue;
use crossfoot_core::workbook::WorkbookBuilder;

fn arb_sheet() -> impl Strategy<Value = Option<String>> {
    prop_oneof![
        3 => Just(None),
        1 => Just(Some("Data".to_string())),
        1 => Just(Some("My Sheet".to_string())),
        1 => Just(Some("it's".to_string())),
    ]
}

fn arb_ref() -> impl Strategy<Value = A1Ref> {
    (arb_sheet(), 1u32..=256, 1u32..=9999, any::<bool>(), any::<bool>()).prop_map(
        |(sheet, col, row, abs_col, abs_row)| A1Ref { sheet, col, row, abs_col, abs_row },
    )
}

fn arb_call_name() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("SUM".to_string()),
        Just("SUBTOTAL".to_string()),
        Just("OFFSET".to_string()),
        Just("INDEX".to_string()),
        Just("ROW".to_string()),
        Just("IF".to_string()),
        "[A-Z]{2,7}",
    ]
}

fn arb_node() -> impl Strategy<Value = FormulaNode> {
    let leaf = prop_oneof![
        (0.0..1e9f64).prop_map(FormulaNode::Number),
        "[ -~]{0,12}".prop_map(FormulaNode::Text),
        any::<bool>().prop_map(FormulaNode::Bool),
        arb_ref().prop_map(FormulaNode::Ref),
        (arb_sheet(), 1u32..=64, any::<bool>(), 1u32..=64, any::<bool>()).prop_map(
            |(sheet, c1, a1, c2, a2)| {
                FormulaNode::Range(RangeNode {
                    sheet,
                    start: RangeEndpoint::Column { col: c1, abs: a1 },
                    end: RangeEndpoint::Column { col: c2, abs: a2 },
                })
            }
        ),
        (arb_sheet(), 1u32..=64, 1u32..=999, 1u32..=64, 1u32..=999).prop_map(
            |(sheet, c1, r1, c2, r2)| {
                FormulaNode::Range(RangeNode {
                    sheet,
                    start: RangeEndpoint::Cell { col: c1, row: r1, abs_col: false, abs_row: false },
                    end: RangeEndpoint::Cell { col: c2, row: r2, abs_col: false, abs_row: false },
                })
            }
        ),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        let unary = prop_oneof![Just(UnaryOp::Neg), Just(UnaryOp::Percent)];
        let binary = prop_oneof![
            Just(BinaryOp::Add),
            Just(BinaryOp::Sub),
            Just(BinaryOp::Mul),
            Just(BinaryOp::Div),
            Just(BinaryOp::Pow),
            Just(BinaryOp::Concat),
            Just(BinaryOp::Eq),
            Just(BinaryOp::Ne),
            Just(BinaryOp::Lt),
            Just(BinaryOp::Le),
            Just(BinaryOp::Gt),
            Just(BinaryOp::Ge),
        ];
        let call = (arb_call_name(), prop::collection::vec(inner.clone(), 0..4))
            .prop_map(|(name, args)| FormulaNode::Call(name, args));
        let dynamic_range = (
            (1u32..=64, 1u32..=999),
            (arb_call_name(), prop::collection::vec(inner.clone(), 0..3)),
        )
            .prop_map(|((col, row), (name, args))| {
                FormulaNode::Range(RangeNode {
                    sheet: None,
                    start: RangeEndpoint::Cell { col, row, abs_col: false, abs_row: false },
                    end: RangeEndpoint::Dynamic(Box::new(FormulaNode::Call(name, args))),
                })
            });
        prop_oneof![
            4 => (unary, inner.clone()).prop_map(|(op, n)| FormulaNode::Unary(op, Box::new(n))),
            6 => (binary, inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| FormulaNode::Binary(op, Box::new(l), Box::new(r))),
            4 => call,
            1 => dynamic_range,
            2 => inner.prop_map(|n| FormulaNode::Paren(Box::new(n))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Printing and re-parsing preserves the structure of any AST, with
    /// parentheses inserted exactly where precedence requires them.
    #[test]
    fn print_parse_round_trip(node in arb_node()) {
        let text = print_formula(&node);
        let reparsed = parse_formula(&text)
            .unwrap_or_else(|e| panic!("printed formula failed to parse: {text} ({e})"));
        prop_assert!(
            reparsed.eq_ignoring_parens(&node),
            "round trip changed structure:\n  text: {text}\n  before: {node:?}\n  after: {reparsed:?}"
        );
        // Printing is a fixpoint: parse(print(x)) prints identically.
        prop_assert_eq!(print_formula(&reparsed), text);
    }
}

proptest! {
    /// The A1 grammar is total: every well-formed reference parses and
    /// renders back to the same address; small corruptions are rejected.
    #[test]
    fn address_grammar_total(
        col in 1u32..=16_384,
        row in 1u32..=1_048_576,
        abs_col in any::<bool>(),
        abs_row in any::<bool>(),
        sheet in prop_oneof![Just(None), Just(Some("Data")), Just(Some("My Sheet"))],
    ) {
        let mut text = String::new();
        if let Some(s) = sheet {
            if s.contains(' ') {
                text.push_str(&format!("'{s}'!"));
            } else {
                text.push_str(&format!("{s}!"));
            }
        }
        if abs_col { text.push('$'); }
        text.push_str(&col_to_letters(col));
        if abs_row { text.push('$'); }
        text.push_str(&row.to_string());

        let parsed = parse_a1(&text).expect("valid A1 reference");
        prop_assert_eq!(parsed.col, col);
        prop_assert_eq!(parsed.row, row);
        prop_assert_eq!(parsed.abs_col, abs_col);
        prop_assert_eq!(parsed.abs_row, abs_row);
        // Render/parse round trip hits the same address.
        let rendered = parsed.to_a1();
        prop_assert_eq!(parse_a1(&rendered).unwrap(), parsed);

        // Corruptions are rejected.
        let trailing = format!("{text}x");
        let leading_bang = format!("!{text}");
        prop_assert!(parse_address(&trailing, "S").is_err());
        prop_assert!(parse_address(&leading_bang, "S").is_err());
        prop_assert!(parse_address("", "S").is_err());
    }

    /// Canonical save/load reaches a byte-stable fixpoint and preserves the
    /// workbook.
    #[test]
    fn canonical_fixpoint(
        values in prop::collection::btree_map(
            (1u32..=12, 1u32..=30),
            prop_oneof![
                (0.0..1e6f64).prop_map(CellValue::Number),
                ((-1e6f64)..0.0).prop_map(CellValue::Number),
                "[ -~]{0,10}".prop_map(CellValue::Text),
                any::<bool>().prop_map(CellValue::Boolean),
            ],
            1..40,
        ),
        with_formula in any::<bool>(),
    ) {
        let mut b = WorkbookBuilder::new().sheet("Data");
        for ((col, row), value) in &values {
            let cell = format!("{}{row}", col_to_letters(*col));
            b = b.value(&cell, value.clone());
        }
        if with_formula {
            b = b.formula("AZ1", "=SUM(A1:L30)");
        }
        let wb = b.build().unwrap();
        let saved = save_canonical(&wb);
        let reloaded = load_canonical(&saved).expect("saved canonical loads");
        prop_assert_eq!(&reloaded, &wb);
        prop_assert_eq!(save_canonical(&reloaded), saved);
    }

    /// Recalculation of SUM/+/constant workbooks matches a brute-force
    /// direct-iteration oracle exactly, bit for bit.
    #[test]
    fn recalc_matches_brute_force(
        inputs in prop::collection::vec(-1e6f64..1e6, 2..24),
        spans in prop::collection::vec((0usize..24, 0usize..24), 1..8),
    ) {
        let n = inputs.len();
        let mut b = WorkbookBuilder::new().sheet("S");
        for (i, v) in inputs.iter().enumerate() {
            b = b.value(&format!("A{}", i + 1), *v);
        }
        let mut expected = Vec::new();
        for (f, (a, z)) in spans.iter().enumerate() {
            let (lo, hi) = (a % n, z % n);
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let use_sum = (a + z) % 2 == 0;
            let formula = if use_sum {
                format!("=SUM(A{}:A{})", lo + 1, hi + 1)
            } else {
                let terms: Vec<String> = (lo..=hi).map(|i| format!("A{}", i + 1)).collect();
                format!("={}", terms.join("+"))
            };
            b = b.formula(&format!("C{}", f + 1), &formula);
            // Oracle: direct fold over the same cells in the same order.
            let mut total = 0.0;
            for v in &inputs[lo..=hi] {
                total += v;
            }
            expected.push(total);
        }
        let wb = b.build().unwrap();
        let vm = recalculate(&wb);
        for (f, want) in expected.iter().enumerate() {
            let addr = parse_address(&format!("C{}", f + 1), "S").unwrap();
            let got = vm.value(&addr).as_number().expect("numeric result");
            prop_assert_eq!(got.to_bits(), want.to_bits(), "cell C{} got {} want {}", f + 1, got, want);
        }
    }
}
