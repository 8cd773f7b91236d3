#![no_main]

use libfuzzer_sys::fuzz_target;

use antinv::symexpr;

const VARS: [&str; 4] = ["x1", "x2", "y1", "y2"];

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // The parser must never panic. On success, the canonical printer must
    // reproduce the same tree, and differentiation/evaluation must be total
    // up to their reported error cases.
    if let Ok(expr) = symexpr::parse(text, &VARS) {
        let printed = expr.to_string();
        let reparsed = symexpr::parse(&printed, &VARS)
            .unwrap_or_else(|e| panic!("printed form `{printed}` failed to reparse: {e}"));
        assert_eq!(
            expr, reparsed,
            "round trip changed the tree for `{printed}`"
        );

        let derivative = expr.differentiate("x1");
        let point = VARS
            .iter()
            .map(|v| ((*v).to_owned(), 0.375))
            .collect::<std::collections::HashMap<_, _>>();
        let _ = expr.evaluate(&point);
        let _ = derivative.evaluate(&point);
    }
});
