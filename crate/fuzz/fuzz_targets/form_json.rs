#![no_main]

use libfuzzer_sys::fuzz_target;

use antinv::forms::{Coframe, DifferentialForm};

fuzz_target!(|data: &[u8]| {
    let Ok(value) = serde_json::from_slice::<serde_json::Value>(data) else {
        return;
    };
    let coframe = Coframe::coordinate(&["x1", "x2", "y1", "y2"]);
    // Decoding untrusted form JSON must never panic; a successfully decoded
    // form must re-encode to a fixed point of the codec.
    if let Ok(form) = DifferentialForm::from_json(&value, &coframe) {
        let json = form.to_json();
        let again = DifferentialForm::from_json(&json, &coframe).expect("re-decode");
        assert_eq!(json, again.to_json());
        if form.degree() < 4 {
            let _ = form.exterior_derivative();
        }
    }
});
