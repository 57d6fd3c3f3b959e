#![no_main]

use freep::io::{decomposition_value, parse_decomposition, parse_space};
use libfuzzer_sys::fuzz_target;

const SPACE: &str = r#"{ "p": "1/2", "base": "0", "points": ["0","1","3"],
    "dist": [["0","1","9"],["1","0","4"],["9","4","0"]] }"#;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let space = parse_space(SPACE).unwrap();
    if let Ok(dec) = parse_decomposition(text, &space) {
        let _ = dec.residual_norm(&space);
        let again = parse_decomposition(&decomposition_value(&space, &dec).to_string(), &space)
            .expect("decomposition reloads");
        assert_eq!(again.terms(), dec.terms());
    }
});
