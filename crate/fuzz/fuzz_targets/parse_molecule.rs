#![no_main]

use freep::io::{molecule_value, parse_molecule, parse_space};
use freep::number::Rational;
use libfuzzer_sys::fuzz_target;

const SPACE: &str = r#"{ "p": "1/2", "base": "o", "points": ["o","a","b"],
    "dist": [["0","1","1"],["1","0","1"],["1","1","0"]] }"#;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let space = parse_space(SPACE).unwrap();
    if let Ok(mu) = parse_molecule(text, &space) {
        assert_eq!(mu.total(), Rational::from_integer(0.into()));
        let again = parse_molecule(&molecule_value(&space, &mu).to_string(), &space).expect("molecule reloads");
        assert_eq!(again, mu);
    }
});

