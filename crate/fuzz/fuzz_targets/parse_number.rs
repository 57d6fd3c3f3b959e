#![no_main]

use freep::number::{format_rational, parse_rational, Exponent};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(value) = parse_rational(text) {
        assert_eq!(parse_rational(&format_rational(&value)).unwrap(), value);
    }
    if let Ok(p) = text.parse::<Exponent>() {
        let again: Exponent = p.to_string().parse().expect("exponent reparses");
        assert_eq!(again.value().to_bits(), p.value().to_bits());
    }
});
