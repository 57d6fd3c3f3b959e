#![no_main]

use freep::io::{parse_space, space_to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Anything that parses must survive a save/load round trip unchanged.
    if let Ok(space) = parse_space(text) {
        let again = parse_space(&space_to_json(&space)).expect("saved space reloads");
        assert_eq!(again.labels(), space.labels());
        for i in 0..space.len() {
            for j in 0..space.len() {
                assert_eq!(again.dist(i, j).to_bits(), space.dist(i, j).to_bits());
            }
        }
    }
});
