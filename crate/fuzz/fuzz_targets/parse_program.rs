#![no_main]

use libfuzzer_sys::fuzz_target;
use scriptsynth::dsl::{parse_program, print_program};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = parse_program(text) {
        // printing is a fixed point of parsing
        let printed = print_program(&p);
        let again = parse_program(&printed).expect("printed program parses");
        assert_eq!(again, p);
    }
});
