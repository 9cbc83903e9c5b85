#![no_main]

use std::time::Duration;

use libfuzzer_sys::fuzz_target;
use scriptsynth::pbe::{parse_examples, synthesize, PbeOptions, SynthesisResult};

fuzz_target!(|data: &[u8]| {
    let Ok(ex) = parse_examples(data) else { return };
    if ex.len() > 4 {
        return;
    }
    let opts = PbeOptions { max_size: 4, timeout: Duration::from_millis(200) };
    if let SynthesisResult::Sat(f) = synthesize(&ex, &opts) {
        for e in &ex {
            assert_eq!(f.eval(&e.args), e.out);
        }
    }
});
