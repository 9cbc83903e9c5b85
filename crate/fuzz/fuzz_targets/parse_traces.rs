#![no_main]

use libfuzzer_sys::fuzz_target;
use scriptsynth::trace::parse_traces;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = parse_traces(data) {
        let text = t.to_json().to_json_string();
        assert_eq!(parse_traces(text.as_bytes()).expect("serialized traces parse"), t);
    }
});
