#![no_main]

use libfuzzer_sys::fuzz_target;
use mad_core::signals::extract_self_confidence;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Some(c) = extract_self_confidence(s) {
        assert!((0.0..=1.0).contains(&c), "{c}");
    }
});
