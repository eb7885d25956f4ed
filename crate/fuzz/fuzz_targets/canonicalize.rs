#![no_main]

use libfuzzer_sys::fuzz_target;
use mad_core::answer::{answers_equal, canonicalize};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let once = canonicalize(s);
    let twice = canonicalize(once.canonical());
    assert_eq!(once.canonical(), twice.canonical());
    assert!(answers_equal(&once, &once));
});
