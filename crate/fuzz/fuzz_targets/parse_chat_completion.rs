#![no_main]

use libfuzzer_sys::fuzz_target;
use mad_core::backend::parse_chat_completion;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        _ = parse_chat_completion(s);
    }
});
