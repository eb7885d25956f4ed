#![no_main]

use libfuzzer_sys::fuzz_target;
use mad_core::harness::read_dataset;

fuzz_target!(|data: &[u8]| {
    _ = read_dataset(data);
});
