#![no_main]

use libfuzzer_sys::fuzz_target;
use mad_core::harness::{read_report_csv, write_report_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(reports) = read_report_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    if write_report_csv(&mut buf, &reports).is_ok() {
        _ = read_report_csv(buf.as_slice());
    }
});
