#![no_main]

use libfuzzer_sys::fuzz_target;
use mad_core::harness::{read_traces, write_traces};

// Anything that parses must survive a write/read round trip.
fuzz_target!(|data: &[u8]| {
    let Ok(traces) = read_traces(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_traces(&mut buf, &traces).unwrap();
    assert_eq!(read_traces(buf.as_slice()).unwrap(), traces);
});
