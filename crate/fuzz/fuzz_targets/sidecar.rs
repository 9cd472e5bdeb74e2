#![no_main]

use libfuzzer_sys::fuzz_target;
use mcld_report::{render, Sidecar};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = Sidecar::parse(text) {
        let _ = render(&s);
    }
});
