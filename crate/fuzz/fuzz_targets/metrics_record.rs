#![no_main]

use libfuzzer_sys::fuzz_target;
use mcld_train::MetricRecord;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = serde_json::from_slice::<MetricRecord>(data) {
        let _ = r.recombined_total();
    }
});
