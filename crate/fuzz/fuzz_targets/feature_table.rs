#![no_main]

use libfuzzer_sys::fuzz_target;
use mcld_transfer::FeatureTable;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = FeatureTable::decode(data) {
        let again = FeatureTable::decode(&t.encode().unwrap()).unwrap();
        assert_eq!(again.labels, t.labels);
    }
});
