#![no_main]

use libfuzzer_sys::fuzz_target;
use mcld_transfer::FeatureManifest;

fuzz_target!(|data: &[u8]| {
    let _ = FeatureManifest::parse(data);
});
