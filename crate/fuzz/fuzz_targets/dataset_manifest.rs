#![no_main]

use libfuzzer_sys::fuzz_target;
use mcld_models::data::DatasetManifest;

fuzz_target!(|data: &[u8]| {
    let _ = DatasetManifest::parse(data);
});
