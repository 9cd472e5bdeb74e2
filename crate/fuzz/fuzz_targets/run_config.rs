#![no_main]

use libfuzzer_sys::fuzz_target;
use mcld_train::DistillRunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = DistillRunConfig::from_toml_str(text);
    }
});
