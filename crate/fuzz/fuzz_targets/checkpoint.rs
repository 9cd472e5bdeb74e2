#![no_main]

use libfuzzer_sys::fuzz_target;
use mcld_train::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let _ = Checkpoint::decode(data);
});
