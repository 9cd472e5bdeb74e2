#![no_main]

use libfuzzer_sys::fuzz_target;
use mcld_models::data::cifar::{encode_records, parse_records};

// The first three bytes pick the image shape and class count.
fuzz_target!(|data: &[u8]| {
    if data.len() < 3 {
        return;
    }
    let shape = [1 + data[0] as usize % 3, 1 + data[1] as usize % 8, 1 + data[1] as usize / 32];
    let classes = data[2] as usize;
    if let Ok(set) = parse_records(&data[3..], shape, classes) {
        assert_eq!(encode_records(&set).unwrap(), &data[3..]);
    }
});
