#![no_main]

use libfuzzer_sys::fuzz_target;
use reshuffle::data::{parse_libsvm, parse_libsvm_with, serialize_libsvm, LibsvmOptions};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ds) = parse_libsvm(text) else { return };
    // whatever parses must survive a write and re-read unchanged
    let again = parse_libsvm_with(&serialize_libsvm(&ds), LibsvmOptions { dim: Some(ds.dim()) })
        .expect("serialized dataset must parse");
    assert_eq!(again, ds);
});
