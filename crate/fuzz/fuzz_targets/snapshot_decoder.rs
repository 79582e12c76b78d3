#![no_main]

use libfuzzer_sys::fuzz_target;
use synclaw_core::snapshot::Snapshot;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = Snapshot::decode(data) {
        let bytes = s.encode().expect("decoded snapshot encodes");
        assert_eq!(bytes, data);
    }
});
