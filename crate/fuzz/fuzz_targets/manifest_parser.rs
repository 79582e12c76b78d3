#![no_main]

use libfuzzer_sys::fuzz_target;
use synclaw::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = Manifest::parse(text) {
        let json = m.to_json().expect("parsed manifest serialises");
        let again = Manifest::parse(std::str::from_utf8(&json).unwrap()).expect("serialised manifest parses");
        assert_eq!(again, m);
    }
});
