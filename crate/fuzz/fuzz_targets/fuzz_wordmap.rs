//! Word-map TSV parsing must reject arbitrary text without panicking.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = deeptrans::generator::WordMap::parse(text);
    }
});
