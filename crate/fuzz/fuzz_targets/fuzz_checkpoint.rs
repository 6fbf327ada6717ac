//! The checkpoint container must reject arbitrary bytes without panicking.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = deeptrans::checkpoint::decode(data);
});
