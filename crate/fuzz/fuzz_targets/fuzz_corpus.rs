//! Parallel-corpus loading must handle arbitrary text pairs without
//! panicking. The input is split on the first NUL into the two sides.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let (a, b) = data.split_at(split);
    let b = if b.is_empty() { b } else { &b[1..] };
    if let (Ok(src), Ok(tgt)) = (std::str::from_utf8(a), std::str::from_utf8(b)) {
        let _ = deeptrans::corpus::parse_parallel(src, tgt);
    }
});
