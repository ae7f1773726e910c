#![no_main]

use edt_core::harness::{parse_csv, CsvRow};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_csv(text);
    for line in text.lines() {
        if let Ok(row) = line.parse::<CsvRow>() {
            // Compare printed forms: NaN fields never compare equal.
            let printed = row.to_string();
            let back: CsvRow = printed.parse().expect("printed row reparses");
            assert_eq!(back.to_string(), printed);
        }
    }
});
