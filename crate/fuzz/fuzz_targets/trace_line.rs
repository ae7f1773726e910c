#![no_main]

use edt_core::runtime::trace::{self, TraceEvent};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(events) = trace::parse(text) {
        for e in &events {
            let back: TraceEvent = e.to_string().parse().expect("printed event reparses");
            assert_eq!(&back, e);
        }
        let _ = trace::check_async_finish(&events);
    }
});
