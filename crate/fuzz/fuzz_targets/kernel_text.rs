#![no_main]

use edt_core::loop_tree::text;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    let Ok(k) = text::parse(src) else { return };
    let printed = text::print(&k.tree, &k.defaults, &k.distances);
    let again = text::parse(&printed).expect("printed kernel reparses");
    assert_eq!(text::print(&again.tree, &again.defaults, &again.distances), printed);
    let _ = k.tree.validate(&k.default_params());
});
