#![no_main]

use edt_core::{Env, Expr};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(e) = Expr::parse(text) else { return };
    // Canonical printing must reparse to the same tree.
    let printed = e.to_string();
    let back = Expr::parse(&printed).expect("printed expression reparses");
    assert_eq!(back, e, "{printed}");
    // Evaluation may fail (unbound names, overflow) but never panic.
    let env: Env = e.free_vars().into_iter().map(|v| (v, 3i64)).collect();
    let _ = e.eval(&env);
});
