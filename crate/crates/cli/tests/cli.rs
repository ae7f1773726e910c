use std::process::{Command, Output};

fn edtbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edtbench"))
        .args(args)
        .env_remove("EDT_THREADS")
        .output()
        .expect("spawn edtbench")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn jacobi_three_verified_rows() {
    let o = edtbench(&["--kernel", "jac2d5p", "--size", "64", "--tile", "4", "--mode", "dep", "--threads", "1,2,4", "--verify", "--reps", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.starts_with("JAC-2D-5P") && r.ends_with(" ok")));
}

#[test]
fn figseq_checksums_agree_across_modes() {
    let o = edtbench(&["--kernel", "figseq", "--size", "10", "--verify", "--mode", "block,async,dep", "--reps", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let sums: Vec<&str> = out.lines().skip(1).map(|l| l.split_whitespace().nth(11).unwrap()).collect();
    assert_eq!(sums.len(), 3);
    assert!(sums.iter().all(|s| *s == sums[0]));
}

#[test]
fn gs3d_two_level_hierarchy_verifies() {
    let o = edtbench(&["--kernel", "gs3d7p", "--size", "16", "--tile", "4", "--hier", "user:2", "--verify", "--threads", "2", "--reps", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn csv_output_has_exact_header() {
    let o = edtbench(&["--kernel", "sor", "--size", "20", "--tile", "4", "--csv", "--reps", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("kernel,mode,threads,tiles,seconds,gflops,tasks,puts,get_misses,requeues,steals"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("SOR,dep,1,4x4,"));
    assert!(lines.next().is_none());
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["--kernel", "nope"][..],
        &["--mode", "fast"],
        &["--threads", "0"],
        &["--tile", "4,x"],
        &["--hier", "user:zz", "--kernel", "sor"],
        &["--hier", "sideways"],
        &["--frobnicate"],
    ] {
        let o = edtbench(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn thread_env_var_is_the_default() {
    let o = Command::new(env!("CARGO_BIN_EXE_edtbench"))
        .args(["--kernel", "sor", "--size", "20", "--tile", "4", "--csv", "--reps", "1"])
        .env("EDT_THREADS", "3")
        .output()
        .unwrap();
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("SOR,dep,3,"));
    let o = Command::new(env!("CARGO_BIN_EXE_edtbench"))
        .args(["--kernel", "sor", "--size", "20", "--tile", "4", "--csv", "--reps", "1", "--threads", "2"])
        .env("EDT_THREADS", "3")
        .output()
        .unwrap();
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("SOR,dep,2,"));
}

#[test]
fn trace_file_is_written_and_parses() {
    let dir = std::env::temp_dir().join(format!("edtbench-trace-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.trace");
    let o = edtbench(&["--kernel", "figseq", "--size", "6", "--mode", "async", "--threads", "2", "--reps", "1", "--trace", path.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let events = edt_core::runtime::trace::parse(&text).unwrap();
    assert!(!events.is_empty());
    edt_core::runtime::trace::check_async_finish(&events).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
}
