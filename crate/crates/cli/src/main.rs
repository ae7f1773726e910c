use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use edt_core::harness::{self, Hierarchy, HarnessError, RunConfig, Row};
use edt_core::kernels;
use edt_core::runtime::Mode;

/// Environment variable consulted for the thread list when --threads is absent.
const THREADS_ENV: &str = "EDT_THREADS";

#[derive(Parser, Debug)]
#[command(name = "edtbench", version, about = "Run tiled loop kernels as hierarchical event-driven tasks")]
struct Args {
    /// Kernel name(s), comma separated, or `all`
    #[arg(long, default_value = "all")]
    kernel: String,
    /// Problem size (kernel default when absent)
    #[arg(long)]
    size: Option<i64>,
    /// Tile sizes, comma separated; a single value applies to every tiled loop
    #[arg(long)]
    tile: Option<String>,
    /// Modes: block, async, dep (comma separated) or `all`
    #[arg(long, default_value = "dep")]
    mode: String,
    /// Thread counts, comma separated
    #[arg(long)]
    threads: Option<String>,
    /// EDT hierarchy: `tile`, `user:<levels>` or `user:<loop>,<loop>...`
    #[arg(long, default_value = "tile")]
    hier: Hierarchy,
    /// Repetitions per configuration; the fastest is reported
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    reps: u64,
    /// Compare every run against the sequential reference
    #[arg(long)]
    verify: bool,
    /// Emit CSV instead of a table
    #[arg(long)]
    csv: bool,
    /// Write the task event trace of the first repetition to this file
    #[arg(long)]
    trace: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// List kernels and exit
    #[arg(long)]
    list: bool,
}

fn parse_tiles(s: &str) -> Result<Vec<i64>, String> {
    let t: Vec<i64> = harness::parse_list(s)?;
    if t.iter().any(|&x| x < 1) {
        return Err("tile sizes must be positive".into());
    }
    Ok(t)
}

fn parse_threads(s: &str) -> Result<Vec<usize>, String> {
    let t: Vec<usize> = harness::parse_list(s)?;
    if t.contains(&0) {
        return Err("thread counts must be positive".into());
    }
    Ok(t)
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}\n\nFor more information, try '--help'.");
    ExitCode::from(2)
}

fn trace_path(base: &std::path::Path, row: &Row, many: bool) -> std::path::PathBuf {
    if many {
        let mut s = base.as_os_str().to_owned();
        s.push(format!(".{}.{}.{}", row.kernel.to_lowercase(), row.mode, row.threads));
        s.into()
    } else {
        base.to_owned()
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list {
        for k in kernels::registry() {
            println!("{:<16} {:>3} tile dims  default size {:<5} {}", k.name(), k.tile_dims(), k.default_size(), k.description());
        }
        return ExitCode::SUCCESS;
    }
    let threads = match (&args.threads, std::env::var(THREADS_ENV)) {
        (Some(t), _) => parse_threads(t).map_err(|e| format!("--threads: {e}")),
        (None, Ok(v)) => parse_threads(&v).map_err(|e| format!("{THREADS_ENV}: {e}")),
        (None, Err(_)) => Ok(vec![1]),
    };
    let modes = harness::parse_modes(&args.mode).map_err(|e| format!("--mode: {e}"));
    let tiles = args.tile.as_deref().map(parse_tiles).transpose().map_err(|e| format!("--tile: {e}"));
    let (threads, modes, tiles): (Vec<usize>, Vec<Mode>, Vec<i64>) = match (threads, modes, tiles) {
        (Ok(t), Ok(m), Ok(ti)) => (t, m, ti.unwrap_or_default()),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => return usage_error(&e),
    };
    let names: Vec<String> = if args.kernel == "all" {
        kernels::registry().iter().map(|k| k.name().to_owned()).collect()
    } else {
        args.kernel.split(',').map(|s| s.trim().to_owned()).collect()
    };
    if let Some(bad) = names.iter().find(|n| kernels::lookup(n).is_none()) {
        let known: Vec<_> = kernels::registry().iter().map(|k| k.name()).collect();
        return usage_error(&format!("unknown kernel `{bad}` (known: {})", known.join(", ")));
    }

    let mut rows = Vec::new();
    for name in &names {
        let base = RunConfig {
            size: args.size,
            tiles: tiles.clone(),
            hierarchy: args.hier.clone(),
            reps: args.reps as usize,
            verify: args.verify,
            trace: args.trace.is_some(),
            seed: args.seed,
            ..RunConfig::new(name, modes[0], threads[0])
        };
        match harness::sweep(&base, &modes, &threads) {
            Ok(r) => rows.extend(r),
            Err(e @ HarnessError::Hierarchy(_)) => return usage_error(&e.to_string()),
            Err(e) => {
                eprintln!("error: {name}: {e}");
                return ExitCode::FAILURE;
            }
        }
    }

    if let Some(base) = &args.trace {
        let many = rows.len() > 1;
        for r in &rows {
            let path = trace_path(base, r, many);
            let text: String = r.trace.iter().map(|e| format!("{e}\n")).collect();
            if let Err(e) = std::fs::write(&path, text) {
                eprintln!("error: writing {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        }
    }

    let out = if args.csv { harness::emit_csv(&rows) } else { harness::human_table(&rows) };
    let _ = std::io::stdout().write_all(out.as_bytes());

    let mut failed = false;
    for r in &rows {
        if let Some(Err(m)) = &r.verified {
            eprintln!("verification failed: {} {} {} threads: {m}", r.kernel, r.mode, r.threads);
            failed = true;
        }
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
