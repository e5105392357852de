//! Command-line front end: argument parsing, data ingestion, run manifests,
//! and CSV/JSON emission. `run` is the whole program; the binary is a thin
//! wrapper so the test suites can drive dispatch in-process.

pub mod args;
pub mod commands;
pub mod csvio;
pub mod manifest;

use clap::Parser;

use polya_forest::error::Error;

/// Exit codes: 0 success, 1 usage, 2 data, 3 numeric, 4 property violation.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::UnsupportedOrder { .. } => 1,
        Error::Data(_) => 2,
        Error::Numeric(_) | Error::Resource(_) => 3,
    }
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("POLYA_FOREST_THREADS") {
        if let Ok(threads) = v.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

/// Parse `argv`, dispatch, and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    init_thread_pool();
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
