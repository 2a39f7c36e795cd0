//! Acceptance criteria, one line of output each.
//!
//! `cargo test -p geostore --test acceptance [-- 2 7]` runs all criteria or
//! the listed ones. The exit status is non-zero if any criterion fails.

#[path = "../common/mod.rs"]
#[allow(dead_code)]
mod common;
mod corpus;
mod memory;
mod queries;
mod recovery;
mod support;
mod workflow;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

type Criterion = fn() -> Result<String, String>;

const CRITERIA: [(u32, &str, Criterion); 9] = [
    (1, "format preservation", format::criterion_1),
    (2, "query oracle equivalence", queries::criterion_2),
    (3, "query semantics", queries::criterion_3),
    (4, "import, mark, search, delete workflow", workflow::criterion_4),
    (5, "asynchronous import", workflow::criterion_5),
    (6, "layer hierarchy", workflow::criterion_6),
    (7, "streaming memory bound", memory::criterion_7),
    (8, "crash recovery", recovery::criterion_8),
    (9, "parser robustness", queries::criterion_9),
];

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| panic.downcast_ref::<&str>().copied())
                .unwrap_or("panic");
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {n} ({name}, {secs:.1} s): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("[FAIL] criterion {n} ({name}, {secs:.1} s): {reason}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
