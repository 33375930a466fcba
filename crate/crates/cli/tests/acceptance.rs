//! Acceptance criteria 1–10. Runs without the libtest harness so every
//! criterion prints its pass/fail line; exits non-zero when any fails.
//! Arguments that are not flags select criteria by number.

use std::process::ExitCode;

use kljn_cli::acceptance;

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: Vec<_> = acceptance::criteria()
        .into_iter()
        .filter(|(id, _)| filters.is_empty() || filters.contains(&id.to_string()))
        .collect();
    let mut failed = 0;
    for (_, run) in &selected {
        let r = run();
        println!("{}", r.line());
        if !r.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", selected.len() - failed, selected.len());
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
