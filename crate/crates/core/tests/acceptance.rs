//! Runs every reproduction criterion at its stated tolerances and prints one
//! pass/fail line per criterion. Built without the libtest harness so the
//! lines show up in plain `cargo test` output.

use std::process::ExitCode;

use freep::reproduce::{reproduce, Options};

fn main() -> ExitCode {
    let report = reproduce(&Options::default());
    assert_eq!(report.criteria.len(), 9);
    println!("acceptance (seed {:#x}):", report.seed);
    for c in &report.criteria {
        println!("  {}", c.summary());
    }
    if report.passed() {
        println!("acceptance: all {} criteria passed", report.criteria.len());
        ExitCode::SUCCESS
    } else {
        let failed = report.criteria.iter().filter(|c| !c.passed).count();
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
