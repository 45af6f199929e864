//! Acceptance run: the verification suite on the P2 pair (X = 20, N = 2000),
//! one line per criterion. Exits nonzero when any criterion fails.
//! Tolerances are the constants in `specop::verify`.

use std::process::ExitCode;

use specop::problem::{GridConfig, Problem};
use specop::verify::{run_suite, VerifyConfig};
use specop::OperatorSpec;

fn main() -> ExitCode {
    let problem = Problem::from_spec(OperatorSpec::p2(), GridConfig { half_width: 20.0, points: 2000 });
    let report = run_suite(&problem, &VerifyConfig::default());
    for r in &report.criteria {
        println!("{}", r.line());
    }
    let failed = report.criteria.iter().filter(|r| !r.pass).count();
    println!("acceptance: {} of {} criteria pass", report.criteria.len() - failed, report.criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
