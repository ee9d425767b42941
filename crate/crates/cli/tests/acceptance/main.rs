//! Acceptance suite. Runs every criterion in sequence and prints one
//! PASS/FAIL line each; exits non-zero if any fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p rolem-cli --test acceptance -- 2 3 10`.

mod desk;
mod exact;
mod geweke;
mod oracles;
mod repro;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

const CRITERIA: [Criterion; 11] = [
    Criterion { id: 1, name: "Geweke joint-distribution test", budget: minutes(10), run: geweke::geweke },
    Criterion { id: 2, name: "conditional posterior grid oracles", budget: minutes(1), run: exact::conditional_oracles },
    Criterion { id: 3, name: "Grassmann proposal symmetry", budget: Duration::from_secs(10), run: exact::proposal_symmetry },
    Criterion { id: 4, name: "matrix density oracles", budget: minutes(1), run: exact::density_oracles },
    Criterion { id: 5, name: "t-errors beat normal errors on D(beta)", budget: minutes(30), run: desk::rolem_vs_lem },
    Criterion { id: 6, name: "pooled beta HPD coverage", budget: minutes(30), run: desk::hpd_coverage },
    Criterion { id: 7, name: "BIC/WAIC model selection", budget: minutes(60), run: desk::model_selection },
    Criterion { id: 8, name: "error-law moment identity", budget: minutes(2), run: desk::moment_identity },
    Criterion { id: 9, name: "structured prior M1..M4", budget: minutes(20), run: desk::structured_prior },
    Criterion { id: 10, name: "BIC parameter count", budget: Duration::from_secs(1), run: exact::p_bic_bookkeeping },
    Criterion { id: 11, name: "manifest reruns are byte-identical", budget: minutes(1), run: repro::manifest_reruns },
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::new(false, format!("panicked: {msg}"))
            });
        let elapsed = start.elapsed();
        let in_budget = elapsed <= c.budget;
        let pass = outcome.pass && in_budget;
        ran += 1;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} [{}] {}: {} ({:.1}s, budget {}s{})",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            outcome.detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if in_budget { "" } else { ", OVER BUDGET" }
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
