//! End-to-end acceptance checks. Each criterion prints one line:
//! `PASS|FAIL <name> (<seconds> s / budget) <detail>`; the process exits
//! non-zero if any criterion fails or overruns its time budget.

use std::process::ExitCode;
use std::time::{Duration, Instant};

mod density;
mod losses;
mod mesh;
mod morph;
mod normalize;
mod oracle;
mod service;
mod tiling;
mod vesselness;

/// Outcome of one criterion: a short detail line either way.
pub type Outcome = Result<String, String>;

#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion { name: "tiling geometry", budget: secs(10), run: tiling::check },
        Criterion { name: "loss oracles", budget: secs(60), run: losses::check },
        Criterion { name: "normalization", budget: None, run: normalize::check },
        Criterion { name: "morph correctness", budget: secs(120), run: morph::check },
        Criterion { name: "vesselness", budget: secs(120), run: vesselness::check },
        Criterion { name: "density pipeline", budget: None, run: density::check },
        Criterion { name: "mesh", budget: None, run: mesh::check },
        Criterion { name: "service equivalence", budget: None, run: service::check },
    ];
    // panics are reported on the criterion's line
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let over = c.budget.is_some_and(|b| took > b);
        let budget = c.budget.map_or("-".to_string(), |b| format!("{} s", b.as_secs()));
        let (pass, detail) = match outcome {
            Ok(d) if !over => (true, d),
            Ok(d) => (false, format!("over time budget; {d}")),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {} ({:.2} s / {}) {}",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            took.as_secs_f64(),
            budget,
            detail
        );
    }
    println!("acceptance: {} passed, {} failed", criteria.len() - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
