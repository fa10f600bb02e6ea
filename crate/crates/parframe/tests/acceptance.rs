//! The acceptance gate: runs the full verification suite and prints one
//! pass/fail line per criterion.

use parframe::checks::{run_all, CheckOptions, CRITERIA};

#[test]
fn acceptance() {
    // PARFRAME_ONLY narrows the run to a comma-separated list of criterion
    // groups, mirroring the CLI's --only flag; useful when iterating on one
    // criterion.
    let only = std::env::var("PARFRAME_ONLY")
        .ok()
        .map(|s| s.split(',').map(str::to_string).collect::<Vec<_>>());
    let narrowed = only.is_some();
    let opts = CheckOptions { only, ..CheckOptions::default() };
    let records = run_all(&opts).expect("verification suite failed to run");
    let mut all_pass = true;
    for (prefix, title) in CRITERIA {
        let group: Vec<_> = records
            .iter()
            .filter(|r| r.name == prefix || r.name.starts_with(&format!("{prefix}.")))
            .collect();
        if group.is_empty() && narrowed {
            continue;
        }
        assert!(!group.is_empty(), "no records for criterion group {prefix}");
        let pass = group.iter().all(|r| r.pass);
        all_pass &= pass;
        let seconds: f64 = group.iter().map(|r| r.seconds).sum();
        let worst = group
            .iter()
            .max_by(|a, b| {
                let ra = a.value / a.tolerance.abs().max(1e-300);
                let rb = b.value / b.tolerance.abs().max(1e-300);
                ra.total_cmp(&rb)
            })
            .expect("non-empty group");
        println!(
            "{} {title:<42} worst {}: {:.3e} (tol {:.1e}) [{seconds:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            worst.name,
            worst.value,
            worst.tolerance,
        );
        if !pass {
            for r in group.iter().filter(|r| !r.pass) {
                println!("     failing record {}: {:.6e} > {:.1e} ({})", r.name, r.value, r.tolerance, r.detail);
            }
        }
    }
    assert!(all_pass, "one or more acceptance criteria failed");
}
