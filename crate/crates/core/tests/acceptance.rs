//! The ten acceptance criteria at full size. One line per criterion; the test
//! exits nonzero after printing all lines if any criterion fails or runs over time.
//! Runs without the libtest harness so the lines always reach the output.

use haarlab::battery::{run_criterion, BatteryConfig, CRITERIA};

/// Wall-clock limits in seconds, where one is stated.
fn limit(id: u8) -> Option<f64> {
    match id {
        1 => Some(1.0),
        2 => Some(120.0),
        4 => Some(600.0),
        7 => Some(300.0),
        _ => None,
    }
}

fn main() {
    let cfg = BatteryConfig::default();
    let mut failed = Vec::new();
    for (id, name) in CRITERIA {
        let line = match run_criterion(id, &cfg) {
            Ok(r) => {
                let in_time = limit(id).is_none_or(|l| r.seconds < l);
                let pass = r.pass && in_time;
                if !pass {
                    failed.push(id);
                }
                let mut s = format!(
                    "criterion {id:>2} {name:<24} {} checked={} violations={} time={:.2}s{}",
                    if pass { "PASS" } else { "FAIL" },
                    r.checked,
                    r.violations,
                    r.seconds,
                    if in_time { "" } else { " (over time limit)" },
                );
                for (k, v) in &r.constants {
                    s.push_str(&format!(" {k}={v:.6}"));
                }
                if let Some(w) = &r.witness {
                    s.push_str(&format!("\n    witness: {w}"));
                }
                s
            }
            Err(e) => {
                failed.push(id);
                format!("criterion {id:>2} {name:<24} FAIL error: {e}")
            }
        };
        println!("{line}");
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", CRITERIA.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
