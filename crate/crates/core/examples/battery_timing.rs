//! Runs single criteria of the battery and prints timing.
//!
//! Usage: cargo run --release --example battery_timing -- [quick|full] [ids...]

use haarlab::battery::{run_criterion, BatteryConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = match args.first().map(String::as_str) {
        Some("full") => BatteryConfig::default(),
        _ => BatteryConfig::quick(42),
    };
    let ids: Vec<u8> = args.iter().skip(1).filter_map(|s| s.parse().ok()).collect();
    let ids = if ids.is_empty() { (1..=10).collect() } else { ids };
    for id in ids {
        let r = run_criterion(id, &cfg).unwrap();
        println!(
            "{:>2} {:<24} pass={} checked={} violations={} {:.2}s {}",
            r.id,
            r.name,
            r.pass,
            r.checked,
            r.violations,
            r.seconds,
            serde_json::to_string(&r.constants).unwrap()
        );
        if let Some(w) = &r.witness {
            println!("   witness: {}", w.to_string().chars().take(600).collect::<String>());
        }
    }
}
