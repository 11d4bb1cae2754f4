//! Brute-force minimum of remainder / scale per region on a log grid.
//!
//! Usage: cargo run --release --example grid_oracle -- [points_per_axis] [anchor_ratio_points]
//!
//! The ratio is invariant under `(x, y) -> (lx, y/l)`, so one anchor ratio
//! (the default) covers the whole anchor axis.

use haarlab::bellman::{
    bellman_eval, bellman_gradient, classify, remainder_scale, BellmanKind, BellmanPoint, Region,
};
use rayon::prelude::*;

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

fn main() {
    let arg = |k: usize, d: usize| std::env::args().nth(k).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (n, m) = (arg(1, 200), arg(2, 1));
    for kind in [BellmanKind::B1, BellmanKind::B2] {
        for q in [1.0, 4.0, 100.0] {
            let p0s = logspace(q * 1e-6, q, n);
            let r0s = if m == 1 { vec![1.0] } else { logspace(1e-2, 1e2, m) };
            let ps = logspace(q * 1e-10, q, n);
            let rs = logspace(1e-6, 1e6, n);
            let regions = Region::for_kind(kind);
            let mins = p0s
                .par_iter()
                .map(|&p0| {
                    let mut mins = vec![(f64::INFINITY, [0.0; 4]); regions.len()];
                    for &r0 in &r0s {
                        let x0 = BellmanPoint::new((p0 * r0).sqrt(), (p0 / r0).sqrt());
                        let b0 = bellman_eval(kind, q, x0).unwrap();
                        let (gx, gy) = bellman_gradient(kind, q, x0).unwrap();
                        for &p in &ps {
                            for &r in &rs {
                                let x = BellmanPoint::new((p * r).sqrt(), (p / r).sqrt());
                                // Naive form; skip pairs too close for it to be accurate.
                                if ((x.x - x0.x) / x0.x).abs() < 1e-3 || ((x.y - x0.y) / x0.y).abs() < 1e-3 {
                                    continue;
                                }
                                let rem = b0 - bellman_eval(kind, q, x).unwrap() + gx * (x.x - x0.x) + gy * (x.y - x0.y);
                                let ratio = rem / remainder_scale(kind, x0, x);
                                let k = regions.iter().position(|&g| g == classify(kind, x0, x)).unwrap();
                                if ratio < mins[k].0 {
                                    mins[k] = (ratio, [x0.x, x0.y, x.x, x.y]);
                                }
                            }
                        }
                    }
                    mins
                })
                .reduce(
                    || vec![(f64::INFINITY, [0.0; 4]); regions.len()],
                    |a, b| a.into_iter().zip(b).map(|(a, b)| if b.0 < a.0 { b } else { a }).collect(),
                );
            for (region, (m, w)) in regions.iter().zip(mins) {
                println!("{kind:?} Q={q:<6} {:<18} min_ratio={m:.6} at {w:?}", region.name());
            }
        }
    }
}
