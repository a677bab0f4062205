//! Regenerates the calibrated constants table.
//!
//! Usage: calibrate [OUT_PATH] [TRIALS] [SEED]
//!
//! Defaults write `crates/core/data/calibration.json` with 50000 sum trials
//! at n = 10000 per p in {1, 1.25, 1.5, 1.75}. Expect a few minutes.

use std::collections::BTreeMap;
use std::env;
use std::thread;

use psketch_core::stable::{calibrate, format_p, CalibrationTable};

fn main() {
    let args: Vec<String> = env::args().collect();
    let out = args
        .get(1)
        .cloned()
        .unwrap_or_else(|| "crates/core/data/calibration.json".to_owned());
    let trials: u64 = args.get(2).map(|s| s.parse().expect("TRIALS")).unwrap_or(50_000);
    let seed: u64 = args.get(3).map(|s| s.parse().expect("SEED")).unwrap_or(20_240_901);
    let n = 10_000usize;
    let t_param = 100.0f64;
    let grid = [1.0f64, 1.25, 1.5, 1.75];

    let handles: Vec<_> = grid
        .into_iter()
        .map(|p| {
            thread::spawn(move || {
                let c = calibrate::constants_for(p, n, trials, t_param, seed);
                eprintln!(
                    "p={p}: C={:.4} U={:.4} L={:.4} alpha={:.4} c={:.5} omega={:.3}",
                    c.gaussian_bracket, c.sum_upper, c.sum_lower, c.alpha_p, c.tail_constant, c.omega
                );
                (format_p(p), c)
            })
        })
        .collect();

    let mut entries = BTreeMap::new();
    for h in handles {
        let (key, c) = h.join().expect("calibration thread");
        entries.insert(key, c);
    }
    let table = CalibrationTable { version: 1, entries };
    std::fs::write(&out, table.to_json()).expect("write calibration file");
    eprintln!("wrote {out}");
}
