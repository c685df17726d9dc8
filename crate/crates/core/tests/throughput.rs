//! Batched-solve throughput regression.
//!
//! Calibration on the reference box measured per-column speedups of 1.22
//! (m = 512, T = 16) and 1.88 (m = 1024, T = 16), with T = 1 at parity
//! within noise. The floors below are those measurements minus a safety
//! margin for scheduler jitter.

use sl0::msl0::throughput_benchmark;

#[test]
fn batching_beats_column_by_column() {
    let rows = throughput_benchmark(&[1024], &[1, 16], 3, 11).unwrap();
    for r in &rows {
        println!(
            "m={} T={:2} batched {:.3} ms/col columnwise {:.3} ms/col speedup {:.2}",
            r.m, r.t, r.batched_ms_per_column, r.columnwise_ms_per_column, r.speedup
        );
    }
    let single = rows.iter().find(|r| r.t == 1).unwrap();
    let batch16 = rows.iter().find(|r| r.t == 16).unwrap();
    assert!(
        batch16.speedup >= 1.0,
        "T = 16 speedup regressed to {:.2} (calibrated 1.88)",
        batch16.speedup
    );
    assert!(
        (0.5..=1.6).contains(&single.speedup),
        "T = 1 must be parity within noise, got {:.2}",
        single.speedup
    );
    assert!(
        batch16.batched_ms_per_column <= single.batched_ms_per_column,
        "per-column time should not grow from T = 1 to T = 16"
    );
}
