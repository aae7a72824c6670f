//! Synthetic ratings built to known target means.

use figforge_core::feedback::{aggregate_feedback, FeedbackRecord, METRICS};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const N: usize = 262;
pub const TARGET_MEANS: [f64; 4] = [4.04, 4.11, 3.95, 4.09];
pub const USABLE: usize = 126;

/// Spread-out ratings in 1..=5 whose mean rounds to `target`.
fn column(rng: &mut ChaCha8Rng, target: f64) -> Vec<i64> {
    let want = (target * N as f64).round() as i64;
    let mut v: Vec<i64> = (0..N).map(|_| rng.random_range(2..=5)).collect();
    let mut sum: i64 = v.iter().sum();
    while sum != want {
        let i = rng.random_range(0..N);
        if sum < want && v[i] < 5 {
            v[i] += 1;
            sum += 1;
        } else if sum > want && v[i] > 1 {
            v[i] -= 1;
            sum -= 1;
        }
    }
    v
}

pub fn records() -> Vec<FeedbackRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(262);
    let cols: Vec<Vec<i64>> = TARGET_MEANS.iter().map(|&m| column(&mut rng, m)).collect();
    let mut usable: Vec<i64> = (0..N).map(|i| i64::from(i < USABLE)).collect();
    usable.shuffle(&mut rng);
    (0..N)
        .map(|i| FeedbackRecord {
            job_id: format!("job-{i}"),
            semantic_correctness: cols[0][i],
            information_completeness: cols[1][i],
            visual_quality: cols[2][i],
            style_consistency: cols[3][i],
            usability: usable[i],
            conversion_correctness: (i % 4 == 0).then_some(cols[0][i]),
            free_text: None,
        })
        .collect()
}

/// Aggregates [`records`] and checks every mean and count against the targets.
pub fn check_means() -> Result<(), String> {
    let agg = aggregate_feedback(&records());
    if agg.n != N as u64 {
        return Err(format!("n = {}", agg.n));
    }
    for (name, want) in METRICS.iter().zip(TARGET_MEANS) {
        let m = &agg.metrics[*name];
        if m.n != N as u64 || m.histogram.iter().sum::<u64>() != N as u64 {
            return Err(format!("{name}: counted {} ratings", m.n));
        }
        let mean = m.mean.ok_or(format!("{name}: no mean"))?;
        if (mean - want).abs() > 0.005 {
            return Err(format!("{name}: {mean} vs {want}"));
        }
    }
    if agg.usability_count != USABLE as u64 {
        return Err(format!("usability {} vs {USABLE}", agg.usability_count));
    }
    Ok(())
}
