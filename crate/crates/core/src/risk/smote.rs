use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One interpolated sample and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub values: Vec<f64>,
    /// Index of the minority row interpolated from.
    pub base: usize,
    /// Index of the neighbor interpolated towards.
    pub neighbor: usize,
    pub u: f64,
}

/// Rounds a binary slot after interpolation: nearest value, ties to 0.
pub fn round_binary(v: f64) -> f64 {
    if v > 0.5 {
        1.0
    } else {
        0.0
    }
}

/// The `k` nearest other rows of each row (Euclidean on z-scored columns),
/// ties by index.
pub fn nearest_neighbors(rows: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    let m = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; p];
    for r in rows {
        for (j, v) in r.iter().enumerate() {
            mean[j] += v / m as f64;
        }
    }
    let mut scale = vec![0.0; p];
    for r in rows {
        for (j, v) in r.iter().enumerate() {
            scale[j] += (v - mean[j]).powi(2) / m as f64;
        }
    }
    // constant columns carry no distance information
    let scale: Vec<f64> = scale.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().enumerate().map(|(j, v)| (v - mean[j]) / scale[j]).collect())
        .collect();

    (0..m)
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| {
                    let dist: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    (dist, j)
                })
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Generates `target_count - minority.len()` synthetic minority samples.
/// Each is `x + u (x_nn - x)` for a random minority row `x`, one of its `k`
/// nearest minority neighbors `x_nn`, and `u ~ U[0, 1]`; `binary_slots` are
/// rounded back to {0, 1}.
pub fn smote_oversample(
    minority: &[Vec<f64>],
    k: usize,
    target_count: usize,
    binary_slots: &[usize],
    seed: u64,
) -> Result<Vec<SyntheticSample>> {
    if k == 0 {
        return Err(Error::config("SMOTE needs k >= 1"));
    }
    if minority.len() <= k {
        return Err(Error::data(format!(
            "insufficient minority samples: {} for k = {k}",
            minority.len()
        )));
    }
    let p = minority[0].len();
    if minority.iter().any(|r| r.len() != p) {
        return Err(Error::data("minority rows differ in width"));
    }
    if target_count <= minority.len() {
        return Ok(Vec::new());
    }
    let neighbors = nearest_neighbors(minority, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = (0..target_count - minority.len())
        .map(|_| {
            let base = rng.random_range(0..minority.len());
            let neighbor = neighbors[base][rng.random_range(0..k)];
            let u: f64 = rng.random();
            let (x, nn) = (&minority[base], &minority[neighbor]);
            let mut values: Vec<f64> = x.iter().zip(nn).map(|(a, b)| a + u * (b - a)).collect();
            for &j in binary_slots {
                values[j] = round_binary(values[j]);
            }
            SyntheticSample {
                values,
                base,
                neighbor,
                u,
            }
        })
        .collect();
    Ok(out)
}
