//! Seeded horizontal split of a pooled dataset into partner files.
//!
//! The shuffle is Fisher-Yates driven by ChaCha8 (`rand_chacha`), with the
//! index drawn as the high 64 bits of `next_u64() · (i + 1)`, so a seed gives
//! the same split on every platform.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::dataset::AnalyticDataset;
use crate::error::{DraError, Result};
use crate::scalar::Scalar;

/// Prefix of the partner indicator columns; partner 1 is the reference.
pub const DUMMY_PREFIX: &str = "dummy_dp_var";

pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((u128::from(rng.next_u64()) * (i as u128 + 1)) >> 64) as usize;
        idx.swap(i, j);
    }
    idx
}

/// Near-equal sizes for `k` partners; the first `n mod k` get one extra row.
pub fn even_sizes(n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(DraError::Config(format!("cannot split {n} rows into {k} parts")));
    }
    Ok((0..k).map(|i| n / k + usize::from(i < n % k)).collect())
}

/// Splits `data` into `sizes.len()` parts for partners `1..=K`. With
/// `dummies`, each part gains `dummy_dp_var2..K` indicators.
pub fn partition<S: Scalar>(
    data: &AnalyticDataset<S>,
    sizes: &[usize],
    seed: u64,
    dummies: bool,
) -> Result<Vec<AnalyticDataset<S>>> {
    let n = data.n_rows();
    let total: usize = sizes.iter().sum();
    if total != n || sizes.is_empty() {
        return Err(DraError::Config(format!("sizes add up to {total}, dataset has {n} rows")));
    }
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(DraError::Config(format!("part {} would be empty", i + 1)));
    }
    let order = shuffled_indices(n, seed);
    let k = sizes.len();
    let mut parts = Vec::with_capacity(k);
    let mut start = 0;
    for (p, &size) in sizes.iter().enumerate() {
        let mut idx = order[start..start + size].to_vec();
        idx.sort_unstable();
        start += size;
        let dp = (p + 1) as u32;
        let mut part = data.select_rows(dp, &idx);
        if dummies {
            for j in 2..=k {
                let v = if j == p + 1 { S::one() } else { S::zero() };
                part.push_column(format!("{DUMMY_PREFIX}{j}"), vec![v; size])?;
            }
        }
        parts.push(part);
    }
    Ok(parts)
}

/// Writes `<stem>_<k>.csv` for each part into `dir`.
pub fn write_parts<S: Scalar>(parts: &[AnalyticDataset<S>], dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| DraError::io(dir, e))?;
    parts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let path = dir.join(format!("{stem}_{}.csv", i + 1));
            p.write_csv_path(&path)?;
            Ok(path)
        })
        .collect()
}
