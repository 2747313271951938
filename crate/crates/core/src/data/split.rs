use super::Dataset;
use crate::error::{Error, Result};
use crate::mathcore::SeededRng;

/// Splits whole student sequences into (train, test) populations.
///
/// The test side receives `round(test_fraction * N)` students chosen
/// uniformly by `rng`. Both sides keep the source's student order and share
/// its question and skill vocabularies; student indices are re-assigned.
pub fn split_students(
    ds: &Dataset,
    test_fraction: f64,
    rng: &mut SeededRng,
) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = ds.num_students();
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} leaves an empty side with {n} students"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((ds.subset_students(&train), ds.subset_students(&test)))
}

/// Per-student index where the held-out suffix begins: the last
/// `ceil(holdout_fraction * len)` interactions are held out, capped so at
/// least one interaction stays in the prefix.
pub fn holdout_cutoffs(ds: &Dataset, holdout_fraction: f64) -> Result<Vec<usize>> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "holdout fraction {holdout_fraction} outside (0, 1)"
        )));
    }
    ds.sequences()
        .enumerate()
        .map(|(s, seq)| {
            let len = seq.len();
            if len < 2 {
                return Err(Error::invalid(format!(
                    "student {s} has {len} interactions; at least 2 are required"
                )));
            }
            let held = ((holdout_fraction * len as f64).ceil() as usize).clamp(1, len - 1);
            Ok(len - held)
        })
        .collect()
}
