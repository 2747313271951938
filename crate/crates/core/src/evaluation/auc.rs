use crate::error::{Error, Result};

/// AUC as the exact fraction `numerator / denominator`, where the
/// numerator is twice the Mann-Whitney U statistic (ties count one half)
/// and the denominator is `2 · P · N`.
///
/// Computed from midranks: a tie group occupying 1-based ranks `a..=b`
/// contributes `a + b` (twice its midrank) per positive member.
pub fn auc_fraction(labels: &[u8], scores: &[f64]) -> Result<(u128, u128)> {
    if labels.len() != scores.len() {
        return Err(Error::dim(format!(
            "{} labels for {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as u128;
    let neg = labels.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let twice_midrank = (start + 1 + end) as u128;
        let group_pos = idx[start..end].iter().filter(|&&i| labels[i] == 1).count() as u128;
        twice_rank_sum += group_pos * twice_midrank;
        start = end;
    }
    Ok((twice_rank_sum - pos * (pos + 1), 2 * pos * neg))
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half.
pub fn auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    let (num, den) = auc_fraction(labels, scores)?;
    Ok(num as f64 / den as f64)
}
