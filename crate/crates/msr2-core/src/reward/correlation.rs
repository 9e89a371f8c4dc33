//! Rank correlations for judge-consistency analysis: tie-corrected
//! Spearman's rho and Kendall's tau-b.

use super::RewardError;

fn average_ranks(values: &[i64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| values[i]);
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based ranks, ties get the mean rank of their run.
        let mean_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64, RewardError> {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - mean_a) * (y - mean_b);
        var_a += (x - mean_a).powi(2);
        var_b += (y - mean_b).powi(2);
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(RewardError::CorrelationUndefined);
    }
    Ok(cov / (var_a * var_b).sqrt())
}

/// Tie-corrected Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(a: &[i64], b: &[i64]) -> Result<f64, RewardError> {
    check_lengths(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Kendall's tau-b with tie correction.
pub fn kendall_tau_b(a: &[i64], b: &[i64]) -> Result<f64, RewardError> {
    check_lengths(a, b)?;
    let n = a.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i].cmp(&a[j]);
            let db = b[i].cmp(&b[j]);
            if da == std::cmp::Ordering::Equal || db == std::cmp::Ordering::Equal {
                continue;
            }
            if da == db {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom_a = n0 - count_tie_pairs(a);
    let denom_b = n0 - count_tie_pairs(b);
    if denom_a == 0 || denom_b == 0 {
        return Err(RewardError::CorrelationUndefined);
    }
    Ok((concordant - discordant) as f64 / ((denom_a as f64) * (denom_b as f64)).sqrt())
}

fn count_tie_pairs(values: &[i64]) -> i64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut pairs = 0i64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let run = (j - i + 1) as i64;
        pairs += run * (run - 1) / 2;
        i = j + 1;
    }
    pairs
}

fn check_lengths(a: &[i64], b: &[i64]) -> Result<(), RewardError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(RewardError::CorrelationLength(a.len(), b.len()));
    }
    Ok(())
}

/// Both rank correlations between two integer score lists.
pub fn rank_correlations(a: &[i64], b: &[i64]) -> Result<(f64, f64), RewardError> {
    Ok((spearman_rho(a, b)?, kendall_tau_b(a, b)?))
}
