use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::MetricError;
use crate::scalar::{Real, Scalar};

fn sorted<T: PartialOrd + Copy>(xs: &[T]) -> Result<Vec<T>, MetricError> {
    if xs.iter().any(|x| x.partial_cmp(x).is_none()) {
        return Err(MetricError::Unordered);
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(v)
}

/// Two-sample Kolmogorov-Smirnov statistic `sup_x |F_a(x) - F_b(x)|`,
/// evaluated exactly at every pooled sample point.
pub fn ks_distance<T: PartialOrd + Copy, S: Scalar>(a: &[T], b: &[T]) -> Result<S, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::Empty("KS sample"));
    }
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (n, m) = (a.len() as u128, b.len() as u128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best: u128 = 0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => {
                if x <= y {
                    x
                } else {
                    y
                }
            }
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        // |i/n - j/m| scaled by n*m
        let lhs = i as u128 * m;
        let rhs = j as u128 * n;
        best = best.max(lhs.abs_diff(rhs));
    }
    let num = S::from_u128(best).ok_or(MetricError::Overflow)?;
    let den = S::from_u128(n * m).ok_or(MetricError::Overflow)?;
    Ok(num / den)
}

/// Plug-in Shannon entropy (bits) of the empirical distribution over exact
/// action values.
pub fn behavioral_entropy<T: Ord, S: Real>(actions: &[T]) -> Result<S, MetricError> {
    if actions.is_empty() {
        return Err(MetricError::Empty("actions"));
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for a in actions {
        *counts.entry(a).or_default() += 1;
    }
    Ok(entropy_from_counts(counts.values().copied(), actions.len()))
}

/// Entropy after grouping actions into bins `[k*width, (k+1)*width)`.
pub fn behavioral_entropy_binned<S: Real>(actions: &[i64], width: u32) -> Result<S, MetricError> {
    if width == 0 {
        return Err(MetricError::InvalidParameter("bin width must be positive"));
    }
    let binned: Vec<i64> = actions
        .iter()
        .map(|a| a.div_euclid(i64::from(width)))
        .collect();
    behavioral_entropy(&binned)
}

fn entropy_from_counts<S: Real>(counts: impl Iterator<Item = usize>, total: usize) -> S {
    let n = S::from_count(total);
    let h = counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = S::from_count(c) / n;
            p * p.log2()
        })
        .fold(S::zero(), |acc, x| acc + x);
    if h == S::zero() {
        S::zero()
    } else {
        -h
    }
}

/// Right-continuous ECDF: each distinct value with the fraction of samples
/// less than or equal to it.
pub fn ecdf_table<T: PartialOrd + Copy, S: Scalar>(
    samples: &[T],
) -> Result<Vec<(T, S)>, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Empty("ECDF sample"));
    }
    let v = sorted(samples)?;
    let n = S::from_count(v.len());
    let mut out: Vec<(T, S)> = Vec::new();
    for (idx, &x) in v.iter().enumerate() {
        let frac = S::from_count(idx + 1) / n.clone();
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => out.push((x, frac)),
        }
    }
    Ok(out)
}

/// ECDF evaluated at `x`.
pub fn ecdf_at<T: PartialOrd + Copy, S: Scalar>(samples: &[T], x: T) -> Result<S, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Empty("ECDF sample"));
    }
    let below = samples.iter().filter(|&&s| s <= x).count();
    Ok(S::from_count(below) / S::from_count(samples.len()))
}
