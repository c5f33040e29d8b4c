use super::{CeFeatureVector, EegEpoch};
use crate::error::{Error, Result};

/// Equal-width bin index of every sample, with edges spanning the series'
/// own `[min, max]`. A constant series falls entirely into bin 0.
fn bin_indices(x: &[f64], bins: usize) -> Vec<usize> {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let width = hi - lo;
    if !(width > 0.0) {
        return vec![0; x.len()];
    }
    x.iter()
        .map(|&v| (((v - lo) / width * bins as f64) as usize).min(bins - 1))
        .collect()
}

fn check_bins(bins: usize) -> Result<()> {
    if bins < 2 {
        return Err(Error::contract(format!("bin count must be at least 2, got {bins}")));
    }
    Ok(())
}

fn check_series(x: &[f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::contract("entropy needs at least 2 samples"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("entropy input contains non-finite samples"));
    }
    Ok(())
}

fn entropy_of_counts(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Conditional entropy from pre-binned series. Summing
/// `p(x,y)·log2(p(y)/p(x,y))` keeps every term non-negative.
fn conditional_from_bins(bx: &[usize], by: &[usize], bins: usize, joint: &mut [usize], marg: &mut [usize]) -> f64 {
    joint.fill(0);
    marg.fill(0);
    for (&i, &j) in bx.iter().zip(by) {
        joint[j * bins + i] += 1;
        marg[j] += 1;
    }
    let n = bx.len() as f64;
    let mut h = 0.0;
    for (j, &ny) in marg.iter().enumerate() {
        if ny == 0 {
            continue;
        }
        for &nxy in &joint[j * bins..(j + 1) * bins] {
            if nxy > 0 {
                h += nxy as f64 / n * (ny as f64 / nxy as f64).log2();
            }
        }
    }
    h
}

/// Empirical Shannon entropy of `x` in bits under equal-width binning.
pub fn entropy(x: &[f64], bins: usize) -> Result<f64> {
    check_bins(bins)?;
    check_series(x)?;
    let mut counts = vec![0; bins];
    for b in bin_indices(x, bins) {
        counts[b] += 1;
    }
    Ok(entropy_of_counts(&counts, x.len()))
}

/// `H(X|Y) = H(X,Y) − H(Y)` in bits from the empirical joint histogram.
pub fn conditional_entropy(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    check_bins(bins)?;
    if x.len() != y.len() {
        return Err(Error::contract(format!(
            "conditional entropy series differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    check_series(x)?;
    check_series(y)?;
    let (bx, by) = (bin_indices(x, bins), bin_indices(y, bins));
    Ok(conditional_from_bins(&bx, &by, bins, &mut vec![0; bins * bins], &mut vec![0; bins]))
}

/// Length of the flattened strict upper triangle for `channels` channels.
pub fn ce_feature_len(channels: usize) -> usize {
    channels * channels.saturating_sub(1) / 2
}

/// `H(ch_i | ch_j)` for every pair `i < j`, row-major over the upper triangle.
pub fn ce_feature_vector(epoch: &EegEpoch, bins: usize) -> Result<CeFeatureVector> {
    check_bins(bins)?;
    let c = epoch.channel_count();
    if c < 2 {
        return Err(Error::contract("CE features need at least 2 channels"));
    }
    let mut binned = Vec::with_capacity(c);
    for ch in 0..c {
        check_series(epoch.channel(ch))?;
        binned.push(bin_indices(epoch.channel(ch), bins));
    }
    let mut joint = vec![0; bins * bins];
    let mut marg = vec![0; bins];
    let mut values = Vec::with_capacity(ce_feature_len(c));
    for i in 0..c {
        for j in i + 1..c {
            values.push(conditional_from_bins(&binned[i], &binned[j], bins, &mut joint, &mut marg));
        }
    }
    Ok(CeFeatureVector {
        values,
        source_channels: c,
        bins,
    })
}
