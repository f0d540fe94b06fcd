//! Welch's unequal-variance t-test.

use crate::error::{Error, Result};
use crate::stats::{check_finite, mean_std};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct WelchResult {
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

/// Welch's t-test for two independent samples with unequal variances.
///
/// The p-value is computed analytically from the Student-t distribution at
/// the Welch-Satterthwaite degrees of freedom. For an exact small-sample
/// alternative see [`welch_t_test_permutation`].
///
/// Errors if either sample has fewer than 2 values, contains non-finite
/// values, or if both samples have zero variance (the statistic is undefined).
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    let (t, df) = welch_statistic(a, b)?;
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Contract(format!("t distribution with df={df}: {e}")))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(WelchResult { t, df, p })
}

/// Welch's t with an exact permutation p-value.
///
/// Enumerates every reassignment of the pooled values into groups of the
/// original sizes and reports the fraction with |t| at least as extreme as
/// observed. Only practical for small samples; errors when the pooled size
/// exceeds 12 (at most 924 resamplings).
pub fn welch_t_test_permutation(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    let (t_obs, df) = welch_statistic(a, b)?;
    let n = a.len() + b.len();
    if n > 12 {
        return Err(Error::invalid(
            "samples",
            format!("exact permutation limited to 12 pooled values, got {n}"),
        ));
    }
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let na = a.len();
    let mut hits = 0usize;
    let mut total = 0usize;
    let mut ga = Vec::with_capacity(na);
    let mut gb = Vec::with_capacity(n - na);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        ga.clear();
        gb.clear();
        for (i, &v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                ga.push(v);
            } else {
                gb.push(v);
            }
        }
        total += 1;
        match welch_statistic(&ga, &gb) {
            Ok((t, _)) if t.abs() >= t_obs.abs() - 1e-12 => hits += 1,
            // Degenerate resamplings (both groups constant) count as ties:
            // they are at least as extreme under no ordering, so skip them.
            _ => {}
        }
    }
    Ok(WelchResult { t: t_obs, df, p: hits as f64 / total as f64 })
}

fn welch_statistic(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Contract(format!(
            "welch t needs >=2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    check_finite(a)?;
    check_finite(b)?;
    let (ma, sa) = mean_std(a)?;
    let (mb, sb) = mean_std(b)?;
    let (va, vb) = (sa * sa / a.len() as f64, sb * sb / b.len() as f64);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Err(Error::Degenerate("both samples have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    Ok((t, df))
}
