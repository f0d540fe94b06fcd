//! Statistical primitives used across the pipeline.
//!
//! Everything here is deterministic; the only randomness is the seeded
//! permutation stream inside [`moran::morans_i`].

pub mod moran;
pub mod roc;
pub mod shapiro;
pub mod welch;

pub use moran::{morans_i, MoranResult};
pub use roc::{auroc_pairwise, informedness, roc, RocCurve};
pub use shapiro::{shapiro_wilk, ShapiroResult};
pub use welch::{welch_t_test, welch_t_test_permutation, WelchResult};

use crate::error::{Error, Result};

/// Two-pass sample mean and unbiased (n-1) standard deviation.
pub fn mean_std(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 values for mean/std, got {}",
            xs.len()
        )));
    }
    check_finite(xs)?;
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

pub(crate) fn check_finite(xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Contract(format!("non-finite value at index {i}"))),
        None => Ok(()),
    }
}

/// Standard normal CDF.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal survival function; keeps precision in the upper tail.
pub(crate) fn normal_sf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    debug_assert!(p > 0.0 && p < 1.0);
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_matches_hand_computation() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((m - 3.0).abs() < 1e-12);
        assert!((s - 2.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mean_std_rejects_tiny_and_nonfinite() {
        assert!(mean_std(&[1.0]).is_err());
        assert!(mean_std(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn normal_functions_are_consistent() {
        for &x in &[-3.0, -1.0, 0.0, 0.5, 2.0] {
            assert!((normal_cdf(x) + normal_sf(x) - 1.0).abs() < 1e-14);
            let p = normal_cdf(x);
            assert!((normal_quantile(p) - x).abs() < 1e-7);
        }
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-9);
    }
}
