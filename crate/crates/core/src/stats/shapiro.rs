//! Shapiro-Wilk normality test, Royston's 1995 algorithm (AS R94).
//!
//! Valid for sample sizes from 3 up; the p-value approximation is tuned for
//! n <= 5000 and degrades slowly beyond that. W itself is exact for any n.

use crate::error::{Error, Result};
use crate::stats::{check_finite, normal_quantile, normal_sf};

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ShapiroResult {
    /// The W statistic, in (0, 1]; 1 means a perfect linear fit of the order
    /// statistics to normal scores.
    pub w: f64,
    /// Upper-tail p-value for the null hypothesis of normality.
    pub p: f64,
}

/// Shapiro-Wilk test of composite normality.
///
/// Errors for fewer than 3 values, non-finite input, or a constant sample
/// (W is undefined when the sample has zero range).
pub fn shapiro_wilk(xs: &[f64]) -> Result<ShapiroResult> {
    let n = xs.len();
    if n < 3 {
        return Err(Error::Contract(format!("shapiro-wilk needs n >= 3, got {n}")));
    }
    check_finite(xs)?;
    let mut x = xs.to_vec();
    x.sort_unstable_by(f64::total_cmp);
    if x[n - 1] == x[0] {
        return Err(Error::Degenerate("constant sample; W undefined".into()));
    }

    // Blom normal scores and the Royston weight corrections.
    let nf = n as f64;
    let m: Vec<f64> = (1..=n)
        .map(|i| normal_quantile((i as f64 - 0.375) / (nf + 0.25)))
        .collect();
    let mm: f64 = m.iter().map(|v| v * v).sum();
    let u = 1.0 / nf.sqrt();
    let mut a = vec![0.0; n];
    if n == 3 {
        a[0] = -std::f64::consts::FRAC_1_SQRT_2;
        a[2] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let c_last = m[n - 1] / mm.sqrt();
        let an = poly(&[-2.706056, 4.434685, -2.071190, -0.147981, 0.221157, 0.0], u) + c_last;
        if n > 5 {
            let c_last1 = m[n - 2] / mm.sqrt();
            let an1 =
                poly(&[-3.582633, 5.682633, -1.752461, -0.293762, 0.042981, 0.0], u) + c_last1;
            let phi = (mm - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2])
                / (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
            let scale = phi.sqrt();
            for i in 2..n - 2 {
                a[i] = m[i] / scale;
            }
            a[n - 1] = an;
            a[n - 2] = an1;
            a[0] = -an;
            a[1] = -an1;
        } else {
            let phi = (mm - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
            let scale = phi.sqrt();
            for i in 1..n - 1 {
                a[i] = m[i] / scale;
            }
            a[n - 1] = an;
            a[0] = -an;
        }
    }

    let mean = x.iter().sum::<f64>() / nf;
    let b: f64 = a.iter().zip(&x).map(|(ai, xi)| ai * xi).sum();
    let ss: f64 = x.iter().map(|xi| (xi - mean) * (xi - mean)).sum();
    let w = (b * b / ss).min(1.0);

    let p = if n == 3 {
        // Exact small-sample distribution.
        let stqr = (0.75f64.sqrt()).asin();
        ((6.0 / std::f64::consts::PI) * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0)
    } else {
        let (mu, sigma, g) = if n <= 11 {
            let gamma = -2.273 + 0.459 * nf;
            let mu = 0.5440 - 0.39978 * nf + 0.025054 * nf * nf - 0.0006714 * nf * nf * nf;
            let sigma = (1.3822 - 0.77857 * nf + 0.062767 * nf * nf - 0.0020322 * nf * nf * nf).exp();
            (mu, sigma, Some(gamma))
        } else {
            let ln = nf.ln();
            let mu = -1.5861 - 0.31082 * ln - 0.083751 * ln * ln + 0.0038915 * ln * ln * ln;
            let sigma = (-0.4803 - 0.082676 * ln + 0.0030302 * ln * ln).exp();
            (mu, sigma, None)
        };
        // ln(1 - W) via ln_1p(-W) keeps precision when W is close to 1.
        let ln_one_minus_w = (-w).ln_1p();
        let z = match g {
            Some(gamma) => {
                let arg = gamma - ln_one_minus_w;
                if arg <= 0.0 {
                    // W so close to 1 the transform saturates: no evidence
                    // against normality.
                    return Ok(ShapiroResult { w, p: 1.0 });
                }
                (-arg.ln() - mu) / sigma
            }
            None => (ln_one_minus_w - mu) / sigma,
        };
        normal_sf(z)
    };
    Ok(ShapiroResult { w, p })
}

/// Evaluate a polynomial with coefficients from highest to lowest degree.
fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}
