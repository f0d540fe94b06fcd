//! Generative model of SRAM power-on behaviour.
//!
//! Each cell carries a latent margin `m`; at power-on it reads 1 with
//! probability `Phi(m / noise_sigma)`. Margins are drawn per structural band
//! from a normal whose sign follows the band's majority value, which
//! reproduces the banded layout and the U-shaped per-cell bias histogram seen
//! on real parts. The module covers synthesis, snapshot sampling, bias-map
//! estimation, band inference, population summaries, and the quadrature
//! calibrator that fits band parameters to target strong/weak compositions.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::aging::AgeState;
use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

/// How synthesized devices choose the majority value of band 0; bands then
/// alternate. `FromSeed` draws it from the device seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandPhase {
    FromSeed,
    FixedOne,
    FixedZero,
}

impl Default for BandPhase {
    fn default() -> Self {
        BandPhase::FromSeed
    }
}

/// Parameters of the generative cell-margin model.
///
/// Margins in 1-majority bands are `N(+structural_shift, margin_sigma)`;
/// margins in 0-majority bands are `N(-zero_band_shift, zero_band_sigma)`.
/// Keeping the two polarities separate lets calibration reproduce measured
/// aging asymmetries; `symmetric` builds the common case where both sides
/// share one (shift, sigma) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerativeParams {
    pub n_cells: usize,
    pub band_size: usize,
    /// Mean margin magnitude in 1-majority bands.
    pub structural_shift: f64,
    /// Margin spread in 1-majority bands.
    pub margin_sigma: f64,
    /// Mean margin magnitude in 0-majority bands.
    pub zero_band_shift: f64,
    /// Margin spread in 0-majority bands.
    pub zero_band_sigma: f64,
    pub noise_sigma: f64,
    /// Target fraction of band cells strongly biased toward the band majority.
    pub band_majority_fraction_strong: f64,
    /// Target fraction strongly biased toward the band minority.
    pub band_minority_fraction_strong: f64,
    /// Target fraction that flips between power-ons.
    pub band_fraction_weak: f64,
    #[serde(default)]
    pub band_phase: BandPhase,
}

impl GenerativeParams {
    /// Both band polarities share the same (shift, sigma).
    pub fn symmetric(
        n_cells: usize,
        band_size: usize,
        structural_shift: f64,
        margin_sigma: f64,
        fractions: [f64; 3],
    ) -> Self {
        GenerativeParams {
            n_cells,
            band_size,
            structural_shift,
            margin_sigma,
            zero_band_shift: structural_shift,
            zero_band_sigma: margin_sigma,
            noise_sigma: 1.0,
            band_majority_fraction_strong: fractions[0],
            band_minority_fraction_strong: fractions[1],
            band_fraction_weak: fractions[2],
            band_phase: BandPhase::FromSeed,
        }
    }

    pub fn n_bands(&self) -> usize {
        self.n_cells / self.band_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.band_size == 0 {
            return Err(Error::invalid("band_size", "must be at least 1"));
        }
        if self.n_cells == 0 || self.n_cells % self.band_size != 0 {
            return Err(Error::invalid(
                "n_cells",
                "must be a positive multiple of band_size",
            ));
        }
        for (name, v) in [
            ("margin_sigma", self.margin_sigma),
            ("zero_band_sigma", self.zero_band_sigma),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be finite and > 0"));
            }
        }
        for (name, v) in [
            ("structural_shift", self.structural_shift),
            ("zero_band_shift", self.zero_band_shift),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        let fracs = [
            self.band_majority_fraction_strong,
            self.band_minority_fraction_strong,
            self.band_fraction_weak,
        ];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid(
                "band fractions",
                "each must lie in [0, 1]",
            ));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "band fractions",
                "must sum to 1 within 1e-9",
            ));
        }
        Ok(())
    }
}

/// A synthesized device: the ground truth a physical chip would embody.
///
/// `margins` are the as-manufactured values; aging accumulates into
/// `age` so the pre-aging state stays recoverable. The effective margin of
/// cell `i` is `margins[i] + age.permanent[i] + age.reversible[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub device_id: String,
    pub band_size: usize,
    pub noise_sigma: f64,
    pub margins: Vec<f64>,
    /// Per-band majority value, 0 or 1.
    pub band_majority: Vec<u8>,
    pub age: AgeState,
}

impl DeviceModel {
    pub fn n_cells(&self) -> usize {
        self.margins.len()
    }

    pub fn n_bands(&self) -> usize {
        self.band_majority.len()
    }

    pub fn band_of(&self, cell: usize) -> usize {
        cell / self.band_size
    }

    pub fn effective_margin(&self, cell: usize) -> f64 {
        self.margins[cell] + self.age.permanent[cell] + self.age.reversible[cell]
    }

    /// Probability the cell powers on as 1, given its current margin.
    pub fn power_on_probability(&self, cell: usize) -> f64 {
        stats::normal_cdf(self.effective_margin(cell) / self.noise_sigma)
    }

    /// Polarity mirror: margins and accumulated shifts negated, band
    /// majorities flipped. Sampling the mirror swaps the roles of 0 and 1.
    pub fn negated(&self) -> DeviceModel {
        DeviceModel {
            device_id: self.device_id.clone(),
            band_size: self.band_size,
            noise_sigma: self.noise_sigma,
            margins: self.margins.iter().map(|m| -m).collect(),
            band_majority: self.band_majority.iter().map(|b| 1 - b).collect(),
            age: AgeState {
                years: self.age.years,
                permanent: self.age.permanent.iter().map(|m| -m).collect(),
                reversible: self.age.reversible.iter().map(|m| -m).collect(),
            },
        }
    }
}

/// K power-on bitmaps for one device, bit-packed.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub device_id: String,
    /// Free-form condition label, e.g. nominal temperature.
    pub label: String,
    pub n_cells: usize,
    pub k_samples: usize,
    words_per_sample: usize,
    bits: Vec<u64>,
}

impl SnapshotSet {
    pub fn new_empty(
        device_id: String,
        label: String,
        n_cells: usize,
        k_samples: usize,
    ) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::invalid("n_cells", "must be at least 1"));
        }
        if k_samples == 0 || k_samples % 2 == 0 {
            return Err(Error::Contract(format!(
                "k_samples must be odd and >= 1, got {k_samples}"
            )));
        }
        let words_per_sample = n_cells.div_ceil(64);
        Ok(SnapshotSet {
            device_id,
            label,
            n_cells,
            k_samples,
            words_per_sample,
            bits: vec![0; k_samples * words_per_sample],
        })
    }

    #[inline]
    pub fn bit(&self, sample: usize, cell: usize) -> bool {
        debug_assert!(sample < self.k_samples && cell < self.n_cells);
        let w = self.bits[sample * self.words_per_sample + cell / 64];
        (w >> (cell % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, sample: usize, cell: usize, value: bool) {
        debug_assert!(sample < self.k_samples && cell < self.n_cells);
        let w = &mut self.bits[sample * self.words_per_sample + cell / 64];
        let mask = 1u64 << (cell % 64);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    pub fn ones_in_sample(&self, sample: usize) -> u64 {
        let base = sample * self.words_per_sample;
        self.bits[base..base + self.words_per_sample]
            .iter()
            .map(|w| w.count_ones() as u64)
            .sum()
    }
}

/// Power-on category of a cell over K snapshots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellCategory {
    Strong0,
    Strong1,
    Weak,
}

impl CellCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellCategory::Strong0 => "Strong0",
            CellCategory::Strong1 => "Strong1",
            CellCategory::Weak => "Weak",
        }
    }

    pub fn parse(s: &str) -> Option<CellCategory> {
        match s {
            "Strong0" => Some(CellCategory::Strong0),
            "Strong1" => Some(CellCategory::Strong1),
            "Weak" => Some(CellCategory::Weak),
            _ => None,
        }
    }
}

/// Per-cell empirical power-on counts: the only thing an auditor can measure.
///
/// The category is derived from the counts, so the Strong1 = unanimous-ones
/// rule holds by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellBiasMap {
    pub n_cells: usize,
    pub k_samples: usize,
    pub ones_count: Vec<u32>,
}

impl CellBiasMap {
    pub fn new(n_cells: usize, k_samples: usize, ones_count: Vec<u32>) -> Result<Self> {
        if k_samples == 0 || k_samples % 2 == 0 {
            return Err(Error::Contract(format!(
                "k_samples must be odd and >= 1, got {k_samples}"
            )));
        }
        if ones_count.len() != n_cells {
            return Err(Error::Contract(format!(
                "ones_count has {} entries for {} cells",
                ones_count.len(),
                n_cells
            )));
        }
        if let Some(c) = ones_count.iter().find(|&&c| c as usize > k_samples) {
            return Err(Error::Contract(format!(
                "ones count {c} exceeds k_samples {k_samples}"
            )));
        }
        Ok(CellBiasMap {
            n_cells,
            k_samples,
            ones_count,
        })
    }

    #[inline]
    pub fn category(&self, cell: usize) -> CellCategory {
        let c = self.ones_count[cell] as usize;
        if c == self.k_samples {
            CellCategory::Strong1
        } else if c == 0 {
            CellCategory::Strong0
        } else {
            CellCategory::Weak
        }
    }

    /// Empirical power-on bias of one cell, ones / K.
    #[inline]
    pub fn bias(&self, cell: usize) -> f64 {
        self.ones_count[cell] as f64 / self.k_samples as f64
    }

    pub fn mean_bias(&self) -> f64 {
        let total: u64 = self.ones_count.iter().map(|&c| c as u64).sum();
        total as f64 / (self.n_cells as f64 * self.k_samples as f64)
    }

    /// (strong1, strong0, weak) cell counts.
    pub fn category_counts(&self) -> (usize, usize, usize) {
        let mut s1 = 0;
        let mut s0 = 0;
        for cell in 0..self.n_cells {
            match self.category(cell) {
                CellCategory::Strong1 => s1 += 1,
                CellCategory::Strong0 => s0 += 1,
                CellCategory::Weak => {}
            }
        }
        (s1, s0, self.n_cells - s1 - s0)
    }
}

/// Band layout: per-band majority power-on value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandMap {
    pub band_size: usize,
    pub majority: Vec<u8>,
}

impl BandMap {
    pub fn from_device(d: &DeviceModel) -> BandMap {
        BandMap {
            band_size: d.band_size,
            majority: d.band_majority.clone(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.band_size * self.majority.len()
    }

    #[inline]
    pub fn majority_of_cell(&self, cell: usize) -> u8 {
        self.majority[cell / self.band_size]
    }
}

/// Power-on statistics of one device, the shape used for family tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub mean_bias: f64,
    pub portion_strong: f64,
    pub portion_weak: f64,
    /// Mean bias over weak cells; 0.5 with `weak_bias_defined = false` when
    /// the device has no weak cells.
    pub weak_bias_mean: f64,
    pub weak_bias_defined: bool,
    pub portion_strong_1: f64,
    pub portion_strong_0: f64,
    pub morans_i: f64,
    pub morans_p: f64,
}

/// Pooled strong/weak composition measured relative to each band's majority.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandComposition {
    pub majority_strong: f64,
    pub minority_strong: f64,
    pub weak: f64,
}

/// Draw a device from the generative model. Deterministic for a given seed.
pub fn synth_device(params: &GenerativeParams, seed_value: u64) -> Result<DeviceModel> {
    params.validate()?;
    let mut rng = seed::rng(seed_value);
    let first: u8 = match params.band_phase {
        BandPhase::FixedOne => 1,
        BandPhase::FixedZero => 0,
        BandPhase::FromSeed => rng.gen_range(0..2u8),
    };
    let n_bands = params.n_bands();
    let band_majority: Vec<u8> = (0..n_bands)
        .map(|b| if b % 2 == 0 { first } else { 1 - first })
        .collect();
    let mut margins = Vec::with_capacity(params.n_cells);
    for cell in 0..params.n_cells {
        let (mu, sigma) = if band_majority[cell / params.band_size] == 1 {
            (params.structural_shift, params.margin_sigma)
        } else {
            (-params.zero_band_shift, params.zero_band_sigma)
        };
        let z: f64 = rng.sample(StandardNormal);
        margins.push(mu + sigma * z);
    }
    Ok(DeviceModel {
        device_id: format!("dev-{seed_value:016x}"),
        band_size: params.band_size,
        noise_sigma: params.noise_sigma,
        margins,
        band_majority,
        age: AgeState::fresh(params.n_cells),
    })
}

/// Take K independent power-on snapshots. Sample-major draw order: all cells
/// of snapshot 0, then snapshot 1, and so on.
pub fn sample_power_on(
    device: &DeviceModel,
    k_samples: usize,
    seed_value: u64,
) -> Result<SnapshotSet> {
    sample_power_on_inner(device, k_samples, seed_value, false)
}

/// `mirrored` samples as if every noise draw were negated, with the
/// complementary tie rule, so that sampling `device.negated()` in mirrored
/// mode yields the exact bitwise complement of the normal-mode snapshots.
/// Test hook for the polarity-symmetry invariant.
pub(crate) fn sample_power_on_inner(
    device: &DeviceModel,
    k_samples: usize,
    seed_value: u64,
    mirrored: bool,
) -> Result<SnapshotSet> {
    let n = device.n_cells();
    let mut snap = SnapshotSet::new_empty(
        device.device_id.clone(),
        "nominal".to_string(),
        n,
        k_samples,
    )?;
    let thresholds: Vec<f64> = (0..n)
        .map(|i| device.effective_margin(i) / device.noise_sigma)
        .collect();
    let mut rng = seed::rng(seed_value);
    for sample in 0..k_samples {
        for (cell, &t) in thresholds.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            // Powers on as 1 iff the noise draw falls below the margin, so
            // P(1) = Phi(margin / noise_sigma).
            let bit = if mirrored { !(z < -t) } else { z < t };
            if bit {
                snap.set(sample, cell, true);
            }
        }
    }
    Ok(snap)
}

/// Tally per-cell ones counts from a snapshot set.
pub fn estimate_bias_map(s: &SnapshotSet) -> CellBiasMap {
    let mut ones = vec![0u32; s.n_cells];
    for sample in 0..s.k_samples {
        for (cell, count) in ones.iter_mut().enumerate() {
            if s.bit(sample, cell) {
                *count += 1;
            }
        }
    }
    CellBiasMap {
        n_cells: s.n_cells,
        k_samples: s.k_samples,
        ones_count: ones,
    }
}

/// Summarize a bias map, including spatial autocorrelation of the per-cell
/// fractional biases on a row-major grid.
///
/// A map whose cells all share one bias value has no spatial structure to
/// measure; the autocorrelation is reported as 0 with p = 1 in that case.
pub fn summarize(
    m: &CellBiasMap,
    grid_width: usize,
    permutations: usize,
    seed_value: u64,
) -> Result<FamilySummary> {
    let values: Vec<f64> = (0..m.n_cells).map(|c| m.bias(c)).collect();
    summarize_values(m, &values, grid_width, permutations, seed_value)
}

/// Same as `summarize` but runs the spatial statistic on the binary
/// majority value of each cell (ones_count > K/2) instead of fractional bias.
pub fn summarize_binary(
    m: &CellBiasMap,
    grid_width: usize,
    permutations: usize,
    seed_value: u64,
) -> Result<FamilySummary> {
    let half = m.k_samples as u32 / 2;
    let values: Vec<f64> = m
        .ones_count
        .iter()
        .map(|&c| if c > half { 1.0 } else { 0.0 })
        .collect();
    summarize_values(m, &values, grid_width, permutations, seed_value)
}

fn summarize_values(
    m: &CellBiasMap,
    spatial_values: &[f64],
    grid_width: usize,
    permutations: usize,
    seed_value: u64,
) -> Result<FamilySummary> {
    if grid_width == 0 || m.n_cells % grid_width != 0 {
        return Err(Error::invalid(
            "grid_width",
            "must be a positive divisor of n_cells",
        ));
    }
    let (s1, s0, weak) = m.category_counts();
    let n = m.n_cells as f64;
    let mut weak_sum = 0.0;
    for cell in 0..m.n_cells {
        if m.category(cell) == CellCategory::Weak {
            weak_sum += m.bias(cell);
        }
    }
    let (weak_bias_mean, weak_bias_defined) = if weak > 0 {
        (weak_sum / weak as f64, true)
    } else {
        (0.5, false)
    };
    let (morans_i, morans_p) =
        match stats::morans_i(spatial_values, grid_width, permutations, seed_value) {
            Ok(r) => (r.i, r.p),
            Err(Error::Degenerate(_)) => (0.0, 1.0),
            Err(e) => return Err(e),
        };
    Ok(FamilySummary {
        mean_bias: m.mean_bias(),
        portion_strong: (s1 + s0) as f64 / n,
        portion_weak: weak as f64 / n,
        weak_bias_mean,
        weak_bias_defined,
        portion_strong_1: s1 as f64 / n,
        portion_strong_0: s0 as f64 / n,
        morans_i,
        morans_p,
    })
}

/// Recover the band layout from measured categories: each band's majority is
/// the majority vote of its strongly biased cells, ties broken toward 1.
/// Bands with no strong cells at all are ambiguous and reported as an error.
pub fn infer_band_map(m: &CellBiasMap, band_size: usize) -> Result<BandMap> {
    if band_size == 0 || m.n_cells % band_size != 0 {
        return Err(Error::invalid(
            "band_size",
            "must be a positive divisor of n_cells",
        ));
    }
    let n_bands = m.n_cells / band_size;
    let mut majority = Vec::with_capacity(n_bands);
    let mut ambiguous = Vec::new();
    for band in 0..n_bands {
        let mut s1 = 0usize;
        let mut s0 = 0usize;
        for cell in band * band_size..(band + 1) * band_size {
            match m.category(cell) {
                CellCategory::Strong1 => s1 += 1,
                CellCategory::Strong0 => s0 += 1,
                CellCategory::Weak => {}
            }
        }
        if s1 + s0 == 0 {
            ambiguous.push(band);
        }
        majority.push(if s1 >= s0 { 1 } else { 0 });
    }
    if !ambiguous.is_empty() {
        return Err(Error::AmbiguousBands(ambiguous));
    }
    Ok(BandMap {
        band_size,
        majority,
    })
}

/// Pooled composition of strong/weak cells measured relative to each band's
/// majority value.
pub fn band_composition(m: &CellBiasMap, bands: &BandMap) -> Result<BandComposition> {
    if bands.n_cells() != m.n_cells {
        return Err(Error::Contract(format!(
            "band map covers {} cells, bias map has {}",
            bands.n_cells(),
            m.n_cells
        )));
    }
    let mut majority_strong = 0usize;
    let mut minority_strong = 0usize;
    let mut weak = 0usize;
    for cell in 0..m.n_cells {
        let maj = bands.majority_of_cell(cell);
        match m.category(cell) {
            CellCategory::Weak => weak += 1,
            CellCategory::Strong1 => {
                if maj == 1 {
                    majority_strong += 1;
                } else {
                    minority_strong += 1;
                }
            }
            CellCategory::Strong0 => {
                if maj == 0 {
                    majority_strong += 1;
                } else {
                    minority_strong += 1;
                }
            }
        }
    }
    let n = m.n_cells as f64;
    Ok(BandComposition {
        majority_strong: majority_strong as f64 / n,
        minority_strong: minority_strong as f64 / n,
        weak: weak as f64 / n,
    })
}

/// Population means of per-device summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub n_devices: usize,
    pub mean_bias: f64,
    pub portion_strong: f64,
    pub portion_weak: f64,
    pub weak_bias_mean: f64,
    pub portion_strong_1: f64,
    pub portion_strong_0: f64,
    pub morans_i: f64,
    pub morans_p: f64,
}

pub fn aggregate_summaries(summaries: &[FamilySummary]) -> Result<PopulationSummary> {
    if summaries.is_empty() {
        return Err(Error::Contract("no summaries to aggregate".to_string()));
    }
    let n = summaries.len() as f64;
    let mean = |f: &dyn Fn(&FamilySummary) -> f64| summaries.iter().map(f).sum::<f64>() / n;
    Ok(PopulationSummary {
        n_devices: summaries.len(),
        mean_bias: mean(&|s| s.mean_bias),
        portion_strong: mean(&|s| s.portion_strong),
        portion_weak: mean(&|s| s.portion_weak),
        weak_bias_mean: mean(&|s| s.weak_bias_mean),
        portion_strong_1: mean(&|s| s.portion_strong_1),
        portion_strong_0: mean(&|s| s.portion_strong_0),
        morans_i: mean(&|s| s.morans_i),
        morans_p: mean(&|s| s.morans_p),
    })
}

/// Probability that a cell with margin distribution `N(mu, sigma)` reads the
/// same value in all `k` independent snapshots, toward 1 or toward 0:
/// `E[Phi(±m)^k]` with unit noise. Fixed 801-point trapezoid over mu ± 9
/// sigma; the integrand inherits the normal pdf's decay, so truncation error
/// is negligible at the tolerances used here.
pub fn unanimous_fraction(mu: f64, sigma: f64, k: usize, toward_one: bool) -> f64 {
    let sign = if toward_one { 1.0 } else { -1.0 };
    integrate_margin(mu, sigma, |x| stats::normal_cdf(sign * x).powi(k as i32))
}

/// Expected per-cell power-on bias `E[Phi(m)]` for margins `N(mu, sigma)`.
pub fn expected_bias(mu: f64, sigma: f64) -> f64 {
    integrate_margin(mu, sigma, stats::normal_cdf)
}

fn integrate_margin(mu: f64, sigma: f64, f: impl Fn(f64) -> f64) -> f64 {
    const POINTS: usize = 801;
    let lo = mu - 9.0 * sigma;
    let hi = mu + 9.0 * sigma;
    let h = (hi - lo) / (POINTS - 1) as f64;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let mut acc = 0.0;
    for i in 0..POINTS {
        let x = lo + h * i as f64;
        let zd = (x - mu) / sigma;
        let val = norm * (-0.5 * zd * zd).exp() * f(x);
        let w = if i == 0 || i == POINTS - 1 { 0.5 } else { 1.0 };
        acc += w * val;
    }
    acc * h
}

/// Fit (shift, sigma) for one band polarity so the predicted strong-cell
/// fractions hit the targets, with unit noise sigma. Deterministic: a
/// bracketing scan plus bisection, with the result snapped to a 0.01 lattice.
pub fn calibrate_band(
    majority_strong: f64,
    minority_strong: f64,
    k_samples: usize,
) -> Result<(f64, f64)> {
    if k_samples == 0 {
        return Err(Error::invalid("k_samples", "must be at least 1"));
    }
    for (name, v) in [
        ("majority_strong", majority_strong),
        ("minority_strong", minority_strong),
    ] {
        if !v.is_finite() || v <= 0.0 || v >= 1.0 {
            return Err(Error::CalibrationInfeasible(format!(
                "{name} = {v} must lie strictly inside (0, 1)"
            )));
        }
    }
    if majority_strong + minority_strong >= 1.0 {
        return Err(Error::CalibrationInfeasible(
            "strong fractions leave no weak cells".to_string(),
        ));
    }
    if majority_strong < minority_strong {
        return Err(Error::CalibrationInfeasible(
            "majority fraction below minority fraction".to_string(),
        ));
    }

    const SNAP: f64 = 0.01;
    if (majority_strong - minority_strong).abs() < 1e-12 {
        // Symmetric band: shift 0; E[Phi(m)^k] grows monotonically in sigma
        // from 0 toward 1/2, so bisection on sigma suffices.
        if majority_strong >= 0.5 {
            return Err(Error::CalibrationInfeasible(
                "symmetric strong fraction must be below 1/2".to_string(),
            ));
        }
        let f = |sigma: f64| unanimous_fraction(0.0, sigma, k_samples, true) - majority_strong;
        let mut hi = 1.0;
        let mut grow = 0;
        while f(hi) < 0.0 {
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return Err(Error::CalibrationInfeasible(
                    "no sigma reaches the symmetric strong fraction".to_string(),
                ));
            }
        }
        let mut lo = 1e-6;
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let sigma = ((0.5 * (lo + hi)) / SNAP).round() * SNAP;
        return Ok((0.0, sigma.max(SNAP)));
    }

    // Analytic seed for the search range: the margin quantile where a cell
    // becomes unanimity-prone is about Phi^-1(0.5^(1/k)).
    let theta = stats::normal_quantile(0.5f64.powf(1.0 / k_samples as f64));
    let za = stats::normal_quantile(majority_strong);
    let zb = stats::normal_quantile(1.0 - minority_strong);
    let sigma_seed = (2.0 * theta) / (zb - za);
    if !sigma_seed.is_finite() || sigma_seed <= 0.0 {
        return Err(Error::CalibrationInfeasible(
            "target fractions give no usable search seed".to_string(),
        ));
    }

    // Inner solve: the shift matching the majority fraction at a given sigma.
    let shift_for = |sigma: f64| -> Option<f64> {
        let g = |s: f64| unanimous_fraction(s, sigma, k_samples, true) - majority_strong;
        if g(0.0) > 0.0 {
            return None; // already above target at zero shift
        }
        let mut hi = sigma.max(1.0);
        let mut grow = 0;
        while g(hi) < 0.0 {
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    };
    let minority_err = |sigma: f64| -> Option<f64> {
        let s = shift_for(sigma)?;
        Some(unanimous_fraction(s, sigma, k_samples, false) - minority_strong)
    };

    // Scan sigma for a sign change, then bisect within the bracket.
    let lo_scan = (0.25 * sigma_seed).max(0.05);
    let hi_scan = 4.0 * sigma_seed;
    const STEPS: usize = 240;
    let step = (hi_scan - lo_scan) / STEPS as f64;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for i in 0..=STEPS {
        let sigma = lo_scan + step * i as f64;
        if let Some(err) = minority_err(sigma) {
            if let Some((psig, perr)) = prev {
                if perr <= 0.0 && err >= 0.0 {
                    bracket = Some((psig, sigma));
                    break;
                }
            }
            prev = Some((sigma, err));
        } else {
            prev = None;
        }
    }
    let (mut blo, mut bhi) = bracket.ok_or_else(|| {
        Error::CalibrationInfeasible(format!(
            "no (shift, sigma) reaches majority {majority_strong} with minority {minority_strong}"
        ))
    })?;
    for _ in 0..60 {
        let mid = 0.5 * (blo + bhi);
        match minority_err(mid) {
            Some(err) if err < 0.0 => blo = mid,
            Some(_) => bhi = mid,
            None => bhi = mid,
        }
    }
    let sigma = ((0.5 * (blo + bhi)) / SNAP).round() * SNAP;
    let shift = shift_for(sigma).ok_or_else(|| {
        Error::CalibrationInfeasible("snapped sigma lost the majority solution".to_string())
    })?;
    let shift = (shift / SNAP).round() * SNAP;
    Ok((shift, sigma))
}

/// Fit the full generative model to a target band composition, both band
/// polarities sharing the same parameters. `band_comp` is
/// (majority-strong, minority-strong, weak) and must sum to 1.
pub fn calibrate_generative_params(
    target: &FamilySummary,
    band_comp: [f64; 3],
    n_cells: usize,
    band_size: usize,
    k_samples: usize,
) -> Result<GenerativeParams> {
    let sum: f64 = band_comp.iter().sum();
    if band_comp.iter().any(|f| !(0.0..=1.0).contains(f)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::CalibrationInfeasible(
            "band composition must be three fractions in [0,1] summing to 1".to_string(),
        ));
    }
    let implied_strong = band_comp[0] + band_comp[1];
    if (implied_strong - target.portion_strong).abs() > 0.02 {
        return Err(Error::CalibrationInfeasible(format!(
            "band composition implies portion_strong {:.4}, target says {:.4}",
            implied_strong, target.portion_strong
        )));
    }
    let (shift, sigma) = calibrate_band(band_comp[0], band_comp[1], k_samples)?;
    let params = GenerativeParams::symmetric(
        n_cells,
        band_size,
        shift,
        sigma,
        [band_comp[0], band_comp[1], band_comp[2]],
    );
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_params() -> GenerativeParams {
        GenerativeParams::symmetric(256, 64, 2.0, 3.0, [0.6, 0.25, 0.15])
    }

    #[test]
    fn same_seed_same_device() {
        let p = small_params();
        let a = synth_device(&p, 99).unwrap();
        let b = synth_device(&p, 99).unwrap();
        assert_eq!(a, b);
        let c = synth_device(&p, 100).unwrap();
        assert_ne!(a.margins, c.margins);
    }

    #[test]
    fn vanishing_spread_pins_every_cell_to_its_band() {
        let mut p = small_params();
        p.structural_shift = 8.0;
        p.zero_band_shift = 8.0;
        p.margin_sigma = 1e-12;
        p.zero_band_sigma = 1e-12;
        let d = synth_device(&p, 7).unwrap();
        let snap = sample_power_on(&d, 51, 1).unwrap();
        let m = estimate_bias_map(&snap);
        for cell in 0..d.n_cells() {
            let expect = d.band_majority[d.band_of(cell)];
            let cat = m.category(cell);
            if expect == 1 {
                assert_eq!(cat, CellCategory::Strong1, "cell {cell}");
            } else {
                assert_eq!(cat, CellCategory::Strong0, "cell {cell}");
            }
        }
    }

    #[test]
    fn band_phase_controls_first_band() {
        let mut p = small_params();
        p.band_phase = BandPhase::FixedOne;
        let d = synth_device(&p, 3).unwrap();
        assert_eq!(d.band_majority, vec![1, 0, 1, 0]);
        p.band_phase = BandPhase::FixedZero;
        let d = synth_device(&p, 3).unwrap();
        assert_eq!(d.band_majority, vec![0, 1, 0, 1]);
    }

    #[test]
    fn even_sample_count_rejected() {
        let d = synth_device(&small_params(), 1).unwrap();
        assert!(matches!(
            sample_power_on(&d, 50, 1),
            Err(Error::Contract(_))
        ));
        assert!(matches!(sample_power_on(&d, 0, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn saturated_margin_always_reads_one() {
        let p = small_params();
        let mut d = synth_device(&p, 5).unwrap();
        d.margins[0] = 10.0;
        d.margins[1] = -10.0;
        let snap = sample_power_on(&d, 51, 11).unwrap();
        let m = estimate_bias_map(&snap);
        assert_eq!(m.ones_count[0], 51);
        assert_eq!(m.ones_count[1], 0);
    }

    #[test]
    fn balanced_margin_is_an_even_coin() {
        // One cell with margin 0 sampled many times: empirical bias near 1/2.
        let p = GenerativeParams::symmetric(1, 1, 0.0, 1.0, [0.4, 0.4, 0.2]);
        let mut d = synth_device(&p, 2).unwrap();
        d.margins[0] = 0.0;
        let snap = sample_power_on(&d, 5001, 4).unwrap();
        let m = estimate_bias_map(&snap);
        assert_abs_diff_eq!(m.bias(0), 0.5, epsilon = 0.02);
    }

    #[test]
    fn category_rule_matches_counts() {
        let m = CellBiasMap::new(4, 51, vec![51, 0, 40, 11]).unwrap();
        assert_eq!(m.category(0), CellCategory::Strong1);
        assert_eq!(m.category(1), CellCategory::Strong0);
        assert_eq!(m.category(2), CellCategory::Weak);
        assert_eq!(m.category(3), CellCategory::Weak);
        assert!(CellBiasMap::new(1, 51, vec![52]).is_err());
        assert!(CellBiasMap::new(2, 51, vec![1]).is_err());
    }

    #[test]
    fn all_zero_snapshots_summarize_to_strong0() {
        let snap = SnapshotSet::new_empty("d".into(), "nominal".into(), 64, 5).unwrap();
        let m = estimate_bias_map(&snap);
        let s = summarize(&m, 8, 9, 0).unwrap();
        assert_eq!(s.mean_bias, 0.0);
        assert_eq!(s.portion_strong_0, 1.0);
        assert_eq!(s.portion_strong, 1.0);
        assert_eq!(s.portion_weak, 0.0);
        assert!(!s.weak_bias_defined);
        assert_eq!(s.weak_bias_mean, 0.5);
        // Constant field: no spatial structure to measure.
        assert_eq!(s.morans_i, 0.0);
        assert_eq!(s.morans_p, 1.0);
    }

    #[test]
    fn summary_portions_are_consistent() {
        let p = small_params();
        let d = synth_device(&p, 21).unwrap();
        let m = estimate_bias_map(&sample_power_on(&d, 51, 22).unwrap());
        let s = summarize(&m, 64, 49, 23).unwrap();
        assert_abs_diff_eq!(s.portion_strong + s.portion_weak, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            s.portion_strong_1 + s.portion_strong_0,
            s.portion_strong,
            epsilon = 1e-12
        );
        for v in [
            s.mean_bias,
            s.portion_strong,
            s.portion_weak,
            s.weak_bias_mean,
            s.portion_strong_1,
            s.portion_strong_0,
        ] {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn polarity_mirror_swaps_strong_counts_exactly() {
        let p = small_params();
        let d = synth_device(&p, 31).unwrap();
        let a = estimate_bias_map(&sample_power_on_inner(&d, 51, 77, false).unwrap());
        let b = estimate_bias_map(&sample_power_on_inner(&d.negated(), 51, 77, true).unwrap());
        for cell in 0..d.n_cells() {
            assert_eq!(
                a.ones_count[cell] + b.ones_count[cell],
                51,
                "cell {cell} not complemented"
            );
        }
        let (a1, a0, aw) = a.category_counts();
        let (b1, b0, bw) = b.category_counts();
        assert_eq!(a1, b0);
        assert_eq!(a0, b1);
        assert_eq!(aw, bw);
    }

    #[test]
    fn band_inference_round_trips_against_ground_truth() {
        let p = small_params();
        for seed_value in 0..20 {
            let d = synth_device(&p, seed_value).unwrap();
            let m = estimate_bias_map(&sample_power_on(&d, 51, seed_value + 1000).unwrap());
            let inferred = infer_band_map(&m, p.band_size).unwrap();
            assert_eq!(inferred.majority, d.band_majority, "seed {seed_value}");
        }
    }

    #[test]
    fn ambiguous_band_reports_indices() {
        // Two bands of 4 cells: first all weak, second strong toward 0.
        let m = CellBiasMap::new(8, 51, vec![20, 20, 20, 20, 0, 0, 0, 0]).unwrap();
        match infer_band_map(&m, 4) {
            Err(Error::AmbiguousBands(bands)) => assert_eq!(bands, vec![0]),
            other => panic!("expected ambiguous-band error, got {other:?}"),
        }
    }

    #[test]
    fn band_tie_breaks_toward_one() {
        let m = CellBiasMap::new(4, 51, vec![51, 0, 25, 26]).unwrap();
        let bands = infer_band_map(&m, 4).unwrap();
        assert_eq!(bands.majority, vec![1]);
    }

    #[test]
    fn composition_counts_relative_to_band_majority() {
        let m = CellBiasMap::new(8, 51, vec![51, 51, 0, 20, 0, 0, 51, 20]).unwrap();
        let bands = BandMap {
            band_size: 4,
            majority: vec![1, 0],
        };
        let c = band_composition(&m, &bands).unwrap();
        // Band 0 (majority 1): two Strong1 majority, one Strong0 minority, one weak.
        // Band 1 (majority 0): two Strong0 majority, one Strong1 minority, one weak.
        assert_abs_diff_eq!(c.majority_strong, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c.minority_strong, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(c.weak, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn unanimity_quadrature_matches_closed_form_cases() {
        // Degenerate margin spread: all mass at mu, so the integral collapses
        // to Phi(mu)^k.
        let direct = stats::normal_cdf(1.3).powi(51);
        assert_abs_diff_eq!(
            unanimous_fraction(1.3, 1e-6, 51, true),
            direct,
            epsilon = 1e-9
        );
        // k = 1, toward 1: E[Phi(m)] has the closed form Phi(mu / sqrt(1 + sigma^2)).
        let closed = stats::normal_cdf(0.7 / (1.0f64 + 2.25).sqrt());
        assert_abs_diff_eq!(unanimous_fraction(0.7, 1.5, 1, true), closed, epsilon = 1e-6);
        assert_abs_diff_eq!(expected_bias(0.7, 1.5), closed, epsilon = 1e-6);
    }

    #[test]
    fn calibrated_band_hits_frozen_reference_points() {
        // Reference values from an independent continuous solver over the
        // same 801-point quadrature; agreement limited by the 0.01 lattice.
        let (s, sg) = calibrate_band(0.68, 0.20, 51).unwrap();
        assert_abs_diff_eq!(s, 7.902, epsilon = 0.011);
        assert_abs_diff_eq!(sg, 12.062, epsilon = 0.011);
        let (s, sg) = calibrate_band(0.68, 0.235, 51).unwrap();
        assert_abs_diff_eq!(s, 10.542, epsilon = 0.011);
        assert_abs_diff_eq!(sg, 17.709, epsilon = 0.011);
        let (s, sg) = calibrate_band(0.68, 0.165, 51).unwrap();
        assert_abs_diff_eq!(s, 6.425, epsilon = 0.011);
        assert_abs_diff_eq!(sg, 8.901, epsilon = 0.011);
    }

    #[test]
    fn calibrated_band_reproduces_targets_in_prediction() {
        for (maj, min) in [(0.68, 0.20), (0.68, 0.235), (0.68, 0.165), (0.5, 0.3)] {
            let (s, sg) = calibrate_band(maj, min, 51).unwrap();
            let pm = unanimous_fraction(s, sg, 51, true);
            let pn = unanimous_fraction(s, sg, 51, false);
            assert_abs_diff_eq!(pm, maj, epsilon = 2.5e-3);
            assert_abs_diff_eq!(pn, min, epsilon = 2.5e-3);
        }
    }

    #[test]
    fn symmetric_calibration_gives_zero_shift() {
        let (s, sg) = calibrate_band(0.44, 0.44, 51).unwrap();
        assert_eq!(s, 0.0);
        let p = unanimous_fraction(0.0, sg, 51, true);
        assert_abs_diff_eq!(p, 0.44, epsilon = 2.5e-3);
    }

    #[test]
    fn calibration_rejects_impossible_targets() {
        assert!(matches!(
            calibrate_band(0.7, 0.4, 51),
            Err(Error::CalibrationInfeasible(_))
        ));
        assert!(matches!(
            calibrate_band(1.2, 0.1, 51),
            Err(Error::CalibrationInfeasible(_))
        ));
        assert!(matches!(
            calibrate_band(0.2, 0.3, 51),
            Err(Error::CalibrationInfeasible(_))
        ));
        assert!(matches!(
            calibrate_band(0.6, 0.6, 51),
            Err(Error::CalibrationInfeasible(_))
        ));
    }

    #[test]
    fn full_calibration_checks_portion_consistency() {
        let target = FamilySummary {
            mean_bias: 0.5,
            portion_strong: 0.5, // inconsistent with 0.68 + 0.20
            portion_weak: 0.5,
            weak_bias_mean: 0.5,
            weak_bias_defined: true,
            portion_strong_1: 0.25,
            portion_strong_0: 0.25,
            morans_i: 0.0,
            morans_p: 1.0,
        };
        assert!(matches!(
            calibrate_generative_params(&target, [0.68, 0.20, 0.12], 4608, 512, 51),
            Err(Error::CalibrationInfeasible(_))
        ));
    }

    #[test]
    fn snapshot_bit_packing_round_trips() {
        let mut s = SnapshotSet::new_empty("d".into(), "x".into(), 130, 3).unwrap();
        s.set(0, 0, true);
        s.set(1, 64, true);
        s.set(2, 129, true);
        s.set(2, 129, false);
        assert!(s.bit(0, 0));
        assert!(!s.bit(0, 1));
        assert!(s.bit(1, 64));
        assert!(!s.bit(2, 129));
        assert_eq!(s.ones_in_sample(0), 1);
        assert_eq!(s.ones_in_sample(2), 0);
    }
}
