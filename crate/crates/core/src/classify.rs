//! Scoring devices as new vs. recycled.
//!
//! Every classifier reduces a cell bias map to one signed score: cells
//! agreeing with their expected aged value count +1, cells disagreeing
//! count -1. The zero-knowledge variant expects every cell to age toward 1
//! and only reads strong cells, so its score collapses to (strong-1 count)
//! minus (strong-0 count). Structure-aware variants additionally interpret
//! weak cells through their band majority; software-aware variants replace
//! the uniform expectation with per-bit expectations from a write-trace
//! profile. Decisions compare the score against a normal fit of baseline
//! new-device scores at a threshold expressed in standard deviations.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sram::{BandMap, CellBiasMap, CellCategory};
use crate::stats::shapiro::shapiro_wilk;
use crate::swbias::{BitExpectation, ExpectedStateMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    /// Uniform expect-1, strong cells only.
    ZeroKnowledge,
    /// Uniform expect-1 plus band majorities for weak cells.
    StructureAware,
    /// Per-bit software expectations, no band information.
    SoftwareAware,
    /// Per-bit software expectations plus band majorities.
    SoftwareStructureAware,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::ZeroKnowledge,
        ClassifierKind::StructureAware,
        ClassifierKind::SoftwareAware,
        ClassifierKind::SoftwareStructureAware,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassifierKind::ZeroKnowledge => "zero_knowledge",
            ClassifierKind::StructureAware => "structure_aware",
            ClassifierKind::SoftwareAware => "software_aware",
            ClassifierKind::SoftwareStructureAware => "software_structure_aware",
        }
    }

    pub fn uses_software_profile(&self) -> bool {
        matches!(
            self,
            ClassifierKind::SoftwareAware | ClassifierKind::SoftwareStructureAware
        )
    }

    pub fn uses_bands(&self) -> bool {
        matches!(
            self,
            ClassifierKind::StructureAware | ClassifierKind::SoftwareStructureAware
        )
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ClassifierKind> {
        match s {
            "zero_knowledge" => Ok(ClassifierKind::ZeroKnowledge),
            "structure_aware" => Ok(ClassifierKind::StructureAware),
            "software_aware" => Ok(ClassifierKind::SoftwareAware),
            "software_structure_aware" => Ok(ClassifierKind::SoftwareStructureAware),
            other => Err(Error::invalid(
                "classifier",
                format!(
                    "unknown kind {other:?}; expected one of zero_knowledge, \
                     structure_aware, software_aware, software_structure_aware"
                ),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    New,
    Recycled,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::New => "New",
            Label::Recycled => "Recycled",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "New" => Some(Label::New),
            "Recycled" => Some(Label::Recycled),
            _ => None,
        }
    }
}

/// Signed strong-cell count: (strong-1 cells) - (strong-0 cells). Weak cells
/// carry no information without further context and are ignored.
pub fn score_zero_knowledge(m: &CellBiasMap) -> i64 {
    let (s1, s0, _) = m.category_counts();
    s1 as i64 - s0 as i64
}

/// Score a bias map against per-cell expectations, optionally reading weak
/// cells through their band majority.
///
/// Strong cells score +1 when the observed value equals the expected one,
/// else -1. A weak cell is itself evidence: a cell that should be strong in
/// its band's majority direction but reads weak has likely been aged against
/// that direction, so with bands present it scores +1 exactly when the band
/// majority is the opposite of the expected value, else -1. Without bands a
/// weak cell contributes nothing and is not counted as considered. Cells
/// whose expectation is unusable or unwritten never participate.
///
/// Returns the signed score and the number of cells considered.
pub fn score_table(
    m: &CellBiasMap,
    expected: &ExpectedStateMap,
    bands: Option<&BandMap>,
) -> Result<(i64, usize)> {
    if expected.len() != m.n_cells {
        return Err(Error::Contract(format!(
            "expectation map covers {} cells, bias map has {}",
            expected.len(),
            m.n_cells
        )));
    }
    if let Some(b) = bands {
        if b.majority.len() * b.band_size != m.n_cells {
            return Err(Error::Contract(format!(
                "band map covers {} cells, bias map has {}",
                b.majority.len() * b.band_size,
                m.n_cells
            )));
        }
    }
    let mut score = 0i64;
    let mut considered = 0usize;
    for cell in 0..m.n_cells {
        let expected_one = match expected.expected[cell] {
            BitExpectation::Expect0 => false,
            BitExpectation::Expect1 => true,
            BitExpectation::Unusable | BitExpectation::Unwritten => continue,
        };
        let plus = match m.category(cell) {
            CellCategory::Strong1 => expected_one,
            CellCategory::Strong0 => !expected_one,
            CellCategory::Weak => match bands {
                Some(b) => (b.majority_of_cell(cell) == 1) != expected_one,
                None => continue,
            },
        };
        score += if plus { 1 } else { -1 };
        considered += 1;
    }
    Ok((score, considered))
}

/// A classifier bound to its context, ready to score any bias map.
#[derive(Clone, Copy, Debug)]
pub enum ScoringRule<'a> {
    ZeroKnowledge,
    Table {
        expected: &'a ExpectedStateMap,
        bands: Option<&'a BandMap>,
    },
}

impl ScoringRule<'_> {
    /// Signed score plus cells considered.
    pub fn score(&self, m: &CellBiasMap) -> Result<(i64, usize)> {
        match self {
            ScoringRule::ZeroKnowledge => {
                let (s1, s0, _) = m.category_counts();
                Ok((s1 as i64 - s0 as i64, s1 + s0))
            }
            ScoringRule::Table { expected, bands } => score_table(m, expected, *bands),
        }
    }
}

/// Normal fit of baseline new-device scores, the reference for decisions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewScoreDistribution {
    pub mean: f64,
    pub std_dev: f64,
    pub n_baseline: usize,
    pub normality_w: f64,
    pub normality_p: f64,
    /// True when the normality test rejects at p < 0.05. The fit still
    /// proceeds; the flag is advisory.
    pub normality_flagged: bool,
}

/// Fit mean and unbiased standard deviation to baseline scores and attach a
/// normality check.
pub fn fit_new_scores(baseline_scores: &[f64]) -> Result<NewScoreDistribution> {
    let n = baseline_scores.len();
    if n < 3 {
        return Err(Error::invalid(
            "baseline_scores",
            format!("need at least 3 scores, got {n}"),
        ));
    }
    if n > 5000 {
        return Err(Error::invalid(
            "baseline_scores",
            format!("normality test supports at most 5000 scores, got {n}"),
        ));
    }
    if baseline_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("baseline_scores", "scores must be finite"));
    }
    let mean = baseline_scores.iter().sum::<f64>() / n as f64;
    let ss: f64 = baseline_scores.iter().map(|s| (s - mean).powi(2)).sum();
    if ss == 0.0 {
        return Err(Error::Degenerate(
            "baseline scores have zero variance".to_string(),
        ));
    }
    let std_dev = (ss / (n - 1) as f64).sqrt();
    let sw = shapiro_wilk(baseline_scores)?;
    Ok(NewScoreDistribution {
        mean,
        std_dev,
        n_baseline: n,
        normality_w: sw.w,
        normality_p: sw.p,
        normality_flagged: sw.p < 0.05,
    })
}

/// Recycled iff the score sits at or beyond `t` standard deviations above
/// the baseline mean. Equality counts as recycled: the conservative side for
/// a counterfeit screen.
pub fn decide(score: f64, dist: &NewScoreDistribution, t: f64) -> Label {
    if score - dist.mean >= t * dist.std_dev {
        Label::Recycled
    } else {
        Label::New
    }
}

/// The cut on the score axis maximizing informedness (TPR + TNR - 1) for
/// the rule `recycled iff score >= cut`, and that maximum.
///
/// Candidates are midpoints between adjacent distinct pooled scores plus a
/// below-everything and an above-everything sentinel, which covers every
/// achievable confusion matrix. Ties prefer the larger cut (fewer false
/// positives). The cut is a raw score; divide its offset from a fitted
/// baseline mean by the baseline deviation to express it in threshold
/// standard-deviation units.
pub fn optimal_threshold(new_scores: &[f64], aged_scores: &[f64]) -> Result<(f64, f64)> {
    if new_scores.is_empty() || aged_scores.is_empty() {
        return Err(Error::Contract(
            "optimal_threshold needs both score groups non-empty".to_string(),
        ));
    }
    if new_scores
        .iter()
        .chain(aged_scores)
        .any(|s| !s.is_finite())
    {
        return Err(Error::Contract(
            "optimal_threshold needs finite scores".to_string(),
        ));
    }
    let mut new_sorted = new_scores.to_vec();
    let mut aged_sorted = aged_scores.to_vec();
    new_sorted.sort_unstable_by(f64::total_cmp);
    aged_sorted.sort_unstable_by(f64::total_cmp);

    let mut pooled: Vec<f64> = new_sorted.iter().chain(&aged_sorted).copied().collect();
    pooled.sort_unstable_by(f64::total_cmp);
    pooled.dedup();

    let mut candidates = Vec::with_capacity(pooled.len() + 1);
    candidates.push(pooled[0] - 1.0);
    candidates.extend(pooled.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    candidates.push(pooled[pooled.len() - 1] + 1.0);

    let at_or_above = |sorted: &[f64], cut: f64| {
        sorted.len() - sorted.partition_point(|&s| s < cut)
    };
    let (nn, na) = (new_sorted.len() as f64, aged_sorted.len() as f64);
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for cut in candidates {
        let tpr = at_or_above(&aged_sorted, cut) as f64 / na;
        let tnr = 1.0 - at_or_above(&new_sorted, cut) as f64 / nn;
        let j = tpr + tnr - 1.0;
        // Ascending candidates, so >= resolves ties toward the larger cut.
        if j >= best.1 {
            best = (cut, j);
        }
    }
    Ok(best)
}

/// Accuracy, TPR, and FPR of `recycled iff score >= cut` on a labeled pool.
pub fn threshold_accuracy(
    new_scores: &[f64],
    aged_scores: &[f64],
    cut: f64,
) -> (f64, f64, f64) {
    let tp = aged_scores.iter().filter(|&&s| s >= cut).count();
    let fp = new_scores.iter().filter(|&&s| s >= cut).count();
    let tn = new_scores.len() - fp;
    let accuracy = (tp + tn) as f64 / (new_scores.len() + aged_scores.len()) as f64;
    let tpr = tp as f64 / aged_scores.len() as f64;
    let fpr = fp as f64 / new_scores.len() as f64;
    (accuracy, tpr, fpr)
}

/// One device's verdict, with everything needed to audit it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub classifier_kind: ClassifierKind,
    pub score: i64,
    pub cells_considered: usize,
    #[serde(rename = "T")]
    pub threshold_t: f64,
    pub new_mean: f64,
    pub new_std: f64,
    pub label: Label,
}

/// Score one map under a rule and decide against the baseline fit.
pub fn classify(
    m: &CellBiasMap,
    rule: &ScoringRule<'_>,
    kind: ClassifierKind,
    dist: &NewScoreDistribution,
    threshold_t: f64,
) -> Result<ClassificationResult> {
    let (score, cells_considered) = rule.score(m)?;
    Ok(ClassificationResult {
        classifier_kind: kind,
        score,
        cells_considered,
        threshold_t,
        new_mean: dist.mean,
        new_std: dist.std_dev,
        label: decide(score as f64, dist, threshold_t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    const K: usize = 51;

    /// One-cell map with the requested category.
    fn one_cell(cat: CellCategory) -> CellBiasMap {
        let ones = match cat {
            CellCategory::Strong1 => K as u32,
            CellCategory::Strong0 => 0,
            CellCategory::Weak => 25,
        };
        CellBiasMap::new(1, K, vec![ones]).unwrap()
    }

    fn expect_map(e: BitExpectation) -> ExpectedStateMap {
        ExpectedStateMap { expected: vec![e] }
    }

    #[test]
    fn scoring_chart_matches_all_twelve_cases() {
        use BitExpectation::{Expect0, Expect1};
        use CellCategory::{Strong0, Strong1, Weak};
        // (expected, band majority, category) -> sign.
        let chart = [
            (Expect0, 0u8, Strong0, 1i64),
            (Expect0, 0, Weak, -1),
            (Expect0, 0, Strong1, -1),
            (Expect0, 1, Strong0, 1),
            (Expect0, 1, Weak, 1),
            (Expect0, 1, Strong1, -1),
            (Expect1, 0, Strong0, -1),
            (Expect1, 0, Weak, 1),
            (Expect1, 0, Strong1, 1),
            (Expect1, 1, Strong0, -1),
            (Expect1, 1, Weak, -1),
            (Expect1, 1, Strong1, 1),
        ];
        for (exp, majority, cat, want) in chart {
            let bands = BandMap {
                band_size: 1,
                majority: vec![majority],
            };
            let (score, considered) =
                score_table(&one_cell(cat), &expect_map(exp), Some(&bands)).unwrap();
            assert_eq!(
                (score, considered),
                (want, 1),
                "case expected={exp:?} band={majority} cat={cat:?}"
            );
        }
    }

    #[test]
    fn weak_cells_without_bands_are_silent() {
        let (score, considered) =
            score_table(&one_cell(CellCategory::Weak), &expect_map(BitExpectation::Expect1), None)
                .unwrap();
        assert_eq!((score, considered), (0, 0));
    }

    #[test]
    fn unusable_and_unwritten_never_participate() {
        for e in [BitExpectation::Unusable, BitExpectation::Unwritten] {
            let bands = BandMap {
                band_size: 1,
                majority: vec![1],
            };
            let (score, considered) =
                score_table(&one_cell(CellCategory::Strong1), &expect_map(e), Some(&bands))
                    .unwrap();
            assert_eq!((score, considered), (0, 0));
        }
    }

    fn random_map(n: usize, seed: u64) -> CellBiasMap {
        let mut rng = crate::seed::rng(seed);
        let ones = (0..n)
            .map(|_| match rng.gen_range(0..3u8) {
                0 => 0u32,
                1 => K as u32,
                _ => rng.gen_range(1..K as u32),
            })
            .collect();
        CellBiasMap::new(n, K, ones).unwrap()
    }

    #[test]
    fn all_expect1_table_equals_zero_knowledge() {
        for seed in 0..5 {
            let m = random_map(600, seed);
            let uniform = ExpectedStateMap::uniform_expect1(600);
            let (table, considered) = score_table(&m, &uniform, None).unwrap();
            assert_eq!(table, score_zero_knowledge(&m));
            let (s1, s0, _) = m.category_counts();
            assert_eq!(considered, s1 + s0);
            assert!(table.unsigned_abs() as usize <= considered);
        }
    }

    #[test]
    fn complementing_values_and_expectations_negates_strong_score() {
        let mut rng = crate::seed::rng(9);
        let n = 400;
        // Strong cells only, so the negation is exact.
        let ones: Vec<u32> = (0..n)
            .map(|_| if rng.gen_bool(0.5) { K as u32 } else { 0 })
            .collect();
        let flipped: Vec<u32> = ones.iter().map(|&o| K as u32 - o).collect();
        let expected: Vec<BitExpectation> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    BitExpectation::Expect1
                } else {
                    BitExpectation::Expect0
                }
            })
            .collect();
        let inverted: Vec<BitExpectation> = expected
            .iter()
            .map(|e| match e {
                BitExpectation::Expect1 => BitExpectation::Expect0,
                BitExpectation::Expect0 => BitExpectation::Expect1,
                other => *other,
            })
            .collect();
        let m = CellBiasMap::new(n, K, ones).unwrap();
        let mc = CellBiasMap::new(n, K, flipped).unwrap();
        let exp = ExpectedStateMap { expected };
        let inv = ExpectedStateMap { expected: inverted };
        let (s, c) = score_table(&m, &exp, None).unwrap();
        // Complement either side alone: every match flips, score negates.
        let (s_vals, c_vals) = score_table(&mc, &exp, None).unwrap();
        let (s_exps, c_exps) = score_table(&m, &inv, None).unwrap();
        assert_eq!(s_vals, -s);
        assert_eq!(s_exps, -s);
        // Complement both: matches are restored.
        let (s_both, c_both) = score_table(&mc, &inv, None).unwrap();
        assert_eq!(s_both, s);
        assert_eq!([c_vals, c_exps, c_both], [c, c, c]);
    }

    #[test]
    fn coverage_mismatches_are_contract_errors() {
        let m = random_map(10, 1);
        let short = ExpectedStateMap::uniform_expect1(9);
        assert!(matches!(
            score_table(&m, &short, None),
            Err(Error::Contract(_))
        ));
        let bands = BandMap {
            band_size: 3,
            majority: vec![1, 0, 1],
        };
        assert!(matches!(
            score_table(&m, &ExpectedStateMap::uniform_expect1(10), Some(&bands)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn fit_matches_two_pass_reference() {
        let scores: Vec<f64> = (0..18).map(|i| 100.0 + ((i * 37) % 19) as f64).collect();
        let d = fit_new_scores(&scores).unwrap();
        // Independent route: sorted summation.
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / 18.0;
        let var = sorted.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 17.0;
        assert_abs_diff_eq!(d.mean, mean, epsilon = 1e-12);
        assert_abs_diff_eq!(d.std_dev, var.sqrt(), epsilon = 1e-12);
        assert_eq!(d.n_baseline, 18);
        assert!(d.normality_w > 0.0 && d.normality_w <= 1.0);
    }

    #[test]
    fn degenerate_and_tiny_baselines_are_rejected() {
        assert!(matches!(
            fit_new_scores(&[0.0, 0.0, 0.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            fit_new_scores(&[1.0, 2.0]),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn normal_samples_rarely_flag_normality() {
        use rand_distr::{Distribution, StandardNormal};
        let mut ok = 0;
        for seed in 0..100 {
            let mut rng = crate::seed::rng(seed);
            let xs: Vec<f64> = (0..1000)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            let d = fit_new_scores(&xs).unwrap();
            if !d.normality_flagged {
                ok += 1;
            }
        }
        assert!(ok >= 90, "only {ok}/100 normal samples passed normality");
    }

    fn dist(mean: f64, std_dev: f64) -> NewScoreDistribution {
        NewScoreDistribution {
            mean,
            std_dev,
            n_baseline: 18,
            normality_w: 1.0,
            normality_p: 1.0,
            normality_flagged: false,
        }
    }

    #[test]
    fn decision_boundary_counts_as_recycled() {
        let d = dist(10.0, 2.0);
        assert_eq!(decide(13.0, &d, 1.5), Label::Recycled); // exactly mean + T sigma
        assert_eq!(decide(12.999, &d, 1.5), Label::New);
        assert_eq!(decide(10.0, &d, 0.1), Label::New); // score at mean, T > 0
        assert_eq!(decide(10.0, &d, 0.0), Label::Recycled); // T = 0 boundary
    }

    #[test]
    fn raising_threshold_never_creates_recycled() {
        let d = dist(0.0, 1.0);
        for score in [-3.0, -0.5, 0.0, 0.7, 2.0, 5.0] {
            let mut prev = decide(score, &d, -4.0);
            for i in -39..=40 {
                let t = i as f64 / 10.0;
                let now = decide(score, &d, t);
                assert!(
                    !(prev == Label::New && now == Label::Recycled),
                    "score {score}: raising T to {t} flipped New to Recycled"
                );
                prev = now;
            }
        }
    }

    #[test]
    fn separated_populations_reach_full_informedness() {
        let (cut, j) = optimal_threshold(&[0.0, 1.0, 2.0], &[10.0, 11.0]).unwrap();
        assert_abs_diff_eq!(j, 1.0, epsilon = 1e-12);
        assert!(cut > 2.0 && cut <= 10.0);
        let (acc, tpr, fpr) = threshold_accuracy(&[0.0, 1.0, 2.0], &[10.0, 11.0], cut);
        assert_eq!((acc, tpr, fpr), (1.0, 1.0, 0.0));
    }

    #[test]
    fn identical_populations_have_no_usable_cut() {
        let xs: Vec<f64> = (0..40).map(|i| (i % 7) as f64).collect();
        let (_, j) = optimal_threshold(&xs, &xs).unwrap();
        assert!(j.abs() <= 1.0 / 7.0 + 1e-12);
    }

    #[test]
    fn threshold_ties_prefer_the_larger_cut() {
        // Single shared value: cutting below (everything recycled) and above
        // (everything new) both give informedness 0; the larger cut wins.
        let (cut, j) = optimal_threshold(&[1.0], &[1.0]).unwrap();
        assert_abs_diff_eq!(j, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cut, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn classifier_kind_round_trips_through_strings() {
        for kind in ClassifierKind::ALL {
            assert_eq!(kind.as_str().parse::<ClassifierKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.as_str()));
            assert_eq!(serde_json::from_str::<ClassifierKind>(&json).unwrap(), kind);
        }
        assert!("nope".parse::<ClassifierKind>().is_err());
    }

    #[test]
    fn classification_result_serializes_t_key() {
        let m = CellBiasMap::new(2, K, vec![K as u32, 0]).unwrap();
        let r = classify(
            &m,
            &ScoringRule::ZeroKnowledge,
            ClassifierKind::ZeroKnowledge,
            &dist(0.0, 1.0),
            3.0,
        )
        .unwrap();
        assert_eq!(r.score, 0);
        assert_eq!(r.cells_considered, 2);
        assert_eq!(r.label, Label::New);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"T\":3.0"), "json was {json}");
        assert!(json.contains("\"classifier_kind\":\"zero_knowledge\""));
    }
}
