//! Population aging experiments and Monte Carlo classifier evaluation.
//!
//! The real half: synthesize a calibrated device population, age every
//! device along a checkpoint schedule under a software bias profile, and
//! score each power-on snapshot under the requested classifiers. The
//! virtual half: fit the baseline scores to a normal, then simulate
//! arbitrarily many new and aged devices by drawing baseline scores from
//! the fit and stacking per-checkpoint score increments resampled uniformly
//! from the observed ones. Every random draw flows from a derived per-unit
//! seed, so results are independent of thread count and iteration order.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aging::{apply_aging, apply_recovery, AgingConfig, AgingSchedule};
use crate::classify::{
    fit_new_scores, optimal_threshold, threshold_accuracy, ClassifierKind, NewScoreDistribution,
    ScoringRule,
};
use crate::error::{Error, Result};
use crate::seed::{self, derive, purpose};
use crate::sram::{
    estimate_bias_map, sample_power_on, synth_device, BandMap, GenerativeParams,
};
use crate::stats::roc::{roc, RocCurve};
use crate::swbias::{select_usable_bits, ExpectedStateMap, SoftwareBiasProfile};

/// Observed score increments at one checkpoint: the change since the
/// previous checkpoint (since baseline for the first), one entry per
/// observed device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointDeltas {
    pub years: f64,
    pub deltas: Vec<f64>,
}

/// A checkpoint-zero entry for reports that should include the unaged
/// population: zero years, a single zero increment.
pub fn prepend_checkpoint_zero(checkpoints: &[CheckpointDeltas]) -> Vec<CheckpointDeltas> {
    let mut out = Vec::with_capacity(checkpoints.len() + 1);
    out.push(CheckpointDeltas {
        years: 0.0,
        deltas: vec![0.0],
    });
    out.extend_from_slice(checkpoints);
    out
}

/// One classifier's scores across a real aging experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgingScores {
    pub kind: ClassifierKind,
    /// Per-device scores before any aging.
    pub baseline_scores: Vec<f64>,
    /// Per-checkpoint, per-device scores.
    pub checkpoint_scores: Vec<Vec<f64>>,
    /// Per-checkpoint score increments, ready for Monte Carlo resampling.
    pub checkpoint_deltas: Vec<CheckpointDeltas>,
}

/// Everything a real aging experiment needs.
#[derive(Clone, Copy, Debug)]
pub struct ExperimentSetup<'a> {
    pub params: &'a GenerativeParams,
    pub k_samples: usize,
    pub n_devices: usize,
    pub master_seed: u64,
    pub schedule: &'a AgingSchedule,
    pub aging: &'a AgingConfig,
    pub profile: &'a SoftwareBiasProfile,
    /// Minimum software bias strength for a usable expectation.
    pub strength_threshold: f64,
}

/// Synthesize the population with per-device derived seeds and ordinal ids.
pub fn synth_population(
    params: &GenerativeParams,
    n_devices: usize,
    master_seed: u64,
) -> Result<Vec<crate::sram::DeviceModel>> {
    if n_devices == 0 {
        return Err(Error::invalid("n_devices", "must be at least 1"));
    }
    (0..n_devices)
        .into_par_iter()
        .map(|i| {
            let mut d = synth_device(params, derive(master_seed, purpose::DEVICE, i as u64))?;
            d.device_id = format!("dev-{i:03}");
            Ok(d)
        })
        .collect()
}

/// Run the full real-device experiment: synth, baseline snapshot, then age
/// along the schedule, scoring every snapshot under each classifier.
///
/// Snapshot seeds derive from the device seed with the checkpoint index
/// (0 = baseline), so any single snapshot can be reproduced in isolation.
pub fn run_aging_experiment(
    setup: &ExperimentSetup<'_>,
    kinds: &[ClassifierKind],
) -> Result<Vec<AgingScores>> {
    if setup.n_devices == 0 {
        return Err(Error::invalid("n_devices", "must be at least 1"));
    }
    if kinds.is_empty() {
        return Err(Error::invalid("classifiers", "need at least one"));
    }
    if setup.profile.memory_bits != setup.params.n_cells {
        return Err(Error::Contract(format!(
            "profile covers {} bits, devices have {} cells",
            setup.profile.memory_bits, setup.params.n_cells
        )));
    }
    setup.schedule.validate()?;
    setup.aging.validate()?;
    let expected_sw = select_usable_bits(setup.profile, setup.strength_threshold);
    let uniform = ExpectedStateMap::uniform_expect1(setup.params.n_cells);

    // scores[device] = (baseline per kind, per checkpoint per kind).
    type DeviceScores = (Vec<f64>, Vec<Vec<f64>>);
    let per_device: Vec<DeviceScores> = (0..setup.n_devices)
        .into_par_iter()
        .map(|i| -> Result<DeviceScores> {
            let dseed = derive(setup.master_seed, purpose::DEVICE, i as u64);
            let mut device = synth_device(setup.params, dseed)?;
            device.device_id = format!("dev-{i:03}");
            let bands = BandMap::from_device(&device);
            let rules: Vec<ScoringRule<'_>> = kinds
                .iter()
                .map(|kind| match kind {
                    ClassifierKind::ZeroKnowledge => ScoringRule::ZeroKnowledge,
                    ClassifierKind::StructureAware => ScoringRule::Table {
                        expected: &uniform,
                        bands: Some(&bands),
                    },
                    ClassifierKind::SoftwareAware => ScoringRule::Table {
                        expected: &expected_sw,
                        bands: None,
                    },
                    ClassifierKind::SoftwareStructureAware => ScoringRule::Table {
                        expected: &expected_sw,
                        bands: Some(&bands),
                    },
                })
                .collect();
            let score_all = |device: &crate::sram::DeviceModel, snap_idx: u64| {
                let snap = sample_power_on(
                    device,
                    setup.k_samples,
                    derive(dseed, purpose::SNAPSHOT, snap_idx),
                )?;
                let map = estimate_bias_map(&snap);
                rules
                    .iter()
                    .map(|r| Ok(r.score(&map)?.0 as f64))
                    .collect::<Result<Vec<f64>>>()
            };
            let baseline = score_all(&device, 0)?;
            let mut per_checkpoint = Vec::with_capacity(setup.schedule.checkpoints.len());
            for (c, &years) in setup.schedule.checkpoints.iter().enumerate() {
                device = apply_aging(&device, setup.profile, years, setup.aging)?;
                per_checkpoint.push(score_all(&device, c as u64 + 1)?);
            }
            Ok((baseline, per_checkpoint))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(kinds
        .iter()
        .enumerate()
        .map(|(ki, &kind)| {
            let baseline_scores: Vec<f64> = per_device.iter().map(|d| d.0[ki]).collect();
            let checkpoint_scores: Vec<Vec<f64>> = (0..setup.schedule.checkpoints.len())
                .map(|c| per_device.iter().map(|d| d.1[c][ki]).collect())
                .collect();
            let checkpoint_deltas = checkpoint_scores
                .iter()
                .enumerate()
                .map(|(c, scores)| CheckpointDeltas {
                    years: setup.schedule.checkpoints[c],
                    deltas: scores
                        .iter()
                        .zip(if c == 0 {
                            &baseline_scores
                        } else {
                            &checkpoint_scores[c - 1]
                        })
                        .map(|(now, prev)| now - prev)
                        .collect(),
                })
                .collect();
            AgingScores {
                kind,
                baseline_scores,
                checkpoint_scores,
                checkpoint_deltas,
            }
        })
        .collect())
}

/// Classifier quality at one checkpoint of a Monte Carlo evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct EvaluationReport {
    pub checkpoint_years: f64,
    pub n_new: usize,
    pub n_aged: usize,
    pub auroc: f64,
    /// Informedness-optimal threshold in baseline standard deviations.
    pub best_t: f64,
    pub best_informedness: f64,
    pub accuracy_at_best_t: f64,
    pub tpr_at_best_t: f64,
    pub fpr_at_best_t: f64,
    pub roc: RocCurve,
}

/// Virtual new scores plus aged scores per checkpoint.
///
/// New device `i` and aged device `j` run independent seed streams. An aged
/// device draws its own baseline score, then accumulates one uniform pick
/// from each checkpoint's observed increments, walking the schedule in
/// order.
fn virtual_scores(
    dist: &NewScoreDistribution,
    checkpoints: &[CheckpointDeltas],
    n_virtual: usize,
    seed_value: u64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let new_scores: Vec<f64> = (0..n_virtual)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(derive(seed_value, purpose::MONTE_CARLO, i as u64));
            let z: f64 = rng.sample(StandardNormal);
            dist.mean + dist.std_dev * z
        })
        .collect();
    let aged_paths: Vec<Vec<f64>> = (0..n_virtual)
        .into_par_iter()
        .map(|j| {
            let mut rng = seed::rng(derive(
                seed_value,
                purpose::MONTE_CARLO,
                (n_virtual + j) as u64,
            ));
            let z: f64 = rng.sample(StandardNormal);
            let mut score = dist.mean + dist.std_dev * z;
            checkpoints
                .iter()
                .map(|c| {
                    score += c.deltas[rng.gen_range(0..c.deltas.len())];
                    score
                })
                .collect()
        })
        .collect();
    // Transpose to per-checkpoint score lists.
    let aged_scores = (0..checkpoints.len())
        .map(|c| aged_paths.iter().map(|path| path[c]).collect())
        .collect();
    (new_scores, aged_scores)
}

/// Evaluate a classifier at every checkpoint with virtual populations of
/// `n_virtual` new and `n_virtual` aged devices.
pub fn monte_carlo_evaluate(
    dist: &NewScoreDistribution,
    checkpoints: &[CheckpointDeltas],
    n_virtual: usize,
    seed_value: u64,
) -> Result<Vec<EvaluationReport>> {
    if n_virtual < 2 {
        return Err(Error::invalid("n_virtual", "must be at least 2"));
    }
    for (c, cp) in checkpoints.iter().enumerate() {
        if cp.deltas.is_empty() {
            return Err(Error::Contract(format!(
                "checkpoint {c} ({} years) has no observed increments",
                cp.years
            )));
        }
    }
    let (new_scores, aged_scores) = virtual_scores(dist, checkpoints, n_virtual, seed_value);
    checkpoints
        .iter()
        .zip(aged_scores)
        .map(|(cp, aged)| {
            let curve = roc(&new_scores, &aged)?;
            let (cut, best_informedness) = optimal_threshold(&new_scores, &aged)?;
            let (accuracy, tpr, fpr) = threshold_accuracy(&new_scores, &aged, cut);
            Ok(EvaluationReport {
                checkpoint_years: cp.years,
                n_new: new_scores.len(),
                n_aged: aged.len(),
                auroc: curve.auroc,
                best_t: (cut - dist.mean) / dist.std_dev,
                best_informedness,
                accuracy_at_best_t: accuracy,
                tpr_at_best_t: tpr,
                fpr_at_best_t: fpr,
                roc: curve,
            })
        })
        .collect()
}

/// A recovery experiment: age, evaluate, rest, re-evaluate at the threshold
/// fixed before the rest.
#[derive(Clone, Copy, Debug)]
pub struct RecoverySetup<'a> {
    pub params: &'a GenerativeParams,
    pub k_samples: usize,
    pub n_devices: usize,
    pub master_seed: u64,
    pub aging: &'a AgingConfig,
    pub profile: &'a SoftwareBiasProfile,
    /// Effective age at which devices are pulled for resale.
    pub age_years: f64,
    /// Unpowered rest before the audit.
    pub rest_years: f64,
    pub n_virtual: usize,
    pub mc_seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryReport {
    pub age_years: f64,
    pub rest_years: f64,
    /// Decision cut on the raw score axis, fixed before the rest.
    pub fixed_cut: f64,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub accuracy_drop: f64,
    pub mean_delta_before: f64,
    pub mean_delta_after: f64,
}

/// Zero-knowledge scores through an age/rest cycle, evaluated at a
/// threshold chosen from the pre-rest population only. The same virtual
/// seed stream serves both evaluations, so before/after differ only in the
/// observed increments.
pub fn run_recovery_experiment(setup: &RecoverySetup<'_>) -> Result<RecoveryReport> {
    if setup.n_devices < 3 {
        return Err(Error::invalid("n_devices", "need at least 3 for a baseline fit"));
    }
    let triples: Vec<(f64, f64, f64)> = (0..setup.n_devices)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, f64)> {
            let dseed = derive(setup.master_seed, purpose::DEVICE, i as u64);
            let device = synth_device(setup.params, dseed)?;
            let score_at = |d: &crate::sram::DeviceModel, idx: u64| -> Result<f64> {
                let snap = sample_power_on(
                    d,
                    setup.k_samples,
                    derive(dseed, purpose::SNAPSHOT, idx),
                )?;
                let (s1, s0, _) = estimate_bias_map(&snap).category_counts();
                Ok(s1 as f64 - s0 as f64)
            };
            let baseline = score_at(&device, 0)?;
            let aged = apply_aging(&device, setup.profile, setup.age_years, setup.aging)?;
            let before = score_at(&aged, 1)?;
            let rested = apply_recovery(&aged, setup.rest_years, setup.aging)?;
            let after = score_at(&rested, 2)?;
            Ok((baseline, before - baseline, after - baseline))
        })
        .collect::<Result<Vec<_>>>()?;

    let baselines: Vec<f64> = triples.iter().map(|t| t.0).collect();
    let deltas_before: Vec<f64> = triples.iter().map(|t| t.1).collect();
    let deltas_after: Vec<f64> = triples.iter().map(|t| t.2).collect();
    let dist = fit_new_scores(&baselines)?;

    let before_cp = [CheckpointDeltas {
        years: setup.age_years,
        deltas: deltas_before.clone(),
    }];
    let after_cp = [CheckpointDeltas {
        years: setup.age_years,
        deltas: deltas_after.clone(),
    }];
    let (new_scores, aged_before) =
        virtual_scores(&dist, &before_cp, setup.n_virtual, setup.mc_seed);
    let (_, aged_after) = virtual_scores(&dist, &after_cp, setup.n_virtual, setup.mc_seed);

    let (cut, _) = optimal_threshold(&new_scores, &aged_before[0])?;
    let (accuracy_before, _, _) = threshold_accuracy(&new_scores, &aged_before[0], cut);
    let (accuracy_after, _, _) = threshold_accuracy(&new_scores, &aged_after[0], cut);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(RecoveryReport {
        age_years: setup.age_years,
        rest_years: setup.rest_years,
        fixed_cut: cut,
        accuracy_before,
        accuracy_after,
        accuracy_drop: accuracy_before - accuracy_after,
        mean_delta_before: mean(&deltas_before),
        mean_delta_after: mean(&deltas_after),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sram::GenerativeParams;
    use crate::swbias::{compute_bias_profile, uniform_trace};
    use approx::assert_abs_diff_eq;

    fn tiny_params() -> GenerativeParams {
        GenerativeParams::symmetric(256, 64, 3.0, 4.0, [0.68, 0.20, 0.12])
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
    fn zero_deltas_give_chance_level_auroc() {
        let cp = [CheckpointDeltas {
            years: 1.0,
            deltas: vec![0.0],
        }];
        let reports = monte_carlo_evaluate(&dist(100.0, 10.0), &cp, 10_000, 7).unwrap();
        assert_eq!(reports.len(), 1);
        assert_abs_diff_eq!(reports[0].auroc, 0.5, epsilon = 0.02);
    }

    #[test]
    fn huge_deltas_give_full_accuracy() {
        let cp = [CheckpointDeltas {
            years: 1.0,
            deltas: vec![200.0, 210.0], // 20 sigma and up
        }];
        let r = &monte_carlo_evaluate(&dist(0.0, 10.0), &cp, 2_000, 3).unwrap()[0];
        assert_eq!(r.accuracy_at_best_t, 1.0);
        assert_eq!(r.tpr_at_best_t, 1.0);
        assert_eq!(r.fpr_at_best_t, 0.0);
        assert_abs_diff_eq!(r.auroc, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.best_informedness, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn increments_accumulate_across_checkpoints() {
        // Two checkpoints of +5 sigma each: the second must separate more.
        let cps = [
            CheckpointDeltas {
                years: 1.0,
                deltas: vec![5.0],
            },
            CheckpointDeltas {
                years: 2.0,
                deltas: vec![5.0],
            },
        ];
        let reports = monte_carlo_evaluate(&dist(0.0, 1.0), &cps, 2_000, 11).unwrap();
        assert!(reports[1].auroc > reports[0].auroc);
        assert!(reports[1].accuracy_at_best_t >= reports[0].accuracy_at_best_t);
        assert!(reports[1].best_t > reports[0].best_t);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let cp_empty = [CheckpointDeltas {
            years: 1.0,
            deltas: vec![],
        }];
        assert!(matches!(
            monte_carlo_evaluate(&dist(0.0, 1.0), &cp_empty, 100, 1),
            Err(Error::Contract(_))
        ));
        let cp = [CheckpointDeltas {
            years: 1.0,
            deltas: vec![1.0],
        }];
        assert!(matches!(
            monte_carlo_evaluate(&dist(0.0, 1.0), &cp, 1, 1),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn checkpoint_zero_prepends_identity() {
        let cps = prepend_checkpoint_zero(&[CheckpointDeltas {
            years: 0.5,
            deltas: vec![3.0],
        }]);
        assert_eq!(cps.len(), 2);
        assert_eq!(cps[0].years, 0.0);
        assert_eq!(cps[0].deltas, vec![0.0]);
        let reports = monte_carlo_evaluate(&dist(0.0, 1.0), &cps, 4_000, 5).unwrap();
        assert_abs_diff_eq!(reports[0].auroc, 0.5, epsilon = 0.03);
        assert!(reports[1].auroc > 0.9);
    }

    #[test]
    fn aging_experiment_scores_rise_under_zero_biased_software() {
        let params = tiny_params();
        let profile = compute_bias_profile(&uniform_trace(256, 0.0, 1.0)).unwrap();
        let schedule = AgingSchedule::new(vec![0.5, 2.0]).unwrap();
        let aging = AgingConfig::new(1.0);
        let setup = ExperimentSetup {
            params: &params,
            k_samples: 51,
            n_devices: 4,
            master_seed: 99,
            schedule: &schedule,
            aging: &aging,
            profile: &profile,
            strength_threshold: 1.0,
        };
        let out = run_aging_experiment(
            &setup,
            &[ClassifierKind::ZeroKnowledge, ClassifierKind::SoftwareAware],
        )
        .unwrap();
        assert_eq!(out.len(), 2);
        let zk = &out[0];
        assert_eq!(zk.baseline_scores.len(), 4);
        assert_eq!(zk.checkpoint_scores.len(), 2);
        assert_eq!(zk.checkpoint_deltas[1].years, 2.0);
        // Margins only move up, so both increments are positive on average.
        for cp in &zk.checkpoint_deltas {
            let mean = cp.deltas.iter().sum::<f64>() / cp.deltas.len() as f64;
            assert!(mean > 0.0, "increment mean {mean} at {} years", cp.years);
        }
        // Deltas reconstruct the checkpoint scores exactly.
        for d in 0..4 {
            let total: f64 = zk.checkpoint_deltas.iter().map(|c| c.deltas[d]).sum();
            assert_abs_diff_eq!(
                zk.baseline_scores[d] + total,
                zk.checkpoint_scores[1][d],
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn experiment_rejects_mismatched_profile() {
        let params = tiny_params();
        let profile = compute_bias_profile(&uniform_trace(128, 0.0, 1.0)).unwrap();
        let schedule = AgingSchedule::new(vec![1.0]).unwrap();
        let aging = AgingConfig::new(1.0);
        let setup = ExperimentSetup {
            params: &params,
            k_samples: 51,
            n_devices: 2,
            master_seed: 1,
            schedule: &schedule,
            aging: &aging,
            profile: &profile,
            strength_threshold: 1.0,
        };
        assert!(matches!(
            run_aging_experiment(&setup, &[ClassifierKind::ZeroKnowledge]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn results_are_identical_across_thread_counts() {
        let params = tiny_params();
        let profile = compute_bias_profile(&uniform_trace(256, 0.0, 1.0)).unwrap();
        let schedule = AgingSchedule::new(vec![1.0]).unwrap();
        let aging = AgingConfig::new(1.0);
        let run = || {
            let setup = ExperimentSetup {
                params: &params,
                k_samples: 11,
                n_devices: 3,
                master_seed: 5,
                schedule: &schedule,
                aging: &aging,
                profile: &profile,
                strength_threshold: 1.0,
            };
            let scores = run_aging_experiment(&setup, &[ClassifierKind::ZeroKnowledge]).unwrap();
            let mc = monte_carlo_evaluate(
                &dist(0.0, 1.0),
                &scores[0].checkpoint_deltas,
                500,
                42,
            )
            .unwrap();
            (scores, mc.iter().map(|r| (r.auroc, r.best_t)).collect::<Vec<_>>())
        };
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = pool1.install(run);
        let b = pool4.install(run);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn recovery_reduces_scores_at_fixed_cut() {
        let params = tiny_params();
        let profile = compute_bias_profile(&uniform_trace(256, 0.0, 1.0)).unwrap();
        let aging = AgingConfig::new(0.6);
        let setup = RecoverySetup {
            params: &params,
            k_samples: 51,
            n_devices: 6,
            master_seed: 17,
            aging: &aging,
            profile: &profile,
            age_years: 1.0,
            rest_years: aging.recovery_saturation,
            n_virtual: 500,
            mc_seed: 23,
        };
        let r = run_recovery_experiment(&setup).unwrap();
        assert!(r.mean_delta_before > 0.0);
        assert!(r.mean_delta_after < r.mean_delta_before);
        assert!(r.accuracy_after <= r.accuracy_before + 1e-12);
        assert!((0.0..=1.0).contains(&r.accuracy_before));
        assert!((0.0..=1.0).contains(&r.accuracy_after));
    }
}
