//! The six subcommands, each a pure function of (config, input files).
//!
//! Artifact names inside the output directory are fixed, so distinct
//! outputs can never collide, and a rerun with the same config and seed
//! rewrites every file with identical bytes.

use std::path::{Path, PathBuf};

use serde::Serialize;

use burnin_core::aging::{acceleration_factor, apply_aging};
use burnin_core::classify::{
    fit_new_scores, ClassificationResult, ClassifierKind, ScoringRule,
};
use burnin_core::error::{Error, Result};
use burnin_core::eval::{
    monte_carlo_evaluate, prepend_checkpoint_zero, run_aging_experiment, ExperimentSetup,
};
use burnin_core::io;
use burnin_core::seed::{derive, purpose};
use burnin_core::sram::{
    aggregate_summaries, estimate_bias_map, infer_band_map, sample_power_on, summarize,
    summarize_binary, BandMap, CellBiasMap, FamilySummary,
};
use burnin_core::stats::shapiro::shapiro_wilk;
use burnin_core::swbias::{
    benchmark_like_trace, compute_bias_profile, profile_summary, select_usable_bits,
    uniform_trace, ExpectedStateMap, SoftwareBiasProfile, WriteTrace,
};

use crate::config::{Resolved, SoftwareSource};

/// Materialize the configured software source as a trace. The bool reports
/// whether the trace was synthesized here (worth writing out) rather than
/// read from disk.
fn software_trace(r: &Resolved) -> Result<(WriteTrace, bool)> {
    match &r.config.software {
        SoftwareSource::Uniform { bias } => {
            Ok((uniform_trace(r.params.n_cells, *bias, 1.0), true))
        }
        SoftwareSource::BenchmarkLike => Ok((
            benchmark_like_trace(
                r.params.n_cells,
                derive(r.config.seed, purpose::PROFILE, 0),
            ),
            true,
        )),
        SoftwareSource::Trace { path } => Ok((io::read_trace(path)?, false)),
    }
}

fn software_profile(r: &Resolved) -> Result<SoftwareBiasProfile> {
    let (trace, _) = software_trace(r)?;
    compute_bias_profile(&trace)
}

fn device_id(i: usize) -> String {
    format!("dev-{i:03}")
}

/// Per-device baseline artifacts: snapshot set, bias map, summary.
struct BaselineDevice {
    device: burnin_core::sram::DeviceModel,
    snapshot: burnin_core::sram::SnapshotSet,
    map: CellBiasMap,
    summary: FamilySummary,
}

fn synth_baseline(r: &Resolved) -> Result<Vec<BaselineDevice>> {
    if r.config.n_devices == 0 {
        return Err(Error::invalid("n_devices", "must be at least 1"));
    }
    (0..r.config.n_devices)
        .map(|i| {
            let dseed = derive(r.config.seed, purpose::DEVICE, i as u64);
            let mut device = burnin_core::sram::synth_device(&r.params, dseed)?;
            device.device_id = device_id(i);
            let mut snapshot = sample_power_on(
                &device,
                r.config.k_samples,
                derive(dseed, purpose::SNAPSHOT, 0),
            )?;
            snapshot.label = r.config.label.clone();
            let map = estimate_bias_map(&snapshot);
            let summary = summarize(
                &map,
                r.grid_width,
                r.config.moran_permutations,
                derive(r.config.seed, purpose::PERMUTATION, i as u64),
            )?;
            Ok(BaselineDevice {
                device,
                snapshot,
                map,
                summary,
            })
        })
        .collect()
}

/// Synthesize the population, write per-device snapshots and bias maps,
/// and summarize power-on statistics per device and for the population.
pub fn cmd_synth(r: &Resolved) -> Result<()> {
    let out = r.out_dir()?;
    let devices = synth_baseline(r)?;
    let mut summaries = Vec::with_capacity(devices.len());
    for b in &devices {
        let id = &b.device.device_id;
        io::write_snapshot_set(out.join(format!("{id}.snapshot.txt")), &b.snapshot)?;
        io::write_bias_map(out.join(format!("{id}.bias.csv")), &b.map)?;
        summaries.push(b.summary.clone());
    }
    io::write_json(out.join("family_summaries.json"), &summaries)?;
    let population = aggregate_summaries(&summaries)?;
    io::write_json(out.join("population_summary.json"), &population)?;
    let af = acceleration_factor(&r.acceleration)?;
    println!(
        "synth: {} devices of {} cells; population mean bias {:.4}, portion strong {:.4}; stress acceleration factor {:.1}",
        devices.len(),
        r.params.n_cells,
        population.mean_bias,
        population.portion_strong,
        af,
    );
    Ok(())
}

/// Profile the configured software source and write bias artifacts.
pub fn cmd_profile(r: &Resolved) -> Result<()> {
    let out = r.out_dir()?;
    let (trace, synthesized) = software_trace(r)?;
    let profile = compute_bias_profile(&trace)?;
    let summary = profile_summary(&profile)?;
    if synthesized {
        io::write_trace(out.join("generated_trace.txt"), &trace)?;
    }
    io::write_profile(out.join("profile.csv"), &profile)?;
    io::write_profile_heatmap(
        out.join("profile_heatmap.csv"),
        &profile,
        r.grid_width.min(profile.memory_bits),
    )?;
    io::write_json(out.join("profile_summary.json"), &summary)?;
    let usable = select_usable_bits(&profile, r.config.strength_threshold);
    println!(
        "profile: {} bits, mean bias {:.4}, mean strength {:.4}, sram use {:.4}, usable at threshold {}: {:.4}",
        profile.memory_bits,
        summary.mean_bias,
        summary.mean_strength,
        summary.sram_use,
        r.config.strength_threshold,
        usable.usable_fraction(),
    );
    Ok(())
}

#[derive(Serialize)]
struct AgedCheckpointSummary {
    effective_years: f64,
    summary: burnin_core::sram::PopulationSummary,
}

/// Age the population along the schedule and summarize each checkpoint.
pub fn cmd_age(r: &Resolved) -> Result<()> {
    let out = r.out_dir()?;
    let profile = software_profile(r)?;
    let devices = synth_baseline(r)?;
    io::write_schedule(out.join("schedule.csv"), &r.schedule)?;

    let baseline = aggregate_summaries(
        &devices.iter().map(|b| b.summary.clone()).collect::<Vec<_>>(),
    )?;
    io::write_json(out.join("population_summary.json"), &baseline)?;

    let mut aged: Vec<_> = devices.into_iter().map(|b| b.device).collect();
    let mut checkpoints = Vec::with_capacity(r.schedule.checkpoints.len());
    for (c, &years) in r.schedule.checkpoints.iter().enumerate() {
        let mut summaries = Vec::with_capacity(aged.len());
        for (i, device) in aged.iter_mut().enumerate() {
            *device = apply_aging(device, &profile, years, &r.aging)?;
            let dseed = derive(r.config.seed, purpose::DEVICE, i as u64);
            let snap = sample_power_on(
                device,
                r.config.k_samples,
                derive(dseed, purpose::SNAPSHOT, c as u64 + 1),
            )?;
            summaries.push(summarize(
                &estimate_bias_map(&snap),
                r.grid_width,
                r.config.moran_permutations,
                derive(r.config.seed, purpose::PERMUTATION, (c + 1) as u64 * 10_000 + i as u64),
            )?);
        }
        let summary = aggregate_summaries(&summaries)?;
        println!(
            "age: t={:.4}y mean bias {:.4}, strong-1 {:.4}, strong-0 {:.4}",
            years, summary.mean_bias, summary.portion_strong_1, summary.portion_strong_0
        );
        checkpoints.push(AgedCheckpointSummary {
            effective_years: years,
            summary,
        });
    }
    io::write_json(out.join("aged_population_summaries.json"), &checkpoints)?;
    Ok(())
}

/// Score bias maps against a freshly fitted new-device baseline and label
/// them. With no input files the baseline devices audit themselves.
pub fn cmd_classify(r: &Resolved, inputs: &[PathBuf]) -> Result<()> {
    let out = r.out_dir()?;
    let kind = r.classifiers[0];
    let expected = if kind.uses_software_profile() {
        let profile = software_profile(r)?;
        select_usable_bits(&profile, r.config.strength_threshold)
    } else {
        ExpectedStateMap::uniform_expect1(r.params.n_cells)
    };
    let devices = synth_baseline(r)?;
    let baseline_scores: Vec<f64> = devices
        .iter()
        .map(|b| {
            let bands = BandMap::from_device(&b.device);
            rule_for(kind, &expected, &bands).score(&b.map).map(|(s, _)| s as f64)
        })
        .collect::<Result<_>>()?;
    let dist = fit_new_scores(&baseline_scores)?;

    let mut rows = Vec::new();
    let mut results: Vec<ClassificationResult> = Vec::new();
    let audit: Vec<(String, CellBiasMap)> = if inputs.is_empty() {
        devices
            .iter()
            .map(|b| (b.device.device_id.clone(), b.map.clone()))
            .collect()
    } else {
        inputs
            .iter()
            .map(|p| {
                let id = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string());
                Ok((id, io::read_bias_map(p, r.config.k_samples)?))
            })
            .collect::<Result<_>>()?
    };
    for (id, map) in &audit {
        // An auditor has no design documents for a foreign device: band
        // majorities are inferred from the map itself when needed.
        let bands = if kind.uses_bands() {
            Some(infer_band_map(map, r.params.band_size)?)
        } else {
            None
        };
        let rule = match (kind, &bands) {
            (ClassifierKind::ZeroKnowledge, _) => ScoringRule::ZeroKnowledge,
            (_, Some(b)) => ScoringRule::Table {
                expected: &expected,
                bands: Some(b),
            },
            (_, None) => ScoringRule::Table {
                expected: &expected,
                bands: None,
            },
        };
        let result = burnin_core::classify::classify(
            map,
            &rule,
            kind,
            &dist,
            r.config.threshold_t,
        )?;
        rows.push(io::BatchRow {
            device_id: id.clone(),
            score: result.score,
            label: result.label,
        });
        results.push(result);
    }
    io::write_batch_results(out.join("batch.csv"), &rows)?;
    io::write_json(out.join("classification_results.json"), &results)?;
    let recycled = rows
        .iter()
        .filter(|row| row.label == burnin_core::classify::Label::Recycled)
        .count();
    println!(
        "classify: {} under {} at T={}: {} recycled, {} new (baseline mean {:.1}, sd {:.1})",
        rows.len(),
        kind.as_str(),
        r.config.threshold_t,
        recycled,
        rows.len() - recycled,
        dist.mean,
        dist.std_dev,
    );
    Ok(())
}

fn rule_for<'a>(
    kind: ClassifierKind,
    expected: &'a ExpectedStateMap,
    bands: &'a BandMap,
) -> ScoringRule<'a> {
    match kind {
        ClassifierKind::ZeroKnowledge => ScoringRule::ZeroKnowledge,
        ClassifierKind::StructureAware | ClassifierKind::SoftwareStructureAware => {
            ScoringRule::Table {
                expected,
                bands: Some(bands),
            }
        }
        ClassifierKind::SoftwareAware => ScoringRule::Table {
            expected,
            bands: None,
        },
    }
}

/// The full pipeline: synth, profile, age along the schedule, score, fit,
/// Monte Carlo evaluation; one report set per requested classifier.
pub fn cmd_evaluate(r: &Resolved) -> Result<()> {
    let out = r.out_dir()?;
    let profile = software_profile(r)?;
    io::write_schedule(out.join("schedule.csv"), &r.schedule)?;
    let setup = ExperimentSetup {
        params: &r.params,
        k_samples: r.config.k_samples,
        n_devices: r.config.n_devices,
        master_seed: r.config.seed,
        schedule: &r.schedule,
        aging: &r.aging,
        profile: &profile,
        strength_threshold: r.config.strength_threshold,
    };
    let observed = run_aging_experiment(&setup, &r.classifiers)?;
    for (ki, scores) in observed.iter().enumerate() {
        let kind = scores.kind.as_str();
        let dist = fit_new_scores(&scores.baseline_scores)?;
        let checkpoints = prepend_checkpoint_zero(&scores.checkpoint_deltas);
        let reports = monte_carlo_evaluate(
            &dist,
            &checkpoints,
            r.config.n_virtual,
            derive(r.config.seed, purpose::MONTE_CARLO, ki as u64),
        )?;
        io::write_json(out.join(format!("report_{kind}.json")), &reports)?;
        io::write_evaluation_summary(out.join(format!("summary_{kind}.csv")), &reports)?;
        for (ci, report) in reports.iter().enumerate() {
            io::write_roc_csv(out.join(format!("roc_{kind}_{ci:02}.csv")), &report.roc)?;
        }
        let last = reports.last().expect("at least checkpoint zero");
        println!(
            "evaluate: {kind}: {} checkpoints, final auroc {:.4}, accuracy {:.4} at T={:.2}",
            reports.len(),
            last.auroc,
            last.accuracy_at_best_t,
            last.best_t,
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ValueStats {
    n: usize,
    mean: f64,
    std_dev: f64,
    shapiro_w: f64,
    shapiro_p: f64,
}

/// Standalone statistics: power-on summary of a bias-map CSV (including
/// spatial autocorrelation), or a normality check of a plain number list.
pub fn cmd_stats(
    r: &Resolved,
    bias_map: Option<&Path>,
    values: Option<&Path>,
    grid_width: Option<usize>,
    binary_moran: bool,
) -> Result<()> {
    match (bias_map, values) {
        (Some(path), None) => {
            let map = io::read_bias_map(path, r.config.k_samples)?;
            let grid = grid_width.unwrap_or(r.grid_width);
            let seed_value = derive(r.config.seed, purpose::PERMUTATION, 0);
            let summary = if binary_moran {
                summarize_binary(&map, grid, r.config.moran_permutations, seed_value)?
            } else {
                summarize(&map, grid, r.config.moran_permutations, seed_value)?
            };
            let text = serde_json::to_string_pretty(&summary)
                .expect("summary serializes");
            println!("{text}");
            if r.config.out_dir.is_some() {
                io::write_json(r.out_dir()?.join("stats_summary.json"), &summary)?;
            }
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            let mut xs = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let v: f64 = line.parse().map_err(|_| {
                    Error::parse(
                        path.display().to_string(),
                        format!("line {}: not a number: {line:?}", i + 1),
                    )
                })?;
                xs.push(v);
            }
            let sw = shapiro_wilk(&xs)?;
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let stats = ValueStats {
                n,
                mean,
                std_dev: var.sqrt(),
                shapiro_w: sw.w,
                shapiro_p: sw.p,
            };
            let text = serde_json::to_string_pretty(&stats).expect("stats serialize");
            println!("{text}");
            if r.config.out_dir.is_some() {
                io::write_json(r.out_dir()?.join("stats_values.json"), &stats)?;
            }
        }
        _ => {
            return Err(Error::invalid(
                "stats",
                "pass exactly one of --bias-map or --values",
            ))
        }
    }
    Ok(())
}
