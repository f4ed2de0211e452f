use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{CampaignConfig, Scenario};
use super::report::{emit_csv, emit_summary, summarize, Baseline, CampaignReport, ReportHeader, TrialRow};
use super::CampaignError;
use crate::accelerator::{map_model, Accelerator, Block, CompiledNetwork, FaultedAccelerator, MappingPlan};
use crate::faults::{apply_attack, AttackOutcome, PRNG_IDENTITY};
use crate::model_io::{load_idx, read_archive, Dataset, Manifest};
use crate::nn::{evaluate_with, Model};

pub const REPORT_FILE: &str = "report.json";
pub const CSV_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
const PARTIAL_DIR: &str = "partial";

/// A model variant ready for evaluation.
pub struct PreparedVariant {
    pub name: String,
    pub model: Model,
    pub manifest: Manifest,
    pub plan: MappingPlan,
    pub archive_sha256: String,
}

/// Rows of one completed (variant, scenario), stored so an interrupted
/// campaign can resume.
#[derive(Serialize, Deserialize)]
struct Partial {
    config_hash: String,
    variant: String,
    scenario: Scenario,
    rows: Vec<TrialRow>,
}

fn partial_path(dir: &Path, variant: &str, scenario: &Scenario) -> PathBuf {
    dir.join(PARTIAL_DIR)
        .join(format!("{variant}__{}.json", scenario.label()))
}

fn load_partial(path: &Path, hash: &str, trials: usize) -> Option<Vec<TrialRow>> {
    let text = std::fs::read_to_string(path).ok()?;
    let p: Partial = serde_json::from_str(&text).ok()?;
    (p.config_hash == hash && p.rows.len() == trials).then_some(p.rows)
}

fn write_atomic(path: &Path, text: &str) -> Result<(), CampaignError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| CampaignError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CampaignError::io(path, e))
}

pub fn load_dataset(cfg: &CampaignConfig) -> Result<Dataset, CampaignError> {
    let ds = load_idx(cfg.resolve(&cfg.dataset.images), cfg.resolve(&cfg.dataset.labels))
        .map_err(|e| CampaignError::Config(format!("dataset: {e}")))?;
    Ok(match cfg.subsample {
        Some(n) => ds.subsample(n),
        None => ds,
    })
}

pub fn prepare_variants(cfg: &CampaignConfig, acc: &Accelerator) -> Result<Vec<PreparedVariant>, CampaignError> {
    cfg.variants
        .iter()
        .map(|v| {
            let path = cfg.resolve(&v.archive);
            let bytes = std::fs::read(&path).map_err(|e| CampaignError::Config(format!("{}: {e}", path.display())))?;
            let (model, manifest) =
                read_archive(&bytes).map_err(|e| CampaignError::Config(format!("{}: {e}", path.display())))?;
            let plan = map_model(&model, acc).map_err(|e| CampaignError::Config(format!("{}: {e}", v.name)))?;
            Ok(PreparedVariant {
                name: v.name.clone(),
                model,
                manifest,
                plan,
                archive_sha256: hex::encode(Sha256::digest(&bytes)),
            })
        })
        .collect()
}

fn evaluate(
    variant: &PreparedVariant,
    facc: &FaultedAccelerator,
    dataset: &Dataset,
) -> Result<(crate::nn::AccuracyReport, usize), CampaignError> {
    let net = CompiledNetwork::new(&variant.model, &variant.plan, facc).map_err(|e| CampaignError::Runtime(e.to_string()))?;
    let report = evaluate_with(&variant.model, dataset, &net).map_err(|e| CampaignError::Runtime(e.to_string()))?;
    Ok((report, net.corrupted_slots()))
}

fn trial_row(
    cfg: &CampaignConfig,
    variant: &PreparedVariant,
    scenario: &Scenario,
    trial: u32,
    outcome: &AttackOutcome,
    dataset: &Dataset,
) -> Result<TrialRow, CampaignError> {
    let (acc, corrupted_slots) = evaluate(variant, &outcome.faulted, dataset)?;
    Ok(TrialRow {
        variant: variant.name.clone(),
        kind: scenario.kind,
        scope: scenario.scope,
        fraction: scenario.fraction,
        trial,
        seed: cfg.seed,
        accuracy: acc.accuracy,
        correct: acc.correct,
        total: acc.total,
        corrupted_slots,
        faulted_mrs: outcome.faulted.fault_count(),
        target_digest: outcome.selection.digest(),
        targets: outcome.selection.targets.len(),
        target_budget: outcome.selection.budget,
        overshoot: outcome.selection.overshoot(),
    })
}

fn dump_targets(dir: &Path, scenario: &Scenario, trial: u32, outcome: &AttackOutcome) -> Result<(), CampaignError> {
    let dir = dir.join("targets");
    std::fs::create_dir_all(&dir).map_err(|e| CampaignError::io(&dir, e))?;
    let path = dir.join(format!("{}-t{trial}.txt", scenario.label()));
    let mut text = String::new();
    for id in &outcome.selection.targets {
        text.push_str(&id.to_string());
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(|e| CampaignError::io(&path, e))
}

/// Runs every variant x scenario x trial of `cfg`, writing per-scenario
/// partial results as they complete and reusing any left by an earlier run
/// of the same configuration. `progress` receives one line per finished
/// (variant, scenario).
pub fn run_campaign_with(
    cfg: &CampaignConfig,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<CampaignReport, CampaignError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let out = cfg.output_path();
    let partial_dir = out.join(PARTIAL_DIR);
    std::fs::create_dir_all(&partial_dir).map_err(|e| CampaignError::io(&partial_dir, e))?;

    let acc = Accelerator::build(cfg.accelerator.clone()).map_err(|e| CampaignError::Config(e.to_string()))?;
    let thermal = cfg.thermal_model();
    let dataset = load_dataset(cfg)?;
    if dataset.is_empty() {
        return Err(CampaignError::Config("the dataset has no images".into()));
    }
    let variants = prepare_variants(cfg, &acc)?;

    let healthy = FaultedAccelerator::healthy(acc.clone());
    let baselines = variants
        .iter()
        .map(|v| {
            let (r, _) = evaluate(v, &healthy, &dataset)?;
            Ok(Baseline {
                variant: v.name.clone(),
                accuracy: r.accuracy,
                correct: r.correct,
                total: r.total,
                recorded_accuracy: v.manifest.test_accuracy,
                total_parameters: v.model.parameter_summary().total_parameters,
                archive_sha256: v.archive_sha256.clone(),
            })
        })
        .collect::<Result<Vec<_>, CampaignError>>()?;

    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    for scenario in cfg.scenarios.scenarios() {
        let spec = cfg.attack_spec(&scenario);
        if spec.budget(&acc) == 0 {
            warnings.push(format!("{}: fraction selects no MRs; trials run fault-free", scenario.label()));
        }
        let mut per_variant: Vec<Option<Vec<TrialRow>>> = variants
            .iter()
            .map(|v| load_partial(&partial_path(&out, &v.name, &scenario), &hash, cfg.trials))
            .collect();
        let pending: Vec<usize> = (0..variants.len()).filter(|&i| per_variant[i].is_none()).collect();
        if !pending.is_empty() {
            let trials: Vec<Vec<TrialRow>> = (0..cfg.trials as u32)
                .into_par_iter()
                .map(|trial| {
                    let outcome = apply_attack(&acc, &spec, trial, &thermal)
                        .map_err(|e| CampaignError::Runtime(e.to_string()))?;
                    if cfg.dump_targets {
                        dump_targets(&out, &scenario, trial, &outcome)?;
                    }
                    pending
                        .iter()
                        .map(|&i| trial_row(cfg, &variants[i], &scenario, trial, &outcome, &dataset))
                        .collect()
                })
                .collect::<Result<_, CampaignError>>()?;
            for (k, &i) in pending.iter().enumerate() {
                let v_rows: Vec<TrialRow> = trials.iter().map(|t| t[k].clone()).collect();
                let partial = Partial {
                    config_hash: hash.clone(),
                    variant: variants[i].name.clone(),
                    scenario,
                    rows: v_rows.clone(),
                };
                let text = serde_json::to_string_pretty(&partial).expect("partial serializes");
                write_atomic(&partial_path(&out, &variants[i].name, &scenario), &text)?;
                per_variant[i] = Some(v_rows);
            }
        }
        for (v, r) in variants.iter().zip(per_variant) {
            let r = r.expect("every variant computed or loaded");
            let median = super::stats::FiveNumber::of(&r.iter().map(|x| x.accuracy).collect::<Vec<_>>())
                .map_or(f64::NAN, |s| s.median);
            progress(&format!("{} {}: median accuracy {median:.4}", v.name, scenario.label()));
            rows.extend(r);
        }
    }
    // Group by variant; the stable sort keeps scenario and trial order.
    rows.sort_by_key(|r| variants.iter().position(|v| v.name == r.variant));
    let summaries = summarize(&rows, &baselines);
    Ok(CampaignReport {
        header: ReportHeader {
            tool: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            prng: PRNG_IDENTITY.to_string(),
            config_hash: hash,
            seed: cfg.seed,
            trials: cfg.trials,
            images: dataset.len(),
            heater_power_conv_mw: cfg.attack.heater_power_mw.unwrap_or_else(|| thermal.bank_power(&acc, Block::Conv)),
            heater_power_fc_mw: cfg.attack.heater_power_mw.unwrap_or_else(|| thermal.bank_power(&acc, Block::Fc)),
            mr_count: acc.mr_count(),
        },
        baselines,
        rows,
        summaries,
        warnings,
    })
}

pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport, CampaignError> {
    run_campaign_with(cfg, &|_| {})
}

/// Writes `report.json`, `results.csv` and `summary.json` into `dir`.
pub fn write_outputs(report: &CampaignReport, dir: &Path) -> Result<(), CampaignError> {
    std::fs::create_dir_all(dir).map_err(|e| CampaignError::io(dir, e))?;
    report.save(dir.join(REPORT_FILE))?;
    emit_csv(report, dir.join(CSV_FILE))?;
    emit_summary(report, dir.join(SUMMARY_FILE))
}
