use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Scenario;
use super::stats::FiveNumber;
use super::CampaignError;
use crate::faults::{AttackKind, Scope};

pub const CSV_HEADER: [&str; 8] = [
    "variant",
    "kind",
    "scope",
    "fraction",
    "trial",
    "seed",
    "accuracy",
    "corrupted_slots",
];

/// One attacked inference run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub variant: String,
    pub kind: AttackKind,
    pub scope: Scope,
    pub fraction: f64,
    pub trial: u32,
    pub seed: u64,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Mapped parameter slots whose optical term differs from fault-free.
    pub corrupted_slots: usize,
    /// MRs in a non-healthy state.
    pub faulted_mrs: usize,
    /// SHA-256 of the sorted target ids (MRs or banks).
    pub target_digest: String,
    pub targets: usize,
    pub target_budget: usize,
    /// MRs held by the selected banks beyond the budget (hotspot only).
    pub overshoot: usize,
}

impl TrialRow {
    pub fn scenario(&self) -> Scenario {
        Scenario {
            kind: self.kind,
            scope: self.scope,
            fraction: self.fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub variant: String,
    /// Fault-free accuracy on the evaluated images.
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// Test accuracy recorded in the archive manifest, if any.
    pub recorded_accuracy: Option<f64>,
    pub total_parameters: usize,
    pub archive_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub variant: String,
    pub kind: AttackKind,
    pub scope: Scope,
    pub fraction: f64,
    pub accuracy: FiveNumber,
    /// Baseline accuracy minus median attacked accuracy.
    pub median_drop: f64,
    pub corrupted_slots: FiveNumber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub tool: String,
    pub prng: String,
    pub config_hash: String,
    pub seed: u64,
    pub trials: usize,
    pub images: usize,
    /// Per-MR heater power in CONV and FC banks.
    pub heater_power_conv_mw: f64,
    pub heater_power_fc_mw: f64,
    pub mr_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub header: ReportHeader,
    pub baselines: Vec<Baseline>,
    pub rows: Vec<TrialRow>,
    pub summaries: Vec<ScenarioSummary>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn same_scenario(a: &TrialRow, s: &ScenarioSummary) -> bool {
    a.variant == s.variant && a.kind == s.kind && a.scope == s.scope && a.fraction == s.fraction
}

/// Summaries for every (variant, scenario) present in `rows`, in first
/// appearance order.
pub fn summarize(rows: &[TrialRow], baselines: &[Baseline]) -> Vec<ScenarioSummary> {
    let mut out: Vec<ScenarioSummary> = Vec::new();
    for row in rows {
        if out.iter().any(|s| same_scenario(row, s)) {
            continue;
        }
        let group: Vec<&TrialRow> = rows
            .iter()
            .filter(|r| r.variant == row.variant && r.scenario() == row.scenario())
            .collect();
        let acc: Vec<f64> = group.iter().map(|r| r.accuracy).collect();
        let slots: Vec<f64> = group.iter().map(|r| r.corrupted_slots as f64).collect();
        let accuracy = FiveNumber::of(&acc).expect("group contains row");
        let baseline = baselines
            .iter()
            .find(|b| b.variant == row.variant)
            .map_or(f64::NAN, |b| b.accuracy);
        out.push(ScenarioSummary {
            variant: row.variant.clone(),
            kind: row.kind,
            scope: row.scope,
            fraction: row.fraction,
            median_drop: baseline - accuracy.median,
            accuracy,
            corrupted_slots: FiveNumber::of(&slots).expect("group contains row"),
        });
    }
    out
}

impl CampaignReport {
    pub fn baseline(&self, variant: &str) -> Option<&Baseline> {
        self.baselines.iter().find(|b| b.variant == variant)
    }

    pub fn summaries_for<'a>(&'a self, variant: &'a str) -> impl Iterator<Item = &'a ScenarioSummary> + 'a {
        self.summaries.iter().filter(move |s| s.variant == variant)
    }

    pub fn summary<'a>(&'a self, variant: &'a str, scenario: &Scenario) -> Option<&'a ScenarioSummary> {
        self.summaries_for(variant)
            .find(|s| s.kind == scenario.kind && s.scope == scenario.scope && s.fraction == scenario.fraction)
    }

    pub fn variants(&self) -> Vec<String> {
        self.baselines.iter().map(|b| b.variant.clone()).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CampaignError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CampaignError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CampaignError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CampaignError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| CampaignError::io(path, e))
    }
}

/// Writes one line per trial with the fixed column set.
pub fn write_csv<W: Write>(report: &CampaignReport, out: W) -> Result<(), CampaignError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CampaignError::Runtime(format!("writing CSV: {e}"));
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in &report.rows {
        w.write_record([
            r.variant.clone(),
            r.kind.as_str().to_string(),
            r.scope.as_str().to_string(),
            r.fraction.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.accuracy.to_string(),
            r.corrupted_slots.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CampaignError::Runtime(format!("writing CSV: {e}")))
}

pub fn emit_csv(report: &CampaignReport, path: impl AsRef<Path>) -> Result<(), CampaignError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| CampaignError::io(path, e))?;
    write_csv(report, std::io::BufWriter::new(file))
}

#[derive(Serialize)]
struct Summary<'a> {
    header: &'a ReportHeader,
    baselines: &'a [Baseline],
    scenarios: &'a [ScenarioSummary],
}

/// Header, baselines and per-scenario box-whisker statistics as JSON.
pub fn summary_json(report: &CampaignReport) -> String {
    let s = Summary {
        header: &report.header,
        baselines: &report.baselines,
        scenarios: &report.summaries,
    };
    serde_json::to_string_pretty(&s).expect("summary serializes") + "\n"
}

pub fn emit_summary(report: &CampaignReport, path: impl AsRef<Path>) -> Result<(), CampaignError> {
    let path = path.as_ref();
    std::fs::write(path, summary_json(report)).map_err(|e| CampaignError::io(path, e))
}

/// Accuracy recovered by a robust variant in one scenario, percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub kind: AttackKind,
    pub scope: Scope,
    pub fraction: f64,
    pub baseline_original: f64,
    pub median_original: f64,
    pub median_robust: f64,
    pub drop_original: f64,
    /// Negative when the robust variant beats the original baseline.
    pub drop_robust: f64,
    pub recovery: f64,
}

/// Compares attacked medians of two variants against the original's
/// fault-free baseline. Accuracies are fractions; outputs are points.
pub fn recovery_metrics(
    baseline_original: f64,
    original: &[ScenarioSummary],
    robust: &[ScenarioSummary],
) -> Result<Vec<RecoveryRow>, CampaignError> {
    let key = |s: &ScenarioSummary| (s.kind, s.scope, s.fraction.to_bits());
    let mut a: Vec<_> = original.iter().map(key).collect();
    let mut b: Vec<_> = robust.iter().map(key).collect();
    a.sort();
    b.sort();
    if a != b {
        return Err(CampaignError::Config(
            "the two reports do not cover the same scenario matrix".into(),
        ));
    }
    Ok(original
        .iter()
        .map(|o| {
            let r = robust.iter().find(|r| key(r) == key(o)).expect("matched above");
            let drop_original = 100.0 * (baseline_original - o.accuracy.median);
            let drop_robust = 100.0 * (baseline_original - r.accuracy.median);
            RecoveryRow {
                kind: o.kind,
                scope: o.scope,
                fraction: o.fraction,
                baseline_original,
                median_original: o.accuracy.median,
                median_robust: r.accuracy.median,
                drop_original,
                drop_robust,
                recovery: drop_original - drop_robust,
            }
        })
        .collect())
}

/// [`recovery_metrics`] between two named variants of (possibly different) reports.
pub fn compare_variants(
    original: &CampaignReport,
    original_variant: &str,
    robust: &CampaignReport,
    robust_variant: &str,
) -> Result<Vec<RecoveryRow>, CampaignError> {
    let base = original
        .baseline(original_variant)
        .ok_or_else(|| CampaignError::Config(format!("no variant {original_variant:?} in report")))?;
    if robust.baseline(robust_variant).is_none() {
        return Err(CampaignError::Config(format!("no variant {robust_variant:?} in report")));
    }
    let o: Vec<ScenarioSummary> = original.summaries_for(original_variant).cloned().collect();
    let r: Vec<ScenarioSummary> = robust.summaries_for(robust_variant).cloned().collect();
    recovery_metrics(base.accuracy, &o, &r)
}
