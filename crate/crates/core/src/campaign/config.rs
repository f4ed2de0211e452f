use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CampaignError;
use crate::accelerator::AcceleratorConfig;
use crate::faults::{AttackKind, AttackSpec, Scope, ThermalModel};
use crate::photonics::{ThermalKernel, ThermoOpticParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantRef {
    pub name: String,
    pub archive: PathBuf,
}

/// Kinds x scopes x fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioMatrix {
    pub kinds: Vec<AttackKind>,
    pub scopes: Vec<Scope>,
    pub fractions: Vec<f64>,
}

impl Default for ScenarioMatrix {
    fn default() -> Self {
        Self {
            kinds: AttackKind::ALL.to_vec(),
            scopes: Scope::ALL.to_vec(),
            fractions: vec![0.01, 0.05, 0.10],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: AttackKind,
    pub scope: Scope,
    pub fraction: f64,
}

impl Scenario {
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.kind.as_str(), self.scope.as_str(), self.fraction)
    }
}

impl ScenarioMatrix {
    /// Scenarios in kind, scope, fraction order.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &kind in &self.kinds {
            for &scope in &self.scopes {
                for &fraction in &self.fractions {
                    out.push(Scenario { kind, scope, fraction });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackOptions {
    /// Power of each compromised per-MR heater, mW. Unset: one channel
    /// spacing of drift at the centre of an attacked bank.
    pub heater_power_mw: Option<f64>,
}

/// Heat-spread overrides; unset fields take the floorplan-derived defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalOptions {
    pub kappa_k_per_mw: Option<f64>,
    pub sigma_um: Option<f64>,
    pub cutoff: Option<f64>,
    pub thermo_optic: Option<ThermoOpticParams>,
}

fn default_trials() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("campaign-out")
}

/// A campaign description, usually read from TOML. Relative paths are
/// resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Evaluate on the first `subsample` test images only.
    #[serde(default)]
    pub subsample: Option<usize>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Also write every trial's full target list under `targets/`.
    #[serde(default)]
    pub dump_targets: bool,
    pub dataset: DatasetPaths,
    pub variants: Vec<VariantRef>,
    #[serde(default)]
    pub scenarios: ScenarioMatrix,
    #[serde(default)]
    pub attack: AttackOptions,
    #[serde(default)]
    pub thermal: ThermalOptions,
    #[serde(default)]
    pub accelerator: AcceleratorConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CampaignConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, CampaignError> {
        let mut cfg: CampaignConfig = toml::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CampaignError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CampaignError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base).map_err(|e| match e {
            CampaignError::Config(m) => CampaignError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn thermal_model(&self) -> ThermalModel {
        let d = ThermalModel::for_accelerator(&self.accelerator);
        let t = &self.thermal;
        ThermalModel {
            thermo: t.thermo_optic.unwrap_or(d.thermo),
            kernel: ThermalKernel {
                kappa_k_per_mw: t.kappa_k_per_mw.unwrap_or(d.kernel.kappa_k_per_mw),
                sigma_um: t.sigma_um.unwrap_or(d.kernel.sigma_um),
            },
            cutoff: t.cutoff.unwrap_or(d.cutoff),
        }
    }

    pub fn attack_spec(&self, scenario: &Scenario) -> AttackSpec {
        AttackSpec {
            kind: scenario.kind,
            scope: scenario.scope,
            fraction: scenario.fraction,
            seed: self.seed,
            trial_count: self.trials,
            heater_power_mw: self.attack.heater_power_mw,
        }
    }

    /// Structural checks plus existence of every referenced file.
    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.subsample == Some(0) {
            return bad("subsample must be at least 1".into());
        }
        if self.variants.is_empty() {
            return bad("at least one model variant is required".into());
        }
        let mut names = std::collections::HashSet::new();
        for v in &self.variants {
            if v.name.is_empty() || v.name.contains(['/', '\\']) || !names.insert(&v.name) {
                return bad(format!("variant names must be unique, non-empty and path-safe: {:?}", v.name));
            }
        }
        let scenarios = self.scenarios.scenarios();
        if scenarios.is_empty() {
            return bad("the scenario matrix is empty".into());
        }
        for s in &scenarios {
            self.attack_spec(s)
                .validate()
                .map_err(|e| CampaignError::Config(format!("scenario {}: {e}", s.label())))?;
        }
        self.accelerator
            .validate()
            .map_err(|e| CampaignError::Config(e.to_string()))?;
        self.thermal_model()
            .validate()
            .map_err(|e| CampaignError::Config(e.to_string()))?;
        let files = self
            .variants
            .iter()
            .map(|v| &v.archive)
            .chain([&self.dataset.images, &self.dataset.labels]);
        for f in files {
            let p = self.resolve(f);
            if !p.is_file() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        Ok(())
    }

    /// SHA-256 of everything that influences results. The output directory
    /// and the config file's location are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.dump_targets = false;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
