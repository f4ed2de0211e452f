//! Turning a declarative attack into per-MR fault states.
//!
//! Actuation attacks force individually chosen MRs off resonance. Hotspot
//! attacks pick whole banks, drive the tuning heater of every MR in each
//! chosen bank, and let every MR near a heater drift by the resulting
//! temperature rise; rings that drift past half a channel spacing land on
//! another channel (or off the grid) and keep imprinting there.
//!
//! Randomness comes from ChaCha20 seeded with the attack seed, one stream
//! per trial, so `(seed, trial)` fixes the result on every platform.

use std::collections::HashMap;
use std::ops::Range;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accelerator::{Accelerator, AcceleratorConfig, BankId, Block, FaultedAccelerator, MrId};
use crate::photonics::{snap_to_channel, thermal_shift, Heater, MrState, ThermalKernel, ThermoOpticParams};

/// Name of the generator and stream rule, for report headers.
pub const PRNG_IDENTITY: &str =
    "ChaCha20 (rand_chacha 0.3), key = seed_from_u64(seed), stream = trial index";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaultError {
    #[error("invalid attack: {0}")]
    Spec(String),
    #[error("physics error: {0}")]
    Physics(String),
}

pub type Result<T> = std::result::Result<T, FaultError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Actuation,
    Hotspot,
}

impl AttackKind {
    pub const ALL: [AttackKind; 2] = [AttackKind::Actuation, AttackKind::Hotspot];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::Actuation => "actuation",
            AttackKind::Hotspot => "hotspot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Conv,
    Fc,
    Both,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Conv, Scope::Fc, Scope::Both];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scope::Conv => "conv",
            Scope::Fc => "fc",
            Scope::Both => "both",
        }
    }

    /// Global MR ids in scope. CONV ids precede FC ids, so every scope is a
    /// contiguous range.
    pub fn mrs(&self, acc: &Accelerator) -> Range<u32> {
        match self {
            Scope::Conv => acc.block_mrs(Block::Conv),
            Scope::Fc => acc.block_mrs(Block::Fc),
            Scope::Both => 0..acc.mr_count() as u32,
        }
    }

    pub fn banks(&self, acc: &Accelerator) -> Range<u32> {
        match self {
            Scope::Conv => acc.block_banks(Block::Conv),
            Scope::Fc => acc.block_banks(Block::Fc),
            Scope::Both => 0..acc.bank_count() as u32,
        }
    }
}

fn default_trials() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub scope: Scope,
    pub fraction: f64,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trial_count: usize,
    /// Power of each compromised per-MR heater. `None` picks, per block,
    /// the power that moves a ring at the bank centroid by exactly one
    /// channel spacing when all of the bank's heaters fire.
    #[serde(default)]
    pub heater_power_mw: Option<f64>,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, scope: Scope, fraction: f64, seed: u64) -> Self {
        Self {
            kind,
            scope,
            fraction,
            seed,
            trial_count: default_trials(),
            heater_power_mw: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(FaultError::Spec(format!("fraction must lie in (0, 1], got {}", self.fraction)));
        }
        if self.trial_count == 0 {
            return Err(FaultError::Spec("trial_count must be at least 1".into()));
        }
        if let Some(p) = self.heater_power_mw {
            if !(p.is_finite() && p >= 0.0) {
                return Err(FaultError::Spec(format!("heater power must be a non-negative number, got {p}")));
            }
        }
        Ok(())
    }

    /// Number of MRs the attack is entitled to: `floor(fraction * N_scope)`.
    pub fn budget(&self, acc: &Accelerator) -> usize {
        mr_budget(self.fraction, self.scope.mrs(acc).len())
    }
}

/// `floor(fraction * n)`, tolerant of the last-bit error in products such as
/// `0.29 * 100`.
pub fn mr_budget(fraction: f64, n: usize) -> usize {
    if fraction <= 0.0 {
        return 0;
    }
    let exact = fraction * n as f64;
    let budget = (exact + exact.abs() * 1e-12).floor() as usize;
    budget.min(n)
}

/// Deterministic generator for one trial.
pub fn trial_rng(seed: u64, trial: u32) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Lazy Fisher-Yates over `0..n`: each call yields the next element of a
/// uniformly random permutation, touching only the positions it swaps.
struct Shuffle {
    n: u32,
    next: u32,
    swapped: HashMap<u32, u32>,
}

impl Shuffle {
    fn new(n: u32) -> Self {
        Self {
            n,
            next: 0,
            swapped: HashMap::new(),
        }
    }

    fn draw(&mut self, rng: &mut impl Rng) -> Option<u32> {
        if self.next >= self.n {
            return None;
        }
        let i = self.next;
        let j = rng.gen_range(i..self.n);
        let at_i = self.swapped.remove(&i).unwrap_or(i);
        let at_j = if j == i {
            at_i
        } else {
            self.swapped.insert(j, at_i).unwrap_or(j)
        };
        self.next += 1;
        Some(at_j)
    }
}

/// MRs hit by an actuation attack, in draw order.
///
/// A larger fraction with the same `(seed, trial)` extends the smaller
/// fraction's selection.
pub fn select_actuation_targets(spec: &AttackSpec, acc: &Accelerator, trial: u32) -> Vec<MrId> {
    let range = spec.scope.mrs(acc);
    let count = mr_budget(spec.fraction, range.len());
    let mut rng = trial_rng(spec.seed, trial);
    let mut shuffle = Shuffle::new(range.len() as u32);
    (0..count)
        .map(|_| MrId(range.start + shuffle.draw(&mut rng).expect("count <= scope size")))
        .collect()
}

/// Banks whose heaters are compromised, in draw order. Banks are drawn until
/// the MRs they hold reach the attack's budget; the last bank may overshoot.
pub fn select_hotspot_heaters(spec: &AttackSpec, acc: &Accelerator, trial: u32) -> Vec<BankId> {
    let range = spec.scope.banks(acc);
    let budget = spec.budget(acc);
    let mut rng = trial_rng(spec.seed, trial);
    let mut shuffle = Shuffle::new(range.len() as u32);
    let mut covered = 0;
    let mut banks = Vec::new();
    while covered < budget {
        let Some(k) = shuffle.draw(&mut rng) else { break };
        let bank = BankId(range.start + k);
        covered += acc.bank_size(bank);
        banks.push(bank);
    }
    banks
}

/// Thermo-optic and heat-spread parameters used by hotspot attacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalModel {
    pub thermo: ThermoOpticParams,
    pub kernel: ThermalKernel,
    /// Heater contributions below this fraction of the heater's peak are
    /// dropped.
    pub cutoff: f64,
}

impl ThermalModel {
    /// Defaults for a floorplan: 0.5 K/mW peak and a spread of two bank pitches.
    pub fn for_accelerator(cfg: &AcceleratorConfig) -> Self {
        Self {
            thermo: ThermoOpticParams::default(),
            kernel: ThermalKernel {
                kappa_k_per_mw: 0.5,
                sigma_um: 2.0 * cfg.floorplan.bank_pitch_um,
            },
            cutoff: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.thermo.validate().map_err(|e| FaultError::Physics(e.to_string()))?;
        self.kernel.validate().map_err(|e| FaultError::Physics(e.to_string()))?;
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(FaultError::Physics(format!("cutoff must lie in (0, 1), got {}", self.cutoff)));
        }
        Ok(())
    }

    /// Temperature rise that drifts a ring at the base wavelength by one
    /// channel spacing.
    pub fn one_spacing_rise(&self, acc: &Accelerator) -> f64 {
        let cfg = acc.config();
        self.thermo
            .delta_t_for_shift(cfg.base_wavelength_nm, cfg.channel_spacing_nm)
    }

    /// Power of a single heater that shifts a ring at its own position by
    /// exactly one channel spacing.
    pub fn one_spacing_power(&self, acc: &Accelerator) -> f64 {
        self.one_spacing_rise(acc) / self.kernel.kappa_k_per_mw
    }

    /// Per-MR heater power that, with every heater of one bank firing,
    /// raises the bank centroid by the one-spacing temperature. Banks of a
    /// block share their geometry, so the block's first bank stands for all.
    pub fn bank_power(&self, acc: &Accelerator, block: Block) -> f64 {
        let bank = BankId(acc.block_banks(block).start);
        let centre = acc.bank_centroid(bank);
        let unit = Heater { position: centre, power_mw: 1.0 };
        let gain: f64 = acc
            .bank_mrs(bank)
            .map(|m| self.kernel.contribution(&unit, &acc.position(MrId(m))))
            .sum();
        self.one_spacing_rise(acc) / gain
    }

    pub fn heater_power(&self, spec: &AttackSpec, acc: &Accelerator, block: Block) -> f64 {
        spec.heater_power_mw.unwrap_or_else(|| self.bank_power(acc, block))
    }
}

/// What was selected for one trial, for the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub kind: AttackKind,
    /// MR ids (actuation) or bank ids (hotspot), in draw order.
    pub targets: Vec<u32>,
    /// `floor(fraction * N_scope)`.
    pub budget: usize,
    /// MRs directly targeted: the MR count for actuation, the selected
    /// banks' MR total for hotspot.
    pub covered_mrs: usize,
}

impl Selection {
    pub fn overshoot(&self) -> usize {
        self.covered_mrs.saturating_sub(self.budget)
    }

    /// SHA-256 over the sorted target ids (u32 little-endian), hex encoded.
    pub fn digest(&self) -> String {
        let mut ids = self.targets.clone();
        ids.sort_unstable();
        let mut h = Sha256::new();
        for id in ids {
            h.update(id.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub faulted: FaultedAccelerator,
    pub selection: Selection,
    pub heaters: Vec<Heater>,
}

/// Temperature rise of every MR within reach of `heaters`. MRs absent from
/// the map are at ambient.
pub fn mr_temperature_rise(acc: &Accelerator, heaters: &[Heater], kernel: &ThermalKernel, cutoff: f64) -> HashMap<MrId, f64> {
    let mut dense = vec![0.0; acc.mr_count()];
    for h in heaters {
        let peak = h.power_mw * kernel.kappa_k_per_mw;
        if peak <= 0.0 {
            continue;
        }
        let reach = kernel.reach(h.power_mw, peak * cutoff);
        acc.for_each_mr_within(h.position, reach, |id, p| {
            dense[id.0 as usize] += kernel.contribution(h, &p);
        });
    }
    dense
        .into_iter()
        .enumerate()
        .filter(|&(_, t)| t > 0.0)
        .map(|(i, t)| (MrId(i as u32), t))
        .collect()
}

/// One heater on every MR of `bank`.
pub fn bank_heaters(acc: &Accelerator, bank: BankId, power_mw: f64) -> impl Iterator<Item = Heater> + '_ {
    acc.bank_mrs(bank).map(move |m| Heater {
        position: acc.position(MrId(m)),
        power_mw,
    })
}

/// Temperature rise from firing every heater of each `(bank, power)` pair.
///
/// Equivalent to [`mr_temperature_rise`] over [`bank_heaters`], but uses the
/// fact that a bank's heaters share one row: the kernel factors into a row
/// term and a sum along the bank that only depends on the horizontal offset,
/// which is cached per block. MRs farther than a heater's reach from the
/// bank's bounding box, in either axis, are not visited.
pub fn bank_temperature_rise(acc: &Accelerator, banks: &[(BankId, f64)], kernel: &ThermalKernel, cutoff: f64) -> HashMap<MrId, f64> {
    let mut dense = vec![0.0; acc.mr_count()];
    let two_var = 2.0 * kernel.sigma_um * kernel.sigma_um;
    let mut profiles: [HashMap<u64, f64>; 2] = [HashMap::new(), HashMap::new()];
    let offsets: [Vec<f64>; 2] = [Block::Conv, Block::Fc].map(|b| {
        let bank = BankId(acc.block_banks(b).start);
        let first = acc.position(MrId(acc.bank_mrs(bank).start));
        acc.bank_mrs(bank).map(|m| acc.position(MrId(m)).x - first.x).collect()
    });
    for &(bank, power) in banks {
        let peak = power * kernel.kappa_k_per_mw;
        if peak <= 0.0 {
            continue;
        }
        let reach = kernel.reach(power, peak * cutoff);
        let k = match acc.bank_coordinate(bank).0 {
            Block::Conv => 0,
            Block::Fc => 1,
        };
        let (lo, hi) = acc.bank_bounds(bank);
        let x0 = acc.position(MrId(acc.bank_mrs(bank).start)).x;
        let row = lo.y;
        let lo = crate::photonics::Point::new(lo.x - reach, lo.y - reach);
        let hi = crate::photonics::Point::new(hi.x + reach, hi.y + reach);
        let (cache, offs) = (&mut profiles[k], &offsets[k]);
        acc.for_each_mr_in_box(lo, hi, |id, p| {
            let dx = p.x - x0;
            let along = *cache
                .entry(dx.to_bits())
                .or_insert_with(|| offs.iter().map(|o| (-(dx - o) * (dx - o) / two_var).exp()).sum());
            let dy = p.y - row;
            dense[id.0 as usize] += peak * (-dy * dy / two_var).exp() * along;
        });
    }
    dense
        .into_iter()
        .enumerate()
        .filter(|&(_, t)| t > 0.0)
        .map(|(i, t)| (MrId(i as u32), t))
        .collect()
}

/// Applies thermally induced drift to `facc`. Rings whose drifted resonance
/// still snaps to their own channel are compensated by the tuning circuit
/// and stay healthy.
pub fn apply_heaters(facc: &mut FaultedAccelerator, heaters: &[Heater], thermal: &ThermalModel) -> Result<()> {
    let rise = mr_temperature_rise(facc.accelerator(), heaters, &thermal.kernel, thermal.cutoff);
    apply_rise(facc, rise, thermal)
}

/// Drives every heater of each `(bank, power)` pair and applies the drift.
pub fn apply_bank_heaters(facc: &mut FaultedAccelerator, banks: &[(BankId, f64)], thermal: &ThermalModel) -> Result<()> {
    let rise = bank_temperature_rise(facc.accelerator(), banks, &thermal.kernel, thermal.cutoff);
    apply_rise(facc, rise, thermal)
}

fn apply_rise(facc: &mut FaultedAccelerator, rise: HashMap<MrId, f64>, thermal: &ThermalModel) -> Result<()> {
    let mut ids: Vec<MrId> = rise.keys().copied().collect();
    ids.sort_unstable();
    for id in ids {
        let delta_t = rise[&id];
        let acc = facc.accelerator();
        let home = acc.home_channel(id);
        let lambda = acc.home_wavelength(id);
        let shift = thermal_shift(lambda, delta_t, &thermal.thermo).map_err(|e| FaultError::Physics(e.to_string()))?;
        let channel = snap_to_channel(lambda + shift, acc.grid_of(id));
        if channel != Some(home) {
            facc.set_state(
                id,
                MrState::Shifted {
                    delta_t,
                    shift_nm: shift,
                    channel,
                },
            );
        }
    }
    Ok(())
}

/// Materializes trial `trial` of `spec` on a fresh copy of `acc`.
pub fn apply_attack(acc: &Accelerator, spec: &AttackSpec, trial: u32, thermal: &ThermalModel) -> Result<AttackOutcome> {
    spec.validate()?;
    let mut faulted = FaultedAccelerator::healthy(acc.clone());
    let budget = spec.budget(acc);
    match spec.kind {
        AttackKind::Actuation => {
            let targets = select_actuation_targets(spec, acc, trial);
            for &id in &targets {
                faulted.set_state(id, MrState::OffResonance);
            }
            Ok(AttackOutcome {
                faulted,
                selection: Selection {
                    kind: spec.kind,
                    covered_mrs: targets.len(),
                    targets: targets.iter().map(|m| m.0).collect(),
                    budget,
                },
                heaters: Vec::new(),
            })
        }
        AttackKind::Hotspot => {
            thermal.validate()?;
            let banks = select_hotspot_heaters(spec, acc, trial);
            let powers = [Block::Conv, Block::Fc].map(|b| thermal.heater_power(spec, acc, b));
            let driven: Vec<(BankId, f64)> = banks
                .iter()
                .map(|&b| match acc.bank_coordinate(b).0 {
                    Block::Conv => (b, powers[0]),
                    Block::Fc => (b, powers[1]),
                })
                .collect();
            apply_bank_heaters(&mut faulted, &driven, thermal)?;
            let heaters = driven.iter().flat_map(|&(b, p)| bank_heaters(acc, b, p)).collect();
            Ok(AttackOutcome {
                faulted,
                selection: Selection {
                    kind: spec.kind,
                    covered_mrs: banks.iter().map(|&b| acc.bank_size(b)).sum(),
                    targets: banks.iter().map(|b| b.0).collect(),
                    budget,
                },
                heaters,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accelerator::{ArrayRole, MrCoordinate};
    use std::collections::HashSet;

    fn default_acc() -> Accelerator {
        Accelerator::build(AcceleratorConfig::default()).unwrap()
    }

    #[test]
    fn budget_floors_without_losing_exact_products() {
        assert_eq!(mr_budget(0.10, 80_000), 8_000);
        assert_eq!(mr_budget(0.29, 100), 29);
        assert_eq!(mr_budget(0.015, 100), 1);
        assert_eq!(mr_budget(1e-9, 100), 0);
        assert_eq!(mr_budget(1.0, 3), 3);
    }

    #[test]
    fn ten_percent_conv_selects_eight_thousand_distinct() {
        let acc = default_acc();
        let spec = AttackSpec::new(AttackKind::Actuation, Scope::Conv, 0.10, 42);
        let t = select_actuation_targets(&spec, &acc, 0);
        assert_eq!(t.len(), 8_000);
        let set: HashSet<_> = t.iter().collect();
        assert_eq!(set.len(), 8_000);
        assert!(t.iter().all(|m| acc.coordinate(*m).block == Block::Conv));
    }

    #[test]
    fn whole_toy_bank_when_fraction_is_one() {
        let acc = Accelerator::build(AcceleratorConfig::toy(3)).unwrap();
        let mut spec = AttackSpec::new(AttackKind::Actuation, Scope::Conv, 1.0, 1);
        spec.scope = Scope::Conv;
        let mut t: Vec<u32> = select_actuation_targets(&spec, &acc, 0).iter().map(|m| m.0).collect();
        t.sort();
        assert_eq!(t, acc.block_mrs(Block::Conv).collect::<Vec<_>>());
    }

    #[test]
    fn selection_is_reproducible_and_trials_differ() {
        let acc = default_acc();
        let spec = AttackSpec::new(AttackKind::Actuation, Scope::Both, 0.01, 7);
        assert_eq!(select_actuation_targets(&spec, &acc, 3), select_actuation_targets(&spec, &acc, 3));
        assert_ne!(select_actuation_targets(&spec, &acc, 3), select_actuation_targets(&spec, &acc, 4));
    }

    #[test]
    fn larger_fractions_extend_smaller_ones() {
        let acc = default_acc();
        let small = select_actuation_targets(&AttackSpec::new(AttackKind::Actuation, Scope::Fc, 0.01, 9), &acc, 2);
        let large = select_actuation_targets(&AttackSpec::new(AttackKind::Actuation, Scope::Fc, 0.05, 9), &acc, 2);
        assert_eq!(&large[..small.len()], &small[..]);
    }

    #[test]
    fn ten_percent_conv_hotspot_takes_two_hundred_banks() {
        let acc = default_acc();
        let spec = AttackSpec::new(AttackKind::Hotspot, Scope::Conv, 0.10, 3);
        let banks = select_hotspot_heaters(&spec, &acc, 0);
        assert_eq!(banks.len(), 200);
        assert_eq!(banks.iter().collect::<HashSet<_>>().len(), 200);
        assert!(banks.iter().all(|b| acc.bank_block(*b) == Block::Conv));
    }

    #[test]
    fn hotspot_overshoot_is_reported() {
        let acc = default_acc();
        // 1% of FC = 27,000 MRs, 300 per bank: exactly 90 banks.
        let spec = AttackSpec::new(AttackKind::Hotspot, Scope::Fc, 0.01, 3);
        let out = apply_attack(&acc, &spec, 0, &ThermalModel::for_accelerator(acc.config())).unwrap();
        assert_eq!(out.selection.targets.len(), 90);
        assert_eq!(out.selection.overshoot(), 0);
        // 0.0101 of FC = 27,270 MRs: a 91st bank overshoots by 30.
        let spec = AttackSpec { fraction: 0.0101, ..spec };
        let banks = select_hotspot_heaters(&spec, &acc, 0);
        assert_eq!(banks.len(), 91);
    }

    #[test]
    fn empty_selection_below_one_mr() {
        let acc = Accelerator::build(AcceleratorConfig::toy(3)).unwrap();
        let spec = AttackSpec::new(AttackKind::Hotspot, Scope::Conv, 0.1, 0);
        assert!(select_hotspot_heaters(&spec, &acc, 0).is_empty());
        let out = apply_attack(&acc, &spec, 0, &ThermalModel::for_accelerator(acc.config())).unwrap();
        assert!(out.faulted.is_fault_free());
    }

    #[test]
    fn selection_frequencies_are_uniform() {
        // 1 unit x 4 banks x 5 wide = 40 MRs in CONV; 10 per trial.
        let mut cfg = AcceleratorConfig::toy(5);
        cfg.conv.banks_per_unit = 4;
        let acc = Accelerator::build(cfg).unwrap();
        let spec = AttackSpec::new(AttackKind::Actuation, Scope::Conv, 0.25, 2024);
        let n = 40usize;
        let trials = 4000u32;
        let mut counts = vec![0f64; n];
        for t in 0..trials {
            for m in select_actuation_targets(&spec, &acc, t) {
                counts[m.0 as usize] += 1.0;
            }
        }
        let expected = trials as f64 * 10.0 / n as f64;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 39 degrees of freedom; the 0.999 quantile is about 72.1.
        assert!(chi2 < 72.1, "chi-square {chi2}");
    }

    #[test]
    fn distinct_per_trial_on_small_scope() {
        let acc = Accelerator::build(AcceleratorConfig::toy(3)).unwrap();
        for t in 0..50 {
            let spec = AttackSpec::new(AttackKind::Actuation, Scope::Both, 0.5, 11);
            let s = select_actuation_targets(&spec, &acc, t);
            assert_eq!(s.len(), 6);
            assert_eq!(s.iter().collect::<HashSet<_>>().len(), 6);
        }
    }

    #[test]
    fn one_spacing_heater_moves_each_ring_down_one_channel() {
        // Heater right on top of one weight ring; the ring shifts by one spacing.
        let acc = Accelerator::build(AcceleratorConfig::toy(3)).unwrap();
        let thermal = ThermalModel::for_accelerator(acc.config());
        let id = acc.mr_id(&MrCoordinate { block: Block::Fc, unit: 0, bank: 0, column: 2, role: ArrayRole::Weight });
        let heater = Heater { position: acc.position(id), power_mw: thermal.one_spacing_power(&acc) };
        let mut facc = FaultedAccelerator::healthy(acc.clone());
        apply_heaters(&mut facc, &[heater], &thermal).unwrap();
        match facc.state(id) {
            MrState::Shifted { channel, shift_nm, .. } => {
                assert_eq!(channel, Some(1));
                assert!((shift_nm - 0.8).abs() < 1e-9);
            }
            s => panic!("unexpected state {s:?}"),
        }
    }

    #[test]
    fn ring_three_sigma_away_stays_healthy() {
        let acc = Accelerator::build(AcceleratorConfig::toy(3)).unwrap();
        let thermal = ThermalModel::for_accelerator(acc.config());
        let id = acc.mr_id(&MrCoordinate { block: Block::Fc, unit: 0, bank: 0, column: 1, role: ArrayRole::Input });
        let p = acc.position(id);
        let power = thermal.one_spacing_power(&acc);
        let at = crate::photonics::Point::new(p.x, p.y - 3.0 * thermal.kernel.sigma_um);
        let rise = mr_temperature_rise(&acc, &[Heater { position: at, power_mw: power }], &thermal.kernel, thermal.cutoff);
        let ratio = rise[&id] / (power * thermal.kernel.kappa_k_per_mw);
        assert!((ratio - (-4.5f64).exp()).abs() < 1e-12);
        let mut facc = FaultedAccelerator::healthy(acc);
        apply_heaters(&mut facc, &[Heater { position: at, power_mw: power }], &thermal).unwrap();
        assert!(facc.state(id).is_healthy());
    }

    #[test]
    fn bank_sum_matches_point_heaters() {
        let mut cfg = AcceleratorConfig::default();
        cfg.conv.units = 4;
        cfg.conv.units_per_row = 2;
        cfg.conv.banks_per_unit = 6;
        cfg.conv.bank_width = 5;
        cfg.fc.units = 2;
        cfg.fc.banks_per_unit = 4;
        cfg.fc.bank_width = 7;
        cfg.floorplan.unit_gap_um = 20.0;
        let acc = Accelerator::build(cfg).unwrap();
        let thermal = ThermalModel::for_accelerator(acc.config());
        let banks = [(BankId(0), 3.0), (BankId(9), 1.5), (BankId(acc.block_banks(Block::Fc).start + 2), 2.0)];
        let fast = bank_temperature_rise(&acc, &banks, &thermal.kernel, thermal.cutoff);
        let heaters: Vec<Heater> = banks.iter().flat_map(|&(b, p)| bank_heaters(&acc, b, p)).collect();
        let slow = mr_temperature_rise(&acc, &heaters, &thermal.kernel, thermal.cutoff);
        for (id, t) in &slow {
            if *t > 1e-9 {
                let f = fast.get(id).copied().unwrap_or(0.0);
                assert!((f - t).abs() <= 1e-9 * t, "{id:?}: {f} vs {t}");
            }
        }
    }

    #[test]
    fn attacked_bank_shifts_every_ring_one_channel() {
        let acc = default_acc();
        let thermal = ThermalModel::for_accelerator(acc.config());
        for block in Block::ALL {
            let bank = BankId(acc.block_banks(block).start + 7);
            let power = thermal.bank_power(&acc, block);
            let mut facc = FaultedAccelerator::healthy(acc.clone());
            apply_bank_heaters(&mut facc, &[(bank, power)], &thermal).unwrap();
            for m in acc.bank_mrs(bank) {
                let id = MrId(m);
                let home = acc.home_channel(id);
                match facc.state(id) {
                    MrState::Shifted { channel, .. } => assert_eq!(channel, home.checked_sub(1), "{block:?} {id:?}"),
                    s => panic!("{block:?} {id:?} stayed {s:?}"),
                }
            }
            // Three bank pitches away the heat has faded below half a spacing.
            let far = BankId(bank.0 + 3);
            assert!(acc.bank_mrs(far).all(|m| facc.state(MrId(m)).is_healthy()));
        }
    }

    #[test]
    fn zero_power_heaters_leave_accelerator_healthy() {
        let acc = default_acc();
        let mut spec = AttackSpec::new(AttackKind::Hotspot, Scope::Both, 0.05, 1);
        spec.heater_power_mw = Some(0.0);
        let out = apply_attack(&acc, &spec, 0, &ThermalModel::for_accelerator(acc.config())).unwrap();
        assert!(out.faulted.is_fault_free());
        assert!(!out.selection.targets.is_empty());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = AttackSpec::new(AttackKind::Actuation, Scope::Conv, 0.0, 1);
        assert!(spec.validate().is_err());
        spec.fraction = 1.5;
        assert!(spec.validate().is_err());
        spec.fraction = 0.5;
        spec.trial_count = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn digest_ignores_draw_order() {
        let a = Selection { kind: AttackKind::Actuation, targets: vec![3, 1, 2], budget: 3, covered_mrs: 3 };
        let b = Selection { targets: vec![1, 2, 3], ..a.clone() };
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
