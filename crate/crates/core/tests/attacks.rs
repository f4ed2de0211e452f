//! Invariants of target selection and heater-driven drift.

use std::collections::HashSet;

use proptest::prelude::*;

use onn_trojan_sim::accelerator::{Accelerator, AcceleratorConfig, BankId, BlockConfig, MrId};
use onn_trojan_sim::faults::{
    apply_attack, bank_temperature_rise, select_actuation_targets, select_hotspot_heaters, AttackKind, AttackSpec,
    Scope, ThermalModel,
};
use onn_trojan_sim::photonics::{compute_temperature_field, Heater, Point};

fn accelerator() -> Accelerator {
    let block = |units, banks, width| BlockConfig {
        units,
        banks_per_unit: banks,
        bank_width: width,
        units_per_row: 3,
        channel_count: None,
    };
    Accelerator::build(AcceleratorConfig {
        conv: block(6, 4, 6),
        fc: block(3, 8, 10),
        ..AcceleratorConfig::default()
    })
    .unwrap()
}

fn scope() -> impl Strategy<Value = Scope> {
    prop_oneof![Just(Scope::Conv), Just(Scope::Fc), Just(Scope::Both)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn actuation_targets_are_distinct_in_scope_and_nested(
        seed in any::<u64>(), trial in 0u32..20, scope in scope(), f in 0.001f64..0.5,
    ) {
        let acc = accelerator();
        let small = AttackSpec::new(AttackKind::Actuation, scope, f, seed);
        let large = AttackSpec::new(AttackKind::Actuation, scope, (2.0 * f).min(1.0), seed);
        let a = select_actuation_targets(&small, &acc, trial);
        let b = select_actuation_targets(&large, &acc, trial);
        let range = scope.mrs(&acc);
        prop_assert_eq!(a.len(), small.budget(&acc));
        prop_assert_eq!(a.iter().collect::<HashSet<_>>().len(), a.len());
        prop_assert!(a.iter().all(|m| range.contains(&m.0)));
        prop_assert_eq!(&b[..a.len()], &a[..]);
    }

    #[test]
    fn hotspot_banks_cover_the_budget_with_one_bank_of_slack(
        seed in any::<u64>(), trial in 0u32..20, scope in scope(), f in 0.001f64..0.9,
    ) {
        let acc = accelerator();
        let spec = AttackSpec::new(AttackKind::Hotspot, scope, f, seed);
        let banks = select_hotspot_heaters(&spec, &acc, trial);
        let budget = spec.budget(&acc);
        let sizes: Vec<usize> = banks.iter().map(|&b| acc.bank_size(b)).collect();
        let covered: usize = sizes.iter().sum();
        prop_assert!(covered >= budget);
        if let Some(last) = sizes.last() {
            prop_assert!(covered - last < budget);
        }
        let range = scope.banks(&acc);
        prop_assert!(banks.iter().all(|b| range.contains(&b.0)));
        prop_assert_eq!(banks.iter().collect::<HashSet<_>>().len(), banks.len());
    }

    #[test]
    fn more_hotspot_banks_never_heal_a_ring(seed in any::<u64>(), scope in scope(), f in 0.01f64..0.3) {
        let acc = accelerator();
        let thermal = ThermalModel::for_accelerator(acc.config());
        let faulted = |fraction: f64| -> HashSet<MrId> {
            let spec = AttackSpec::new(AttackKind::Hotspot, scope, fraction, seed);
            let out = apply_attack(&acc, &spec, 0, &thermal).unwrap();
            out.faulted.faults().into_iter().map(|(id, _)| id).collect()
        };
        let small = faulted(f);
        let large = faulted((2.0 * f).min(1.0));
        prop_assert!(small.is_subset(&large));
    }

    #[test]
    fn bank_heat_is_additive(seed in any::<u64>()) {
        let acc = accelerator();
        let thermal = ThermalModel::for_accelerator(acc.config());
        let n = acc.bank_count() as u32;
        let a = (BankId((seed % n as u64) as u32), 1.3);
        let b = (BankId(((seed >> 20) % n as u64) as u32), 0.7);
        let both = bank_temperature_rise(&acc, &[a, b], &thermal.kernel, thermal.cutoff);
        let only_a = bank_temperature_rise(&acc, &[a], &thermal.kernel, thermal.cutoff);
        let only_b = bank_temperature_rise(&acc, &[b], &thermal.kernel, thermal.cutoff);
        for (id, t) in &both {
            let sum = only_a.get(id).unwrap_or(&0.0) + only_b.get(id).unwrap_or(&0.0);
            prop_assert!((t - sum).abs() <= 1e-12 * t.abs().max(1e-300));
        }
    }

    #[test]
    fn field_is_superposition_of_singletons(
        xs in proptest::collection::vec((0.0f64..600.0, 0.0f64..400.0, 0.1f64..5.0), 0..5),
    ) {
        let acc = accelerator();
        let thermal = ThermalModel::for_accelerator(acc.config());
        let chip = acc.chip();
        let heaters: Vec<Heater> = xs.iter().map(|&(x, y, p)| Heater { position: Point::new(x, y), power_mw: p }).collect();
        let all = compute_temperature_field(&heaters, &chip, 25.0, &thermal.kernel).unwrap();
        let mut sum = vec![0.0; all.deltas.len()];
        for h in &heaters {
            let one = compute_temperature_field(std::slice::from_ref(h), &chip, 25.0, &thermal.kernel).unwrap();
            for (s, v) in sum.iter_mut().zip(&one.deltas) {
                *s += v;
            }
        }
        for (t, s) in all.deltas.iter().zip(&sum) {
            prop_assert!((t - s).abs() <= 1e-12 * t.abs().max(1e-300));
        }
    }
}

#[test]
fn trials_with_the_same_seed_replay_exactly() {
    let acc = accelerator();
    let thermal = ThermalModel::for_accelerator(acc.config());
    for kind in AttackKind::ALL {
        let spec = AttackSpec::new(kind, Scope::Both, 0.1, 99);
        let a = apply_attack(&acc, &spec, 3, &thermal).unwrap();
        let b = apply_attack(&acc, &spec, 3, &thermal).unwrap();
        let c = apply_attack(&acc, &spec, 4, &thermal).unwrap();
        assert_eq!(a.selection, b.selection);
        assert_eq!(a.faulted.faults(), b.faulted.faults());
        assert_ne!(a.selection.digest(), c.selection.digest());
    }
}
