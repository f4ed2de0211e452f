use std::collections::{HashMap, HashSet};

use super::{Accelerator, BankId, MrId};
use crate::photonics::{MrState, OffResonancePolicy};

/// An accelerator together with the operating state of every MR.
///
/// Only non-healthy MRs are stored; everything else reads as
/// [`MrState::Healthy`].
#[derive(Debug, Clone, PartialEq)]
pub struct FaultedAccelerator {
    accelerator: Accelerator,
    states: HashMap<MrId, MrState>,
    faulted_banks: HashSet<BankId>,
}

impl FaultedAccelerator {
    pub fn healthy(accelerator: Accelerator) -> Self {
        Self {
            accelerator,
            states: HashMap::new(),
            faulted_banks: HashSet::new(),
        }
    }

    pub fn accelerator(&self) -> &Accelerator {
        &self.accelerator
    }

    pub fn policy(&self) -> OffResonancePolicy {
        self.accelerator.config().off_resonance_value
    }

    pub fn state(&self, id: MrId) -> MrState {
        self.states.get(&id).copied().unwrap_or(MrState::Healthy)
    }

    pub fn set_state(&mut self, id: MrId, state: MrState) {
        assert!((id.0 as usize) < self.accelerator.mr_count(), "MR {id:?} out of range");
        if state.is_healthy() {
            self.states.remove(&id);
            let bank = self.accelerator.bank_of(id);
            if !self.accelerator.bank_mrs(bank).any(|m| self.states.contains_key(&MrId(m))) {
                self.faulted_banks.remove(&bank);
            }
        } else {
            self.states.insert(id, state);
            self.faulted_banks.insert(self.accelerator.bank_of(id));
        }
    }

    pub fn fault_count(&self) -> usize {
        self.states.len()
    }

    pub fn is_fault_free(&self) -> bool {
        self.states.is_empty()
    }

    pub fn bank_is_faulted(&self, bank: BankId) -> bool {
        self.faulted_banks.contains(&bank)
    }

    /// Non-healthy MRs in id order.
    pub fn faults(&self) -> Vec<(MrId, MrState)> {
        let mut v: Vec<_> = self.states.iter().map(|(k, s)| (*k, *s)).collect();
        v.sort_by_key(|(k, _)| *k);
        v
    }
}
