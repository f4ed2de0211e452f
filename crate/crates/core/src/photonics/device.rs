use serde::{Deserialize, Serialize};

use super::{PhotonicsError, Point, Result};

/// Geometry and material state of a single ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrPhysical {
    /// Ring radius in micrometres.
    pub radius_um: f64,
    /// Resonance order (number of wavelengths around the ring).
    pub resonance_order: u32,
    /// Effective index of the guided mode.
    pub n_eff: f64,
    pub position: Point,
}

/// Silicon thermo-optic constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermoOpticParams {
    /// Modal confinement factor of the Si core.
    pub gamma_si: f64,
    /// Thermo-optic coefficient of Si, 1/K.
    pub dn_dt: f64,
    /// Group index of the ring waveguide.
    pub n_g: f64,
}

impl Default for ThermoOpticParams {
    fn default() -> Self {
        Self {
            gamma_si: 0.8,
            dn_dt: 1.86e-4,
            n_g: 4.2,
        }
    }
}

impl ThermoOpticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_si > 0.0 && self.dn_dt > 0.0 && self.n_g > 0.0) {
            return Err(PhotonicsError::Config(format!(
                "thermo-optic parameters must be strictly positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Temperature rise that moves a resonance at `lambda_nm` by `shift_nm`.
    pub fn delta_t_for_shift(&self, lambda_nm: f64, shift_nm: f64) -> f64 {
        shift_nm * self.n_g / (self.gamma_si * self.dn_dt * lambda_nm)
    }
}

/// Evenly spaced WDM carriers, one per MR column of a bank.
///
/// Channel index `j` sits at `base + (count - 1 - j) * spacing`: index 0 is
/// the longest carrier wavelength. With this orientation a red shift of one
/// spacing moves the MR of column `k` onto channel `k - 1`, and column 0
/// falls off the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGrid {
    /// Shortest carrier wavelength, nm.
    pub base_wavelength_nm: f64,
    pub spacing_nm: f64,
    pub channel_count: usize,
}

impl ChannelGrid {
    pub fn new(base_wavelength_nm: f64, spacing_nm: f64, channel_count: usize) -> Result<Self> {
        let grid = Self {
            base_wavelength_nm,
            spacing_nm,
            channel_count,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing_nm > 0.0) || !self.spacing_nm.is_finite() {
            return Err(PhotonicsError::Config(format!(
                "channel spacing must be positive, got {}",
                self.spacing_nm
            )));
        }
        if !(self.base_wavelength_nm > 0.0) {
            return Err(PhotonicsError::Config(format!(
                "base wavelength must be positive, got {}",
                self.base_wavelength_nm
            )));
        }
        if self.channel_count == 0 {
            return Err(PhotonicsError::Config("channel grid needs at least one channel".into()));
        }
        Ok(())
    }

    /// Carrier wavelength of channel `index`, nm.
    pub fn wavelength(&self, index: usize) -> f64 {
        debug_assert!(index < self.channel_count);
        self.base_wavelength_nm + (self.channel_count - 1 - index) as f64 * self.spacing_nm
    }
}

/// Computes the resonant wavelength (nm) of a ring: `2 pi R n_eff / m`.
pub fn resonant_wavelength(phys: &MrPhysical) -> Result<f64> {
    if !(phys.radius_um > 0.0) {
        return Err(PhotonicsError::Domain(format!(
            "ring radius must be positive, got {} um",
            phys.radius_um
        )));
    }
    if !(phys.n_eff > 0.0) {
        return Err(PhotonicsError::Domain(format!(
            "effective index must be positive, got {}",
            phys.n_eff
        )));
    }
    if phys.resonance_order == 0 {
        return Err(PhotonicsError::Domain("resonance order must be at least 1".into()));
    }
    let lambda_um =
        2.0 * std::f64::consts::PI * phys.radius_um * phys.n_eff / phys.resonance_order as f64;
    Ok(lambda_um * 1.0e3)
}

/// Resonance red shift (nm) caused by a temperature rise of `delta_t` kelvin.
pub fn thermal_shift(lambda_mr_nm: f64, delta_t: f64, params: &ThermoOpticParams) -> Result<f64> {
    if delta_t < 0.0 || delta_t.is_nan() {
        return Err(PhotonicsError::Domain(format!(
            "temperature delta must be non-negative, got {delta_t} K"
        )));
    }
    Ok(params.gamma_si * params.dn_dt * (lambda_mr_nm / params.n_g) * delta_t)
}

/// Maps an effective resonance onto the carrier grid.
///
/// Returns the channel whose carrier lies within half a spacing; at exactly
/// half a spacing the lower channel index wins. `None` means the ring now
/// resonates on a wavelength the waveguide does not carry.
pub fn snap_to_channel(effective_lambda_nm: f64, grid: &ChannelGrid) -> Option<usize> {
    if !effective_lambda_nm.is_finite() {
        return None;
    }
    let half = grid.spacing_nm / 2.0;
    // Position along the ascending-wavelength axis, in units of spacing.
    let pos = (effective_lambda_nm - grid.base_wavelength_nm) / grid.spacing_nm;
    let last = grid.channel_count as i64 - 1;
    let lo = pos.floor() as i64;
    let mut best: Option<(usize, f64)> = None;
    // Visit the higher-wavelength neighbour first: it has the lower channel index.
    for asc in [lo + 1, lo] {
        if asc < 0 || asc > last {
            continue;
        }
        let index = (last - asc) as usize;
        let dist = (effective_lambda_nm - grid.wavelength(index)).abs();
        if dist <= half {
            match best {
                Some((_, d)) if d <= dist => {}
                _ => best = Some((index, dist)),
            }
        }
    }
    best.map(|(index, _)| index)
}

/// What a compromised ring passes when forced off resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OffResonancePolicy(pub f32);

impl Default for OffResonancePolicy {
    /// Full through-port transmission.
    fn default() -> Self {
        Self(1.0)
    }
}

/// Operating state of one MR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MrState {
    Healthy,
    /// Actuation trojan: the ring no longer tunes to its carrier.
    OffResonance,
    /// Heated past the tuning circuit's range. `channel` is where the ring
    /// now resonates (`None` when off the grid).
    Shifted {
        delta_t: f64,
        shift_nm: f64,
        channel: Option<usize>,
    },
}

impl MrState {
    /// Channel the ring acts on, given the channel it was tuned to.
    pub fn active_channel(&self, home: usize) -> Option<usize> {
        match *self {
            MrState::Healthy | MrState::OffResonance => Some(home),
            MrState::Shifted { channel, .. } => channel,
        }
    }

    pub fn is_healthy(&self) -> bool {
        matches!(self, MrState::Healthy)
    }
}

/// Multiplicand a ring applies to the carrier it acts on.
///
/// A shifted ring still imprints its value, only on another channel; use
/// [`MrState::active_channel`] to find which one.
pub fn mr_transmission(state: &MrState, imprint: f64, policy: OffResonancePolicy) -> Result<f64> {
    if !(0.0..=1.0).contains(&imprint) {
        return Err(PhotonicsError::Domain(format!(
            "imprint value must lie in [0, 1], got {imprint}"
        )));
    }
    Ok(match state {
        MrState::Healthy | MrState::Shifted { .. } => imprint,
        MrState::OffResonance => f64::from(policy.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ring(radius_um: f64, n_eff: f64, order: u32) -> MrPhysical {
        MrPhysical {
            radius_um,
            resonance_order: order,
            n_eff,
            position: Point::default(),
        }
    }

    #[test]
    fn resonance_hand_value() {
        // 2 * pi * 10 um * 2.4 / 97 = 1.554603 um
        let lambda = resonant_wavelength(&ring(10.0, 2.4, 97)).unwrap();
        assert!((lambda - 1554.60).abs() < 0.01, "{lambda}");
    }

    #[test]
    fn resonance_halves_when_order_doubles() {
        let a = resonant_wavelength(&ring(10.0, 2.4, 97)).unwrap();
        let b = resonant_wavelength(&ring(10.0, 2.4, 194)).unwrap();
        assert_relative_eq!(a, 2.0 * b, max_relative = 1e-15);
    }

    #[test]
    fn resonance_rejects_bad_inputs() {
        assert!(resonant_wavelength(&ring(10.0, 0.0, 97)).is_err());
        assert!(resonant_wavelength(&ring(0.0, 2.4, 97)).is_err());
        assert!(resonant_wavelength(&ring(-1.0, 2.4, 97)).is_err());
        assert!(resonant_wavelength(&ring(10.0, 2.4, 0)).is_err());
    }

    #[test]
    fn thermal_shift_hand_value() {
        // 0.8 * 1.86e-4 * 1550 / 4.2 * 10 = 0.549143 nm
        let s = thermal_shift(1550.0, 10.0, &ThermoOpticParams::default()).unwrap();
        assert_relative_eq!(s, 0.549_142_857, max_relative = 1e-6);
        assert_eq!(thermal_shift(1550.0, 0.0, &ThermoOpticParams::default()).unwrap(), 0.0);
        assert!(thermal_shift(1550.0, -0.5, &ThermoOpticParams::default()).is_err());
    }

    #[test]
    fn delta_t_inverts_shift() {
        let p = ThermoOpticParams::default();
        let dt = p.delta_t_for_shift(1550.8, 0.8);
        assert_relative_eq!(thermal_shift(1550.8, dt, &p).unwrap(), 0.8, max_relative = 1e-12);
    }

    #[test]
    fn grid_orientation() {
        let g = ChannelGrid::new(1550.0, 0.8, 3).unwrap();
        assert_eq!(g.wavelength(2), 1550.0);
        assert_relative_eq!(g.wavelength(0), 1551.6, max_relative = 1e-15);
        assert!(ChannelGrid::new(1550.0, 0.0, 3).is_err());
        assert!(ChannelGrid::new(1550.0, 0.8, 0).is_err());
    }

    #[test]
    fn snapping_follows_red_shift_convention() {
        let g = ChannelGrid::new(1550.0, 0.8, 3).unwrap();
        // Channel 2 shifted by one spacing lands on channel 1.
        assert_eq!(snap_to_channel(g.wavelength(2) + 0.8, &g), Some(1));
        assert_eq!(snap_to_channel(g.wavelength(1) + 0.8, &g), Some(0));
        // No shift keeps the channel.
        for j in 0..3 {
            assert_eq!(snap_to_channel(g.wavelength(j), &g), Some(j));
        }
        // Channel 0 shifted off the grid.
        assert_eq!(snap_to_channel(g.wavelength(0) + 0.8, &g), None);
        assert_eq!(snap_to_channel(g.wavelength(2) - 0.8, &g), None);
    }

    #[test]
    fn snapping_ties_resolve_to_lower_index() {
        let g = ChannelGrid::new(1550.0, 1.0, 4).unwrap();
        // Exactly between channel 3 (1550) and channel 2 (1551).
        assert_eq!(snap_to_channel(1550.5, &g), Some(2));
        assert_eq!(snap_to_channel(1550.49, &g), Some(3));
        assert_eq!(snap_to_channel(1550.51, &g), Some(2));
        // Half a spacing beyond the last carrier still belongs to it.
        assert_eq!(snap_to_channel(1553.5, &g), Some(0));
        assert_eq!(snap_to_channel(1553.51, &g), None);
    }

    #[test]
    fn transmission_semantics() {
        let p = OffResonancePolicy::default();
        assert_eq!(mr_transmission(&MrState::Healthy, 0.37, p).unwrap(), 0.37);
        assert_eq!(mr_transmission(&MrState::OffResonance, 0.37, p).unwrap(), 1.0);
        assert_eq!(
            mr_transmission(&MrState::OffResonance, 0.37, OffResonancePolicy(0.0)).unwrap(),
            0.0
        );
        let shifted = MrState::Shifted {
            delta_t: 20.0,
            shift_nm: 0.8,
            channel: Some(1),
        };
        assert_eq!(mr_transmission(&shifted, 0.37, p).unwrap(), 0.37);
        assert_eq!(shifted.active_channel(2), Some(1));
        assert!(mr_transmission(&MrState::Healthy, 1.5, p).is_err());
        assert!(mr_transmission(&MrState::Healthy, -0.1, p).is_err());
    }
}
