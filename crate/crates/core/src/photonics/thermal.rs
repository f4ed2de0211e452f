//! Steady-state temperature rise from point heaters.
//!
//! Each heater contributes an isotropic Gaussian bump
//! `power * kappa * exp(-d^2 / (2 sigma^2))`; contributions add linearly.

use serde::{Deserialize, Serialize};

use super::{PhotonicsError, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalKernel {
    /// Peak temperature rise per milliwatt, K/mW.
    pub kappa_k_per_mw: f64,
    /// Spatial spread, um.
    pub sigma_um: f64,
}

impl ThermalKernel {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_k_per_mw > 0.0 && self.sigma_um > 0.0) {
            return Err(PhotonicsError::Config(format!(
                "thermal kernel needs positive kappa and sigma: {self:?}"
            )));
        }
        Ok(())
    }

    /// Temperature rise at `point` due to one heater.
    #[inline]
    pub fn contribution(&self, heater: &Heater, point: &Point) -> f64 {
        let d2 = heater.position.distance_sq(point);
        heater.power_mw * self.kappa_k_per_mw * (-d2 / (2.0 * self.sigma_um * self.sigma_um)).exp()
    }

    /// Temperature rise at `point` due to all `heaters`.
    pub fn delta_at(&self, heaters: &[Heater], point: &Point) -> f64 {
        heaters.iter().map(|h| self.contribution(h, point)).sum()
    }

    /// Distance beyond which a single heater of `power_mw` adds less than
    /// `floor_k` kelvin.
    pub fn reach(&self, power_mw: f64, floor_k: f64) -> f64 {
        let peak = power_mw * self.kappa_k_per_mw;
        if peak <= floor_k {
            return 0.0;
        }
        self.sigma_um * (2.0 * (peak / floor_k).ln()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heater {
    pub position: Point,
    pub power_mw: f64,
}

/// Rectangular chip extent `[0, width] x [0, height]`, um.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChipBounds {
    pub width_um: f64,
    pub height_um: f64,
}

impl ChipBounds {
    pub fn contains(&self, p: &Point) -> bool {
        (0.0..=self.width_um).contains(&p.x) && (0.0..=self.height_um).contains(&p.y)
    }
}

/// Temperature deltas sampled on a regular lattice with nodes at
/// `(i * resolution, j * resolution)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureField {
    pub resolution_um: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `ny` rows of `nx` values, kelvin.
    pub deltas: Vec<f64>,
}

impl TemperatureField {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.deltas[iy * self.nx + ix]
    }

    pub fn node(&self, ix: usize, iy: usize) -> Point {
        Point::new(ix as f64 * self.resolution_um, iy as f64 * self.resolution_um)
    }

    pub fn max(&self) -> f64 {
        self.deltas.iter().copied().fold(0.0, f64::max)
    }
}

/// Samples the superposed heater field over the whole chip.
pub fn compute_temperature_field(
    heaters: &[Heater],
    chip: &ChipBounds,
    resolution_um: f64,
    kernel: &ThermalKernel,
) -> Result<TemperatureField> {
    kernel.validate()?;
    if !(resolution_um > 0.0) {
        return Err(PhotonicsError::Config(format!(
            "field resolution must be positive, got {resolution_um}"
        )));
    }
    for h in heaters {
        if !chip.contains(&h.position) {
            return Err(PhotonicsError::Config(format!(
                "heater at ({}, {}) lies outside the chip",
                h.position.x, h.position.y
            )));
        }
        if !(h.power_mw > 0.0) {
            return Err(PhotonicsError::Config(format!(
                "heater power must be positive, got {} mW",
                h.power_mw
            )));
        }
    }
    let nx = (chip.width_um / resolution_um).floor() as usize + 1;
    let ny = (chip.height_um / resolution_um).floor() as usize + 1;
    let mut deltas = vec![0.0; nx * ny];
    for (iy, row) in deltas.chunks_mut(nx).enumerate() {
        for (ix, cell) in row.iter_mut().enumerate() {
            let p = Point::new(ix as f64 * resolution_um, iy as f64 * resolution_um);
            *cell = kernel.delta_at(heaters, &p);
        }
    }
    Ok(TemperatureField {
        resolution_um,
        nx,
        ny,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const KERNEL: ThermalKernel = ThermalKernel {
        kappa_k_per_mw: 0.5,
        sigma_um: 20.0,
    };
    const CHIP: ChipBounds = ChipBounds {
        width_um: 200.0,
        height_um: 100.0,
    };

    fn heater(x: f64, y: f64, p: f64) -> Heater {
        Heater {
            position: Point::new(x, y),
            power_mw: p,
        }
    }

    #[test]
    fn empty_heaters_give_zero_field() {
        let f = compute_temperature_field(&[], &CHIP, 10.0, &KERNEL).unwrap();
        assert_eq!((f.nx, f.ny), (21, 11));
        assert!(f.deltas.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn doubled_heater_doubles_field() {
        let one = compute_temperature_field(&[heater(50.0, 50.0, 10.0)], &CHIP, 5.0, &KERNEL).unwrap();
        let two = compute_temperature_field(
            &[heater(50.0, 50.0, 10.0), heater(50.0, 50.0, 10.0)],
            &CHIP,
            5.0,
            &KERNEL,
        )
        .unwrap();
        for (a, b) in one.deltas.iter().zip(&two.deltas) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn one_sigma_falls_to_exp_minus_half() {
        let h = [heater(100.0, 40.0, 10.0)];
        let f = compute_temperature_field(&h, &CHIP, 20.0, &KERNEL).unwrap();
        let peak = f.get(5, 2);
        assert_relative_eq!(peak, 5.0, max_relative = 1e-15);
        assert_relative_eq!(f.get(6, 2) / peak, (-0.5f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(f.get(6, 2) / peak, 0.6065, max_relative = 1e-4);
    }

    #[test]
    fn heater_outside_chip_is_rejected() {
        let err = compute_temperature_field(&[heater(250.0, 10.0, 1.0)], &CHIP, 10.0, &KERNEL);
        assert!(matches!(err, Err(PhotonicsError::Config(_))));
        let err = compute_temperature_field(&[heater(20.0, 10.0, 0.0)], &CHIP, 10.0, &KERNEL);
        assert!(matches!(err, Err(PhotonicsError::Config(_))));
    }

    #[test]
    fn reach_bounds_single_contribution() {
        let h = heater(0.0, 0.0, 40.0);
        let r = KERNEL.reach(40.0, 1e-6);
        let at = KERNEL.contribution(&h, &Point::new(r, 0.0));
        assert_relative_eq!(at, 1e-6, max_relative = 1e-9);
        assert_eq!(KERNEL.reach(1e-9, 1.0), 0.0);
    }
}
