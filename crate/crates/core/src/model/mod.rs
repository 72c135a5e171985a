//! Coupled-mode cavity model: domain types, the mode matrix and its
//! eigen-branches, the cavity susceptibility, steady-state fields and the
//! reflection amplitude.
//!
//! All frequencies are angular (rad/s) and measured in a frame rotating at
//! the crossing frequency ω₀, so the diagonal offsets of the mode matrix are
//! detunings from the crossing. Lengths are in meters.

mod cavity;
pub mod config;
mod matrix;

use thiserror::Error;

use crate::units::{canonical_phase, C_LIGHT, HBAR, K_B, TWO_PI};

pub use cavity::{
    branch_resonances, brightest_resonance, reflection, reflection_with_input, steady_state, steady_state_with_input, susceptibility,
    BranchResonance, Cavity, Reflection,
};
pub use matrix::{
    eigen_branches, find_crossings, mode_matrix, quadratic_coefficient, track_branches, Crossing,
    QuadraticCoefficient,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("mode `{label}`: {reason}")]
    InvalidMode { label: String, reason: String },
    #[error("duplicate mode label `{0}`")]
    DuplicateLabel(String),
    #[error("coupling references unknown mode `{0}`")]
    UnknownLabel(String),
    #[error("coupling of mode `{0}` to itself")]
    SelfCoupling(String),
    #[error("more than one coupling term for pair ({0}, {1})")]
    DuplicateCoupling(String, String),
    #[error("coupling ({0}, {1}): {2}")]
    InvalidCoupling(String, String, String),
    #[error("model has no optical modes")]
    NoModes,
    #[error("mechanical oscillator: {0}")]
    InvalidMechanics(String),
    #[error("drive: {0}")]
    InvalidDrive(String),
    #[error("operation needs at least {needed} optical modes, model has {found}")]
    TooFewModes { needed: usize, found: usize },
    #[error("z = {z:.6e} m is not an extremum of the branch separation (|d sep/dz| = {slope:.3e} rad/s/m, allowed {allowed:.3e})")]
    NotACrossing { z: f64, slope: f64, allowed: f64 },
    #[error("cavity matrix is singular")]
    Singular,
    #[error("reflection ratio is undefined for zero drive flux")]
    ZeroDrive,
}

/// One cavity basis mode.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalMode {
    pub label: String,
    /// Total linewidth κ, rad/s.
    pub kappa: f64,
    /// Input-port coupling κ_in, rad/s. `kappa - kappa_in` is lost to other channels.
    pub kappa_in: f64,
    /// Detuning per unit static displacement, rad/s per m.
    pub slope_dis: f64,
    /// Detuning per unit oscillatory displacement, rad/s per m.
    pub slope_osc: f64,
    /// Diagonal detuning at z = 0, rad/s.
    pub offset: f64,
}

impl OpticalMode {
    pub fn new(label: impl Into<String>, kappa: f64, kappa_in: f64) -> Self {
        Self {
            label: label.into(),
            kappa,
            kappa_in,
            slope_dis: 0.0,
            slope_osc: 0.0,
            offset: 0.0,
        }
    }

    pub fn with_slopes(mut self, slope_dis: f64, slope_osc: f64) -> Self {
        self.slope_dis = slope_dis;
        self.slope_osc = slope_osc;
        self
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn kappa_vac(&self) -> f64 {
        self.kappa - self.kappa_in
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: &str| {
            Err(ModelError::InvalidMode {
                label: self.label.clone(),
                reason: reason.to_string(),
            })
        };
        let finite = [self.kappa, self.kappa_in, self.slope_dis, self.slope_osc, self.offset]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter");
        }
        if self.kappa <= 0.0 {
            return bad("kappa must be positive");
        }
        if self.kappa_in < 0.0 {
            return bad("kappa_in must be non-negative");
        }
        if self.kappa_in > self.kappa {
            return bad("kappa_in exceeds kappa");
        }
        Ok(())
    }
}

/// Membrane-mediated tunneling `t·e^{iφ}` between two modes; the matrix entry
/// at (first, second) is `t·e^{iφ}` and its conjugate sits at (second, first).
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTerm {
    pub pair: (String, String),
    /// Tunneling magnitude t, rad/s.
    pub t: f64,
    /// Tunneling phase φ, radians, canonical in `[0, 2π)`.
    pub phi: f64,
}

impl CouplingTerm {
    pub fn new(first: impl Into<String>, second: impl Into<String>, t: f64, phi: f64) -> Self {
        Self {
            pair: (first.into(), second.into()),
            t,
            phi: canonical_phase(phi),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanicalOscillator {
    /// Bare resonance ω_m, rad/s.
    pub omega_m: f64,
    /// Intrinsic energy decay rate γ_m = ω_m / Q, rad/s.
    pub gamma_m: f64,
    /// Effective mass, kg.
    pub mass_eff: f64,
    /// Bath temperature, K.
    pub temperature: f64,
}

impl MechanicalOscillator {
    pub fn from_q(omega_m: f64, q: f64, mass_eff: f64, temperature: f64) -> Self {
        Self {
            omega_m,
            gamma_m: omega_m / q,
            mass_eff,
            temperature,
        }
    }

    /// Zero-point amplitude sqrt(ħ / 2mω_m), m.
    pub fn z_zpf(&self) -> f64 {
        (HBAR / (2.0 * self.mass_eff * self.omega_m)).sqrt()
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega_m / self.gamma_m
    }

    /// Classical thermal occupancy k_B T / ħω_m.
    pub fn n_thermal(&self) -> f64 {
        K_B * self.temperature / (HBAR * self.omega_m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |s: &str| Err(ModelError::InvalidMechanics(s.to_string()));
        if !(self.omega_m > 0.0 && self.omega_m.is_finite()) {
            return bad("omega_m must be positive");
        }
        if !(self.gamma_m > 0.0 && self.gamma_m.is_finite()) {
            return bad("gamma_m must be positive");
        }
        if !(self.mass_eff > 0.0 && self.mass_eff.is_finite()) {
            return bad("mass_eff must be positive");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be non-negative");
        }
        let z = self.z_zpf();
        if !(z > 0.0 && z.is_finite()) {
            return bad("zero-point amplitude is not finite");
        }
        Ok(())
    }
}

/// N optical modes, their couplings and the mechanical oscillator.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub modes: Vec<OpticalMode>,
    pub couplings: Vec<CouplingTerm>,
    pub mech: MechanicalOscillator,
    /// Rotating-frame origin ω₀, rad/s. Bookkeeping only; never enters a computation.
    pub crossing_frequency: f64,
}

impl SystemModel {
    pub fn new(modes: Vec<OpticalMode>, couplings: Vec<CouplingTerm>, mech: MechanicalOscillator) -> Self {
        Self {
            modes,
            couplings,
            mech,
            crossing_frequency: 0.0,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mode_index(&self, label: &str) -> Option<usize> {
        self.modes.iter().position(|m| m.label == label)
    }

    /// Couplings resolved to `(i, j, t, φ)` index form.
    pub fn resolved_couplings(&self) -> Result<Vec<(usize, usize, f64, f64)>, ModelError> {
        let mut out: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(self.couplings.len());
        for c in &self.couplings {
            let (a, b) = (&c.pair.0, &c.pair.1);
            let i = self
                .mode_index(a)
                .ok_or_else(|| ModelError::UnknownLabel(a.clone()))?;
            let j = self
                .mode_index(b)
                .ok_or_else(|| ModelError::UnknownLabel(b.clone()))?;
            if i == j {
                return Err(ModelError::SelfCoupling(a.clone()));
            }
            if !(c.t >= 0.0 && c.t.is_finite()) {
                return Err(ModelError::InvalidCoupling(
                    a.clone(),
                    b.clone(),
                    "t must be finite and non-negative".into(),
                ));
            }
            if !c.phi.is_finite() {
                return Err(ModelError::InvalidCoupling(
                    a.clone(),
                    b.clone(),
                    "phi must be finite".into(),
                ));
            }
            if out
                .iter()
                .any(|&(p, q, _, _)| (p == i && q == j) || (p == j && q == i))
            {
                return Err(ModelError::DuplicateCoupling(a.clone(), b.clone()));
            }
            out.push((i, j, c.t, canonical_phase(c.phi)));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.modes.is_empty() {
            return Err(ModelError::NoModes);
        }
        for (k, m) in self.modes.iter().enumerate() {
            m.validate()?;
            if self.modes[..k].iter().any(|o| o.label == m.label) {
                return Err(ModelError::DuplicateLabel(m.label.clone()));
            }
        }
        self.resolved_couplings()?;
        self.mech.validate()
    }

    /// Per-mode optomechanical coupling g_{m,n} = ω'_{osc,n}·z_zpf, rad/s.
    pub fn g_mech(&self) -> Vec<f64> {
        let zzpf = self.mech.z_zpf();
        self.modes.iter().map(|m| m.slope_osc * zzpf).collect()
    }

    /// Smallest nonzero tunneling magnitude, if any.
    pub fn min_coupling(&self) -> Option<f64> {
        self.couplings
            .iter()
            .map(|c| c.t)
            .filter(|&t| t > 0.0)
            .min_by(|a, b| a.total_cmp(b))
    }

    /// Largest difference between static detuning slopes.
    pub fn max_slope_difference(&self) -> f64 {
        let mut d = 0.0_f64;
        for (i, a) in self.modes.iter().enumerate() {
            for b in &self.modes[i + 1..] {
                d = d.max((a.slope_dis - b.slope_dis).abs());
            }
        }
        d
    }
}

/// Optional amplitude modulation of the drive power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulation {
    /// Modulation frequency, Hz (cyclic).
    pub mod_freq: f64,
    /// Fractional modulation depth β in [0, 1].
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveConfig {
    /// Laser detuning Δ from the crossing frequency, rad/s.
    pub detuning: f64,
    /// Power before the fiber, W.
    pub power_in: f64,
    /// Laser wavelength, m.
    pub wavelength: f64,
    /// Fiber power transmission η_f in (0, 1].
    pub fiber_efficiency: f64,
    pub modulation: Option<Modulation>,
}

impl DriveConfig {
    pub fn new(detuning: f64, power_in: f64, wavelength: f64, fiber_efficiency: f64) -> Self {
        Self {
            detuning,
            power_in,
            wavelength,
            fiber_efficiency,
            modulation: None,
        }
    }

    pub fn with_detuning(&self, detuning: f64) -> Self {
        Self {
            detuning,
            ..self.clone()
        }
    }

    pub fn with_power(&self, power_in: f64) -> Self {
        Self {
            power_in,
            ..self.clone()
        }
    }

    /// Photon flux reaching the cavity input, photons/s.
    pub fn photon_flux(&self) -> f64 {
        let photon_energy = HBAR * TWO_PI * C_LIGHT / self.wavelength;
        self.fiber_efficiency * self.power_in / photon_energy
    }

    /// Real, non-negative input amplitude a_in = sqrt(flux).
    pub fn input_amplitude(&self) -> f64 {
        self.photon_flux().sqrt()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |s: &str| Err(ModelError::InvalidDrive(s.to_string()));
        if !self.detuning.is_finite() {
            return bad("detuning must be finite");
        }
        if !(self.power_in >= 0.0 && self.power_in.is_finite()) {
            return bad("power_in must be finite and non-negative");
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return bad("wavelength must be positive");
        }
        if !(self.fiber_efficiency > 0.0 && self.fiber_efficiency <= 1.0) {
            return bad("fiber_efficiency must lie in (0, 1]");
        }
        if let Some(m) = self.modulation {
            if !(0.0..=1.0).contains(&m.depth) {
                return bad("modulation depth must lie in [0, 1]");
            }
            if !(m.mod_freq > 0.0 && m.mod_freq.is_finite()) {
                return bad("modulation frequency must be positive");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{khz, mhz};

    fn mech() -> MechanicalOscillator {
        MechanicalOscillator::from_q(khz(354.6), 1e5, 43e-12, 0.5)
    }

    #[test]
    fn kappa_in_above_kappa_is_rejected() {
        let m = OpticalMode::new("L", mhz(1.0), mhz(1.1));
        assert!(matches!(m.validate(), Err(ModelError::InvalidMode { .. })));
        // lossless one-port is allowed
        assert!(OpticalMode::new("L", mhz(1.0), mhz(1.0)).validate().is_ok());
    }

    #[test]
    fn duplicate_labels_and_pairs() {
        let modes = vec![OpticalMode::new("A", 1.0, 0.1), OpticalMode::new("A", 1.0, 0.1)];
        let m = SystemModel::new(modes, vec![], mech());
        assert_eq!(m.validate(), Err(ModelError::DuplicateLabel("A".into())));

        let modes = vec![OpticalMode::new("A", 1.0, 0.1), OpticalMode::new("B", 1.0, 0.1)];
        let c = vec![CouplingTerm::new("A", "B", 1.0, 0.0), CouplingTerm::new("B", "A", 2.0, 0.0)];
        let m = SystemModel::new(modes, c, mech());
        assert!(matches!(m.validate(), Err(ModelError::DuplicateCoupling(..))));
    }

    #[test]
    fn zero_point_amplitude_and_occupancy() {
        let m = mech();
        // sqrt(ħ / (2 · 43 ng · 2π · 354.6 kHz))
        assert!((m.z_zpf() - 7.418e-16).abs() < 0.01e-16, "{}", m.z_zpf());
        assert!((m.n_thermal() / 2.94e4 - 1.0).abs() < 0.01);
        assert!((m.quality_factor() - 1e5).abs() < 1e-6);
    }

    #[test]
    fn photon_flux_matches_hand_value() {
        let d = DriveConfig::new(0.0, 80e-6, 1064e-9, 0.6);
        // η P λ / (2π ħ c)
        assert!((d.photon_flux() / 2.57e14 - 1.0).abs() < 0.005, "{}", d.photon_flux());
        assert_eq!(d.with_power(0.0).photon_flux(), 0.0);
    }

    #[test]
    fn coupling_phase_is_canonicalized() {
        let c = CouplingTerm::new("A", "B", 1.0, -0.5);
        assert!(c.phi >= 0.0 && c.phi < TWO_PI);
    }
}
