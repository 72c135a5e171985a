//! Linearized back-action of the cavity field on the membrane.
//!
//! The mechanical mode sees the optical field through the self-energy
//! Σ[ω] = −i ᾱ†(χ̄_c[ω] − χ̄_c†[−ω])ᾱ, with ᾱ = ḡ_m·ā₀ the steady field weighted by
//! the per-mode coupling g_m,n = ω'_osc,n·z_zpf. The optical spring is
//! δω = Re Σ[ω_m] and the optical damping δγ = −2 Im Σ[ω_m].

mod psd;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Cavity, DriveConfig, ModelError, SystemModel};

pub use psd::{brownian_psd, PsdSpectrum, LOW_Q_THRESHOLD};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("drive has no modulation configured")]
    MissingModulation,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Σ[ω] with the derived spring and damping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfEnergyResult {
    pub sigma: Complex64,
    /// Optical spring δω = Re Σ, rad/s.
    pub delta_omega: f64,
    /// Optical damping δγ = −2 Im Σ, rad/s. Positive adds damping.
    pub delta_gamma: f64,
}

impl SelfEnergyResult {
    pub fn from_sigma(sigma: Complex64) -> Self {
        Self {
            sigma,
            delta_omega: sigma.re,
            delta_gamma: -2.0 * sigma.im,
        }
    }
}

/// ᾱ = ḡ_m·ā₀, in rad/s per unit of dimensionless displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingVector {
    pub alpha: DVector<Complex64>,
}

/// Precomputed cavity and couplings at one static displacement; evaluates
/// Σ at any detuning and probe frequency.
#[derive(Debug, Clone)]
pub struct Backaction {
    cavity: Cavity,
    g: Vec<f64>,
    a_in: f64,
    pub omega_m: f64,
    pub gamma_m: f64,
}

impl Backaction {
    pub fn new(model: &SystemModel, drive: &DriveConfig, z_dis: f64) -> Result<Self, DynamicsError> {
        drive.validate()?;
        Ok(Self {
            cavity: Cavity::new(model, z_dis)?,
            g: model.g_mech(),
            a_in: drive.input_amplitude(),
            omega_m: model.mech.omega_m,
            gamma_m: model.mech.gamma_m,
        })
    }

    pub fn steady_state(&self, detuning: f64) -> Result<DVector<Complex64>, DynamicsError> {
        Ok(self.cavity.steady_state(detuning, Complex64::new(self.a_in, 0.0))?)
    }

    pub fn coupling_vector(&self, detuning: f64) -> Result<CouplingVector, DynamicsError> {
        let mut alpha = self.steady_state(detuning)?;
        for (a, g) in alpha.iter_mut().zip(&self.g) {
            *a *= *g;
        }
        Ok(CouplingVector { alpha })
    }

    pub fn sigma(&self, detuning: f64, omega: f64) -> Result<Complex64, DynamicsError> {
        let alpha = self.coupling_vector(detuning)?.alpha;
        let plus = self.cavity.chi(detuning, omega)?;
        let minus = self.cavity.chi(detuning, -omega)?;
        let kernel = plus - minus.adjoint();
        Ok(-I * alpha.dotc(&(kernel * &alpha)))
    }

    pub fn self_energy(&self, detuning: f64, omega: f64) -> Result<SelfEnergyResult, DynamicsError> {
        Ok(SelfEnergyResult::from_sigma(self.sigma(detuning, omega)?))
    }

    /// Σ[ω_m] at the drive detuning `detuning`.
    pub fn at_mechanical(&self, detuning: f64) -> Result<SelfEnergyResult, DynamicsError> {
        self.self_energy(detuning, self.omega_m)
    }
}

pub fn coupling_vector(model: &SystemModel, drive: &DriveConfig, z_dis: f64) -> Result<CouplingVector, DynamicsError> {
    Backaction::new(model, drive, z_dis)?.coupling_vector(drive.detuning)
}

/// Σ[ω] at the drive's detuning.
pub fn self_energy(
    model: &SystemModel,
    drive: &DriveConfig,
    z_dis: f64,
    omega: f64,
) -> Result<SelfEnergyResult, DynamicsError> {
    Backaction::new(model, drive, z_dis)?.self_energy(drive.detuning, omega)
}

pub(crate) fn check_grid(grid: &[f64], what: &str) -> Result<(), DynamicsError> {
    if grid.is_empty() {
        return Err(DynamicsError::InvalidGrid(format!("{what} grid is empty")));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(DynamicsError::InvalidGrid(format!("{what} grid has non-finite values")));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(DynamicsError::InvalidGrid(format!("{what} grid is not sorted")));
    }
    Ok(())
}

/// Σ[ω_m] at each detuning of a sorted grid. The drive's own detuning is ignored.
pub fn spring_damping_sweep(
    model: &SystemModel,
    drive: &DriveConfig,
    z_dis: f64,
    detunings: &[f64],
) -> Result<Vec<SelfEnergyResult>, DynamicsError> {
    check_grid(detunings, "detuning")?;
    let ba = Backaction::new(model, drive, z_dis)?;
    detunings.par_iter().map(|&d| ba.at_mechanical(d)).collect()
}

/// Total intracavity photon number Σ|a_n|².
pub fn photon_number(model: &SystemModel, drive: &DriveConfig, z_dis: f64) -> Result<f64, DynamicsError> {
    let a0 = Backaction::new(model, drive, z_dis)?.steady_state(drive.detuning)?;
    Ok(a0.iter().map(|a| a.norm_sqr()).sum())
}

/// Amplitude A_ω = β·|δω| of the mechanical frequency modulation produced by
/// a power modulation of depth β, rad/s.
pub fn modulation_response(model: &SystemModel, drive: &DriveConfig, z_dis: f64) -> Result<f64, DynamicsError> {
    let beta = drive.modulation.ok_or(DynamicsError::MissingModulation)?.depth;
    Ok(beta * self_energy(model, drive, z_dis, model.mech.omega_m)?.delta_omega.abs())
}

/// A_ω over a sorted detuning grid.
pub fn modulation_sweep(
    model: &SystemModel,
    drive: &DriveConfig,
    z_dis: f64,
    detunings: &[f64],
) -> Result<Vec<f64>, DynamicsError> {
    let beta = drive.modulation.ok_or(DynamicsError::MissingModulation)?.depth;
    Ok(spring_damping_sweep(model, drive, z_dis, detunings)?
        .into_iter()
        .map(|r| beta * r.delta_omega.abs())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CouplingTerm, Modulation, OpticalMode};
    use crate::presets;
    use crate::units::{khz, mhz, mhz_per_nm, nm};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    /// Single-mode self-energy written out in scalar form.
    fn scalar_sigma(kappa: f64, kappa_in: f64, wc: f64, g: f64, flux: f64, det: f64, w: f64) -> Complex64 {
        let chi = |x: f64| Complex64::new(1.0, 0.0) / Complex64::new(kappa / 2.0, wc - det - x);
        let a0 = chi(0.0) * (kappa_in * flux).sqrt();
        let n = a0.norm_sqr();
        -I * g * g * n * (chi(w) - chi(-w).conj())
    }

    fn one_mode(kappa: f64, kappa_in: f64, slope_osc: f64) -> SystemModel {
        SystemModel::new(
            vec![OpticalMode::new("L", kappa, kappa_in).with_slopes(mhz_per_nm(1.0), slope_osc)],
            vec![],
            presets::mechanics(),
        )
    }

    #[test]
    fn no_light_no_backaction() {
        let m = presets::three_mode();
        let r = self_energy(&m, &presets::drive(mhz(0.3), 0.0), 0.0, m.mech.omega_m).unwrap();
        assert_eq!(r.sigma, Complex64::new(0.0, 0.0));
        assert_eq!((r.delta_omega, r.delta_gamma), (0.0, 0.0));
    }

    #[test]
    fn result_fields_follow_sigma() {
        let r = SelfEnergyResult::from_sigma(Complex64::new(1.5, -0.25));
        assert_eq!(r.delta_omega, 1.5);
        assert_eq!(r.delta_gamma, 0.5);
    }

    #[test]
    fn single_mode_matches_scalar_form_on_grid() {
        let m = one_mode(mhz(1.0), khz(74.0), mhz_per_nm(1.4));
        let d = presets::drive(0.0, 40.0);
        let z = nm(0.2);
        let wc = mhz_per_nm(1.0) * z;
        let g = m.g_mech()[0];
        let ba = Backaction::new(&m, &d, z).unwrap();
        for k in 0..100 {
            let det = mhz(-3.0 + 6.0 * k as f64 / 99.0);
            let s = ba.sigma(det, m.mech.omega_m).unwrap();
            let e = scalar_sigma(mhz(1.0), khz(74.0), wc, g, d.photon_flux(), det, m.mech.omega_m);
            assert!((s - e).norm() <= 1e-12 * e.norm(), "{k}: {s} vs {e}");
        }
    }

    #[test]
    fn spring_sign_follows_branch_at_quadratic_point() {
        // symmetric crossing with opposite oscillation slopes
        let t = mhz(1.57);
        let m = SystemModel::new(
            vec![
                OpticalMode::new("L", mhz(1.0), khz(74.0)).with_slopes(mhz_per_nm(1.8), mhz_per_nm(1.4)),
                OpticalMode::new("R", mhz(1.0), khz(74.0)).with_slopes(mhz_per_nm(-1.8), mhz_per_nm(-1.4)),
            ],
            vec![CouplingTerm::new("L", "R", t, FRAC_PI_2)],
            presets::mechanics(),
        );
        let d = presets::drive(0.0, 40.0);
        let ba = Backaction::new(&m, &d, 0.0).unwrap();
        assert!(ba.at_mechanical(t).unwrap().delta_omega > 0.0);
        assert!(ba.at_mechanical(-t).unwrap().delta_omega < 0.0);
    }

    #[test]
    fn mirrored_spectrum_flips_sigma() {
        // (Δ, M) -> (−Δ, −M*) maps Σ to −Σ for real κ, κ_in and couplings.
        let m = presets::three_mode();
        let mut mirrored = m.clone();
        for mode in &mut mirrored.modes {
            mode.offset = -mode.offset;
            mode.slope_dis = -mode.slope_dis;
        }
        for c in &mut mirrored.couplings {
            *c = CouplingTerm::new(c.pair.0.clone(), c.pair.1.clone(), c.t, std::f64::consts::PI - c.phi);
        }
        let d = presets::drive(0.0, 40.0);
        let (a, b) = (
            Backaction::new(&m, &d, nm(0.4)).unwrap(),
            Backaction::new(&mirrored, &d, nm(0.4)).unwrap(),
        );
        for det in [-3.0, -1.2, 0.0, 0.7, 2.5] {
            let s1 = a.at_mechanical(mhz(det)).unwrap().sigma;
            let s2 = b.at_mechanical(mhz(-det)).unwrap().sigma;
            assert!((s1 + s2).norm() <= 1e-10 * s1.norm().max(1e-30), "{det}: {s1} {s2}");
        }
    }

    #[test]
    fn decoupled_modes_add() {
        let a = OpticalMode::new("A", mhz(1.0), khz(74.0)).with_slopes(mhz_per_nm(1.87), mhz_per_nm(1.4));
        let b = OpticalMode::new("B", mhz(1.3), khz(7.0))
            .with_slopes(mhz_per_nm(-1.77), mhz_per_nm(-1.46))
            .with_offset(mhz(0.5));
        let mech = presets::mechanics();
        let pair = SystemModel::new(vec![a.clone(), b.clone()], vec![], mech.clone());
        let d = presets::drive(mhz(0.2), 80.0);
        let z = nm(0.1);
        let s = self_energy(&pair, &d, z, mech.omega_m).unwrap().sigma;
        let sa = self_energy(&SystemModel::new(vec![a], vec![], mech.clone()), &d, z, mech.omega_m).unwrap().sigma;
        let sb = self_energy(&SystemModel::new(vec![b], vec![], mech.clone()), &d, z, mech.omega_m).unwrap().sigma;
        assert!((s - sa - sb).norm() <= 1e-12 * s.norm());
    }

    #[test]
    fn far_detuning_kills_backaction() {
        let m = presets::three_mode();
        let d = presets::drive(0.0, 40.0);
        let ba = Backaction::new(&m, &d, 0.0).unwrap();
        let peak = ba.at_mechanical(mhz(1.6)).unwrap().sigma.norm();
        let far = ba.at_mechanical(mhz(1.0) * 1e4).unwrap().sigma.norm();
        assert!(far < 1e-6 * peak, "{far} vs {peak}");
    }

    #[test]
    fn sweep_rejects_unsorted_grid() {
        let m = presets::single_mode();
        let d = presets::drive(0.0, 40.0);
        assert!(matches!(
            spring_damping_sweep(&m, &d, 0.0, &[1.0, 0.0]),
            Err(DynamicsError::InvalidGrid(_))
        ));
        assert!(spring_damping_sweep(&m, &d, 0.0, &[]).is_err());
    }

    #[test]
    fn photon_number_matches_closed_form() {
        let m = SystemModel::new(vec![OpticalMode::new("L", mhz(1.0), khz(47.0))], vec![], presets::mechanics());
        let d = presets::drive(0.0, 80.0);
        let expected = khz(47.0) * d.photon_flux() / (mhz(1.0) / 2.0).powi(2);
        let n = photon_number(&m, &d, 0.0).unwrap();
        assert!((n / expected - 1.0).abs() < 1e-12);
        assert!((n / 7.7e6 - 1.0).abs() < 0.02);
        assert_eq!(photon_number(&m, &d.with_power(0.0), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn photon_number_ignores_phase_on_symmetric_crossing() {
        let base = |phi: f64| {
            SystemModel::new(
                vec![
                    OpticalMode::new("L", mhz(1.0), khz(74.0)).with_slopes(mhz_per_nm(1.8), 0.0),
                    OpticalMode::new("R", mhz(1.0), khz(74.0)).with_slopes(mhz_per_nm(-1.8), 0.0),
                ],
                vec![CouplingTerm::new("L", "R", mhz(1.57), phi)],
                presets::mechanics(),
            )
        };
        let d = presets::drive(0.0, 80.0);
        let n0 = photon_number(&base(0.0), &d, 0.0).unwrap();
        for k in 1..64 {
            let n = photon_number(&base(k as f64 * 0.1), &d, 0.0).unwrap();
            assert!((n / n0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn modulation_needs_config_and_scales_with_depth() {
        let m = presets::three_mode();
        let d = presets::drive(mhz(1.6), 40.0);
        assert_eq!(modulation_response(&m, &d, 0.0), Err(DynamicsError::MissingModulation));
        let mut d = d;
        d.modulation = Some(Modulation { mod_freq: 75.0, depth: 0.0 });
        assert_eq!(modulation_response(&m, &d, 0.0).unwrap(), 0.0);
        d.modulation = Some(Modulation { mod_freq: 75.0, depth: 0.77 });
        let a = modulation_response(&m, &d, 0.0).unwrap();
        let dw = self_energy(&m, &d, 0.0, m.mech.omega_m).unwrap().delta_omega;
        assert!((a - 0.77 * dw.abs()).abs() <= 1e-15 * a);
    }

    proptest! {
        #[test]
        fn backaction_is_linear_in_power(
            det in -4.0f64..4.0, z in -3.0f64..3.0, p in 1.0f64..200.0,
        ) {
            let m = presets::three_mode();
            let d1 = presets::drive(mhz(det), p);
            let d2 = presets::drive(mhz(det), 2.0 * p);
            let r1 = self_energy(&m, &d1, nm(z), m.mech.omega_m).unwrap();
            let r2 = self_energy(&m, &d2, nm(z), m.mech.omega_m).unwrap();
            prop_assert!((r2.delta_omega - 2.0 * r1.delta_omega).abs() <= 1e-12 * r2.delta_omega.abs());
            prop_assert!((r2.delta_gamma - 2.0 * r1.delta_gamma).abs() <= 1e-12 * r2.delta_gamma.abs());
            let n1 = photon_number(&m, &d1, nm(z)).unwrap();
            let n2 = photon_number(&m, &d2, nm(z)).unwrap();
            prop_assert!((n2 - 2.0 * n1).abs() <= 1e-12 * n2);
            let a1 = coupling_vector(&m, &d1, nm(z)).unwrap().alpha;
            let a2 = coupling_vector(&m, &d2, nm(z)).unwrap().alpha;
            prop_assert!((&a2 - &a1 * Complex64::new(2f64.sqrt(), 0.0)).norm() <= 1e-12 * a1.norm() * 2.0);
        }

        #[test]
        fn single_mode_path_equals_scalar_path(
            kappa in 0.2f64..3.0, frac in 0.0f64..1.0, det in -5.0f64..5.0,
            wm in 50.0f64..2000.0, p in 0.1f64..200.0,
        ) {
            let mut m = one_mode(mhz(kappa), mhz(kappa * frac), mhz_per_nm(1.4));
            m.mech.omega_m = khz(wm);
            let d = presets::drive(mhz(det), p);
            let s = self_energy(&m, &d, 0.0, m.mech.omega_m).unwrap().sigma;
            let e = scalar_sigma(mhz(kappa), mhz(kappa * frac), 0.0, m.g_mech()[0], d.photon_flux(), mhz(det), khz(wm));
            prop_assert!((s - e).norm() <= 1e-12 * e.norm().max(1e-300));
        }
    }
}
