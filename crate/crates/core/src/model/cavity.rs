use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::matrix::assemble;
use super::{DriveConfig, ModelError, SystemModel};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Linear cavity at a fixed static displacement.
///
/// Holds the mode matrix ω̄_c(z_dis), the linewidths and the input couplings
/// so that sweeps over detuning or probe frequency only pay for one small
/// complex inverse per point.
#[derive(Debug, Clone)]
pub struct Cavity {
    pub omega_c: DMatrix<Complex64>,
    pub kappa: Vec<f64>,
    pub sqrt_kappa_in: DVector<Complex64>,
}

impl Cavity {
    pub fn new(model: &SystemModel, z_dis: f64) -> Result<Self, ModelError> {
        model.validate()?;
        Ok(Self::new_unchecked(model, z_dis))
    }

    pub(crate) fn new_unchecked(model: &SystemModel, z_dis: f64) -> Self {
        Self {
            omega_c: assemble(model, z_dis, 0.0),
            kappa: model.modes.iter().map(|m| m.kappa).collect(),
            sqrt_kappa_in: DVector::from_iterator(
                model.n_modes(),
                model.modes.iter().map(|m| Complex64::new(m.kappa_in.sqrt(), 0.0)),
            ),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.kappa.len()
    }

    /// χ̄_c[ω] = (κ̄/2 + i(ω̄_c − Δ − ω))⁻¹.
    pub fn chi(&self, detuning: f64, omega: f64) -> Result<DMatrix<Complex64>, ModelError> {
        let n = self.n_modes();
        let mut a = self.omega_c.map(|v| I * v);
        for k in 0..n {
            a[(k, k)] += Complex64::new(0.5 * self.kappa[k], -(detuning + omega));
        }
        a.try_inverse().ok_or(ModelError::Singular)
    }

    /// Steady intracavity amplitudes for a (possibly complex) input amplitude.
    pub fn steady_state(&self, detuning: f64, a_in: Complex64) -> Result<DVector<Complex64>, ModelError> {
        Ok(self.chi(detuning, 0.0)? * &self.sqrt_kappa_in * a_in)
    }

    /// Reflected-to-incident amplitude ratio 1 − √κ̄_in†·χ̄_c[0]·√κ̄_in.
    pub fn reflection_ratio(&self, detuning: f64) -> Result<Complex64, ModelError> {
        let chi = self.chi(detuning, 0.0)?;
        let v = &self.sqrt_kappa_in;
        Ok(Complex64::new(1.0, 0.0) - v.dotc(&(chi * v)))
    }
}

/// Cavity susceptibility χ̄_c[ω] at static displacement `z_dis`.
pub fn susceptibility(
    model: &SystemModel,
    drive: &DriveConfig,
    omega: f64,
    z_dis: f64,
) -> Result<DMatrix<Complex64>, ModelError> {
    drive.validate()?;
    Cavity::new(model, z_dis)?.chi(drive.detuning, omega)
}

/// Steady-state intracavity amplitudes ā₀ (|a_n|² in photons) with a real input amplitude.
pub fn steady_state(model: &SystemModel, drive: &DriveConfig, z_dis: f64) -> Result<DVector<Complex64>, ModelError> {
    steady_state_with_input(model, drive, z_dis, Complex64::new(drive.input_amplitude(), 0.0))
}

/// As [`steady_state`] with an explicit complex input amplitude; its modulus
/// should be sqrt(photon flux).
pub fn steady_state_with_input(
    model: &SystemModel,
    drive: &DriveConfig,
    z_dis: f64,
    a_in: Complex64,
) -> Result<DVector<Complex64>, ModelError> {
    drive.validate()?;
    Cavity::new(model, z_dis)?.steady_state(drive.detuning, a_in)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflection {
    pub amplitude_ratio: Complex64,
    pub power_ratio: f64,
}

pub fn reflection(model: &SystemModel, drive: &DriveConfig, z_dis: f64) -> Result<Reflection, ModelError> {
    reflection_with_input(model, drive, z_dis, Complex64::new(drive.input_amplitude(), 0.0))
}

/// Reflection computed from the steady fields, a_refl / a_in, for any input phase.
pub fn reflection_with_input(
    model: &SystemModel,
    drive: &DriveConfig,
    z_dis: f64,
    a_in: Complex64,
) -> Result<Reflection, ModelError> {
    drive.validate()?;
    if drive.photon_flux() <= 0.0 || a_in.norm() == 0.0 {
        return Err(ModelError::ZeroDrive);
    }
    let cav = Cavity::new(model, z_dis)?;
    let a0 = cav.steady_state(drive.detuning, a_in)?;
    let refl = a_in - cav.sqrt_kappa_in.dotc(&a0);
    let amplitude_ratio = refl / a_in;
    Ok(Reflection {
        amplitude_ratio,
        power_ratio: amplitude_ratio.norm_sqr(),
    })
}

/// Resonance of one eigen-branch as seen in reflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchResonance {
    /// Branch eigenfrequency, rad/s.
    pub frequency: f64,
    /// 1 − power_ratio with the laser on the branch frequency.
    pub dip_depth: f64,
}

/// Eigen-branches at `z_dis`, ascending, each with its reflection dip depth.
pub fn branch_resonances(model: &SystemModel, z_dis: f64) -> Result<Vec<BranchResonance>, ModelError> {
    let cav = Cavity::new(model, z_dis)?;
    super::eigen_branches(model, z_dis)?
        .into_iter()
        .map(|f| {
            let r = cav.reflection_ratio(f)?;
            Ok(BranchResonance {
                frequency: f,
                dip_depth: 1.0 - r.norm_sqr(),
            })
        })
        .collect()
}

/// The branch with the deepest reflection dip, i.e. the resonance a laser locks to.
pub fn brightest_resonance(model: &SystemModel, z_dis: f64) -> Result<BranchResonance, ModelError> {
    let all = branch_resonances(model, z_dis)?;
    Ok(all
        .into_iter()
        .max_by(|a, b| a.dip_depth.total_cmp(&b.dip_depth))
        .expect("validated model has at least one mode"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CouplingTerm, MechanicalOscillator, OpticalMode};
    use crate::units::{khz, mhz, mhz_per_nm};
    use std::f64::consts::FRAC_PI_2;

    fn mech() -> MechanicalOscillator {
        MechanicalOscillator::from_q(khz(354.6), 1e5, 43e-12, 0.5)
    }

    fn single(kappa: f64, kappa_in: f64) -> SystemModel {
        SystemModel::new(vec![OpticalMode::new("L", kappa, kappa_in)], vec![], mech())
    }

    fn drive(detuning: f64) -> DriveConfig {
        DriveConfig::new(detuning, 80e-6, 1064e-9, 0.6)
    }

    fn symmetric_pair(t: f64, phi: f64) -> SystemModel {
        SystemModel::new(
            vec![
                OpticalMode::new("L", mhz(1.0), khz(100.0)).with_slopes(mhz_per_nm(2.0), 0.0),
                OpticalMode::new("R", mhz(1.0), khz(100.0)).with_slopes(mhz_per_nm(-2.0), 0.0),
            ],
            vec![CouplingTerm::new("L", "R", t, phi)],
            mech(),
        )
    }

    #[test]
    fn on_resonance_single_mode_is_two_over_kappa() {
        let k = mhz(1.0);
        let chi = susceptibility(&single(k, khz(47.0)), &drive(0.0), 0.0, 0.0).unwrap();
        assert!((chi[(0, 0)].re - 2.0 / k).abs() < 1e-15 * 2.0 / k);
        assert_eq!(chi[(0, 0)].im, 0.0);
    }

    #[test]
    fn scalar_form_off_resonance() {
        let (k, d, w) = (mhz(1.0), mhz(0.3), khz(354.6));
        let chi = susceptibility(&single(k, 0.0), &drive(d), w, 0.0).unwrap();
        let expected = Complex64::new(1.0, 0.0) / Complex64::new(k / 2.0, -(d + w));
        assert!((chi[(0, 0)] - expected).norm() < 1e-14 * expected.norm());
    }

    #[test]
    fn two_by_two_matches_closed_form_inverse() {
        let t = mhz(4.6);
        let m = symmetric_pair(t, 1.6);
        let chi = susceptibility(&m, &drive(t), 0.0, 0.0).unwrap();
        // A = [[k/2 - iΔ, i t e^{iφ}], [i t e^{-iφ}, k/2 - iΔ]]
        let k = mhz(1.0);
        let a = Complex64::new(k / 2.0, -t);
        let b = I * Complex64::from_polar(t, 1.6);
        let c = I * Complex64::from_polar(t, -1.6);
        let det = a * a - b * c;
        let inv = [[a / det, -b / det], [-c / det, a / det]];
        for r in 0..2 {
            for s in 0..2 {
                assert!((chi[(r, s)] - inv[r][s]).norm() < 1e-12 * inv[r][s].norm().max(1e-30));
            }
        }
    }

    #[test]
    fn single_mode_photon_number() {
        // κ_in·flux / (κ/2)² with flux = η P λ / (2πħc)
        let m = single(mhz(1.0), khz(47.0));
        let a0 = steady_state(&m, &drive(0.0), 0.0).unwrap();
        assert!((a0[0].norm_sqr() / 7.7e6 - 1.0).abs() < 0.02, "{}", a0[0].norm_sqr());
        let zero = steady_state(&m, &drive(0.0).with_power(0.0), 0.0).unwrap();
        assert_eq!(zero[0].norm(), 0.0);
    }

    #[test]
    fn single_mode_dip_depth() {
        let m = single(mhz(1.0), mhz(0.047));
        let r = reflection(&m, &drive(0.0), 0.0).unwrap();
        let expected = (1.0 - 2.0 * 0.047f64).powi(2);
        assert!((r.power_ratio - expected).abs() < 1e-12);
        let far = reflection(&m, &drive(mhz(1.0) * 1e4), 0.0).unwrap();
        assert!((far.power_ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_drive_has_no_reflection_ratio() {
        let m = single(mhz(1.0), mhz(0.047));
        assert_eq!(reflection(&m, &drive(0.0).with_power(0.0), 0.0), Err(ModelError::ZeroDrive));
    }

    #[test]
    fn brightest_branch_of_single_mode_is_its_resonance() {
        let mut m = single(mhz(1.0), mhz(0.047));
        m.modes[0].offset = mhz(0.4);
        let b = brightest_resonance(&m, 0.0).unwrap();
        assert!((b.frequency - mhz(0.4)).abs() < 1e-6);
        assert!((b.dip_depth - (1.0 - (1.0 - 2.0 * 0.047f64).powi(2))).abs() < 1e-12);
    }

    #[test]
    fn quarter_phase_gives_equal_branch_dips() {
        let t = mhz(4.6);
        let m = symmetric_pair(t, FRAC_PI_2);
        let lo = reflection(&m, &drive(-t), 0.0).unwrap().power_ratio;
        let hi = reflection(&m, &drive(t), 0.0).unwrap().power_ratio;
        assert!(((1.0 - lo) / (1.0 - hi) - 1.0).abs() < 0.01);
    }
}
