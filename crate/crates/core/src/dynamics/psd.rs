use num_complex::Complex64;
use rayon::prelude::*;

use super::{check_grid, Backaction, DynamicsError};
use crate::model::{DriveConfig, SystemModel};

/// Below this quality factor the high-Q form of the mechanical susceptibility is questionable.
pub const LOW_Q_THRESHOLD: f64 = 100.0;

/// Thermal displacement spectrum in z_zpf² units per rad/s.
///
/// Normalized so that ∫ S dω/2π = n_th for the bare oscillator; multiply by
/// z_zpf² for m²/(rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct PsdSpectrum {
    pub omegas: Vec<f64>,
    /// `None` where γ_m + δγ(ω) ≤ 0 (anti-damped, no stationary spectrum).
    pub values: Vec<Option<f64>>,
    pub n_thermal: f64,
    /// Set when any grid point is anti-damped.
    pub unstable: bool,
    /// Set when Q = ω_m/γ_m is below [`LOW_Q_THRESHOLD`].
    pub low_q: bool,
}

/// S[ω] = n_th·γ_m·|χ_eff[ω]|² with χ_eff⁻¹ = γ_m/2 + i(ω_m − ω) + iΣ[ω].
pub fn brownian_psd(
    model: &SystemModel,
    drive: &DriveConfig,
    z_dis: f64,
    omegas: &[f64],
) -> Result<PsdSpectrum, DynamicsError> {
    check_grid(omegas, "frequency")?;
    let ba = Backaction::new(model, drive, z_dis)?;
    let n_th = model.mech.n_thermal();
    let (wm, gm) = (model.mech.omega_m, model.mech.gamma_m);
    let values = omegas
        .par_iter()
        .map(|&w| {
            let s = ba.self_energy(drive.detuning, w)?;
            if gm + s.delta_gamma <= 0.0 {
                return Ok(None);
            }
            let inv = Complex64::new(gm / 2.0, wm - w) + Complex64::i() * s.sigma;
            Ok(Some(n_th * gm / inv.norm_sqr()))
        })
        .collect::<Result<Vec<_>, DynamicsError>>()?;
    Ok(PsdSpectrum {
        unstable: values.iter().any(Option::is_none),
        low_q: model.mech.quality_factor() < LOW_Q_THRESHOLD,
        omegas: omegas.to_vec(),
        values,
        n_thermal: n_th,
    })
}
