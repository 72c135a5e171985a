use num_complex::Complex64;
use rayon::prelude::*;

use super::{integrate, max_step, ringdown_estimate, InitialState, OracleError, RingdownEstimate, Schedule, Trajectory};
use crate::dynamics::{Backaction, SelfEnergyResult};
use crate::model::{DriveConfig, MechanicalOscillator, SystemModel};
use crate::units::TWO_PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Initial mechanical amplitude in units of z_zpf.
    pub c0: f64,
    /// Integrated time, s.
    pub duration: f64,
    /// Step as a fraction of the largest allowed step, in (0, 1].
    pub dt_scale: f64,
    pub samples_per_period: usize,
    /// Transient discarded before the ringdown fit, in units of 1/κ_min.
    pub settle_kappa_times: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            c0: 100.0,
            duration: 2e-3,
            dt_scale: 1.0,
            samples_per_period: 16,
            settle_kappa_times: 10.0,
        }
    }
}

/// Linearized prediction next to the time-domain measurement at one detuning.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePoint {
    pub detuning: f64,
    pub predicted: SelfEnergyResult,
    pub ringdown: Option<RingdownEstimate>,
    /// ω_ringdown − ω_m.
    pub delta_omega: Option<f64>,
    /// γ_ringdown − γ_m.
    pub delta_gamma: Option<f64>,
    /// Time at which the amplitude ran away, if it did.
    pub diverged_at: Option<f64>,
    /// Net damping negative, in prediction or in the trajectory.
    pub unstable: bool,
    pub pass: bool,
}

/// Agreement window max(5 %·|prediction|, 1 %·γ_m).
pub fn tolerance(predicted: f64, gamma_m: f64) -> f64 {
    (0.05 * predicted.abs()).max(0.01 * gamma_m)
}

/// Largest |δω| treated as weak coupling: 0.1·γ_m·√Q.
pub fn weak_coupling_limit(mech: &MechanicalOscillator) -> f64 {
    0.1 * mech.gamma_m * mech.quality_factor().sqrt()
}

/// Integrate one ringdown at `drive.detuning` and compare it with Σ[ω_m].
pub fn oracle_point(
    model: &SystemModel,
    drive: &DriveConfig,
    z_dis: f64,
    opts: &OracleOptions,
) -> Result<(OraclePoint, Option<Trajectory>), OracleError> {
    if !(opts.dt_scale > 0.0 && opts.dt_scale <= 1.0) || opts.samples_per_period == 0 {
        return Err(OracleError::Config("dt_scale must lie in (0, 1] and sampling be positive".into()));
    }
    let predicted = Backaction::new(model, drive, z_dis)?.at_mechanical(drive.detuning)?;
    let (wm, gm) = (model.mech.omega_m, model.mech.gamma_m);
    let dt = opts.dt_scale * max_step(model, drive, z_dis)?;
    let period = TWO_PI / wm;
    let sample_every = ((period / opts.samples_per_period as f64 / dt).floor() as usize).max(1);
    let steps = (opts.duration / dt).round().max(1.0);
    let schedule = Schedule {
        duration: steps * dt,
        dt,
        sample_every,
    };
    let kmin = model.modes.iter().map(|m| m.kappa).fold(f64::INFINITY, f64::min);
    let mut point = OraclePoint {
        detuning: drive.detuning,
        predicted,
        ringdown: None,
        delta_omega: None,
        delta_gamma: None,
        diverged_at: None,
        unstable: gm + predicted.delta_gamma <= 0.0,
        pass: false,
    };
    let initial = InitialState::steady(Complex64::new(opts.c0, 0.0));
    let traj = match integrate(model, drive, z_dis, &initial, &schedule) {
        Ok(t) => t,
        Err(OracleError::Unstable { time, .. }) => {
            point.diverged_at = Some(time);
            point.unstable = true;
            return Ok((point, None));
        }
        Err(e) => return Err(e),
    };
    let est = ringdown_estimate(&traj.after(opts.settle_kappa_times / kmin))?;
    let dom = est.omega - wm;
    let dgam = est.gamma - gm;
    point.unstable |= est.gamma <= 0.0;
    point.pass = (dom - predicted.delta_omega).abs() <= tolerance(predicted.delta_omega, gm)
        && (dgam - predicted.delta_gamma).abs() <= tolerance(predicted.delta_gamma, gm);
    point.ringdown = Some(est);
    point.delta_omega = Some(dom);
    point.delta_gamma = Some(dgam);
    Ok((point, Some(traj)))
}

/// [`oracle_point`] over a detuning grid, one independent job per detuning.
/// Trajectories are kept only when `keep_trajectories` is set.
pub fn compare_sweep(
    model: &SystemModel,
    drive: &DriveConfig,
    z_dis: f64,
    detunings: &[f64],
    opts: &OracleOptions,
    keep_trajectories: bool,
) -> Result<Vec<(OraclePoint, Option<Trajectory>)>, OracleError> {
    detunings
        .par_iter()
        .map(|&d| {
            let (p, t) = oracle_point(model, &drive.with_detuning(d), z_dis, opts)?;
            Ok((p, t.filter(|_| keep_trajectories)))
        })
        .collect()
}
