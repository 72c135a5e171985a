//! Time-domain integration of the classical nonlinear equations of motion.
//!
//! The optical amplitudes live in the frame rotating at the drive frequency,
//! the mechanical amplitude c (z = c + c* in units of z_zpf) in the lab frame:
//!
//! dā/dt = −(κ̄/2 + i(ω̄_c(z_dis) − Δ))ā − i ḡ_m ā z + √κ_in a_in
//! dc/dt = −(γ_m/2 + iω_m)c − i(ā†ḡ_mā − F₀)
//!
//! F₀ = ā₀†ḡ_mā₀ is the mean radiation-pressure force at the steady state.
//! Removing it puts the static equilibrium exactly at z_dis, so that
//! (ā₀, c = 0) is a fixed point and the linearized dynamics around it are
//! those of the self-energy. The thermal force is omitted.

mod compare;
mod ringdown;

use nalgebra::DVector;
use num_complex::Complex64;
use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::model::{eigen_branches, Cavity, DriveConfig, ModelError, SystemModel};

pub use compare::{compare_sweep, oracle_point, tolerance, weak_coupling_limit, OracleOptions, OraclePoint};
pub use ringdown::{ringdown_estimate, RingdownEstimate};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Growth of |c| over its initial scale that counts as divergence.
pub const GROWTH_LIMIT: f64 = 1e3;

/// Largest allowed fraction of the fastest optical period per step.
pub const STEP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid integration settings: {0}")]
    Config(String),
    #[error("integration diverged at t = {time:e} s (|c| = {amplitude:e})")]
    Unstable { time: f64, amplitude: f64 },
    #[error("insufficient ringdown signal: {0}")]
    InsufficientSignal(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Initial state; `optical = None` starts from the steady state ā₀.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub c0: Complex64,
    pub optical: Option<Vec<Complex64>>,
}

impl InitialState {
    pub fn steady(c0: Complex64) -> Self {
        Self { c0, optical: None }
    }
}

/// Sampled trajectory on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// s.
    pub times: Vec<f64>,
    pub optical_amps: Vec<Vec<Complex64>>,
    pub mech_amp: Vec<Complex64>,
}

impl Trajectory {
    /// Samples at or after time `t`.
    pub fn after(&self, t: f64) -> Trajectory {
        let k = self.times.partition_point(|&s| s < t);
        Trajectory {
            times: self.times[k..].to_vec(),
            optical_amps: self.optical_amps[k..].to_vec(),
            mech_amp: self.mech_amp[k..].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Time grid: total duration, maximal step and sampling interval, all in s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub duration: f64,
    pub dt: f64,
    /// Recorded every `sample_every` steps.
    pub sample_every: usize,
}

/// Upper bound on the step: STEP_FRACTION / max(κ, |Δ| + max|eig ω̄_c|).
pub fn max_step(model: &SystemModel, drive: &DriveConfig, z_dis: f64) -> Result<f64, OracleError> {
    let eig = eigen_branches(model, z_dis)?.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    let kappa = model.modes.iter().fold(0.0_f64, |m, o| m.max(o.kappa));
    Ok(STEP_FRACTION / kappa.max(drive.detuning.abs() + eig))
}

/// Right-hand side in a flat state vector [ā_0..ā_{N−1}, c].
struct Rhs {
    n: usize,
    /// Row-major κ̄/2 + i(ω̄_c − Δ).
    a: Vec<Complex64>,
    drive: Vec<Complex64>,
    g: Vec<f64>,
    f0: f64,
    half_gamma: f64,
    omega_m: f64,
}

impl Rhs {
    fn eval(&self, y: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let c = y[n];
        let z = 2.0 * c.re;
        let mut force = -self.f0;
        for i in 0..n {
            let mut s = self.drive[i] - I * (self.g[i] * z) * y[i];
            for j in 0..n {
                s -= self.a[i * n + j] * y[j];
            }
            out[i] = s;
            force += self.g[i] * y[i].norm_sqr();
        }
        out[n] = -Complex64::new(self.half_gamma, self.omega_m) * c - I * force;
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper {
    k: [Vec<Complex64>; 7],
    tmp: Vec<Complex64>,
    rtol: f64,
    atol: f64,
}

impl Stepper {
    fn new(len: usize, atol: f64) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); len]),
            tmp: vec![Complex64::new(0.0, 0.0); len],
            rtol: 1e-11,
            atol,
        }
    }

    /// One trial step; on success `y` holds the new state. Returns the scaled error norm.
    fn try_step(&mut self, rhs: &Rhs, y: &mut [Complex64], h: f64) -> f64 {
        let len = y.len();
        rhs.eval(y, &mut self.k[0]);
        for s in 1..7 {
            let (done, rest) = self.k.split_at_mut(s);
            for i in 0..len {
                let mut acc = y[i];
                for (r, coef) in A[s][..s].iter().enumerate() {
                    if *coef != 0.0 {
                        acc += done[r][i] * (h * coef);
                    }
                }
                self.tmp[i] = acc;
            }
            rhs.eval(&self.tmp, &mut rest[0]);
        }
        let mut err: f64 = 0.0;
        for i in 0..len {
            let mut hi = Complex64::new(0.0, 0.0);
            let mut lo = Complex64::new(0.0, 0.0);
            for s in 0..7 {
                hi += self.k[s][i] * B5[s];
                lo += self.k[s][i] * B4[s];
            }
            let new = y[i] + hi * h;
            let scale = self.atol + self.rtol * y[i].norm().max(new.norm());
            err = err.max(((hi - lo) * h).norm() / scale);
            self.tmp[i] = new;
        }
        if err <= 1.0 {
            y.copy_from_slice(&self.tmp);
        }
        err
    }
}

/// Integrate the nonlinear equations of motion at fixed laser detuning.
///
/// Each step of length `dt` is taken with an embedded Dormand–Prince 5(4)
/// pair and subdivided adaptively when the local error demands it.
pub fn integrate(
    model: &SystemModel,
    drive: &DriveConfig,
    z_dis: f64,
    initial: &InitialState,
    schedule: &Schedule,
) -> Result<Trajectory, OracleError> {
    model.validate()?;
    drive.validate()?;
    let bound = max_step(model, drive, z_dis)?;
    let Schedule {
        duration,
        dt,
        sample_every,
    } = *schedule;
    if !(dt > 0.0 && dt <= bound * (1.0 + 1e-12)) {
        return Err(OracleError::Config(format!("dt = {dt:e} s exceeds the bound {bound:e} s")));
    }
    if !(duration > 0.0 && duration.is_finite()) || sample_every == 0 {
        return Err(OracleError::Config("duration and sampling must be positive".into()));
    }
    let steps = (duration / dt).round() as u64;
    if steps == 0 || steps > 2_000_000_000 {
        return Err(OracleError::Config(format!("{steps} steps requested")));
    }
    let n = model.n_modes();
    let cav = Cavity::new(model, z_dis)?;
    let a_in = Complex64::new(drive.input_amplitude(), 0.0);
    let steady = cav.steady_state(drive.detuning, a_in)?;
    let g = model.g_mech();
    let f0: f64 = (0..n).map(|k| g[k] * steady[k].norm_sqr()).sum();
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = I * cav.omega_c[(i, j)];
        }
        a[i * n + i] += Complex64::new(0.5 * cav.kappa[i], -drive.detuning);
    }
    let rhs = Rhs {
        n,
        a,
        drive: cav.sqrt_kappa_in.iter().map(|v| v * a_in).collect(),
        g,
        f0,
        half_gamma: 0.5 * model.mech.gamma_m,
        omega_m: model.mech.omega_m,
    };
    let mut y: Vec<Complex64> = match &initial.optical {
        Some(o) if o.len() == n => o.clone(),
        Some(o) => {
            return Err(OracleError::Config(format!("{} optical amplitudes for {n} modes", o.len())));
        }
        None => steady.iter().copied().collect(),
    };
    y.push(initial.c0);
    if y.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(OracleError::Config("non-finite initial state".into()));
    }
    let size = y.iter().map(|v| v.norm()).fold(0.0, f64::max).max(a_in.norm()).max(1.0);
    let limit = 1e6 * size;
    let c_limit = GROWTH_LIMIT * initial.c0.norm().max(1.0);
    let mut st = Stepper::new(n + 1, 1e-13 * size);

    let samples = (steps / sample_every as u64 + 1) as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(samples),
        optical_amps: Vec::with_capacity(samples),
        mech_amp: Vec::with_capacity(samples),
    };
    let record = |traj: &mut Trajectory, t: f64, y: &[Complex64]| {
        traj.times.push(t);
        traj.optical_amps.push(y[..n].to_vec());
        traj.mech_amp.push(y[n]);
    };
    record(&mut traj, 0.0, &y);
    let mut h = dt;
    for step in 1..=steps {
        let mut left = dt;
        while left > 0.0 {
            let trial = h.min(left);
            let err = st.try_step(&rhs, &mut y, trial);
            if err <= 1.0 {
                left -= trial;
                if left < 1e-12 * dt {
                    left = 0.0;
                }
                h = (trial * (0.9 * err.max(1e-10).powf(-0.2)).min(5.0)).min(dt);
            } else if err.is_finite() {
                h = trial * (0.9 * err.powf(-0.2)).max(0.1);
                if h < 1e-9 * dt {
                    return Err(OracleError::Unstable {
                        time: step as f64 * dt - left,
                        amplitude: y[n].norm(),
                    });
                }
            } else {
                return Err(OracleError::Unstable {
                    time: step as f64 * dt - left,
                    amplitude: f64::INFINITY,
                });
            }
        }
        let amp = y[n].norm();
        if !(amp <= c_limit) || y[..n].iter().any(|v| !(v.norm() <= limit)) {
            return Err(OracleError::Unstable {
                time: step as f64 * dt,
                amplitude: amp,
            });
        }
        if step % sample_every as u64 == 0 {
            record(&mut traj, step as f64 * dt, &y);
        }
    }
    Ok(traj)
}

/// Reflected-to-incident amplitude ratio from the optical state: (a_in − √κ_in·ā)/a_in.
pub fn reflection_from_state(model: &SystemModel, drive: &DriveConfig, optical: &[Complex64]) -> Option<Complex64> {
    let a_in = drive.input_amplitude();
    if a_in == 0.0 || optical.len() != model.n_modes() {
        return None;
    }
    let out: Complex64 = model.modes.iter().zip(optical).map(|(m, a)| a * m.kappa_in.sqrt()).sum();
    Some(Complex64::new(1.0, 0.0) - out / a_in)
}

/// Steady state as a plain vector, for callers building an [`InitialState`].
pub fn steady_optical(model: &SystemModel, drive: &DriveConfig, z_dis: f64) -> Result<Vec<Complex64>, OracleError> {
    let s: DVector<Complex64> = crate::model::steady_state(model, drive, z_dis)?;
    Ok(s.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reflection;
    use crate::presets;
    use crate::units::mhz;

    #[test]
    fn bare_oscillator_decays_and_rotates() {
        let m = presets::three_mode();
        let d = presets::drive(0.0, 0.0);
        let dt = max_step(&m, &d, 0.0).unwrap();
        let period = crate::units::TWO_PI / m.mech.omega_m;
        let steps = (20.0 * period / dt).round();
        let s = Schedule { duration: steps * dt, dt, sample_every: 100 };
        let c0 = Complex64::new(100.0, 0.0);
        let tr = integrate(&m, &d, 0.0, &InitialState::steady(c0), &s).unwrap();
        let (g, w) = (m.mech.gamma_m, m.mech.omega_m);
        for (t, c) in tr.times.iter().zip(&tr.mech_amp) {
            let exact = c0 * Complex64::new(-0.5 * g * t, -w * t).exp();
            // energy |c|² per mechanical period to 1e-8
            assert!((c.norm_sqr() / exact.norm_sqr() - 1.0).abs() < 1e-8 * (1.0 + t / period));
            assert!((c - exact).norm() < 1e-6 * c0.norm());
        }
        let est = ringdown_estimate(&tr).unwrap();
        assert!((est.omega / w - 1.0).abs() < 1e-6);
        assert!((est.gamma / g - 1.0).abs() < 1e-3);
    }

    #[test]
    fn linear_cavity_relaxes_to_steady_state() {
        let mut m = presets::three_mode();
        for mode in &mut m.modes {
            mode.slope_osc = 0.0;
        }
        for det in [mhz(-1.2), mhz(0.4), mhz(1.7)] {
            let d = presets::drive(det, 40.0);
            let dt = max_step(&m, &d, 0.0).unwrap();
            let kmin = m.modes.iter().map(|o| o.kappa).fold(f64::INFINITY, f64::min);
            let steps = (80.0 / kmin / dt).round();
            let zero = InitialState {
                c0: Complex64::new(0.0, 0.0),
                optical: Some(vec![Complex64::new(0.0, 0.0); 3]),
            };
            let tr = integrate(&m, &d, 0.0, &zero, &Schedule { duration: steps * dt, dt, sample_every: 1000 }).unwrap();
            let last = tr.optical_amps.last().unwrap();
            let ss = steady_optical(&m, &d, 0.0).unwrap();
            let norm = ss.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (a, b) in last.iter().zip(&ss) {
                assert!((a - b).norm() < 1e-8 * norm);
            }
            let r = reflection_from_state(&m, &d, last).unwrap().norm_sqr();
            assert!((r - reflection(&m, &d, 0.0).unwrap().power_ratio).abs() < 1e-8);
        }
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let m = presets::three_mode();
        let d = presets::drive(mhz(0.8), 80.0);
        let dt = max_step(&m, &d, 0.0).unwrap();
        let tr = integrate(
            &m,
            &d,
            0.0,
            &InitialState::steady(Complex64::new(0.0, 0.0)),
            &Schedule { duration: 2000.0 * dt, dt, sample_every: 500 },
        )
        .unwrap();
        assert!(tr.mech_amp.iter().all(|c| c.norm() < 1e-6));
    }

    #[test]
    fn step_bound_is_enforced() {
        let m = presets::three_mode();
        let d = presets::drive(0.0, 40.0);
        let dt = max_step(&m, &d, 0.0).unwrap();
        let s = Schedule { duration: 100.0 * dt, dt: 2.0 * dt, sample_every: 1 };
        assert!(matches!(
            integrate(&m, &d, 0.0, &InitialState::steady(Complex64::new(1.0, 0.0)), &s),
            Err(OracleError::Config(_))
        ));
    }

    #[test]
    fn runaway_amplitude_is_reported() {
        let m = presets::single_mode();
        let probe = presets::drive(0.0, 80.0);
        let dets: Vec<f64> = (0..81).map(|k| mhz(-2.0 + 0.05 * k as f64)).collect();
        let sweep = crate::dynamics::spring_damping_sweep(&m, &probe, 0.0, &dets).unwrap();
        let (k, worst) = sweep
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.delta_gamma.total_cmp(&b.1.delta_gamma))
            .unwrap();
        assert!(worst.delta_gamma < 0.0);
        // scale the power so that δγ ≈ −2·10⁴ s⁻¹
        let power = 80.0 * 2e4 / worst.delta_gamma.abs();
        let d = presets::drive(dets[k], power);
        let dt = max_step(&m, &d, 0.0).unwrap();
        let s = Schedule { duration: 2e-3, dt, sample_every: 1000 };
        match integrate(&m, &d, 0.0, &InitialState::steady(Complex64::new(1.0, 0.0)), &s) {
            Err(OracleError::Unstable { time, amplitude }) => {
                assert!(amplitude > GROWTH_LIMIT);
                // e-folding of |c| at −δγ/2 ≈ 10⁴ s⁻¹
                assert!(time > 0.3e-3 && time < 1.5e-3, "{time}");
            }
            other => panic!("{other:?}"),
        }
    }
}
