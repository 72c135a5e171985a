//! Least-squares fit of measured spring and damping curves.

use super::lsq::{least_squares, LsqOptions, Problem};
use super::{FitError, FitWarning};
use crate::dynamics::spring_damping_sweep;
use crate::model::{DriveConfig, ModelError, SystemModel};
use crate::units::{mhz_per_nm, to_mhz_per_nm, NM};

/// One measured point; uncertainties are optional and in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsPoint {
    pub detuning: f64,
    pub delta_omega: f64,
    pub delta_gamma: f64,
    pub omega_err: Option<f64>,
    pub gamma_err: Option<f64>,
}

impl DynamicsPoint {
    pub fn new(detuning: f64, delta_omega: f64, delta_gamma: f64) -> Self {
        Self {
            detuning,
            delta_omega,
            delta_gamma,
            omega_err: None,
            gamma_err: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FreeParam {
    /// ω'_osc of the labelled mode.
    SlopeOsc(String),
    ZDis,
    PowerIn,
}

impl std::fmt::Display for FreeParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FreeParam::SlopeOsc(l) => write!(f, "slope_osc[{l}]"),
            FreeParam::ZDis => f.write_str("z_dis"),
            FreeParam::PowerIn => f.write_str("power_in"),
        }
    }
}

/// Fitted value and one-sigma error in SI units (rad/s per m, m, W).
#[derive(Debug, Clone, PartialEq)]
pub struct FittedValue {
    pub param: FreeParam,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct DynamicsFit {
    pub values: Vec<FittedValue>,
    pub model: SystemModel,
    pub drive: DriveConfig,
    pub z_dis: f64,
    /// Weighted residual sum of squares.
    pub rss: f64,
    pub iterations: usize,
    pub warnings: Vec<FitWarning>,
}

impl DynamicsFit {
    pub fn get(&self, p: &FreeParam) -> Option<&FittedValue> {
        self.values.iter().find(|v| &v.param == p)
    }
}

struct Setup<'a> {
    model: &'a SystemModel,
    drive: &'a DriveConfig,
    z_dis: f64,
    free: &'a [FreeParam],
    slots: Vec<Option<usize>>,
}

impl Setup<'_> {
    /// Optimizer coordinates are MHz/nm, nm and μW.
    fn apply(&self, x: &[f64]) -> (SystemModel, DriveConfig, f64) {
        let mut m = self.model.clone();
        let mut d = self.drive.clone();
        let mut z = self.z_dis;
        for (k, p) in self.free.iter().enumerate() {
            match p {
                FreeParam::SlopeOsc(_) => m.modes[self.slots[k].unwrap()].slope_osc = mhz_per_nm(x[k]),
                FreeParam::ZDis => z = x[k] * NM,
                FreeParam::PowerIn => d.power_in = x[k] * 1e-6,
            }
        }
        (m, d, z)
    }

    fn start(&self) -> Vec<f64> {
        self.free
            .iter()
            .enumerate()
            .map(|(k, p)| match p {
                FreeParam::SlopeOsc(_) => to_mhz_per_nm(self.model.modes[self.slots[k].unwrap()].slope_osc),
                FreeParam::ZDis => self.z_dis / NM,
                FreeParam::PowerIn => self.drive.power_in * 1e6,
            })
            .collect()
    }

    fn to_si(&self, k: usize, v: f64) -> f64 {
        match self.free[k] {
            FreeParam::SlopeOsc(_) => mhz_per_nm(v),
            FreeParam::ZDis => v * NM,
            FreeParam::PowerIn => v * 1e-6,
        }
    }
}

fn weights(values: &[f64], errs: &[Option<f64>]) -> Vec<f64> {
    if errs.iter().all(|e| matches!(e, Some(s) if *s > 0.0)) {
        return errs.iter().map(|e| 1.0 / e.unwrap()).collect();
    }
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt();
    vec![if rms > 0.0 { 1.0 / rms } else { 1.0 }; values.len()]
}

/// Fit the chosen free parameters so that Σ[ω_m] reproduces the measured δω and δγ.
///
/// Both series enter one residual vector, weighted by inverse uncertainties
/// when every point of a series has one, otherwise normalized to unit RMS.
pub fn fit_dynamics(
    measured: &[DynamicsPoint],
    model: &SystemModel,
    drive: &DriveConfig,
    z_dis: f64,
    free: &[FreeParam],
) -> Result<DynamicsFit, FitError> {
    if free.is_empty() {
        return Err(FitError::InvalidInput("no free parameters".into()));
    }
    for (k, p) in free.iter().enumerate() {
        if free[..k].contains(p) {
            return Err(FitError::InvalidInput(format!("{p} listed twice")));
        }
    }
    if measured.len() < free.len() {
        return Err(FitError::InsufficientData(format!(
            "{} points for {} free parameters",
            measured.len(),
            free.len()
        )));
    }
    model.validate()?;
    drive.validate()?;
    let slots = free
        .iter()
        .map(|p| match p {
            FreeParam::SlopeOsc(l) => model
                .mode_index(l)
                .map(Some)
                .ok_or_else(|| FitError::Model(ModelError::UnknownLabel(l.clone()))),
            _ => Ok(None),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut pts = measured.to_vec();
    pts.sort_by(|a, b| a.detuning.total_cmp(&b.detuning));
    let dets: Vec<f64> = pts.iter().map(|p| p.detuning).collect();
    let w_om = weights(
        &pts.iter().map(|p| p.delta_omega).collect::<Vec<_>>(),
        &pts.iter().map(|p| p.omega_err).collect::<Vec<_>>(),
    );
    let w_ga = weights(
        &pts.iter().map(|p| p.delta_gamma).collect::<Vec<_>>(),
        &pts.iter().map(|p| p.gamma_err).collect::<Vec<_>>(),
    );
    let setup = Setup {
        model,
        drive,
        z_dis,
        free,
        slots,
    };
    let residual = |x: &[f64]| -> Vec<f64> {
        let (m, d, z) = setup.apply(x);
        match spring_damping_sweep(&m, &d, z, &dets) {
            Ok(r) => {
                let mut out = Vec::with_capacity(2 * r.len());
                for (k, s) in r.iter().enumerate() {
                    out.push((s.delta_omega - pts[k].delta_omega) * w_om[k]);
                    out.push((s.delta_gamma - pts[k].delta_gamma) * w_ga[k]);
                }
                out
            }
            Err(_) => vec![f64::INFINITY; 2 * pts.len()],
        }
    };
    let x0 = setup.start();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut scale = Vec::new();
    for (k, p) in free.iter().enumerate() {
        match p {
            FreeParam::SlopeOsc(_) => {
                lower.push(-100.0);
                upper.push(100.0);
                scale.push(x0[k].abs().max(0.1));
            }
            FreeParam::ZDis => {
                lower.push(x0[k] - 50.0);
                upper.push(x0[k] + 50.0);
                scale.push(0.1);
            }
            FreeParam::PowerIn => {
                lower.push(0.0);
                upper.push(100.0 * x0[k] + 1000.0);
                scale.push(x0[k].max(1.0));
            }
        }
    }
    let fit = least_squares(
        &Problem {
            residual: &residual,
            x0,
            lower,
            upper,
            scale,
        },
        &LsqOptions {
            max_iterations: 200,
            ftol: 1e-15,
            xtol: 1e-13,
            gtol: 1e-15,
        },
    )?;
    let errs = fit.std_errors();
    let mut warnings: Vec<FitWarning> = fit.at_bound.iter().map(|&k| FitWarning::AtBound(free[k].to_string())).collect();
    if fit.covariance.is_none() {
        warnings.push(FitWarning::SingularCovariance);
    }
    let (m, d, z) = setup.apply(&fit.x);
    Ok(DynamicsFit {
        values: free
            .iter()
            .enumerate()
            .map(|(k, p)| FittedValue {
                param: p.clone(),
                value: setup.to_si(k, fit.x[k]),
                error: setup.to_si(k, errs[k]).abs(),
            })
            .collect(),
        model: m,
        drive: d,
        z_dis: z,
        rss: fit.rss,
        iterations: fit.iterations,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::units::{mhz, nm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn synth(model: &SystemModel, drive: &DriveConfig, z: f64, n: usize) -> Vec<DynamicsPoint> {
        let dets: Vec<f64> = (0..n).map(|k| mhz(-4.0 + 8.0 * k as f64 / (n - 1) as f64)).collect();
        spring_damping_sweep(model, drive, z, &dets)
            .unwrap()
            .iter()
            .zip(&dets)
            .map(|(r, &d)| DynamicsPoint::new(d, r.delta_omega, r.delta_gamma))
            .collect()
    }

    #[test]
    fn recovers_z_exactly_from_own_curves() {
        let m = presets::three_mode();
        let d = presets::drive(0.0, 40.0);
        let data = synth(&m, &d, nm(0.32), 41);
        let fit = fit_dynamics(&data, &m, &d, nm(0.1), &[FreeParam::ZDis]).unwrap();
        assert!((fit.z_dis - nm(0.32)).abs() < 1e-9 * NM, "{}", fit.z_dis / NM);
    }

    #[test]
    fn residual_vanishes_at_truth() {
        let m = presets::three_mode();
        let d = presets::drive(0.0, 40.0);
        let data = synth(&m, &d, nm(0.32), 41);
        let fit = fit_dynamics(&data, &m, &d, nm(0.32), &[FreeParam::ZDis, FreeParam::PowerIn]).unwrap();
        // each series is normalized to unit RMS, so the signal norm² is 2n
        assert!(fit.rss.sqrt() < 1e-9 * (2.0 * data.len() as f64).sqrt());
    }

    #[test]
    fn slope_round_trip_with_noise() {
        let truth = presets::crossing_i();
        let d = presets::drive(0.0, 80.0);
        let z = 0.0;
        let clean = synth(&truth, &d, z, 61);
        let mut start = truth.clone();
        start.modes[0].slope_osc *= 0.8;
        start.modes[1].slope_osc *= 1.3;
        let free = [FreeParam::SlopeOsc("L".into()), FreeParam::SlopeOsc("R1".into())];
        for seed in 0..20 {
            // 5% relative noise on every value
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.05).unwrap();
            let data: Vec<DynamicsPoint> = clean
                .iter()
                .map(|p| {
                    DynamicsPoint::new(
                        p.detuning,
                        p.delta_omega * (1.0 + noise.sample(&mut rng)),
                        p.delta_gamma * (1.0 + noise.sample(&mut rng)),
                    )
                })
                .collect();
            let fit = fit_dynamics(&data, &start, &d, z, &free).unwrap();
            for (k, idx) in [(0usize, 0usize), (1, 1)] {
                let t = truth.modes[idx].slope_osc;
                assert!((fit.values[k].value / t - 1.0).abs() < 0.05, "seed {seed}: {:?}", fit.values[k]);
            }
        }
    }

    #[test]
    fn z_and_power_protocol() {
        let truth = presets::three_mode();
        let d_true = presets::drive(0.0, 40.0);
        let clean = synth(&truth, &d_true, nm(0.32), 41);
        let scale = clean.iter().map(|p| p.delta_omega.abs()).fold(0.0, f64::max);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.03 * scale).unwrap();
        let data: Vec<DynamicsPoint> = clean
            .iter()
            .map(|p| DynamicsPoint {
                omega_err: Some(0.03 * scale),
                gamma_err: Some(0.03 * scale),
                ..DynamicsPoint::new(p.detuning, p.delta_omega + noise.sample(&mut rng), p.delta_gamma + noise.sample(&mut rng))
            })
            .collect();
        let fit = fit_dynamics(&data, &truth, &presets::drive(0.0, 30.0), nm(0.1), &[FreeParam::ZDis, FreeParam::PowerIn]).unwrap();
        let z = fit.get(&FreeParam::ZDis).unwrap();
        assert!(z.error > 0.0 && (z.value - nm(0.32)).abs() < 3.0 * z.error, "{z:?}");
        let p = fit.get(&FreeParam::PowerIn).unwrap();
        assert!((p.value - 40e-6).abs() < 3.0 * p.error, "{p:?}");
    }

    #[test]
    fn invalid_requests() {
        let m = presets::three_mode();
        let d = presets::drive(0.0, 40.0);
        let data = synth(&m, &d, 0.0, 5);
        assert!(matches!(fit_dynamics(&data, &m, &d, 0.0, &[]), Err(FitError::InvalidInput(_))));
        assert!(matches!(
            fit_dynamics(&data, &m, &d, 0.0, &[FreeParam::SlopeOsc("X".into())]),
            Err(FitError::Model(ModelError::UnknownLabel(_)))
        ));
        assert!(matches!(
            fit_dynamics(&data, &m, &d, 0.0, &[FreeParam::ZDis, FreeParam::ZDis]),
            Err(FitError::InvalidInput(_))
        ));
    }
}
