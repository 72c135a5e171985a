use super::{OracleError, Trajectory};
use crate::units::TWO_PI;

/// Free-decay frequency and energy damping rate with one-sigma errors, rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingdownEstimate {
    /// Magnitude of the phase slope of c(t).
    pub omega: f64,
    /// −2 × slope of log|c(t)|.
    pub gamma: f64,
    pub omega_err: f64,
    pub gamma_err: f64,
    /// Oscillation periods covered by the fit.
    pub periods: f64,
}

/// Slope and its standard error of an ordinary least-squares line.
fn slope(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - mt).powi(2)).sum();
    let sty: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let b = sty / stt;
    let rss: f64 = t.iter().zip(y).map(|(a, v)| (v - my - b * (a - mt)).powi(2)).sum();
    (b, (rss / (n - 2.0) / stt).sqrt())
}

/// Relative amplitude below which samples are treated as numerical noise.
const FLOOR: f64 = 1e-9;

/// Linear fits of the unwrapped phase and of log|c| over a free decay.
pub fn ringdown_estimate(traj: &Trajectory) -> Result<RingdownEstimate, OracleError> {
    let c = &traj.mech_amp;
    let peak = c.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(OracleError::InsufficientSignal("mechanical amplitude is zero".into()));
    }
    let end = c.iter().position(|v| v.norm() < FLOOR * peak).unwrap_or(c.len());
    if end < 3 {
        return Err(OracleError::InsufficientSignal(format!("only {end} samples above the floor")));
    }
    let t = &traj.times[..end];
    let mut phase = Vec::with_capacity(end);
    let mut prev = c[0].arg();
    let mut acc = prev;
    phase.push(acc);
    for v in &c[1..end] {
        let a = v.arg();
        let mut d = a - prev;
        d -= TWO_PI * (d / TWO_PI).round();
        acc += d;
        prev = a;
        phase.push(acc);
    }
    let periods = (phase[end - 1] - phase[0]).abs() / TWO_PI;
    if periods < 10.0 {
        return Err(OracleError::InsufficientSignal(format!(
            "{periods:.1} periods above the floor, need 10"
        )));
    }
    let logs: Vec<f64> = c[..end].iter().map(|v| v.norm().ln()).collect();
    let (w, w_err) = slope(t, &phase);
    let (l, l_err) = slope(t, &logs);
    Ok(RingdownEstimate {
        omega: w.abs(),
        gamma: -2.0 * l,
        omega_err: w_err,
        gamma_err: 2.0 * l_err,
        periods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const W: f64 = TWO_PI * 354.6e3;
    const G: f64 = W / 1e5;

    fn synthetic(duration: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Trajectory {
        let times: Vec<f64> = (0..n).map(|k| duration * k as f64 / (n - 1) as f64).collect();
        Trajectory {
            mech_amp: times.iter().map(|&t| f(t)).collect(),
            optical_amps: vec![vec![]; n],
            times,
        }
    }

    fn decay(t: f64) -> Complex64 {
        Complex64::new(-0.5 * G * t, W * t).exp()
    }

    #[test]
    fn exact_decay_is_recovered() {
        let est = ringdown_estimate(&synthetic(50e-3, 100_001, decay)).unwrap();
        assert!((est.omega / W - 1.0).abs() < 1e-10);
        assert!((est.gamma / G - 1.0).abs() < 1e-10);
    }

    #[test]
    fn noisy_decay_within_tolerance() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.01).unwrap();
            let mut tr = synthetic(50e-3, 100_001, decay);
            for v in &mut tr.mech_amp {
                *v += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
            }
            let est = ringdown_estimate(&tr).unwrap();
            assert!((est.omega / W - 1.0).abs() < 1e-5, "seed {seed}");
            assert!((est.gamma / G - 1.0).abs() < 0.02, "seed {seed}: {}", est.gamma / G);
        }
    }

    #[test]
    fn two_tone_contamination_bias_is_small() {
        let kappa = TWO_PI * 1e6;
        let tr = synthetic(2e-3, 16_001, |t| {
            decay(t) + 1e-3 * (Complex64::new(0.0, (W + kappa) * t).exp() + Complex64::new(0.0, (W - kappa) * t).exp())
        });
        let est = ringdown_estimate(&tr).unwrap();
        assert!((est.gamma - G).abs() < 0.1 * G, "{}", est.gamma / G);
        assert!((est.omega - W).abs() < 0.1 * G);
    }

    #[test]
    fn short_or_empty_signal_is_rejected() {
        let tr = synthetic(2.0 * TWO_PI / W, 101, decay);
        assert!(matches!(ringdown_estimate(&tr), Err(OracleError::InsufficientSignal(_))));
        let tr = synthetic(1e-3, 101, |_| Complex64::new(0.0, 0.0));
        assert!(matches!(ringdown_estimate(&tr), Err(OracleError::InsufficientSignal(_))));
        // collapses below the floor after a few periods
        let tr = synthetic(1e-3, 100_001, |t| Complex64::new(-5e7 * t, W * t).exp());
        assert!(matches!(ringdown_estimate(&tr), Err(OracleError::InsufficientSignal(_))));
    }
}
