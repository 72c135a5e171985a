//! Linear drift of the mechanical frequency, estimated from detunings that
//! were measured twice (forward and backward sweep).

use super::FitError;

/// One mechanical-frequency reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSample {
    /// Laser detuning, any consistent unit.
    pub detuning: f64,
    /// Elapsed time, s.
    pub time: f64,
    /// Mechanical frequency, Hz.
    pub frequency: f64,
}

/// `Δf = rate·Δt + intercept` between repeated readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftModel {
    /// Hz per second.
    pub rate: f64,
    /// Hz.
    pub intercept: f64,
    /// One-sigma uncertainty of `rate`; NaN with exactly two pairs.
    pub rate_err: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftResult {
    /// Forward series with `rate·(t − t₀)` removed, t₀ the first forward time.
    pub corrected: Vec<DriftSample>,
    pub model: DriftModel,
}

fn same_detuning(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Fit the drift rate from shared detunings and remove it from the forward
/// series. The backward series only serves as the reference and is dropped.
pub fn drift_subtract(forward: &[DriftSample], backward: &[DriftSample]) -> Result<DriftResult, FitError> {
    if forward
        .iter()
        .chain(backward)
        .any(|s| !(s.detuning.is_finite() && s.time.is_finite() && s.frequency.is_finite()))
    {
        return Err(FitError::InvalidInput("non-finite drift sample".into()));
    }
    let mut dt = Vec::new();
    let mut df = Vec::new();
    for f in forward {
        if let Some(b) = backward.iter().find(|b| same_detuning(b.detuning, f.detuning)) {
            dt.push(b.time - f.time);
            df.push(b.frequency - f.frequency);
        }
    }
    let n = dt.len();
    if n < 2 {
        return Err(FitError::InsufficientData(format!(
            "drift fit needs at least 2 shared detunings, found {n}"
        )));
    }
    let nf = n as f64;
    let (mt, mf) = (dt.iter().sum::<f64>() / nf, df.iter().sum::<f64>() / nf);
    let stt: f64 = dt.iter().map(|t| (t - mt).powi(2)).sum();
    if !(stt > 0.0) {
        return Err(FitError::InsufficientData("shared detunings have identical time gaps".into()));
    }
    let stf: f64 = dt.iter().zip(&df).map(|(t, f)| (t - mt) * (f - mf)).sum();
    let rate = stf / stt;
    let intercept = mf - rate * mt;
    let rate_err = if n > 2 {
        let rss: f64 = dt.iter().zip(&df).map(|(t, f)| (f - intercept - rate * t).powi(2)).sum();
        (rss / (nf - 2.0) / stt).sqrt()
    } else {
        f64::NAN
    };
    let t0 = forward.first().map_or(0.0, |s| s.time);
    let corrected = forward
        .iter()
        .map(|s| DriftSample {
            frequency: s.frequency - rate * (s.time - t0),
            ..*s
        })
        .collect();
    Ok(DriftResult {
        corrected,
        model: DriftModel {
            rate,
            intercept,
            rate_err,
            pairs: n,
        },
    })
}

/// Split one recorded sweep into its forward and backward halves: the
/// backward run starts at the first row whose detuning was already visited.
pub fn split_sweep(samples: &[DriftSample]) -> (Vec<DriftSample>, Vec<DriftSample>) {
    let cut = (0..samples.len())
        .find(|&i| samples[..i].iter().any(|p| same_detuning(p.detuning, samples[i].detuning)))
        .unwrap_or(samples.len());
    (samples[..cut].to_vec(), samples[cut..].to_vec())
}
