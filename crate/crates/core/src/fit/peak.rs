use super::lsq::{least_squares, LsqOptions, Problem};
use super::FitError;

/// Positive Lorentzian `height·(w/2)² / ((ω − center)² + (w/2)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianPeak {
    pub center: f64,
    pub fwhm: f64,
    pub height: f64,
    pub center_err: f64,
    pub fwhm_err: f64,
}

impl LorentzianPeak {
    /// ∫ over ω of the profile.
    pub fn area(&self) -> f64 {
        0.5 * std::f64::consts::PI * self.height * self.fwhm
    }
}

/// Least-squares Lorentzian fit of a single spectral peak (e.g. a Brownian PSD).
pub fn fit_lorentzian_peak(x: &[f64], y: &[f64]) -> Result<LorentzianPeak, FitError> {
    if x.len() != y.len() || x.len() < 5 {
        return Err(FitError::InvalidInput("need at least 5 matching samples".into()));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) || x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput("abscissa must be finite and strictly increasing".into()));
    }
    let k = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap();
    let height = y[k];
    if !(height > 0.0) {
        return Err(FitError::NoDips);
    }
    let mut l = k;
    while l > 0 && y[l] > 0.5 * height {
        l -= 1;
    }
    let mut r = k;
    while r < y.len() - 1 && y[r] > 0.5 * height {
        r += 1;
    }
    let x_ref = x[k];
    let span = x[x.len() - 1] - x[0];
    let w0 = (x[r] - x[l]).max(span / x.len() as f64);
    let f = |p: &[f64]| {
        let hw = 0.5 * p[1];
        x.iter()
            .zip(y)
            .map(|(&xi, &yi)| (p[2] * hw * hw / ((xi - x_ref - p[0]).powi(2) + hw * hw) - yi) / height)
            .collect()
    };
    let fit = least_squares(
        &Problem {
            residual: &f,
            x0: vec![0.0, w0, height],
            lower: vec![x[0] - x_ref, 1e-6 * w0, 0.0],
            upper: vec![x[x.len() - 1] - x_ref, 10.0 * span, 10.0 * height],
            scale: vec![w0, w0, height],
        },
        &LsqOptions::default(),
    )?;
    let e = fit.std_errors();
    Ok(LorentzianPeak {
        center: x_ref + fit.x[0],
        fwhm: fit.x[1],
        height: fit.x[2],
        center_err: e[0],
        fwhm_err: e[1],
    })
}
