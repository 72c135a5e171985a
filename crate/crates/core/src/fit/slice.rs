//! Fits of one reflection slice: inverted Lorentzian dips on a baseline that
//! is either constant or sinusoidal.

use super::lsq::{least_squares, LsqOptions, LsqResult, Problem};
use super::{FitError, FitWarning};
use crate::units::TWO_PI;

/// One inverted Lorentzian, `depth·(w/2)² / ((Δ − center)² + (w/2)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    pub center: f64,
    pub fwhm: f64,
    pub depth: f64,
}

impl Dip {
    pub fn profile(&self, x: f64) -> f64 {
        let hw = 0.5 * self.fwhm;
        self.depth * hw * hw / ((x - self.center).powi(2) + hw * hw)
    }

    /// Input coupling implied by this dip on an undercoupled port.
    pub fn kappa_in(&self) -> f64 {
        kappa_in_from_depth(self.depth, self.fwhm)
    }
}

/// `offset + amplitude·sin(2πΔ/period + phase)`; `amplitude = 0` for a constant baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Background {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub offset: f64,
}

impl Background {
    pub fn at(&self, x: f64) -> f64 {
        self.offset + self.amplitude * (TWO_PI * x / self.period + self.phase).sin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceFitResult {
    /// Sorted by center.
    pub dips: Vec<Dip>,
    /// One-sigma uncertainties of `dips`, same order.
    pub dip_errors: Vec<Dip>,
    pub background: Background,
    /// Root-mean-square residual.
    pub rms_residual: f64,
    pub warnings: Vec<FitWarning>,
}

impl SliceFitResult {
    pub fn model(&self, x: f64) -> f64 {
        self.background.at(x) * (1.0 - self.dips.iter().map(|d| d.profile(x)).sum::<f64>())
    }
}

/// Dip depth 1 − (1 − 2κ_in/κ)² of a single resonance on a one-port cavity.
pub fn depth_from_kappa_in(kappa_in: f64, kappa: f64) -> f64 {
    1.0 - (1.0 - 2.0 * kappa_in / kappa).powi(2)
}

/// Undercoupled inverse of [`depth_from_kappa_in`]: κ_in = κ(1 − √(1 − depth))/2.
pub fn kappa_in_from_depth(depth: f64, kappa: f64) -> f64 {
    0.5 * kappa * (1.0 - (1.0 - depth.clamp(0.0, 1.0)).sqrt())
}

fn moving_average(y: &[f64], w: usize) -> Vec<f64> {
    let h = w / 2;
    (0..y.len())
        .map(|i| {
            let (a, b) = (i.saturating_sub(h), (i + h + 1).min(y.len()));
            y[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Robust white-noise level from first differences.
fn noise_level(y: &[f64]) -> f64 {
    if y.len() < 3 {
        return 0.0;
    }
    let mut d: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let med = median(&mut d.clone());
    let mut dev: Vec<f64> = d.iter_mut().map(|v| (*v - med).abs()).collect();
    median(&mut dev) / (0.674_489_75 * std::f64::consts::SQRT_2)
}

struct Candidate {
    index: usize,
    prominence: f64,
}

/// Local minima of `s` ranked by prominence.
fn minima(s: &[f64]) -> Vec<Candidate> {
    let n = s.len();
    let mut out = Vec::new();
    for i in 1..n - 1 {
        if !(s[i] <= s[i - 1] && s[i] < s[i + 1]) {
            continue;
        }
        let side = |range: &mut dyn Iterator<Item = usize>| {
            let mut hi = s[i];
            for k in range {
                if s[k] < s[i] {
                    break;
                }
                hi = hi.max(s[k]);
            }
            hi
        };
        let left = side(&mut (0..i).rev());
        let right = side(&mut (i + 1..n));
        out.push(Candidate {
            index: i,
            prominence: left.min(right) - s[i],
        });
    }
    out.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
    out
}

struct Layout {
    sinusoid: bool,
    n: usize,
}

impl Layout {
    fn dip_base(&self) -> usize {
        if self.sinusoid {
            4
        } else {
            1
        }
    }

    fn background(&self, p: &[f64]) -> Background {
        if self.sinusoid {
            Background {
                offset: p[0],
                amplitude: p[1],
                period: p[2],
                phase: p[3],
            }
        } else {
            Background {
                offset: p[0],
                amplitude: 0.0,
                period: 1.0,
                phase: 0.0,
            }
        }
    }

    fn dips(&self, p: &[f64]) -> Vec<Dip> {
        let b = self.dip_base();
        (0..self.n)
            .map(|k| Dip {
                center: p[b + 3 * k],
                fwhm: p[b + 3 * k + 1],
                depth: p[b + 3 * k + 2],
            })
            .collect()
    }

    fn eval(&self, p: &[f64], x: f64) -> f64 {
        let bg = self.background(p);
        let b = self.dip_base();
        let mut dip = 0.0;
        for k in 0..self.n {
            let (c, w, d) = (p[b + 3 * k], p[b + 3 * k + 1], p[b + 3 * k + 2]);
            let hw = 0.5 * w;
            dip += d * hw * hw / ((x - c).powi(2) + hw * hw);
        }
        bg.at(x) * (1.0 - dip)
    }
}

fn run(
    x: &[f64],
    y: &[f64],
    layout: &Layout,
    x0: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    scale: Vec<f64>,
) -> Result<LsqResult, FitError> {
    let f = |p: &[f64]| x.iter().zip(y).map(|(&xi, &yi)| layout.eval(p, xi) - yi).collect();
    least_squares(
        &Problem {
            residual: &f,
            x0,
            lower,
            upper,
            scale,
        },
        &LsqOptions::default(),
    )
}

/// Best sinusoid `a0 + a1 sin(2πx/P) + a2 cos(2πx/P)` over a log-spaced period scan.
fn periodogram(x: &[f64], r: &[f64], p_min: f64, p_max: f64) -> Option<(f64, f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64, f64, f64)> = None;
    let steps = 400;
    for k in 0..=steps {
        let period = p_min * (p_max / p_min).powf(k as f64 / steps as f64);
        let mut ata = nalgebra::Matrix3::<f64>::zeros();
        let mut atb = nalgebra::Vector3::<f64>::zeros();
        for (&xi, &ri) in x.iter().zip(r) {
            let ph = TWO_PI * xi / period;
            let row = nalgebra::Vector3::new(1.0, ph.sin(), ph.cos());
            ata += row * row.transpose();
            atb += row * ri;
        }
        let Some(sol) = ata.try_inverse().map(|inv| inv * atb) else {
            continue;
        };
        let rss: f64 = x
            .iter()
            .zip(r)
            .map(|(&xi, &ri)| {
                let ph = TWO_PI * xi / period;
                (ri - sol[0] - sol[1] * ph.sin() - sol[2] * ph.cos()).powi(2)
            })
            .sum();
        if best.is_none_or(|b| rss < b.0) {
            best = Some((rss, period, sol[0], sol[1], sol[2]));
        }
    }
    best.map(|(_, period, c, s, co)| (period, c, s.hypot(co), co.atan2(s)))
}

fn overlap_warnings(dips: &[Dip]) -> Vec<FitWarning> {
    let mut out = Vec::new();
    for i in 0..dips.len() {
        for j in i + 1..dips.len() {
            if (dips[j].center - dips[i].center).abs() < 0.25 * dips[i].fwhm.min(dips[j].fwhm) {
                out.push(FitWarning::UnresolvedPeaks { first: i, second: j });
            }
        }
    }
    out
}

/// Fit `n_peaks` inverted Lorentzians on a constant or sinusoidal baseline.
///
/// Initial centers are the most prominent local minima of the row smoothed
/// with a 5-sample moving average. A sinusoidal baseline is tried only when
/// the constant-baseline residual exceeds the noise level of the row.
pub fn fit_slice(detunings: &[f64], row: &[f64], n_peaks: usize) -> Result<SliceFitResult, FitError> {
    if !(1..=3).contains(&n_peaks) {
        return Err(FitError::InvalidInput(format!("n_peaks must be 1, 2 or 3, got {n_peaks}")));
    }
    if detunings.len() != row.len() {
        return Err(FitError::InvalidInput("detunings and row differ in length".into()));
    }
    if row.len() < 8 * n_peaks {
        return Err(FitError::InvalidInput(format!(
            "row has {} samples, need at least {}",
            row.len(),
            8 * n_peaks
        )));
    }
    if detunings.iter().chain(row).any(|v| !v.is_finite()) {
        return Err(FitError::InvalidInput("non-finite sample".into()));
    }
    if detunings.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FitError::InvalidInput("detunings must be strictly increasing".into()));
    }
    let x = detunings;
    let n = x.len();
    let span = x[n - 1] - x[0];
    let dx = span / (n - 1) as f64;
    let sigma = noise_level(row);
    let smooth = moving_average(row, 5);
    let base = median(&mut row.to_vec());
    let threshold = (4.0 * sigma).max(1e-3 * base.abs()).max(1e-12);

    let found: Vec<Candidate> = minima(&smooth).into_iter().filter(|c| c.prominence > threshold).collect();
    if found.is_empty() {
        return Err(FitError::NoDips);
    }
    if found.len() < n_peaks {
        return Err(FitError::TooFewDips {
            found: found.len(),
            requested: n_peaks,
        });
    }
    let mut init: Vec<Dip> = found[..n_peaks]
        .iter()
        .map(|c| {
            let level = smooth[c.index] + 0.5 * c.prominence;
            let mut l = c.index;
            while l > 0 && smooth[l] < level {
                l -= 1;
            }
            let mut r = c.index;
            while r < n - 1 && smooth[r] < level {
                r += 1;
            }
            Dip {
                center: x[c.index],
                fwhm: ((r - l) as f64 * dx).max(2.0 * dx),
                depth: (c.prominence / base.abs().max(1e-12)).clamp(0.01, 0.99),
            }
        })
        .collect();
    init.sort_by(|a, b| a.center.total_cmp(&b.center));

    let mut dip_x0 = Vec::new();
    let mut dip_lo = Vec::new();
    let mut dip_hi = Vec::new();
    let mut dip_scale = Vec::new();
    for d in &init {
        dip_x0.extend([d.center, d.fwhm, d.depth]);
        dip_lo.extend([x[0], 0.5 * dx, 0.0]);
        dip_hi.extend([x[n - 1], span, 1.0]);
        dip_scale.extend([d.fwhm, d.fwhm, 0.1]);
    }
    let off_hi = 10.0 * base.abs() + 1.0;

    let constant = Layout {
        sinusoid: false,
        n: n_peaks,
    };
    let c_fit = run(
        x,
        row,
        &constant,
        [vec![base], dip_x0.clone()].concat(),
        [vec![0.0], dip_lo.clone()].concat(),
        [vec![off_hi], dip_hi.clone()].concat(),
        [vec![base.abs().max(1e-12)], dip_scale.clone()].concat(),
    )?;
    let c_rms = (c_fit.rss / n as f64).sqrt();

    let mut chosen = (constant, c_fit);
    if c_rms > 1.5 * sigma + 1e-9 * base.abs() {
        let widest = init.iter().map(|d| d.fwhm).fold(0.0, f64::max);
        let p_min = (6.0 * widest).max(10.0 * dx).min(span);
        let p_max = 2.0 * span;
        let resid: Vec<f64> = x
            .iter()
            .zip(row)
            .map(|(&xi, &yi)| {
                let dipf = 1.0 - chosen.0.dips(&chosen.1.x).iter().map(|d| d.profile(xi)).sum::<f64>();
                (yi - chosen.0.eval(&chosen.1.x, xi)) / dipf.max(0.05)
            })
            .collect();
        if let Some((period, _, amp, phase)) = periodogram(x, &resid, p_min, p_max) {
            let sin_layout = Layout {
                sinusoid: true,
                n: n_peaks,
            };
            let off = chosen.1.x[0];
            let mut x0 = vec![off, amp.min(off), period, phase];
            x0.extend_from_slice(&chosen.1.x[1..]);
            let s_fit = run(
                x,
                row,
                &sin_layout,
                x0,
                [vec![0.0, 0.0, 0.5 * p_min, -4.0 * std::f64::consts::PI], dip_lo.clone()].concat(),
                [vec![off_hi, off_hi, 4.0 * span, 4.0 * std::f64::consts::PI], dip_hi.clone()].concat(),
                [vec![base.abs().max(1e-12), 0.1 * base.abs().max(1e-12), period, 1.0], dip_scale.clone()].concat(),
            );
            if let Ok(s_fit) = s_fit {
                if s_fit.rss < 0.9 * chosen.1.rss {
                    chosen = (sin_layout, s_fit);
                }
            }
        }
    }

    let (layout, fit) = chosen;
    let errs = fit.std_errors();
    let mut background = layout.background(&fit.x);
    if layout.sinusoid {
        background.phase = background.phase.rem_euclid(TWO_PI);
    }
    let mut pairs: Vec<(Dip, Dip)> = layout.dips(&fit.x).into_iter().zip(layout.dips(&errs)).collect();
    pairs.sort_by(|a, b| a.0.center.total_cmp(&b.0.center));
    let (dips, dip_errors): (Vec<Dip>, Vec<Dip>) = pairs.into_iter().unzip();

    let mut warnings = overlap_warnings(&dips);
    if fit.covariance.is_none() {
        warnings.push(FitWarning::SingularCovariance);
    }
    let names: Vec<String> = {
        let mut v: Vec<String> = if layout.sinusoid {
            vec!["offset".into(), "amplitude".into(), "period".into(), "phase".into()]
        } else {
            vec!["offset".into()]
        };
        for k in 0..n_peaks {
            v.extend([format!("center[{k}]"), format!("fwhm[{k}]"), format!("depth[{k}]")]);
        }
        v
    };
    for &k in &fit.at_bound {
        if !(layout.sinusoid && k == 1) {
            warnings.push(FitWarning::AtBound(names[k].clone()));
        }
    }
    Ok(SliceFitResult {
        dips,
        dip_errors,
        background,
        rms_residual: (fit.rss / n as f64).sqrt(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reflection, OpticalMode, SystemModel};
    use crate::presets;
    use crate::units::{khz, mhz};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn single_mode_reflection_recovers_linewidth_and_coupling() {
        let m = SystemModel::new(vec![OpticalMode::new("L", mhz(1.0), khz(47.0))], vec![], presets::mechanics());
        let xs = axis(mhz(-6.0), mhz(6.0), 241);
        let row: Vec<f64> = xs
            .iter()
            .map(|&d| reflection(&m, &presets::drive(d, 80.0), 0.0).unwrap().power_ratio)
            .collect();
        let fit = fit_slice(&xs, &row, 1).unwrap();
        let d = fit.dips[0];
        assert!((d.fwhm / mhz(1.0) - 1.0).abs() < 1e-3, "{}", d.fwhm / mhz(1.0));
        assert!((d.kappa_in() / khz(47.0) - 1.0).abs() < 1e-3);
        assert!(d.center.abs() < 1e-3 * mhz(1.0));
        assert!((d.depth - 0.179).abs() < 1e-3);
        assert_eq!(fit.background.amplitude, 0.0);
    }

    #[test]
    fn flat_row_has_no_dips() {
        let xs = axis(-1.0, 1.0, 100);
        assert_eq!(fit_slice(&xs, &vec![1.0; 100], 1), Err(FitError::NoDips));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let row: Vec<f64> = xs.iter().map(|_| 1.0 + noise.sample(&mut rng)).collect();
        assert!(matches!(fit_slice(&xs, &row, 1), Err(FitError::NoDips | FitError::TooFewDips { .. })));
    }

    #[test]
    fn rejects_bad_shapes() {
        let xs = axis(-1.0, 1.0, 10);
        assert!(matches!(fit_slice(&xs, &[1.0; 10], 2), Err(FitError::InvalidInput(_))));
        assert!(matches!(fit_slice(&xs, &[1.0; 10], 4), Err(FitError::InvalidInput(_))));
        assert!(matches!(fit_slice(&xs, &[1.0; 9], 1), Err(FitError::InvalidInput(_))));
    }

    fn two_dips_on_sinusoid(seed: u64) -> (Vec<f64>, Vec<f64>, [Dip; 2]) {
        let truth = [
            Dip { center: -2.0, fwhm: 1.0, depth: 0.5 },
            Dip { center: 2.5, fwhm: 1.0, depth: 0.4 },
        ];
        let bg = Background { amplitude: 0.05, period: 7.0, phase: 0.4, offset: 1.0 };
        let xs = axis(-10.0, 10.0, 801);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let row = xs
            .iter()
            .map(|&x| bg.at(x) * (1.0 - truth.iter().map(|d| d.profile(x)).sum::<f64>()) + noise.sample(&mut rng))
            .collect();
        (xs, row, truth)
    }

    #[test]
    fn two_dips_on_sinusoid_monte_carlo() {
        for seed in 0..100 {
            let (xs, row, truth) = two_dips_on_sinusoid(seed);
            let fit = fit_slice(&xs, &row, 2).unwrap();
            for (d, t) in fit.dips.iter().zip(&truth) {
                assert!((d.center - t.center).abs() < 0.02 * t.fwhm, "seed {seed}: {d:?}");
                assert!((d.fwhm / t.fwhm - 1.0).abs() < 0.05, "seed {seed}: {d:?}");
            }
            assert!((fit.background.period - 7.0).abs() < 0.5, "seed {seed}: {:?}", fit.background);
        }
    }

    #[test]
    fn close_centers_warn() {
        let a = Dip { center: -0.1, fwhm: 1.0, depth: 0.4 };
        let b = Dip { center: 0.1, fwhm: 1.0, depth: 0.4 };
        let c = Dip { center: 5.0, fwhm: 1.0, depth: 0.4 };
        assert_eq!(overlap_warnings(&[a, b, c]), vec![FitWarning::UnresolvedPeaks { first: 0, second: 1 }]);
        assert!(overlap_warnings(&[a, c]).is_empty());
    }

    proptest! {
        #[test]
        fn depth_inversion_composes_to_identity(frac in 1e-6f64..0.5, kappa in 0.1f64..10.0) {
            let d = depth_from_kappa_in(frac * kappa, kappa);
            prop_assert!((kappa_in_from_depth(d, kappa) / (frac * kappa) - 1.0).abs() < 1e-9);
        }
    }
}
