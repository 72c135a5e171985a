//! Static cavity parameters from a reflection map.
//!
//! Stage one follows the slice-by-slice route: fit the dips of every z slice,
//! fit straight lines to the branch centers at both ends of the map, take t
//! from the narrowest branch separation (cross-checked against the vertex
//! curvature) and the coupling phase from the dip-depth ratio at the crossing.
//! Stage two refines all parameters together by fitting the model reflectance
//! to the map in windows around the branches; its covariance supplies the
//! reported uncertainties.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::lsq::{least_squares, LsqOptions, Problem};
use super::slice::{fit_slice, Dip};
use super::{FitError, FitWarning, SpectrumGrid};
use crate::model::{Cavity, CouplingTerm, MechanicalOscillator, OpticalMode, SystemModel};

/// Which modes exist and which pairs are coupled. Modes are indexed by
/// descending static slope (ties: descending value at the grid center).
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub n_modes: usize,
    pub crossings: Vec<(usize, usize)>,
}

impl Topology {
    pub fn two_mode() -> Self {
        Self {
            n_modes: 2,
            crossings: vec![(0, 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub value: f64,
    /// One-sigma statistical uncertainty; NaN when unavailable.
    pub error: f64,
}

impl Measured {
    fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeEstimate {
    pub kappa: Measured,
    pub kappa_in: Measured,
    pub slope_dis: Measured,
    /// Diagonal value at z = 0, rad/s.
    pub offset: Measured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingEstimate {
    pub pair: (usize, usize),
    pub t: Measured,
    pub phi: Measured,
    /// Half the narrowest measured branch separation.
    pub t_from_gap: f64,
    /// Δs²/(2·sep''), from a parabola through the separations near the vertex.
    pub t_from_curvature: f64,
    /// Crossing position of the fitted diagonal lines, m.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticParams {
    pub modes: Vec<ModeEstimate>,
    pub crossings: Vec<CrossingEstimate>,
    pub warnings: Vec<FitWarning>,
    /// Slices whose dip fit was accepted in stage one.
    pub slices_used: usize,
}

impl StaticParams {
    /// Model built from the fitted values; `labels` default to M0, M1, ...
    pub fn to_model(&self, labels: Option<&[String]>, mech: MechanicalOscillator) -> SystemModel {
        let label = |k: usize| labels.and_then(|l| l.get(k).cloned()).unwrap_or_else(|| format!("M{k}"));
        let modes = self
            .modes
            .iter()
            .enumerate()
            .map(|(k, m)| {
                OpticalMode::new(label(k), m.kappa.value, m.kappa_in.value.min(m.kappa.value))
                    .with_slopes(m.slope_dis.value, 0.0)
                    .with_offset(m.offset.value)
            })
            .collect();
        let couplings = self
            .crossings
            .iter()
            .map(|c| CouplingTerm::new(label(c.pair.0), label(c.pair.1), c.t.value, c.phi.value))
            .collect();
        SystemModel::new(modes, couplings, mech)
    }
}

/// Flat parameter vector: per mode [κ, κ_in/κ, slope, offset], per crossing [t, φ].
#[derive(Clone)]
struct Params {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl Params {
    fn len(&self) -> usize {
        4 * self.n + 2 * self.pairs.len()
    }

    fn model(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<(f64, f64)>, Vec<(usize, usize, Complex64)>) {
        let kappa: Vec<f64> = (0..self.n).map(|k| p[4 * k]).collect();
        let kin: Vec<f64> = (0..self.n).map(|k| p[4 * k] * p[4 * k + 1]).collect();
        let lines: Vec<(f64, f64)> = (0..self.n).map(|k| (p[4 * k + 2], p[4 * k + 3])).collect();
        let off = self
            .pairs
            .iter()
            .enumerate()
            .map(|(c, &(i, j))| {
                let (t, phi) = (p[4 * self.n + 2 * c], p[4 * self.n + 2 * c + 1]);
                (i, j, Complex64::from_polar(t, phi))
            })
            .collect();
        (kappa, kin, lines, off)
    }

    fn system(&self, p: &[f64], mech: &MechanicalOscillator) -> SystemModel {
        let (kappa, kin, lines, _) = self.model(p);
        let modes = (0..self.n)
            .map(|k| {
                OpticalMode::new(format!("M{k}"), kappa[k], kin[k].min(kappa[k]))
                    .with_slopes(lines[k].0, 0.0)
                    .with_offset(lines[k].1)
            })
            .collect();
        let couplings = self
            .pairs
            .iter()
            .enumerate()
            .map(|(c, &(i, j))| {
                CouplingTerm::new(
                    format!("M{i}"),
                    format!("M{j}"),
                    p[4 * self.n + 2 * c],
                    p[4 * self.n + 2 * c + 1],
                )
            })
            .collect();
        SystemModel::new(modes, couplings, mech.clone())
    }
}

/// |1 − √κ_inᵀ A⁻¹ √κ_in|² with A = κ/2 + i(M − Δ), by Gaussian elimination (N ≤ 4).
fn reflectance(kappa: &[f64], kin: &[f64], diag: &[f64], off: &[(usize, usize, Complex64)], delta: f64) -> f64 {
    let n = kappa.len();
    let mut a = [[Complex64::new(0.0, 0.0); 4]; 4];
    let mut b = [Complex64::new(0.0, 0.0); 4];
    for k in 0..n {
        a[k][k] = Complex64::new(0.5 * kappa[k], diag[k] - delta);
        b[k] = Complex64::new(kin[k].sqrt(), 0.0);
    }
    for &(i, j, c) in off {
        a[i][j] = Complex64::i() * c;
        a[j][i] = Complex64::i() * c.conj();
    }
    let v = b;
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let inv = 1.0 / a[col][col];
        for r in col + 1..n {
            let f = a[r][col] * inv;
            if f != Complex64::new(0.0, 0.0) {
                for c in col..n {
                    let t = a[col][c];
                    a[r][c] -= f * t;
                }
                let t = b[col];
                b[r] -= f * t;
            }
        }
    }
    let mut x = [Complex64::new(0.0, 0.0); 4];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    let proj: Complex64 = (0..n).map(|k| v[k] * x[k]).sum();
    (Complex64::new(1.0, 0.0) - proj).norm_sqr()
}

struct Line {
    slope: f64,
    intercept: f64,
}

fn line_fit(pts: &[(f64, f64)]) -> Option<Line> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some(Line {
        slope,
        intercept: my - slope * mx,
    })
}

/// Least-squares parabola y = a + b x + c x² through the points.
fn parabola(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if pts.len() < 3 {
        return None;
    }
    let x0 = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let sc = pts.iter().map(|p| (p.0 - x0).abs()).fold(0.0, f64::max).max(1e-300);
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for &(x, y) in pts {
        let u = (x - x0) / sc;
        let r = nalgebra::Vector3::new(1.0, u, u * u);
        ata += r * r.transpose();
        atb += r * y;
    }
    let s = ata.try_inverse()? * atb;
    // back to x: y = s0 + s1 (x−x0)/sc + s2 (x−x0)²/sc²
    let c = s[2] / (sc * sc);
    let b = s[1] / sc - 2.0 * c * x0;
    let a = s[0] - s[1] * x0 / sc + c * x0 * x0;
    Some((a, b, c))
}

/// Ratio of the two branch dip depths of a pair at slice `z`, from the model.
fn predicted_ratio(model: &SystemModel, z: f64, lo: usize, hi: usize) -> Option<f64> {
    let cav = Cavity::new(model, z).ok()?;
    let ev = crate::model::eigen_branches(model, z).ok()?;
    let depth = |f: f64| cav.reflection_ratio(f).ok().map(|r| 1.0 - r.norm_sqr());
    Some(depth(ev[lo])? / depth(ev[hi])?)
}

struct SliceDips {
    z: f64,
    dips: Vec<Dip>,
}

/// Estimate static parameters from a reflection map.
pub fn extract_static_params(grid: &SpectrumGrid, topology: &Topology) -> Result<StaticParams, FitError> {
    let n = topology.n_modes;
    if !(2..=3).contains(&n) {
        return Err(FitError::InvalidInput(format!("n_modes must be 2 or 3, got {n}")));
    }
    if topology.crossings.is_empty() {
        return Err(FitError::InvalidInput("topology has no crossings".into()));
    }
    for (k, &(i, j)) in topology.crossings.iter().enumerate() {
        if i >= n || j >= n || i == j || topology.crossings[..k].iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i)) {
            return Err(FitError::InvalidInput(format!("invalid crossing pair ({i}, {j})")));
        }
    }
    let grid = SpectrumGrid::new(grid.z_values.clone(), grid.detunings.clone(), grid.reflectance.clone())?;
    let mut warnings = Vec::new();

    // Stage one: slice fits.
    let slices: Vec<SliceDips> = grid
        .z_values
        .iter()
        .zip(&grid.reflectance)
        .filter_map(|(&z, row)| {
            let fit = fit_slice(&grid.detunings, row, n).ok()?;
            let sound = fit.warnings.iter().all(|w| !matches!(w, FitWarning::UnresolvedPeaks { .. }))
                && fit
                    .dips
                    .iter()
                    .zip(&fit.dip_errors)
                    .all(|(d, e)| d.depth > 3.0 * e.depth && e.fwhm < 0.5 * d.fwhm && e.center < 0.5 * d.fwhm);
            sound.then_some(SliceDips { z, dips: fit.dips })
        })
        .collect();
    let window = (slices.len() / 6).max(3);
    if slices.len() < 2 * window + 1 {
        return Err(FitError::Coverage(format!(
            "only {} slices with {n} resolved dips; need at least {}",
            slices.len(),
            2 * window + 1
        )));
    }

    // Straight lines through the branch centers at each end.
    let edge_lines = |range: &[SliceDips]| -> Result<Vec<Line>, FitError> {
        (0..n)
            .map(|b| {
                let pts: Vec<(f64, f64)> = range.iter().map(|s| (s.z, s.dips[b].center)).collect();
                line_fit(&pts).ok_or_else(|| FitError::Coverage("edge window spans a single z".into()))
            })
            .collect()
    };
    let left = edge_lines(&slices[..window])?;
    let right = edge_lines(&slices[slices.len() - window..])?;
    let z_mid = 0.5 * (grid.z_values[0] + grid.z_values[grid.z_values.len() - 1]);
    let slope_spread = left.iter().chain(&right).map(|l| l.slope.abs()).fold(0.0, f64::max);
    let order = |lines: &[Line]| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| {
            let (la, lb) = (&lines[a], &lines[b]);
            if (la.slope - lb.slope).abs() > 0.1 * slope_spread {
                lb.slope.total_cmp(&la.slope)
            } else {
                (lb.intercept + lb.slope * z_mid).total_cmp(&(la.intercept + la.slope * z_mid))
            }
        });
        idx
    };
    let (lo, ro) = (order(&left), order(&right));
    // mode k is branch lo[k] on the left and ro[k] on the right
    let mut lines = Vec::with_capacity(n);
    for k in 0..n {
        let mut pts: Vec<(f64, f64)> = slices[..window].iter().map(|s| (s.z, s.dips[lo[k]].center)).collect();
        pts.extend(slices[slices.len() - window..].iter().map(|s| (s.z, s.dips[ro[k]].center)));
        lines.push(line_fit(&pts).expect("two windows give distinct z"));
    }
    for &(i, j) in &topology.crossings {
        if (lines[i].slope - lines[j].slope).abs() <= 1e-3 * slope_spread {
            return Err(FitError::DegenerateSlopes(format!(
                "modes {i} and {j} have equal slopes and cannot cross"
            )));
        }
        if lines[i].slope.signum() == lines[j].slope.signum() && n == 2 {
            warnings.push(FitWarning::Note(format!("modes {i} and {j} have slopes of equal sign")));
        }
    }

    // κ and κ_in from the end windows.
    let mut kap = vec![Vec::new(); n];
    for k in 0..n {
        for s in &slices[..window] {
            kap[k].push(s.dips[lo[k]]);
        }
        for s in &slices[slices.len() - window..] {
            kap[k].push(s.dips[ro[k]]);
        }
    }
    let kappa0: Vec<f64> = kap.iter().map(|v| v.iter().map(|d| d.fwhm).sum::<f64>() / v.len() as f64).collect();
    let frac0: Vec<f64> = kap
        .iter()
        .zip(&kappa0)
        .map(|(v, &k)| {
            let kin = v.iter().map(|d| d.kappa_in()).sum::<f64>() / v.len() as f64;
            (kin / k).clamp(1e-4, 0.5)
        })
        .collect();

    // Gap, vertex and phase per crossing.
    let params = Params {
        n,
        pairs: topology.crossings.clone(),
    };
    let mut x0 = Vec::with_capacity(params.len());
    for k in 0..n {
        x0.extend([kappa0[k], frac0[k], lines[k].slope, lines[k].intercept]);
    }
    let mut diag_t = Vec::new();
    for &(i, j) in &topology.crossings {
        let ds = lines[i].slope - lines[j].slope;
        let zc = -(lines[i].intercept - lines[j].intercept) / ds;
        let (z_lo, z_hi) = (grid.z_values[0], grid.z_values[grid.z_values.len() - 1]);
        if !(zc > z_lo && zc < z_hi) {
            return Err(FitError::Coverage(format!("crossing of modes {i} and {j} lies outside the z range")));
        }
        // rank of each line at the crossing gives the branch pair
        let at = |k: usize| lines[k].intercept + lines[k].slope * zc;
        let mut ranks: Vec<usize> = (0..n).collect();
        ranks.sort_by(|&a, &b| at(a).total_cmp(&at(b)));
        let (ri, rj) = (
            ranks.iter().position(|&k| k == i).unwrap(),
            ranks.iter().position(|&k| k == j).unwrap(),
        );
        let (b_lo, b_hi) = (ri.min(rj), ri.max(rj));
        if b_hi - b_lo != 1 {
            return Err(FitError::ModelMismatch(format!("modes {i} and {j} are not adjacent at their crossing")));
        }
        let seps: Vec<(f64, f64)> = slices.iter().map(|s| (s.z, s.dips[b_hi].center - s.dips[b_lo].center)).collect();
        let (_, &(_, sep_min)) = seps
            .iter()
            .enumerate()
            .filter(|(_, p)| (p.0 - zc).abs() * ds.abs() < 4.0 * (kappa0[i] + kappa0[j]) + seps.iter().map(|q| q.1).fold(f64::MAX, f64::min))
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .unwrap_or_else(|| seps.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).unwrap());
        let t_gap = 0.5 * sep_min;
        // asymptotic coverage: both ends must be well separated from the vertex
        let edge = |z: f64| (ds * (z - zc)).abs();
        let reach = edge(slices[window - 1].z).min(edge(slices[slices.len() - window].z));
        if reach < 3.0 * sep_min {
            return Err(FitError::Coverage(format!(
                "end windows reach only {:.2} gaps from the crossing of modes {i} and {j}",
                reach / sep_min
            )));
        }
        // parabola through separations within 1.5× of the minimum
        let near: Vec<(f64, f64)> = seps.iter().copied().filter(|p| p.1 <= 1.5 * sep_min).collect();
        let (t0, t_curv) = match parabola(&near) {
            Some((_, _, c)) if c > 0.0 && near.len() >= 3 => {
                let sq: Vec<(f64, f64)> = near.iter().map(|p| (p.0, p.1 * p.1)).collect();
                let t_sq = parabola(&sq)
                    .filter(|q| q.2 > 0.0)
                    .map(|(a, b, c)| 0.5 * (a - b * b / (4.0 * c)).max(0.0).sqrt())
                    .filter(|t| t.is_finite() && *t > 0.0);
                (t_sq.unwrap_or(t_gap), ds * ds / (4.0 * c))
            }
            _ => (t_gap, f64::NAN),
        };
        diag_t.push((t_gap, t_curv, zc, b_lo, b_hi));
        x0.extend([t0, 0.5 * PI]);
    }

    // φ from the dip-depth ratio at the slice nearest each crossing.
    let mech = MechanicalOscillator::from_q(1.0, 1e5, 1.0, 0.0);
    for (c, &(_, _, zc, b_lo, b_hi)) in diag_t.iter().enumerate() {
        let s = slices.iter().min_by(|a, b| (a.z - zc).abs().total_cmp(&(b.z - zc).abs())).unwrap();
        let measured = s.dips[b_lo].depth / s.dips[b_hi].depth;
        let slot = 4 * n + 2 * c + 1;
        let span = if c == 0 { PI } else { 2.0 * PI };
        let cost = |phi: f64, x: &mut Vec<f64>| {
            x[slot] = phi;
            predicted_ratio(&params.system(x, &mech), s.z, b_lo, b_hi).map_or(f64::INFINITY, |r| (r.ln() - measured.ln()).abs())
        };
        let mut trial = x0.clone();
        let steps = 180;
        let scan: Vec<(f64, f64)> = (0..=steps)
            .map(|k| {
                let phi = span * k as f64 / steps as f64;
                (phi, cost(phi, &mut trial))
            })
            .collect();
        let &(mut best, mut best_cost) = scan.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let h0 = span / steps as f64;
        let (mut a, mut b) = ((best - h0).max(0.0), (best + h0).min(span));
        for _ in 0..40 {
            let m1 = a + 0.382 * (b - a);
            let m2 = a + 0.618 * (b - a);
            if cost(m1, &mut trial) < cost(m2, &mut trial) {
                b = m2;
            } else {
                a = m1;
            }
        }
        let mid = 0.5 * (a + b);
        let mc = cost(mid, &mut trial);
        if mc < best_cost {
            best = mid;
            best_cost = mc;
        }
        if best_cost > 0.5 {
            return Err(FitError::ModelMismatch(format!(
                "dip ratio {measured:.3} at the crossing is not reachable for any phase"
            )));
        }
        x0[slot] = best;
    }

    // Stage two: joint fit of the map around the stage-one branches.
    let init_model = params.system(&x0, &mech);
    let kmax = kappa0.iter().cloned().fold(0.0, f64::max);
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    for (&z, row) in grid.z_values.iter().zip(&grid.reflectance) {
        let ev = crate::model::eigen_branches(&init_model, z)?;
        for (&d, &r) in grid.detunings.iter().zip(row) {
            if ev.iter().any(|&e| (d - e).abs() <= 6.0 * kmax) {
                points.push((z, d, r));
            }
        }
    }
    let residual = |p: &[f64]| -> Vec<f64> {
        let (kappa, kin, lines, off) = params.model(p);
        let mut diag = vec![0.0; n];
        let mut out = Vec::with_capacity(points.len());
        let mut last_z = f64::NAN;
        for &(z, d, r) in &points {
            if z != last_z {
                for k in 0..n {
                    diag[k] = lines[k].1 + lines[k].0 * z;
                }
                last_z = z;
            }
            out.push(reflectance(&kappa, &kin, &diag, &off, d) - r);
        }
        out
    };
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut scale = Vec::new();
    let zspan = grid.z_values[grid.z_values.len() - 1] - grid.z_values[0];
    for k in 0..n {
        let (s, o) = (x0[4 * k + 2], x0[4 * k + 3]);
        let big = 10.0 * slope_spread * zspan + 100.0 * kmax;
        lower.extend([0.05 * kappa0[k], 0.0, s - 10.0 * slope_spread - 1.0, o - big]);
        upper.extend([20.0 * kappa0[k], 1.0, s + 10.0 * slope_spread + 1.0, o + big]);
        scale.extend([kappa0[k], 0.05, slope_spread.max(1.0), kappa0[k]]);
    }
    for c in 0..topology.crossings.len() {
        let t0 = x0[4 * n + 2 * c];
        lower.extend([0.0, if c == 0 { 0.0 } else { -PI }]);
        upper.extend([10.0 * t0 + 10.0 * kmax, if c == 0 { PI } else { 3.0 * PI }]);
        scale.extend([t0.max(0.1 * kmax), 0.1]);
    }
    let fit = least_squares(
        &Problem {
            residual: &residual,
            x0: x0.clone(),
            lower,
            upper,
            scale,
        },
        &LsqOptions {
            max_iterations: 100,
            ftol: 1e-10,
            xtol: 1e-10,
            gtol: 1e-12,
        },
    )?;
    let x = &fit.x;
    let cov = fit.covariance.clone();
    if cov.is_none() {
        warnings.push(FitWarning::SingularCovariance);
    }
    let err = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());
    let names = |i: usize| -> String {
        if i < 4 * n {
            let what = ["kappa", "kappa_in_fraction", "slope_dis", "offset"][i % 4];
            format!("{what}[{}]", i / 4)
        } else {
            let c = (i - 4 * n) / 2;
            format!("{}[{c}]", if (i - 4 * n).is_multiple_of(2) { "t" } else { "phi" })
        }
    };
    for &i in &fit.at_bound {
        warnings.push(FitWarning::AtBound(names(i)));
    }
    let modes = (0..n)
        .map(|k| {
            let (kp, f) = (x[4 * k], x[4 * k + 1]);
            let kin_err = cov.as_ref().map_or(f64::NAN, |c| {
                let (a, b) = (4 * k, 4 * k + 1);
                (f * f * c[(a, a)] + kp * kp * c[(b, b)] + 2.0 * f * kp * c[(a, b)]).max(0.0).sqrt()
            });
            ModeEstimate {
                kappa: Measured::new(kp, err(4 * k)),
                kappa_in: Measured::new(kp * f, kin_err),
                slope_dis: Measured::new(x[4 * k + 2], err(4 * k + 2)),
                offset: Measured::new(x[4 * k + 3], err(4 * k + 3)),
            }
        })
        .collect();
    let crossings = topology
        .crossings
        .iter()
        .enumerate()
        .map(|(c, &(i, j))| {
            let (si, sj) = (x[4 * i + 2], x[4 * j + 2]);
            let z = -(x[4 * i + 3] - x[4 * j + 3]) / (si - sj);
            CrossingEstimate {
                pair: (i, j),
                t: Measured::new(x[4 * n + 2 * c], err(4 * n + 2 * c)),
                phi: Measured::new(
                    crate::units::canonical_phase(x[4 * n + 2 * c + 1]),
                    err(4 * n + 2 * c + 1),
                ),
                t_from_gap: diag_t[c].0,
                t_from_curvature: diag_t[c].1,
                z,
            }
        })
        .collect();
    Ok(StaticParams {
        modes,
        crossings,
        warnings,
        slices_used: slices.len(),
    })
}
