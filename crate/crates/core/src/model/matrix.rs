use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::{ModelError, SystemModel};
use crate::units::NM;

/// Hermitian mode matrix at static displacement `z_dis` and oscillatory
/// displacement `z_osc` (both in meters).
pub fn mode_matrix(model: &SystemModel, z_dis: f64, z_osc: f64) -> Result<DMatrix<Complex64>, ModelError> {
    model.validate()?;
    Ok(assemble(model, z_dis, z_osc))
}

/// Assembly without validation, for hot loops that validated once.
pub(crate) fn assemble(model: &SystemModel, z_dis: f64, z_osc: f64) -> DMatrix<Complex64> {
    let n = model.n_modes();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for (k, mode) in model.modes.iter().enumerate() {
        m[(k, k)] = Complex64::new(mode.offset + mode.slope_dis * z_dis + mode.slope_osc * z_osc, 0.0);
    }
    for c in &model.couplings {
        // labels were checked by validate()
        let i = model.mode_index(&c.pair.0).expect("validated label");
        let j = model.mode_index(&c.pair.1).expect("validated label");
        let v = Complex64::from_polar(c.t, c.phi);
        m[(i, j)] = v;
        m[(j, i)] = v.conj();
    }
    m
}

fn sorted_eigenvalues(m: DMatrix<Complex64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Eigenfrequencies of the mode matrix at `z_dis` (with `z_osc = 0`), ascending.
pub fn eigen_branches(model: &SystemModel, z_dis: f64) -> Result<Vec<f64>, ModelError> {
    model.validate()?;
    Ok(sorted_eigenvalues(assemble(model, z_dis, 0.0)))
}

/// Eigen-branches along a sweep of `z_dis`, one row per z.
///
/// Columns are in sorted order unless two sorted eigenvalues come within
/// `1e-6·t_min` of each other. Across such a near-degeneracy the column
/// labels are re-derived from eigenvector overlaps between the last
/// well-separated rows on either side, and that relabeling is carried forward,
/// so exactly degenerate (uncoupled) crossings are continued through.
pub fn track_branches(model: &SystemModel, zs: &[f64]) -> Result<Vec<Vec<f64>>, ModelError> {
    model.validate()?;
    let n = model.n_modes();
    let tol = 1e-6
        * model
            .min_coupling()
            .unwrap_or_else(|| model.modes.iter().map(|m| m.kappa).fold(0.0, f64::max));
    let mut rows = Vec::with_capacity(zs.len());
    // column k of the output is sorted index perm[k]
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reference: Option<DMatrix<Complex64>> = None;
    let mut pending = false;
    for &z in zs {
        let eig = SymmetricEigen::new(assemble(model, z, 0.0));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let close = vals.windows(2).any(|w| (w[1] - w[0]).abs() < tol);
        if close {
            pending = true;
        } else {
            let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
            if let (true, Some(prev)) = (pending, &reference) {
                // map[p] = current sorted index best overlapping previous sorted index p
                let mut map = vec![0usize; n];
                let mut used = vec![false; n];
                for (p, slot) in map.iter_mut().enumerate() {
                    let mut best: Option<(f64, usize)> = None;
                    for q in (0..n).filter(|&q| !used[q]) {
                        let ov = prev.column(p).dotc(&vecs.column(q)).norm();
                        if best.is_none_or(|(b, _)| ov > b) {
                            best = Some((ov, q));
                        }
                    }
                    let q = best.expect("unused column remains").1;
                    used[q] = true;
                    *slot = q;
                }
                perm = perm.iter().map(|&p| map[p]).collect();
            }
            pending = false;
            reference = Some(vecs);
        }
        rows.push(perm.iter().map(|&k| vals[k]).collect());
    }
    Ok(rows)
}

/// A located avoided crossing between sorted branches `lower` and `lower + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub z: f64,
    pub lower: usize,
    /// Minimum branch separation (= 2t for an isolated two-mode crossing), rad/s.
    pub gap: f64,
}

fn pair_separation(model: &SystemModel, z: f64, lower: usize) -> f64 {
    let ev = sorted_eigenvalues(assemble(model, z, 0.0));
    ev[lower + 1] - ev[lower]
}

/// Locate local minima of every adjacent branch separation inside `[z_lo, z_hi]`.
///
/// A coarse scan with `samples` points brackets each minimum, which is then
/// refined by golden-section search.
pub fn find_crossings(model: &SystemModel, z_lo: f64, z_hi: f64, samples: usize) -> Result<Vec<Crossing>, ModelError> {
    model.validate()?;
    let n = model.n_modes();
    if n < 2 {
        return Err(ModelError::TooFewModes { needed: 2, found: n });
    }
    let samples = samples.max(5);
    let zs: Vec<f64> = (0..samples)
        .map(|k| z_lo + (z_hi - z_lo) * k as f64 / (samples - 1) as f64)
        .collect();
    let seps: Vec<Vec<f64>> = zs
        .iter()
        .map(|&z| {
            let ev = sorted_eigenvalues(assemble(model, z, 0.0));
            ev.windows(2).map(|w| w[1] - w[0]).collect()
        })
        .collect();
    let mut out = Vec::new();
    for lower in 0..n - 1 {
        for k in 1..samples - 1 {
            let (a, b, c) = (seps[k - 1][lower], seps[k][lower], seps[k + 1][lower]);
            if b <= a && b < c {
                let z = golden_min(|z| pair_separation(model, z, lower), zs[k - 1], zs[k + 1]);
                out.push(Crossing {
                    z,
                    lower,
                    gap: pair_separation(model, z, lower),
                });
            }
        }
    }
    out.sort_by(|a, b| a.z.total_cmp(&b.z));
    Ok(out)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()).max(1e-18) {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Curvatures at an avoided crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCoefficient {
    /// d²λ_k/dz² for every sorted branch, rad/s per m².
    pub branch_curvatures: Vec<f64>,
    /// Curvature of the upper minus the lower anticrossing branch, rad/s per m².
    /// Equals (Δω'_dis)²/(2t) for an isolated two-mode crossing.
    pub pair_curvature: f64,
    /// Index of the lower branch of the anticrossing pair.
    pub lower: usize,
    /// Step used for the finite differences, m.
    pub step: f64,
}

/// Second derivatives of the eigen-branches at `crossing_z`.
///
/// Central differences with step `h = min(0.01·gap/2 / |Δslope|, 0.01 nm)`
/// and one Richardson extrapolation level.
pub fn quadratic_coefficient(model: &SystemModel, crossing_z: f64) -> Result<QuadraticCoefficient, ModelError> {
    model.validate()?;
    let n = model.n_modes();
    if n < 2 {
        return Err(ModelError::TooFewModes { needed: 2, found: n });
    }
    let center = sorted_eigenvalues(assemble(model, crossing_z, 0.0));
    let lower = center
        .windows(2)
        .enumerate()
        .min_by(|a, b| (a.1[1] - a.1[0]).total_cmp(&(b.1[1] - b.1[0])))
        .map(|(k, _)| k)
        .expect("n >= 2");
    let half_gap = 0.5 * (center[lower + 1] - center[lower]);
    let dslope = model.max_slope_difference();
    let h = if dslope > 0.0 && half_gap > 0.0 {
        (0.01 * half_gap / dslope).min(0.01 * NM)
    } else {
        0.01 * NM
    };

    // extremum check on the anticrossing pair
    let sep = |z: f64| pair_separation(model, z, lower);
    let dsep = (sep(crossing_z + h) - sep(crossing_z - h)) / (2.0 * h);
    let allowed = 1e-2 * dslope;
    if dsep.abs() > allowed {
        return Err(ModelError::NotACrossing {
            z: crossing_z,
            slope: dsep,
            allowed,
        });
    }

    let second = |step: f64| -> Vec<f64> {
        let p = sorted_eigenvalues(assemble(model, crossing_z + step, 0.0));
        let m = sorted_eigenvalues(assemble(model, crossing_z - step, 0.0));
        (0..n)
            .map(|k| (p[k] - 2.0 * center[k] + m[k]) / (step * step))
            .collect()
    };
    let coarse = second(h);
    let fine = second(0.5 * h);
    let branch_curvatures: Vec<f64> = coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect();
    let pair_curvature = branch_curvatures[lower + 1] - branch_curvatures[lower];
    Ok(QuadraticCoefficient {
        branch_curvatures,
        pair_curvature,
        lower,
        step: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use crate::model::{CouplingTerm, MechanicalOscillator, OpticalMode};
    use crate::units::{khz, mhz, mhz_per_nm, nm, to_mhz_per_nm2};

    fn mech() -> MechanicalOscillator {
        MechanicalOscillator::from_q(khz(354.6), 1e5, 43e-12, 0.5)
    }

    fn two_mode(s1: f64, s2: f64, t: f64, phi: f64) -> SystemModel {
        SystemModel::new(
            vec![
                OpticalMode::new("L", mhz(1.0), khz(47.0)).with_slopes(mhz_per_nm(s1), 0.0),
                OpticalMode::new("R", mhz(1.3), khz(5.0)).with_slopes(mhz_per_nm(s2), 0.0),
            ],
            vec![CouplingTerm::new("L", "R", mhz(t), phi)],
            mech(),
        )
    }

    #[test]
    fn matrix_entries_at_origin_and_one_nm() {
        let m = two_mode(2.1, -1.8, 4.6, 1.6);
        let a = mode_matrix(&m, 0.0, 0.0).unwrap();
        assert_eq!(a[(0, 0)].re, 0.0);
        assert_eq!(a[(1, 1)].re, 0.0);
        assert!((a[(0, 1)].norm() - mhz(4.6)).abs() < 1e-6);
        assert_abs_diff_eq!(a[(0, 1)].arg(), 1.6, epsilon = 1e-12);
        assert_eq!(a[(1, 0)], a[(0, 1)].conj());

        let b = mode_matrix(&m, nm(1.0), 0.0).unwrap();
        assert!((b[(0, 0)].re - mhz(2.1)).abs() < 1e-6);
        assert!((b[(1, 1)].re + mhz(1.8)).abs() < 1e-6);
    }

    #[test]
    fn oscillatory_displacement_uses_its_own_slope() {
        let mut m = two_mode(2.1, -1.8, 4.6, 1.6);
        m.modes[0].slope_osc = mhz_per_nm(1.4);
        let a = mode_matrix(&m, 0.0, nm(2.0)).unwrap();
        assert!((a[(0, 0)].re - mhz(2.8)).abs() < 1e-6);
        assert_eq!(a[(1, 1)].re, 0.0);
    }

    #[test]
    fn unknown_label_is_a_configuration_error() {
        let mut m = two_mode(2.1, -1.8, 4.6, 1.6);
        m.couplings[0].pair.1 = "X".into();
        assert_eq!(mode_matrix(&m, 0.0, 0.0), Err(ModelError::UnknownLabel("X".into())));
    }

    #[test]
    fn decoupled_eigenvalues_equal_diagonal() {
        let m = two_mode(2.1, -1.8, 0.0, 0.0);
        let ev = eigen_branches(&m, nm(3.0)).unwrap();
        assert!((ev[0] - mhz(-5.4)).abs() < 1e-6);
        assert!((ev[1] - mhz(6.3)).abs() < 1e-6);
    }

    #[test]
    fn symmetric_crossing_splits_by_2t() {
        let m = two_mode(2.0, -2.0, 4.6, 0.3);
        let ev = eigen_branches(&m, 0.0).unwrap();
        assert!((ev[0] + mhz(4.6)).abs() < 1e-6 * mhz(4.6));
        assert_relative_eq!(ev[1], mhz(4.6), max_relative = 1e-6);
    }

    #[test]
    fn upper_branch_follows_linear_asymptote() {
        let m = two_mode(2.1, -1.8, 4.6, 1.6);
        let ev = eigen_branches(&m, nm(100.0)).unwrap();
        assert!((ev[1] / mhz(210.0) - 1.0).abs() < 2e-3);
    }

    #[test]
    fn tracking_continues_through_exact_degeneracy() {
        let m = two_mode(2.0, -1.0, 0.0, 0.0);
        let zs: Vec<f64> = (-5..=5).map(|k| nm(k as f64)).collect();
        let rows = track_branches(&m, &zs).unwrap();
        // branch 0 starts as mode R (upper at negative z)... after z=0 it stays mode R
        let col0: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let slope_first = (col0[1] - col0[0]) / nm(1.0);
        let slope_last = (col0[10] - col0[9]) / nm(1.0);
        assert!((slope_first - slope_last).abs() < 1e-3 * slope_first.abs());
    }

    #[test]
    fn crossing_finder_recovers_gap() {
        let m = two_mode(1.87, -1.77, 1.57, 1.9);
        let c = find_crossings(&m, nm(-5.0), nm(5.0), 101).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].z.abs() < 1e-15);
        assert!((c[0].gap / (2.0 * mhz(1.57)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn curvature_matches_two_mode_formula() {
        let m = two_mode(1.87, -1.77, 1.57, 1.9);
        let q = quadratic_coefficient(&m, 0.0).unwrap();
        let expected = (1.87f64 + 1.77).powi(2) / (2.0 * 1.57);
        assert!((to_mhz_per_nm2(q.pair_curvature) / expected - 1.0).abs() < 1e-6);
        // each branch carries half of it with opposite signs
        assert!((q.branch_curvatures[1] + q.branch_curvatures[0]).abs() < 1e-6 * q.pair_curvature);
    }

    #[test]
    fn off_vertex_point_is_rejected() {
        let m = two_mode(1.87, -1.77, 1.57, 1.9);
        assert!(matches!(
            quadratic_coefficient(&m, nm(0.5)),
            Err(ModelError::NotACrossing { .. })
        ));
    }

    #[test]
    fn strong_coupling_flattens_branches() {
        let weak = quadratic_coefficient(&two_mode(1.87, -1.77, 1.57, 0.0), 0.0).unwrap();
        let strong = quadratic_coefficient(&two_mode(1.87, -1.77, 1570.0, 0.0), 0.0).unwrap();
        assert!(strong.pair_curvature.abs() < 2e-3 * weak.pair_curvature.abs());
        assert!(strong.branch_curvatures.iter().all(|c| c.abs() < 1e-3 * weak.pair_curvature));
    }
}
