use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::FitError;
use crate::model::{Cavity, SystemModel};

/// Reflected power ratio sampled on a (z_dis, Δ) grid; `reflectance[i][j]`
/// belongs to `z_values[i]` and `detunings[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    pub z_values: Vec<f64>,
    pub detunings: Vec<f64>,
    pub reflectance: Vec<Vec<f64>>,
}

impl SpectrumGrid {
    pub fn new(z_values: Vec<f64>, detunings: Vec<f64>, reflectance: Vec<Vec<f64>>) -> Result<Self, FitError> {
        if z_values.is_empty() || detunings.is_empty() {
            return Err(FitError::InvalidInput("grid axes must be non-empty".into()));
        }
        if z_values.windows(2).any(|w| w[1] <= w[0]) || detunings.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FitError::InvalidInput("grid axes must be strictly increasing".into()));
        }
        if reflectance.len() != z_values.len() || reflectance.iter().any(|r| r.len() != detunings.len()) {
            return Err(FitError::InvalidInput(format!(
                "reflectance must be {}x{}",
                z_values.len(),
                detunings.len()
            )));
        }
        if reflectance.iter().flatten().chain(&z_values).chain(&detunings).any(|v| !v.is_finite()) {
            return Err(FitError::InvalidInput("grid contains non-finite values".into()));
        }
        Ok(Self {
            z_values,
            detunings,
            reflectance,
        })
    }

    /// Exact model reflectance on the grid.
    pub fn synthesize(model: &SystemModel, z_values: &[f64], detunings: &[f64]) -> Result<Self, FitError> {
        let mut rows = Vec::with_capacity(z_values.len());
        for &z in z_values {
            let cav = Cavity::new(model, z)?;
            let row = detunings
                .iter()
                .map(|&d| cav.reflection_ratio(d).map(|r| r.norm_sqr()))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::new(z_values.to_vec(), detunings.to_vec(), rows)
    }

    /// Copy with additive Gaussian noise of standard deviation `sigma`.
    pub fn with_noise<R: Rng>(&self, sigma: f64, rng: &mut R) -> Self {
        let mut out = self.clone();
        if sigma > 0.0 {
            let dist = Normal::new(0.0, sigma).expect("finite positive sigma");
            for v in out.reflectance.iter_mut().flatten() {
                *v += dist.sample(rng);
            }
        }
        out
    }

    /// Rebuild from long-format `(z, Δ, R)` rows in any order.
    pub fn from_long(rows: &[(f64, f64, f64)]) -> Result<Self, FitError> {
        let axis = |sel: fn(&(f64, f64, f64)) -> f64| {
            let mut v: Vec<f64> = rows.iter().map(sel).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let zs = axis(|r| r.0);
        let ds = axis(|r| r.1);
        if zs.len() * ds.len() != rows.len() {
            return Err(FitError::InvalidInput(format!(
                "{} rows do not form a {}x{} grid",
                rows.len(),
                zs.len(),
                ds.len()
            )));
        }
        let mut refl = vec![vec![f64::NAN; ds.len()]; zs.len()];
        for &(z, d, r) in rows {
            let i = zs.binary_search_by(|v| v.total_cmp(&z)).expect("axis built from rows");
            let j = ds.binary_search_by(|v| v.total_cmp(&d)).expect("axis built from rows");
            refl[i][j] = r;
        }
        if refl.iter().flatten().any(|v| v.is_nan()) {
            return Err(FitError::InvalidInput("duplicate (z, detuning) pairs".into()));
        }
        Self::new(zs, ds, refl)
    }

    /// Long-format rows, z-major.
    pub fn to_long(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.z_values.len() * self.detunings.len());
        for (z, row) in self.z_values.iter().zip(&self.reflectance) {
            for (d, r) in self.detunings.iter().zip(row) {
                out.push((*z, *d, *r));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::units::{mhz, nm};

    #[test]
    fn dimensions_are_checked() {
        assert!(SpectrumGrid::new(vec![0.0], vec![0.0, 1.0], vec![vec![1.0]]).is_err());
        assert!(SpectrumGrid::new(vec![1.0, 0.0], vec![0.0], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(SpectrumGrid::new(vec![0.0], vec![0.0], vec![vec![1.0]]).is_ok());
    }

    #[test]
    fn long_format_round_trip() {
        let zs = [nm(-1.0), nm(0.0), nm(2.0)];
        let ds = [mhz(-1.0), mhz(0.5)];
        let g = SpectrumGrid::synthesize(&presets::crossing_i(), &zs, &ds).unwrap();
        let mut long = g.to_long();
        long.reverse();
        assert_eq!(SpectrumGrid::from_long(&long).unwrap(), g);
        long.pop();
        assert!(SpectrumGrid::from_long(&long).is_err());
    }

    #[test]
    fn synthesized_values_are_physical() {
        let zs: Vec<f64> = (0..11).map(|k| nm(-5.0 + k as f64)).collect();
        let ds: Vec<f64> = (0..201).map(|k| mhz(-20.0 + 0.2 * k as f64)).collect();
        let g = SpectrumGrid::synthesize(&presets::three_mode(), &zs, &ds).unwrap();
        assert!(g.reflectance.iter().flatten().all(|&r| (0.0..=1.0 + 1e-12).contains(&r)));
    }
}
