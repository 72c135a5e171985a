//! Physical constants and the unit conversions used at the config boundary.
//!
//! Everything inside the crate is SI with angular frequencies in rad/s and
//! lengths in meters. Config files carry "/2π" frequencies in Hz, kHz or MHz
//! and lengths in nm; these helpers are the only place the factor 2π appears.

use std::f64::consts::PI;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Speed of light in vacuum, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;

pub const TWO_PI: f64 = 2.0 * PI;

pub const NM: f64 = 1e-9;

/// Cyclic Hz to rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    TWO_PI * f
}

#[inline]
pub fn khz(f: f64) -> f64 {
    TWO_PI * f * 1e3
}

#[inline]
pub fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

/// MHz/nm (cyclic) to rad/s per meter.
#[inline]
pub fn mhz_per_nm(s: f64) -> f64 {
    TWO_PI * s * 1e6 / NM
}

#[inline]
pub fn nm(z: f64) -> f64 {
    z * NM
}

#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / TWO_PI
}

#[inline]
pub fn to_khz(omega: f64) -> f64 {
    omega / TWO_PI / 1e3
}

#[inline]
pub fn to_mhz(omega: f64) -> f64 {
    omega / TWO_PI / 1e6
}

#[inline]
pub fn to_nm(z: f64) -> f64 {
    z / NM
}

#[inline]
pub fn to_mhz_per_nm(s: f64) -> f64 {
    s * NM / TWO_PI / 1e6
}

/// rad/s per m² to cyclic MHz/nm².
#[inline]
pub fn to_mhz_per_nm2(c: f64) -> f64 {
    c * NM * NM / TWO_PI / 1e6
}

/// Wrap an angle into `[0, 2π)`.
pub fn canonical_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn conversions_invert() {
        assert_relative_eq!(to_mhz(mhz(4.6)), 4.6, max_relative = 1e-14);
        assert!((to_mhz_per_nm(mhz_per_nm(-1.77)) + 1.77).abs() < 1e-14);
        assert_relative_eq!(to_nm(nm(0.32)), 0.32, max_relative = 1e-14);
    }

    #[test]
    fn phase_wraps() {
        assert_eq!(canonical_phase(0.0), 0.0);
        assert_abs_diff_eq!(canonical_phase(-0.5), TWO_PI - 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(canonical_phase(7.0), 7.0 - TWO_PI, epsilon = 1e-15);
        assert!(canonical_phase(-1e-300) < TWO_PI);
    }
}
