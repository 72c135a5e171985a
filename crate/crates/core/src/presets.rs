//! Parameter sets of the measured membrane-in-the-middle device.
//!
//! Mode labels: `L` is the singlet, `R1` and `R2` two members of the nearly
//! degenerate triplet. The R1-R2 splitting has no measured value; the
//! three-mode sets use [`SIGMA_R2_MHZ`].

use crate::model::{CouplingTerm, DriveConfig, MechanicalOscillator, Modulation, OpticalMode, SystemModel};
use crate::units::{khz, mhz, mhz_per_nm};

/// Diagonal offset of R2 relative to R1, MHz.
pub const SIGMA_R2_MHZ: f64 = -10.0;

pub const OMEGA_M_KHZ: f64 = 354.6;
pub const QUALITY_FACTOR: f64 = 1e5;
pub const MASS_EFF: f64 = 43e-12;
pub const TEMPERATURE: f64 = 0.5;
pub const WAVELENGTH: f64 = 1064e-9;
pub const FIBER_EFFICIENCY: f64 = 0.6;

pub fn mechanics() -> MechanicalOscillator {
    MechanicalOscillator::from_q(khz(OMEGA_M_KHZ), QUALITY_FACTOR, MASS_EFF, TEMPERATURE)
}

/// Laser drive at `power_uw` microwatts before the fiber.
pub fn drive(detuning: f64, power_uw: f64) -> DriveConfig {
    DriveConfig::new(detuning, power_uw * 1e-6, WAVELENGTH, FIBER_EFFICIENCY)
}

/// Drive with the amplitude modulation used for the A_ω measurement (75 Hz, β = 0.77).
pub fn modulated_drive(detuning: f64, power_uw: f64) -> DriveConfig {
    let mut d = drive(detuning, power_uw);
    d.modulation = Some(Modulation {
        mod_freq: 75.0,
        depth: 0.77,
    });
    d
}

fn mode(label: &str, kappa_mhz: f64, kappa_in_khz: f64, dis: f64, osc: f64) -> OpticalMode {
    OpticalMode::new(label, mhz(kappa_mhz), khz(kappa_in_khz)).with_slopes(mhz_per_nm(dis), mhz_per_nm(osc))
}

fn three_mode_with(osc_l: f64, osc_r2: f64) -> SystemModel {
    SystemModel::new(
        vec![
            mode("L", 1.0, 74.0, 1.87, osc_l),
            mode("R1", 1.3, 7.0, -1.77, -1.46),
            mode("R2", 1.3, 4.0, -1.77, osc_r2).with_offset(mhz(SIGMA_R2_MHZ)),
        ],
        vec![
            CouplingTerm::new("L", "R1", mhz(1.57), 1.9),
            CouplingTerm::new("L", "R2", mhz(0.76), 1.1),
        ],
        mechanics(),
    )
}

/// Singlet plus two triplet modes used for the spring/damping and A_ω data.
pub fn three_mode() -> SystemModel {
    three_mode_with(1.40, -0.65)
}

/// Crossing I: singlet and one triplet mode, t/2π = 4.57 MHz.
pub fn crossing_i() -> SystemModel {
    SystemModel::new(
        vec![mode("L", 1.0, 46.8, 2.13, 1.56), mode("R1", 1.3, 4.7, -1.82, -1.66)],
        vec![CouplingTerm::new("L", "R1", mhz(4.57), 1.6)],
        mechanics(),
    )
}

/// Crossing II: the three-mode set, probed at the L-R1 crossing.
pub fn crossing_ii() -> SystemModel {
    three_mode()
}

/// Crossing III: the three-mode set with the fitted oscillation slopes, probed at the L-R2 crossing.
pub fn crossing_iii() -> SystemModel {
    three_mode_with(1.26, -0.62)
}

/// Two-mode reduction of one of the crossings, used for curvature reports.
///
/// `which` is 1, 2 or 3.
pub fn isolated_crossing(which: u8) -> Option<SystemModel> {
    match which {
        1 => Some(crossing_i()),
        2 | 3 => {
            let full = if which == 2 { crossing_ii() } else { crossing_iii() };
            let partner = if which == 2 { "R1" } else { "R2" };
            let modes = full
                .modes
                .iter()
                .filter(|m| m.label == "L" || m.label == partner)
                .map(|m| m.clone().with_offset(0.0))
                .collect();
            let couplings = full
                .couplings
                .into_iter()
                .filter(|c| c.pair.1 == partner || c.pair.0 == partner)
                .collect();
            Some(SystemModel::new(modes, couplings, mechanics()))
        }
        _ => None,
    }
}

/// One driven mode, no couplings, the regression baseline.
pub fn single_mode() -> SystemModel {
    SystemModel::new(vec![mode("L", 1.0, 47.0, 1.87, 1.40)], vec![], mechanics())
}
