//! JSON representation of [`SystemModel`] and [`DriveConfig`].
//!
//! Field names are the domain names with an explicit unit suffix. Frequencies
//! are cyclic ("/2π") values; conversion to rad/s and meters happens in
//! [`ModelConfig::to_model`] and [`DriveSpec::to_drive`] and nowhere else.
//!
//! ```json
//! {
//!   "modes": [
//!     {"label": "L", "kappa_mhz": 1.0, "kappa_in_mhz": 0.074,
//!      "slope_dis_mhz_per_nm": 1.87, "slope_osc_mhz_per_nm": 1.40, "offset_mhz": 0.0}
//!   ],
//!   "couplings": [{"pair": ["L", "R1"], "t_mhz": 1.57, "phi_rad": 1.9}],
//!   "mech": {"omega_m_khz": 354.6, "gamma_m_hz": 3.546, "mass_eff_ng": 43.0, "temperature_k": 0.5},
//!   "crossing_frequency_thz": 281.76
//! }
//! ```

use serde::{Deserialize, Serialize};

use super::{CouplingTerm, DriveConfig, MechanicalOscillator, Modulation, ModelError, OpticalMode, SystemModel};
use crate::units::{
    hz, khz, mhz, mhz_per_nm, to_hz, to_khz, to_mhz, to_mhz_per_nm, TWO_PI,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub label: String,
    pub kappa_mhz: f64,
    pub kappa_in_mhz: f64,
    pub slope_dis_mhz_per_nm: f64,
    #[serde(default)]
    pub slope_osc_mhz_per_nm: f64,
    #[serde(default)]
    pub offset_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub pair: (String, String),
    pub t_mhz: f64,
    pub phi_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechSpec {
    pub omega_m_khz: f64,
    pub gamma_m_hz: f64,
    pub mass_eff_ng: f64,
    pub temperature_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub modes: Vec<ModeSpec>,
    #[serde(default)]
    pub couplings: Vec<CouplingSpec>,
    pub mech: MechSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossing_frequency_thz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationSpec {
    pub mod_freq_hz: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSpec {
    #[serde(default)]
    pub detuning_mhz: f64,
    pub power_in_uw: f64,
    pub wavelength_nm: f64,
    pub fiber_efficiency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<ModulationSpec>,
}

impl ModelConfig {
    pub fn to_model(&self) -> Result<SystemModel, ModelError> {
        let modes = self
            .modes
            .iter()
            .map(|m| OpticalMode {
                label: m.label.clone(),
                kappa: mhz(m.kappa_mhz),
                kappa_in: mhz(m.kappa_in_mhz),
                slope_dis: mhz_per_nm(m.slope_dis_mhz_per_nm),
                slope_osc: mhz_per_nm(m.slope_osc_mhz_per_nm),
                offset: mhz(m.offset_mhz),
            })
            .collect();
        let couplings = self
            .couplings
            .iter()
            .map(|c| CouplingTerm::new(c.pair.0.clone(), c.pair.1.clone(), mhz(c.t_mhz), c.phi_rad))
            .collect();
        let mech = MechanicalOscillator {
            omega_m: khz(self.mech.omega_m_khz),
            gamma_m: hz(self.mech.gamma_m_hz),
            mass_eff: self.mech.mass_eff_ng * 1e-12,
            temperature: self.mech.temperature_k,
        };
        let model = SystemModel {
            modes,
            couplings,
            mech,
            crossing_frequency: self.crossing_frequency_thz.map_or(0.0, |f| TWO_PI * f * 1e12),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_model(model: &SystemModel) -> Self {
        Self {
            modes: model
                .modes
                .iter()
                .map(|m| ModeSpec {
                    label: m.label.clone(),
                    kappa_mhz: to_mhz(m.kappa),
                    kappa_in_mhz: to_mhz(m.kappa_in),
                    slope_dis_mhz_per_nm: to_mhz_per_nm(m.slope_dis),
                    slope_osc_mhz_per_nm: to_mhz_per_nm(m.slope_osc),
                    offset_mhz: to_mhz(m.offset),
                })
                .collect(),
            couplings: model
                .couplings
                .iter()
                .map(|c| CouplingSpec {
                    pair: c.pair.clone(),
                    t_mhz: to_mhz(c.t),
                    phi_rad: c.phi,
                })
                .collect(),
            mech: MechSpec {
                omega_m_khz: to_khz(model.mech.omega_m),
                gamma_m_hz: to_hz(model.mech.gamma_m),
                mass_eff_ng: model.mech.mass_eff * 1e12,
                temperature_k: model.mech.temperature,
            },
            crossing_frequency_thz: (model.crossing_frequency != 0.0)
                .then(|| model.crossing_frequency / TWO_PI / 1e12),
        }
    }
}

impl DriveSpec {
    pub fn to_drive(&self) -> Result<DriveConfig, ModelError> {
        let drive = DriveConfig {
            detuning: mhz(self.detuning_mhz),
            power_in: self.power_in_uw * 1e-6,
            wavelength: self.wavelength_nm * 1e-9,
            fiber_efficiency: self.fiber_efficiency,
            modulation: self.modulation.map(|m| Modulation {
                mod_freq: m.mod_freq_hz,
                depth: m.depth,
            }),
        };
        drive.validate()?;
        Ok(drive)
    }

    pub fn from_drive(drive: &DriveConfig) -> Self {
        Self {
            detuning_mhz: to_mhz(drive.detuning),
            power_in_uw: drive.power_in * 1e6,
            wavelength_nm: drive.wavelength * 1e9,
            fiber_efficiency: drive.fiber_efficiency,
            modulation: drive.modulation.map(|m| ModulationSpec {
                mod_freq_hz: m.mod_freq,
                depth: m.depth,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EXAMPLE: &str = r#"{
      "modes": [
        {"label": "L", "kappa_mhz": 1.0, "kappa_in_mhz": 0.074,
         "slope_dis_mhz_per_nm": 1.87, "slope_osc_mhz_per_nm": 1.40, "offset_mhz": 0.0},
        {"label": "R1", "kappa_mhz": 1.3, "kappa_in_mhz": 0.007,
         "slope_dis_mhz_per_nm": -1.77, "slope_osc_mhz_per_nm": -1.46}
      ],
      "couplings": [{"pair": ["L", "R1"], "t_mhz": 1.57, "phi_rad": 1.9}],
      "mech": {"omega_m_khz": 354.6, "gamma_m_hz": 3.546, "mass_eff_ng": 43.0, "temperature_k": 0.5}
    }"#;

    #[test]
    fn parses_documented_example() {
        let cfg: ModelConfig = serde_json::from_str(EXAMPLE).unwrap();
        let m = cfg.to_model().unwrap();
        assert_eq!(m.n_modes(), 2);
        assert!((m.couplings[0].t - mhz(1.57)).abs() < 1e-6);
        assert!((m.mech.quality_factor() - 1e5).abs() < 1e-6);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = EXAMPLE.replace("kappa_in_mhz", "kappa_input");
        assert!(serde_json::from_str::<ModelConfig>(&bad).is_err());
    }

    #[test]
    fn invalid_model_surfaces_model_error() {
        let bad = EXAMPLE.replace("\"R1\"]", "\"R9\"]");
        let cfg: ModelConfig = serde_json::from_str(&bad).unwrap();
        assert_eq!(cfg.to_model(), Err(ModelError::UnknownLabel("R9".into())));
    }

    proptest! {
        #[test]
        fn json_round_trip_is_identity(
            k in 0.1f64..5.0, kin_frac in 0.0f64..1.0, s in -3.0f64..3.0,
            t in 0.0f64..10.0, phi in 0.0f64..6.25, p in 0.0f64..200.0,
        ) {
            let cfg = ModelConfig {
                modes: vec![
                    ModeSpec { label: "A".into(), kappa_mhz: k, kappa_in_mhz: k * kin_frac,
                        slope_dis_mhz_per_nm: s, slope_osc_mhz_per_nm: -s, offset_mhz: 0.5 },
                    ModeSpec { label: "B".into(), kappa_mhz: k, kappa_in_mhz: 0.0,
                        slope_dis_mhz_per_nm: -s, slope_osc_mhz_per_nm: s, offset_mhz: 0.0 },
                ],
                couplings: vec![CouplingSpec { pair: ("A".into(), "B".into()), t_mhz: t, phi_rad: phi }],
                mech: MechSpec { omega_m_khz: 354.6, gamma_m_hz: 3.546, mass_eff_ng: 43.0, temperature_k: 0.5 },
                crossing_frequency_thz: None,
            };
            let text = serde_json::to_string(&cfg).unwrap();
            let back: ModelConfig = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back, &cfg);

            let drive = DriveSpec { detuning_mhz: 0.3, power_in_uw: p, wavelength_nm: 1064.0,
                fiber_efficiency: 0.6, modulation: Some(ModulationSpec { mod_freq_hz: 75.0, depth: 0.77 }) };
            let text = serde_json::to_string(&drive).unwrap();
            prop_assert_eq!(serde_json::from_str::<DriveSpec>(&text).unwrap(), drive);
        }
    }
}
