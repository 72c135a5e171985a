//! Removal of a slow linear drift of the mechanical frequency from a forward
//! and backward detuning sweep.

use optomech::dynamics::spring_damping_sweep;
use optomech::fit::{drift_subtract, split_sweep, DriftSample};
use optomech::presets;
use optomech::units::{mhz, nm, to_hz, to_mhz, TWO_PI};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = presets::three_mode();
    let rate = 0.47e-3;
    let n = 30;
    let ds: Vec<f64> = (0..n).map(|k| mhz(-3.0 + 6.0 * k as f64 / (n - 1) as f64)).collect();
    let spring = spring_damping_sweep(&model, &presets::drive(0.0, 80.0), nm(0.32), &ds)?;
    let f0 = model.mech.omega_m / TWO_PI;
    let step = 6360.0 / (2 * n - 1) as f64;
    let samples: Vec<DriftSample> = (0..2 * n)
        .map(|k| {
            let i = if k < n { k } else { 2 * n - 1 - k };
            let time = k as f64 * step;
            DriftSample {
                detuning: to_mhz(ds[i]),
                time,
                frequency: f0 + to_hz(spring[i].delta_omega) + rate * time,
            }
        })
        .collect();
    let (fwd, bwd) = split_sweep(&samples);
    let r = drift_subtract(&fwd, &bwd)?;
    println!("injected {:.3} mHz/s, recovered {:.4} mHz/s from {} pairs", rate * 1e3, r.model.rate * 1e3, r.model.pairs);
    for (raw, fixed) in fwd.iter().zip(&r.corrected).step_by(5) {
        println!(
            "D = {:+.2} MHz: raw {:+.3} Hz, corrected {:+.3} Hz",
            raw.detuning,
            raw.frequency - f0,
            fixed.frequency - f0
        );
    }
    Ok(())
}
