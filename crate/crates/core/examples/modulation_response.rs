//! Mechanical frequency-modulation amplitude A_w for a power-modulated drive,
//! at the crossing and 3 nm away, with detuning measured from the locked resonance.

use optomech::dynamics::modulation_sweep;
use optomech::model::brightest_resonance;
use optomech::presets;
use optomech::units::{mhz, nm, to_hz, to_mhz};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = presets::three_mode();
    let drive = presets::modulated_drive(0.0, 80.0);
    let offsets: Vec<f64> = (0..25).map(|k| mhz(-3.0 + 0.25 * k as f64)).collect();
    for z_nm in [0.0, 3.0] {
        let res = brightest_resonance(&model, nm(z_nm))?.frequency;
        let ds: Vec<f64> = offsets.iter().map(|x| res + x).collect();
        let a = modulation_sweep(&model, &drive, nm(z_nm), &ds)?;
        println!("z = {z_nm} nm, resonance at {:+.3} MHz", to_mhz(res));
        for (x, v) in offsets.iter().zip(&a) {
            println!("  {:+6.2} MHz  {:7.3} Hz  {}", to_mhz(*x), to_hz(*v), "#".repeat((to_hz(*v) * 8.0) as usize));
        }
    }
    Ok(())
}
