//! Optical spring and damping versus detuning near the avoided crossing,
//! compared with a lone singlet mode at the same power.

use optomech::dynamics::spring_damping_sweep;
use optomech::presets;
use optomech::units::{mhz, nm, to_hz, to_mhz};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let drive = presets::drive(0.0, 80.0);
    let multi = presets::three_mode();
    let single = presets::single_mode();
    let z = nm(0.32);
    let detunings: Vec<f64> = (0..33).map(|k| mhz(-4.0 + 0.25 * k as f64)).collect();
    let a = spring_damping_sweep(&multi, &drive, z, &detunings)?;
    let b = spring_damping_sweep(&single, &drive, 0.0, &detunings)?;
    println!("{:>9} {:>11} {:>11} {:>13} {:>13}", "D [MHz]", "dw/2pi [Hz]", "dg/2pi [Hz]", "single dw", "single dg");
    for ((d, x), y) in detunings.iter().zip(&a).zip(&b) {
        println!(
            "{:>9.2} {:>11.3} {:>11.3} {:>13.3} {:>13.3}",
            to_mhz(*d),
            to_hz(x.delta_omega),
            to_hz(x.delta_gamma),
            to_hz(y.delta_omega),
            to_hz(y.delta_gamma)
        );
    }
    Ok(())
}
