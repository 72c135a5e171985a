//! Time-domain ringdown of the coupled cavity and membrane equations compared
//! with the linearized self-energy at a few detunings.

use optomech::oracle::{compare_sweep, OracleOptions};
use optomech::presets;
use optomech::units::{mhz, nm, to_hz, to_mhz};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = presets::three_mode();
    let drive = presets::drive(0.0, 20.0);
    let dets = [mhz(-2.0), mhz(-0.8), mhz(0.4), mhz(1.6)];
    let out = compare_sweep(&model, &drive, nm(0.32), &dets, &OracleOptions::default(), false)?;
    println!("{:>8} {:>10} {:>10} {:>10} {:>10} {:>5}", "D [MHz]", "dw Sigma", "dw ring", "dg Sigma", "dg ring", "ok");
    for (p, _) in &out {
        println!(
            "{:>8.2} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>5}",
            to_mhz(p.detuning),
            to_hz(p.predicted.delta_omega),
            p.delta_omega.map_or(f64::NAN, to_hz),
            to_hz(p.predicted.delta_gamma),
            p.delta_gamma.map_or(f64::NAN, to_hz),
            p.pass
        );
    }
    println!("values in Hz (divided by 2pi)");
    Ok(())
}
