//! Reflectance of the three-mode cavity over membrane position and
//! detuning, printed as a coarse text map, plus the branch resonances at z = 0.

use optomech::model::{branch_resonances, Cavity};
use optomech::presets;
use optomech::units::{mhz, nm, to_mhz};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = presets::three_mode();
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    println!("rows: z from -4 to 4 nm, columns: detuning from -15 to 15 MHz, darker = deeper dip");
    for iz in 0..17 {
        let z = nm(-4.0 + 0.5 * iz as f64);
        let cav = Cavity::new(&model, z)?;
        let line: String = (0..61)
            .map(|k| {
                let r = cav.reflection_ratio(mhz(-15.0 + 0.5 * k as f64)).map(|r| r.norm_sqr()).unwrap_or(1.0);
                // dips here are at most ~30% deep
                let level = (((1.0 - r) / 0.3) * 9.0).round().clamp(0.0, 9.0) as usize;
                shades[level]
            })
            .collect();
        println!("{:+5.1} nm |{line}|", -4.0 + 0.5 * iz as f64);
    }
    for r in branch_resonances(&model, 0.0)? {
        println!("z = 0 branch at {:+.3} MHz, dip depth {:.3}", to_mhz(r.frequency), r.dip_depth);
    }
    Ok(())
}
