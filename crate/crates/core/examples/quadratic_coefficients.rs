//! Avoided crossings of the three measured mode pairs and their quadratic
//! coefficients, in the upper-minus-lower branch convention.

use optomech::model::{find_crossings, quadratic_coefficient};
use optomech::presets;
use optomech::units::{nm, to_mhz, to_mhz_per_nm2, to_nm};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (k, name) in [(1u8, "I"), (2, "II"), (3, "III")] {
        let model = presets::isolated_crossing(k).expect("crossing index 1..=3");
        for c in find_crossings(&model, nm(-10.0), nm(10.0), 401)? {
            let q = quadratic_coefficient(&model, c.z)?;
            let zpf = model.mech.z_zpf();
            println!(
                "crossing {name}: z = {:+.3} nm, gap 2t/2pi = {:.3} MHz, curvature/2pi = {:.3} MHz/nm^2, g2/2pi = {:.3e} Hz",
                to_nm(c.z),
                to_mhz(c.gap),
                to_mhz_per_nm2(q.pair_curvature),
                q.pair_curvature * zpf * zpf / std::f64::consts::TAU
            );
        }
    }
    let full = presets::three_mode();
    for c in find_crossings(&full, nm(-6.0), nm(6.0), 601)? {
        let q = quadratic_coefficient(&full, c.z)?;
        println!(
            "three-mode model: branches {}-{} at z = {:+.3} nm, branch curvatures/2pi = {:?} MHz/nm^2",
            c.lower,
            c.lower + 1,
            to_nm(c.z),
            q.branch_curvatures.iter().map(|&v| (to_mhz_per_nm2(v) * 1e3).round() / 1e3).collect::<Vec<_>>()
        );
    }
    Ok(())
}
