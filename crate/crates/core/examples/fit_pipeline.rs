//! Round trip through the fitting toolkit: synthesize a noisy reflection map,
//! extract the static parameters, then recover the oscillation slopes, the
//! membrane position and the power from spring and damping data.

use optomech::dynamics::spring_damping_sweep;
use optomech::fit::{extract_static_params, fit_dynamics, DynamicsPoint, FreeParam, SpectrumGrid, Topology};
use optomech::model::{eigen_branches, CouplingTerm, OpticalMode, SystemModel};
use optomech::presets;
use optomech::units::{khz, mhz, mhz_per_nm, nm, to_mhz, to_mhz_per_nm, to_nm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = SystemModel::new(
        vec![
            OpticalMode::new("L", mhz(1.0), khz(150.0)).with_slopes(mhz_per_nm(2.13), mhz_per_nm(1.56)),
            OpticalMode::new("R1", mhz(1.3), khz(120.0)).with_slopes(mhz_per_nm(-1.82), mhz_per_nm(-1.66)),
        ],
        vec![CouplingTerm::new("L", "R1", mhz(2.5), 1.6)],
        presets::mechanics(),
    );
    let zs: Vec<f64> = (0..41).map(|k| nm(-5.0 + 0.25 * k as f64)).collect();
    let (lo, hi) = zs.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &z| {
        let ev = eigen_branches(&truth, z).expect("valid model");
        (lo.min(ev[0]), hi.max(ev[1]))
    });
    let ds: Vec<f64> = (0..600).map(|k| lo - mhz(6.0) + (hi - lo + mhz(12.0)) * k as f64 / 599.0).collect();
    let grid = SpectrumGrid::synthesize(&truth, &zs, &ds)?.with_noise(0.01, &mut ChaCha8Rng::seed_from_u64(7));
    let stat = extract_static_params(&grid, &Topology::two_mode())?;
    let c = &stat.crossings[0];
    println!("t/2pi = {:.3} +- {:.3} MHz (truth 2.5), phi = {:.3} rad (truth 1.6)", to_mhz(c.t.value), to_mhz(c.t.error), c.phi.value);
    for (m, t) in stat.modes.iter().zip(&truth.modes) {
        println!(
            "slope {:+.3} MHz/nm (truth {:+.3}), kappa/2pi {:.3} MHz (truth {:.3})",
            to_mhz_per_nm(m.slope_dis.value),
            to_mhz_per_nm(t.slope_dis),
            to_mhz(m.kappa.value),
            to_mhz(t.kappa)
        );
    }

    // the static model has no oscillation slopes yet; start them off by 20%
    let labels = ["L".to_string(), "R1".to_string()];
    let mut start = stat.to_model(Some(&labels), presets::mechanics());
    start.modes[0].slope_osc = 0.8 * truth.modes[0].slope_osc;
    start.modes[1].slope_osc = 1.2 * truth.modes[1].slope_osc;
    let drive = presets::drive(0.0, 80.0);
    let dets: Vec<f64> = (0..41).map(|k| mhz(-6.0 + 0.3 * k as f64)).collect();
    let data: Vec<DynamicsPoint> = spring_damping_sweep(&truth, &drive, nm(0.3), &dets)?
        .iter()
        .zip(&dets)
        .map(|(s, &d)| DynamicsPoint::new(d, s.delta_omega, s.delta_gamma))
        .collect();
    let free = [FreeParam::SlopeOsc("L".into()), FreeParam::SlopeOsc("R1".into()), FreeParam::ZDis];
    let fit = fit_dynamics(&data, &start, &drive, nm(0.2), &free)?;
    for v in &fit.values {
        let shown = match v.param {
            FreeParam::ZDis => format!("{:+.4} nm", to_nm(v.value)),
            _ => format!("{:+.4} MHz/nm", to_mhz_per_nm(v.value)),
        };
        println!("{} = {shown}", v.param);
    }
    println!("truth: slope_osc[L] = +1.56, slope_osc[R1] = -1.66 MHz/nm, z_dis = +0.3 nm");
    Ok(())
}
