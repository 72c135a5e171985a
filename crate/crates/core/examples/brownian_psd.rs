//! Thermal displacement spectrum dressed by the optical spring and damping,
//! with a Lorentzian fit of the resulting peak.

use optomech::dynamics::{brownian_psd, self_energy};
use optomech::fit::fit_lorentzian_peak;
use optomech::presets;
use optomech::units::{mhz, nm, to_hz, TWO_PI};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = presets::three_mode();
    let drive = presets::drive(mhz(-1.0), 80.0);
    let z = nm(0.32);
    let (wm, gm) = (model.mech.omega_m, model.mech.gamma_m);
    let s = self_energy(&model, &drive, z, wm)?;
    let width = gm + s.delta_gamma;
    let omegas: Vec<f64> = (0..801).map(|k| wm + s.delta_omega + width * (-10.0 + 0.025 * k as f64)).collect();
    let psd = brownian_psd(&model, &drive, z, &omegas)?;
    let values: Vec<f64> = psd.values.iter().map(|v| v.expect("net damping is positive here")).collect();
    let peak = fit_lorentzian_peak(&omegas, &values)?;
    println!("predicted shift {:+.3} Hz, linewidth {:.3} Hz", to_hz(s.delta_omega), to_hz(width));
    println!(
        "fitted    shift {:+.3} Hz, linewidth {:.3} Hz",
        to_hz(peak.center - wm),
        to_hz(peak.fwhm)
    );
    println!(
        "occupation {:.0} from the area, n_th*gm/(gm+dg) = {:.0}, bare n_th = {:.0}",
        peak.area() / TWO_PI,
        psd.n_thermal * gm / width,
        psd.n_thermal
    );
    Ok(())
}
