use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::config::{LoadedConfig, Range};
use super::io::{read_csv, write_csv, write_json, Table};
use super::{CliError, Outcome};
use crate::dynamics::{brownian_psd, modulation_sweep, photon_number, self_energy, spring_damping_sweep};
use crate::fit::{
    drift_subtract, extract_static_params, fit_dynamics, fit_lorentzian_peak, split_sweep, DriftSample, DynamicsPoint,
    FreeParam, Measured, SpectrumGrid, Topology,
};
use crate::model::{find_crossings, quadratic_coefficient, track_branches, Crossing, SystemModel};
use crate::oracle::{compare_sweep, tolerance, weak_coupling_limit};
use crate::units::{mhz, nm, to_hz, to_mhz, to_mhz_per_nm, to_mhz_per_nm2, to_nm, TWO_PI};

fn need<'a>(r: &'a Option<Range>, field: &str, cmd: &str) -> Result<&'a Range, CliError> {
    r.as_ref().ok_or_else(|| CliError::config(field, format!("required by {cmd}")))
}

fn model_err(e: impl std::fmt::Display) -> CliError {
    CliError::config("model", e)
}

fn crossings_in(model: &SystemModel, z: &Range) -> Result<Vec<Crossing>, CliError> {
    if model.n_modes() < 2 {
        return Ok(Vec::new());
    }
    find_crossings(model, nm(z.min), nm(z.max), z.points.max(400)).map_err(model_err)
}

fn measured(m: &Measured, f: fn(f64) -> f64) -> Value {
    json!({ "value": f(m.value), "error": if m.error.is_finite() { json!(f(m.error)) } else { Value::Null } })
}

/// Reflectance map over `z_range_nm` × `delta_range_mhz`.
pub fn cmd_spectrum(cfg: &LoadedConfig, out: &Path) -> Result<Outcome, CliError> {
    let zr = need(&cfg.run.z_range_nm, "z_range_nm", "spectrum")?;
    let dr = need(&cfg.run.delta_range_mhz, "delta_range_mhz", "spectrum")?;
    let (z_nm, d_mhz) = (zr.values(), dr.values());
    let zs: Vec<f64> = z_nm.iter().map(|&z| nm(z)).collect();
    let ds: Vec<f64> = d_mhz.iter().map(|&d| mhz(d)).collect();
    let mut grid = SpectrumGrid::synthesize(&cfg.model, &zs, &ds).map_err(|e| CliError::from_fit("spectrum", e))?;
    let noise = cfg.run.noise.unwrap_or(0.0);
    if noise > 0.0 {
        grid = grid.with_noise(noise, &mut ChaCha8Rng::seed_from_u64(cfg.run.seed));
    }
    let mut t = Table::new(&["z_nm", "delta_hz", "reflectance"]);
    for (i, z) in z_nm.iter().enumerate() {
        for (j, d) in d_mhz.iter().enumerate() {
            t.push_values(&[*z, d * 1e6, grid.reflectance[i][j]]);
        }
    }
    let crossings = crossings_in(&cfg.model, zr)?;
    let mut summary = vec![format!("{}x{} reflectance grid", zs.len(), ds.len())];
    let list: Vec<Value> = crossings
        .iter()
        .map(|c| {
            summary.push(format!("avoided crossing at z = {:.3} nm, gap {:.4} MHz", to_nm(c.z), to_mhz(c.gap)));
            json!({ "z_nm": to_nm(c.z), "gap_mhz": to_mhz(c.gap), "lower_branch": c.lower })
        })
        .collect();
    let files = vec![
        write_csv(&out.join("spectrum.csv"), &cfg.hash, &t)?,
        write_json(
            &out.join("spectrum.json"),
            &cfg.hash,
            json!({
                "command": "spectrum",
                "seed": cfg.run.seed,
                "noise": noise,
                "z_points": zs.len(),
                "delta_points": ds.len(),
                "crossings": list,
            }),
        )?,
    ];
    Ok(Outcome::ok(files, summary))
}

/// Optical spring and damping over `delta_range_mhz` at `z_nm`.
pub fn cmd_spring(cfg: &LoadedConfig, out: &Path) -> Result<Outcome, CliError> {
    let dr = need(&cfg.run.delta_range_mhz, "delta_range_mhz", "spring")?;
    let d_mhz = dr.values();
    let ds: Vec<f64> = d_mhz.iter().map(|&d| mhz(d)).collect();
    let z = cfg.z_dis();
    let sweep = spring_damping_sweep(&cfg.model, &cfg.drive, z, &ds).map_err(model_err)?;
    let mut t = Table::new(&["delta_hz", "dom_hz", "dgam_hz"]);
    for (d, r) in d_mhz.iter().zip(&sweep) {
        t.push_values(&[d * 1e6, to_hz(r.delta_omega), to_hz(r.delta_gamma)]);
    }
    let mech = &cfg.model.mech;
    let max_dom = sweep.iter().map(|r| r.delta_omega.abs()).fold(0.0, f64::max);
    let unstable = sweep.iter().filter(|r| mech.gamma_m + r.delta_gamma <= 0.0).count();
    let limit = weak_coupling_limit(mech);
    let mut files = vec![write_csv(&out.join("spring.csv"), &cfg.hash, &t)?];
    if cfg.drive.modulation.is_some() {
        let a = modulation_sweep(&cfg.model, &cfg.drive, z, &ds).map_err(model_err)?;
        let mut m = Table::new(&["delta_hz", "a_omega_hz"]);
        for (d, v) in d_mhz.iter().zip(&a) {
            m.push_values(&[d * 1e6, to_hz(*v)]);
        }
        files.push(write_csv(&out.join("modulation.csv"), &cfg.hash, &m)?);
    }
    files.push(write_json(
        &out.join("spring.json"),
        &cfg.hash,
        json!({
            "command": "spring",
            "z_nm": cfg.run.z_nm,
            "power_in_uw": cfg.drive.power_in * 1e6,
            "photons_at_drive_detuning": photon_number(&cfg.model, &cfg.drive, z).map_err(model_err)?,
            "max_abs_dom_hz": to_hz(max_dom),
            "weak_coupling_limit_hz": to_hz(limit),
            "weak_coupling": max_dom <= limit,
            "unstable_points": unstable,
        }),
    )?);
    let mut summary = vec![format!("{} detunings, max |dw|/2pi = {:.4} Hz", ds.len(), to_hz(max_dom))];
    if unstable > 0 {
        summary.push(format!("{unstable} detunings with negative net damping"));
    }
    Ok(Outcome::ok(files, summary))
}

/// Brownian spectrum at the drive detuning and `z_nm`.
pub fn cmd_psd(cfg: &LoadedConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.run.psd.clone().unwrap_or_default();
    let z = cfg.z_dis();
    let mech = &cfg.model.mech;
    let se = self_energy(&cfg.model, &cfg.drive, z, mech.omega_m).map_err(model_err)?;
    let center = mech.omega_m + se.delta_omega;
    let width = (mech.gamma_m + se.delta_gamma).abs().max(1e-3 * mech.gamma_m);
    let ws: Vec<f64> = (0..spec.points)
        .map(|k| center + width * spec.span_linewidths * (k as f64 / (spec.points - 1) as f64 - 0.5))
        .collect();
    let psd = brownian_psd(&cfg.model, &cfg.drive, z, &ws).map_err(model_err)?;
    let mut t = Table::new(&["omega_hz", "psd"]);
    for (w, v) in ws.iter().zip(&psd.values) {
        t.push(vec![Some(to_hz(*w)), *v]);
    }
    let peak = if psd.unstable {
        Value::Null
    } else {
        let y: Vec<f64> = psd.values.iter().map(|v| v.unwrap_or(0.0)).collect();
        match fit_lorentzian_peak(&ws, &y) {
            Ok(p) => json!({
                "center_hz": to_hz(p.center),
                "fwhm_hz": to_hz(p.fwhm),
                "area_over_2pi": p.area() / TWO_PI,
            }),
            Err(_) => Value::Null,
        }
    };
    let files = vec![
        write_csv(&out.join("psd.csv"), &cfg.hash, &t)?,
        write_json(
            &out.join("psd.json"),
            &cfg.hash,
            json!({
                "command": "psd",
                "z_nm": cfg.run.z_nm,
                "detuning_mhz": to_mhz(cfg.drive.detuning),
                "n_thermal": psd.n_thermal,
                "dom_hz": to_hz(se.delta_omega),
                "dgam_hz": to_hz(se.delta_gamma),
                "unstable": psd.unstable,
                "low_q": psd.low_q,
                "peak": peak,
            }),
        )?,
    ];
    if psd.unstable {
        return Ok(Outcome {
            files,
            summary: vec!["net damping is negative: the spectrum is undefined".into()],
            exit_code: 5,
        });
    }
    Ok(Outcome::ok(files, vec![format!("{} frequencies around the dressed resonance", ws.len())]))
}

/// Eigen-branches over `z_range_nm` and quadratic coefficients at every avoided crossing.
pub fn cmd_modes(cfg: &LoadedConfig, out: &Path) -> Result<Outcome, CliError> {
    let zr = need(&cfg.run.z_range_nm, "z_range_nm", "modes")?;
    let z_nm = zr.values();
    let zs: Vec<f64> = z_nm.iter().map(|&z| nm(z)).collect();
    let branches = track_branches(&cfg.model, &zs).map_err(model_err)?;
    let n = cfg.model.n_modes();
    let names: Vec<String> = std::iter::once("z_nm".to_string())
        .chain((0..n).map(|k| format!("branch_{k}_hz")))
        .collect();
    let mut t = Table::new(&names.iter().map(String::as_str).collect::<Vec<_>>());
    for (z, row) in z_nm.iter().zip(&branches) {
        t.push_values(&std::iter::once(*z).chain(row.iter().map(|&v| to_hz(v))).collect::<Vec<_>>());
    }
    let mut summary = Vec::new();
    let mut list = Vec::new();
    for c in crossings_in(&cfg.model, zr)? {
        let q = quadratic_coefficient(&cfg.model, c.z).map_err(model_err)?;
        let curv = to_mhz_per_nm2(q.pair_curvature);
        summary.push(format!(
            "crossing at z = {:.3} nm: gap {:.4} MHz, w''/2pi = {:.4} MHz/nm^2",
            to_nm(c.z),
            to_mhz(c.gap),
            curv
        ));
        list.push(json!({
            "z_nm": to_nm(c.z),
            "lower_branch": c.lower,
            "gap_mhz": to_mhz(c.gap),
            "t_mhz": 0.5 * to_mhz(c.gap),
            "curvature_mhz_per_nm2": curv,
            "branch_curvatures_mhz_per_nm2": q.branch_curvatures.iter().map(|&v| to_mhz_per_nm2(v)).collect::<Vec<_>>(),
        }));
    }
    let files = vec![
        write_csv(&out.join("modes.csv"), &cfg.hash, &t)?,
        write_json(&out.join("modes.json"), &cfg.hash, json!({ "command": "modes", "crossings": list }))?,
    ];
    Ok(Outcome::ok(files, summary))
}

fn parse_free(s: &str) -> Result<FreeParam, CliError> {
    match s {
        "z_dis" => Ok(FreeParam::ZDis),
        "power_in" => Ok(FreeParam::PowerIn),
        _ => match s.strip_prefix("slope_osc:") {
            Some(l) if !l.is_empty() => Ok(FreeParam::SlopeOsc(l.to_string())),
            _ => Err(CliError::config(
                "fit.free",
                format!("unknown parameter '{s}', expected z_dis, power_in or slope_osc:<label>"),
            )),
        },
    }
}

/// Static extraction, dynamics fit and drift subtraction, each run when its data file is configured.
pub fn cmd_fit(cfg: &LoadedConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.run.fit.clone().ok_or_else(|| CliError::config("fit", "required by fit"))?;
    if spec.grid_csv.is_none() && spec.dynamics_csv.is_none() && spec.drift_csv.is_none() {
        return Err(CliError::config("fit", "give at least one of grid_csv, dynamics_csv, drift_csv"));
    }
    let mut report = serde_json::Map::new();
    report.insert("command".into(), json!("fit"));
    let mut summary = Vec::new();
    let mut files: Vec<PathBuf> = Vec::new();

    if let Some(p) = &spec.grid_csv {
        let c = read_csv(&cfg.resolve(p), &["z_nm", "delta_hz", "reflectance"], &[])?;
        let rows: Vec<(f64, f64, f64)> = c.values.iter().map(|r| (nm(r[0].unwrap()), TWO_PI * r[1].unwrap(), r[2].unwrap())).collect();
        let grid = SpectrumGrid::from_long(&rows).map_err(|e| CliError::from_fit("grid_csv", e))?;
        let topo = spec.topology.as_ref().map_or_else(Topology::two_mode, |t| t.topology());
        let sp = extract_static_params(&grid, &topo).map_err(|e| CliError::from_fit("static", e))?;
        let label = |k: usize| {
            spec.labels
                .as_ref()
                .and_then(|l| l.get(k).cloned())
                .unwrap_or_else(|| format!("M{k}"))
        };
        let modes: Vec<Value> = sp
            .modes
            .iter()
            .enumerate()
            .map(|(k, m)| {
                json!({
                    "label": label(k),
                    "kappa_mhz": measured(&m.kappa, to_mhz),
                    "kappa_in_mhz": measured(&m.kappa_in, to_mhz),
                    "slope_dis_mhz_per_nm": measured(&m.slope_dis, to_mhz_per_nm),
                    "offset_mhz": measured(&m.offset, to_mhz),
                })
            })
            .collect();
        let crossings: Vec<Value> = sp
            .crossings
            .iter()
            .map(|c| {
                summary.push(format!(
                    "{}-{}: t/2pi = {:.4} MHz, phi = {:.3} rad",
                    label(c.pair.0),
                    label(c.pair.1),
                    to_mhz(c.t.value),
                    c.phi.value
                ));
                json!({
                    "pair": [label(c.pair.0), label(c.pair.1)],
                    "t_mhz": measured(&c.t, to_mhz),
                    "phi_rad": measured(&c.phi, |v| v),
                    "t_from_gap_mhz": to_mhz(c.t_from_gap),
                    "t_from_curvature_mhz": to_mhz(c.t_from_curvature),
                    "z_nm": to_nm(c.z),
                })
            })
            .collect();
        report.insert(
            "static".into(),
            json!({
                "modes": modes,
                "crossings": crossings,
                "slices_used": sp.slices_used,
                "warnings": sp.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            }),
        );
    }

    if let Some(p) = &spec.dynamics_csv {
        let free = spec.free.iter().map(|s| parse_free(s)).collect::<Result<Vec<_>, _>>()?;
        if free.is_empty() {
            return Err(CliError::config("fit.free", "dynamics_csv needs at least one free parameter"));
        }
        let c = read_csv(&cfg.resolve(p), &["delta_hz", "dom_hz", "dgam_hz"], &["dom_err_hz", "dgam_err_hz"])?;
        let pts: Vec<DynamicsPoint> = c
            .values
            .iter()
            .map(|r| DynamicsPoint {
                detuning: TWO_PI * r[0].unwrap(),
                delta_omega: TWO_PI * r[1].unwrap(),
                delta_gamma: TWO_PI * r[2].unwrap(),
                omega_err: r[3].map(|v| TWO_PI * v),
                gamma_err: r[4].map(|v| TWO_PI * v),
            })
            .collect();
        let fit = fit_dynamics(&pts, &cfg.model, &cfg.drive, cfg.z_dis(), &free).map_err(|e| CliError::from_fit("dynamics", e))?;
        let values: Vec<Value> = fit
            .values
            .iter()
            .map(|v| {
                let (unit, f): (&str, fn(f64) -> f64) = match v.param {
                    FreeParam::ZDis => ("nm", to_nm),
                    FreeParam::PowerIn => ("uw", |x| x * 1e6),
                    FreeParam::SlopeOsc(_) => ("mhz_per_nm", to_mhz_per_nm),
                };
                summary.push(format!("{} = {:.5} +- {:.5} {unit}", v.param, f(v.value), f(v.error)));
                json!({ "param": v.param.to_string(), "unit": unit, "value": f(v.value), "error": f(v.error) })
            })
            .collect();
        report.insert(
            "dynamics".into(),
            json!({
                "values": values,
                "weighted_rss": fit.rss,
                "iterations": fit.iterations,
                "warnings": fit.warnings.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            }),
        );
    }

    if let Some(p) = &spec.drift_csv {
        let c = read_csv(&cfg.resolve(p), &["delta_hz", "t_s", "fm_hz"], &[])?;
        let samples: Vec<DriftSample> = c
            .values
            .iter()
            .map(|r| DriftSample {
                detuning: r[0].unwrap(),
                time: r[1].unwrap(),
                frequency: r[2].unwrap(),
            })
            .collect();
        let (fwd, bwd) = split_sweep(&samples);
        let res = drift_subtract(&fwd, &bwd).map_err(|e| CliError::from_fit("drift", e))?;
        let mut t = Table::new(&["delta_hz", "t_s", "fm_hz"]);
        for s in &res.corrected {
            t.push_values(&[s.detuning, s.time, s.frequency]);
        }
        files.push(write_csv(&out.join("drift_corrected.csv"), &cfg.hash, &t)?);
        summary.push(format!("drift {:.4e} Hz/s from {} pairs", res.model.rate, res.model.pairs));
        report.insert(
            "drift".into(),
            json!({
                "rate_hz_per_s": res.model.rate,
                "rate_err_hz_per_s": if res.model.rate_err.is_finite() { json!(res.model.rate_err) } else { Value::Null },
                "intercept_hz": res.model.intercept,
                "pairs": res.model.pairs,
            }),
        );
    }
    files.insert(0, write_json(&out.join("fit.json"), &cfg.hash, Value::Object(report))?);
    Ok(Outcome::ok(files, summary))
}

/// Time-domain ringdowns against the self-energy over `delta_range_mhz` at `z_nm`.
pub fn cmd_oracle(cfg: &LoadedConfig, out: &Path, dump: bool) -> Result<Outcome, CliError> {
    let dr = need(&cfg.run.delta_range_mhz, "delta_range_mhz", "oracle")?;
    let d_mhz = dr.values();
    let ds: Vec<f64> = d_mhz.iter().map(|&d| mhz(d)).collect();
    let opts = cfg.run.oracle.clone().unwrap_or_default().options();
    let res = compare_sweep(&cfg.model, &cfg.drive, cfg.z_dis(), &ds, &opts, dump).map_err(CliError::from_oracle)?;
    let gm = cfg.model.mech.gamma_m;
    let limit = weak_coupling_limit(&cfg.model.mech);
    let mut t = Table::new(&[
        "delta_hz",
        "dom_sigma_hz",
        "dom_oracle_hz",
        "dgam_sigma_hz",
        "dgam_oracle_hz",
        "dom_dev_over_tol",
        "dgam_dev_over_tol",
        "pass",
        "unstable",
    ]);
    let mut files = Vec::new();
    let (mut failed, mut failed_stable, mut unstable, mut strong) = (0, 0, 0, 0);
    for (k, (p, traj)) in res.iter().enumerate() {
        let pr = p.predicted;
        let dev = |o: Option<f64>, s: f64| o.map(|v| (v - s) / tolerance(s, gm));
        t.push(vec![
            Some(d_mhz[k] * 1e6),
            Some(to_hz(pr.delta_omega)),
            p.delta_omega.map(to_hz),
            Some(to_hz(pr.delta_gamma)),
            p.delta_gamma.map(to_hz),
            dev(p.delta_omega, pr.delta_omega),
            dev(p.delta_gamma, pr.delta_gamma),
            Some(if p.pass { 1.0 } else { 0.0 }),
            Some(if p.unstable { 1.0 } else { 0.0 }),
        ]);
        failed += usize::from(!p.pass);
        failed_stable += usize::from(!p.pass && !p.unstable);
        unstable += usize::from(p.unstable);
        strong += usize::from(pr.delta_omega.abs() > limit);
        if let Some(tr) = traj {
            let n = cfg.model.n_modes();
            let mut cols = vec!["t_s".to_string()];
            for i in 0..n {
                cols.push(format!("re_a{i}"));
                cols.push(format!("im_a{i}"));
            }
            cols.extend(["re_c".to_string(), "im_c".to_string()]);
            let mut tt = Table::new(&cols.iter().map(String::as_str).collect::<Vec<_>>());
            for ((time, a), c) in tr.times.iter().zip(&tr.optical_amps).zip(&tr.mech_amp) {
                let mut row = vec![*time];
                for v in a {
                    row.extend([v.re, v.im]);
                }
                row.extend([c.re, c.im]);
                tt.push_values(&row);
            }
            files.push(write_csv(&out.join(format!("trajectory_{k:03}.csv")), &cfg.hash, &tt)?);
        }
    }
    files.insert(0, write_csv(&out.join("oracle.csv"), &cfg.hash, &t)?);
    let pass = failed == 0;
    files.insert(
        1,
        write_json(
            &out.join("oracle.json"),
            &cfg.hash,
            json!({
                "command": "oracle",
                "z_nm": cfg.run.z_nm,
                "points": res.len(),
                "failed": failed,
                "unstable": unstable,
                "weak_coupling": strong == 0,
                "pass": pass,
            }),
        )?,
    );
    let mut summary = vec![format!("{} of {} detunings agree within max(5%, 0.01 gamma_m)", res.len() - failed, res.len())];
    if strong > 0 {
        summary.push(format!("warning: {strong} detunings exceed the weak-coupling limit"));
    }
    if unstable > 0 {
        summary.push(format!("{unstable} detunings anti-damped (net damping <= 0)"));
    }
    let exit_code = if failed_stable > 0 {
        4
    } else if unstable > 0 {
        5
    } else {
        0
    };
    Ok(Outcome {
        files,
        summary,
        exit_code,
    })
}
