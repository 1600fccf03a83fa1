//! The four pipeline commands behind the executable. Each one reads a
//! [`RunConfig`] (or analysis inputs), writes CSV/SVG/JSON files into an
//! output directory and returns the manifest describing them.

use serde::Serialize;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::emission::{decay_rate, figure1d_curves, intensity, Dipole, EmitterScene};
use crate::error::{Error, Result};
use crate::inference::{
    analyze_sweep, parse_lifetime_table, reconstruct_phase_map, lifetime_table_report, EstimateOptions, SweepPoint,
};
use crate::modesolver::{mode_weights, ModeProfile};
use crate::opticalstack::{lumped_reflectivity, reflectivity_sweep};
use crate::output::{csv_string, read_numeric_csv, svg_line_plot, Manifest, OutputDir, Series};
use crate::synthlab::{generate_sweep, DecayHistogram, PhaseCalibration};

pub const SIMULATE_MANIFEST: &str = "manifest.json";

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s.into_bytes()
}

/// Scene of the configured emitter, rescaled so that its centre rate is the
/// configured one; used for the offset curves.
fn centred_scene(profile: &ModeProfile, scene: &EmitterScene) -> Result<EmitterScene> {
    let (_, wy_here) = mode_weights(profile, scene.y0_nm)?;
    let (_, wy_centre) = mode_weights(profile, 0.0)?;
    if wy_here <= 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(EmitterScene { gamma_y0: scene.gamma_y0 * wy_centre / wy_here, ..*scene })
}

#[derive(Serialize)]
struct ModeSummary {
    n_eff: f64,
    group_index: f64,
    slab_index: f64,
    k_rad_per_nm: f64,
    grid_points: usize,
    y0_nm: f64,
    weight_x: f64,
    weight_y: f64,
    figure_r_t: f64,
}

pub fn run_mode(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let profile = cfg.solve_mode()?;
    let (scene, w) = cfg.scene(&profile)?;
    let r = cfg.figure.r_t;
    let mut dir = OutputDir::create(out, "mode", Some(cfg.seed), Some(cfg.hash()))?;

    let rows = profile.csv_rows();
    dir.write("mode_profile.csv", "mode_profile", csv_string(&["y_nm", "e_x", "e_y"], &rows).as_bytes())?;
    dir.write(
        "mode_profile.svg",
        "plot",
        svg_line_plot(
            "Quasi-TE0 field components",
            "y (nm)",
            "field (a.u.)",
            &[
                Series { label: "e_y", points: rows.iter().map(|r| (r[0], r[2])).collect() },
                Series { label: "e_x", points: rows.iter().map(|r| (r[0], r[1])).collect() },
            ],
        )
        .as_bytes(),
    )?;

    let curves = figure1d_curves(&profile, &centred_scene(&profile, &scene)?, r, cfg.figure.n_offsets)?;
    let rows: Vec<[f64; 3]> = curves.iter().map(|c| [c.y0_nm, c.nu_i, c.nu_gamma]).collect();
    dir.write("fig1d.csv", "visibility_vs_offset", csv_string(&["y0_nm", "nu_I", "nu_gamma"], &rows).as_bytes())?;
    dir.write(
        "fig1d.svg",
        "plot",
        svg_line_plot(
            &format!("Visibilities across the waveguide, |r_T| = {r}"),
            "offset y0 (nm)",
            "visibility",
            &[
                Series { label: "nu_I", points: rows.iter().map(|r| (r[0], r[1])).collect() },
                Series { label: "nu_gamma", points: rows.iter().map(|r| (r[0], r[2])).collect() },
            ],
        )
        .as_bytes(),
    )?;

    let n = cfg.figure.n_phase;
    let rows: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let phi = std::f64::consts::PI * i as f64 / n as f64;
            Ok([phi, decay_rate(&scene, r, phi, Dipole::Y)?, intensity(&scene, w, r, phi, Dipole::Y)?])
        })
        .collect::<Result<_>>()?;
    dir.write(
        "phase_curve.csv",
        "rate_vs_phase",
        csv_string(&["phi_rad", "gamma_total", "intensity_rel"], &rows).as_bytes(),
    )?;
    dir.write(
        "phase_curve.svg",
        "plot",
        svg_line_plot(
            "Y-dipole radiative rate versus mirror phase",
            "phi (rad)",
            "rate (1/ns)",
            &[Series { label: "Gamma_total", points: rows.iter().map(|r| (r[0], r[1])).collect() }],
        )
        .as_bytes(),
    )?;

    let summary = ModeSummary {
        n_eff: profile.n_eff,
        group_index: profile.group_index,
        slab_index: profile.slab_index,
        k_rad_per_nm: profile.k,
        grid_points: cfg.grid_points,
        y0_nm: scene.y0_nm,
        weight_x: w.0,
        weight_y: w.1,
        figure_r_t: r,
    };
    dir.write("mode.json", "summary", &json_bytes(&summary))?;
    Ok(dir.finish("manifest_mode.json")?.1)
}

#[derive(Serialize)]
struct MirrorSummary {
    bragg_wavelength_nm: f64,
    mean_index: f64,
    min_reflectance_900_1000: Option<f64>,
    max_flux_error: f64,
    lumped_r_t_re: f64,
    lumped_r_t_im: f64,
}

pub fn run_mirror(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let spec = &cfg.photonic_crystal;
    let m = &cfg.mirror_sweep;
    let sweep = reflectivity_sweep(spec, m.start_nm, m.stop_nm, m.n_points)?;
    let mut dir = OutputDir::create(out, "mirror", Some(cfg.seed), Some(cfg.hash()))?;
    let rows: Vec<[f64; 4]> = sweep.iter().map(|p| [p.lambda_nm, p.r.re, p.r.im, p.r.norm_sqr()]).collect();
    dir.write("mirror.csv", "mirror_sweep", csv_string(&["lambda_nm", "r_re", "r_im", "R_power"], &rows).as_bytes())?;
    dir.write(
        "mirror.svg",
        "plot",
        svg_line_plot(
            "Photonic-crystal mirror reflectance",
            "wavelength (nm)",
            "|r_M|^2",
            &[Series { label: "R", points: rows.iter().map(|r| (r[0], r[3])).collect() }],
        )
        .as_bytes(),
    )?;
    let band: Vec<f64> = sweep
        .iter()
        .filter(|p| (900.0..=1000.0).contains(&p.lambda_nm))
        .map(|p| p.r.norm_sqr())
        .collect();
    let r_t = lumped_reflectivity(&cfg.mirror)?;
    let summary = MirrorSummary {
        bragg_wavelength_nm: spec.bragg_wavelength(),
        mean_index: spec.mean_index(),
        min_reflectance_900_1000: band.iter().cloned().reduce(f64::min),
        max_flux_error: sweep.iter().map(|p| (p.r.norm_sqr() + p.transmittance - 1.0).abs()).fold(0.0, f64::max),
        lumped_r_t_re: r_t.re,
        lumped_r_t_im: r_t.im,
    };
    dir.write("mirror.json", "summary", &json_bytes(&summary))?;
    Ok(dir.finish("manifest_mirror.json")?.1)
}

#[derive(Serialize)]
struct Truth {
    r_t: f64,
    nu_i: f64,
    nu_gamma: f64,
    y0_nm: f64,
    gamma_rad: Vec<f64>,
}

pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let profile = cfg.solve_mode()?;
    let (scene, w) = cfg.scene(&profile)?;
    let r = cfg.r_t_mag();
    let volts = cfg.sweep.voltages();
    let records = generate_sweep(&scene, w, r, &cfg.calibration, &volts, &cfg.sweep.settings(), cfg.seed)?;
    let mut dir = OutputDir::create(out, "simulate", Some(cfg.seed), Some(cfg.hash()))?;
    dir.write("config.json", "config", cfg.to_json().as_bytes())?;
    let rows: Vec<[f64; 3]> = records.iter().map(|r| [r.voltage, r.phi_rad, r.intensity_counts]).collect();
    dir.write("sweep.csv", "sweep", csv_string(&["voltage", "phi_rad", "intensity_counts"], &rows).as_bytes())?;
    for (i, rec) in records.iter().enumerate() {
        let rows: Vec<[f64; 2]> = rec
            .histogram
            .bin_centers()
            .into_iter()
            .zip(&rec.histogram.counts)
            .map(|(t, &c)| [t, c as f64])
            .collect();
        dir.write(&format!("hist/hist_{i:03}.csv"), "histogram", csv_string(&["t_ns", "counts"], &rows).as_bytes())?;
    }
    dir.write(
        "sweep.svg",
        "plot",
        svg_line_plot(
            "Synthetic intensity sweep",
            "phi (rad)",
            "counts",
            &[Series { label: "intensity", points: rows.iter().map(|r| (r[1], r[2])).collect() }],
        )
        .as_bytes(),
    )?;
    let truth = Truth {
        r_t: r,
        nu_i: crate::emission::visibility_intensity_mixed(r, w)?,
        nu_gamma: crate::emission::scene_visibility_rate(&scene, r)?,
        y0_nm: scene.y0_nm,
        gamma_rad: records.iter().map(|r| r.gamma_rad).collect(),
    };
    dir.write("truth.json", "truth", &json_bytes(&truth))?;
    Ok(dir.finish(SIMULATE_MANIFEST)?.1)
}

/// What `analyze` reads.
#[derive(Debug, Clone)]
pub enum AnalyzeInput {
    /// Output directory manifest written by `simulate`.
    Manifest(PathBuf),
    /// `voltage,phi_rad,intensity_counts` CSV, optionally with `t_ns,counts`
    /// histograms in sweep order.
    Sweep { sweep: PathBuf, histograms: Vec<PathBuf>, config: Option<RunConfig> },
    /// Lifetime-modulation table.
    Lifetimes { table: PathBuf, config: Option<RunConfig> },
    /// Reference-line sweep `voltage,intensity_counts` for the phase map.
    Reference(PathBuf),
}

/// Histogram from a `t_ns,counts` CSV of uniform bin centres.
pub fn read_histogram(path: &Path) -> Result<DecayHistogram> {
    let rows = read_numeric_csv(path, &["t_ns", "counts"])?;
    if rows.len() < 2 {
        return Err(Error::MalformedRow { line: rows.len() + 1, reason: "histogram needs two bins".into() });
    }
    let dt = rows[1][0] - rows[0][0];
    let mut edges: Vec<f64> = rows.iter().map(|r| r[0] - 0.5 * dt).collect();
    edges.push(rows[rows.len() - 1][0] + 0.5 * dt);
    let counts = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r[1] >= 0.0 && r[1].fract() == 0.0 {
                Ok(r[1] as u64)
            } else {
                Err(Error::MalformedRow { line: i + 2, reason: format!("count {} is not a non-negative integer", r[1]) })
            }
        })
        .collect::<Result<Vec<u64>>>()?;
    DecayHistogram::from_counts(edges, counts)
}

fn read_sweep(path: &Path, histograms: &[PathBuf]) -> Result<Vec<SweepPoint>> {
    let rows = read_numeric_csv(path, &["voltage", "phi_rad", "intensity_counts"])?;
    if !histograms.is_empty() && histograms.len() != rows.len() {
        return Err(Error::InvalidParameter(format!(
            "{} histograms for {} sweep points",
            histograms.len(),
            rows.len()
        )));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(SweepPoint {
                voltage: r[0],
                phi_rad: r[1],
                intensity_counts: r[2],
                histogram: histograms.get(i).map(|p| read_histogram(p)).transpose()?,
            })
        })
        .collect()
}

fn estimate_options(cfg: Option<&RunConfig>) -> EstimateOptions {
    EstimateOptions { leaky: cfg.map(|c| c.emitter.leaky).unwrap_or_default(), ..Default::default() }
}

pub fn run_analyze(input: &AnalyzeInput, out: &Path) -> Result<Manifest> {
    match input {
        AnalyzeInput::Manifest(path) => {
            let manifest = Manifest::load(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let cfg_entry = manifest
                .files_with_role("config")
                .next()
                .ok_or_else(|| Error::InvalidParameter("manifest lists no config".into()))?;
            let cfg = RunConfig::load(&base.join(&cfg_entry.path))?;
            let sweep = manifest
                .files_with_role("sweep")
                .next()
                .ok_or_else(|| Error::InvalidParameter("manifest lists no sweep".into()))?;
            let hists: Vec<PathBuf> = manifest.files_with_role("histogram").map(|f| base.join(&f.path)).collect();
            let points = read_sweep(&base.join(&sweep.path), &hists)?;
            analyze_points(&points, Some(&cfg), out, manifest.seed, manifest.config_hash.clone())
        }
        AnalyzeInput::Sweep { sweep, histograms, config } => {
            let points = read_sweep(sweep, histograms)?;
            analyze_points(&points, config.as_ref(), out, None, config.as_ref().map(|c| c.hash()))
        }
        AnalyzeInput::Lifetimes { table, config } => {
            let file = std::fs::File::open(table)
                .map_err(|e| Error::InvalidParameter(format!("{}: {e}", table.display())))?;
            let rows = parse_lifetime_table(file)?;
            let profile = config.as_ref().map(|c| c.solve_mode()).transpose()?;
            let report = lifetime_table_report(&rows, profile.as_ref(), &estimate_options(config.as_ref()))?;
            let mut dir = OutputDir::create(out, "analyze", None, config.as_ref().map(|c| c.hash()))?;
            let mut text = String::from(
                "qd,lambda_nm,rate_contrast,rate_contrast_sigma,nu_gamma_tabulated,within_1sigma,nu_I,r_T_lower_bound,beta_y0_min,beta_y0_max\n",
            );
            for e in &report {
                let (b0, b1) = e.beta_y0_range.map_or((String::new(), String::new()), |b| (b.0.to_string(), b.1.to_string()));
                text.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    e.qd, e.lambda_nm, e.rate_contrast, e.rate_contrast_sigma, e.nu_gamma_tabulated,
                    e.within_1sigma, e.nu_i, e.r_t_lower_bound, b0, b1
                ));
            }
            dir.write("lifetime_report.csv", "lifetimes", text.as_bytes())?;
            dir.write("lifetime_report.json", "report", &json_bytes(&report))?;
            Ok(dir.finish("manifest_analyze.json")?.1)
        }
        AnalyzeInput::Reference(path) => {
            let rows = read_numeric_csv(path, &["voltage", "intensity_counts"])?;
            let v: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let i: Vec<f64> = rows.iter().map(|r| r[1]).collect();
            let map = reconstruct_phase_map(&v, &i)?;
            let mut dir = OutputDir::create(out, "analyze", None, None)?;
            if let PhaseCalibration::Table { knots } = &map.calibration {
                let rows: Vec<[f64; 2]> = knots.iter().map(|k| [k.0, k.1]).collect();
                dir.write("phase_map.csv", "phase_map", csv_string(&["voltage", "phi_rad"], &rows).as_bytes())?;
            }
            dir.write("phase_map.json", "report", &json_bytes(&map))?;
            Ok(dir.finish("manifest_analyze.json")?.1)
        }
    }
}

fn analyze_points(
    points: &[SweepPoint],
    cfg: Option<&RunConfig>,
    out: &Path,
    seed: Option<u64>,
    config_hash: Option<String>,
) -> Result<Manifest> {
    let profile = cfg.map(|c| c.solve_mode()).transpose()?;
    let analysis = analyze_sweep(points, profile.as_ref(), &estimate_options(cfg))?;
    let mut dir = OutputDir::create(out, "analyze", seed, config_hash)?;
    dir.write("report.json", "report", &json_bytes(&analysis))?;
    let rows: Vec<[f64; 6]> = analysis
        .points
        .iter()
        .map(|p| [p.voltage, p.phi_rad, p.gamma_rad, p.gamma_rad_sigma, p.gamma_nrad, p.gamma_nrad_sigma])
        .collect();
    if !rows.is_empty() {
        dir.write(
            "point_fits.csv",
            "point_fits",
            csv_string(
                &["voltage", "phi_rad", "gamma_rad", "gamma_rad_sigma", "gamma_nrad", "gamma_nrad_sigma"],
                &rows,
            )
            .as_bytes(),
        )?;
        dir.write(
            "rates.svg",
            "plot",
            svg_line_plot(
                "Fitted decay rates versus phase",
                "phi (rad)",
                "rate (1/ns)",
                &[
                    Series { label: "gamma_rad", points: rows.iter().map(|r| (r[1], r[2])).collect() },
                    Series { label: "gamma_nrad", points: rows.iter().map(|r| (r[1], r[4])).collect() },
                ],
            )
            .as_bytes(),
        )?;
    }
    if let Some(est) = &analysis.estimate {
        let rows: Vec<[f64; 3]> = est.feasible_set.iter().map(|p| [p.r_t, p.beta_y0, p.y0_nm]).collect();
        dir.write("feasible_set.csv", "feasible_set", csv_string(&["r_T", "beta_y0", "y0_nm"], &rows).as_bytes())?;
    }
    Ok(dir.finish("manifest_analyze.json")?.1)
}
