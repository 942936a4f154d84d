//! `bsv-modes`: command-line front end.
//!
//! Status JSON goes to standard output; logs and progress go to standard
//! error. Exit codes: 0 success, 1 invalid input, 2 numerical failure,
//! 3 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bsv_modes::config::RunConfig;
use bsv_modes::io::{self, write_atomic, write_json};
use bsv_modes::kernel::build_kernel;
use bsv_modes::schmidt::decompose_matrix;
use bsv_modes::sweep::{
    envelope_summary, narrowing_from_sweep, point_profile, prepare_sweep, PointCache, PreparedSweep, RunOptions,
    SweepResult, SweepSpec,
};
use bsv_modes::{svg, validate, Error, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

/// Narrowing fits use constructive peaks beyond this gap (m).
const NARROWING_MIN_L: f64 = 0.07;

#[derive(Parser)]
#[command(name = "bsv-modes", version, about = "Angular Schmidt modes of a two-crystal parametric amplifier")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (default: available parallelism).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Validate and print the resolved configuration without writing files.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the two-photon amplitude at `sweep.L`.
    Kernel,
    /// Schmidt spectrum and modes at `sweep.L`.
    Schmidt,
    /// Scan the gap over `sweep.L_start..sweep.L_stop`.
    Sweep,
    /// Far-field intensity profile at `sweep.L` and gain `gain.G`.
    Profile,
    /// Compare the mode-by-mode gain model with direct propagation.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Relative tolerance on the mean photon number.
    #[arg(long, default_value_t = validate::Tolerances::default().photons)]
    photons_tol: f64,
    /// Absolute tolerance on g².
    #[arg(long, default_value_t = validate::Tolerances::default().g2)]
    g2_tol: f64,
    /// Tolerance on the symplectic residual.
    #[arg(long, default_value_t = validate::Tolerances::default().symplectic)]
    symplectic_tol: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BSV_MODES_LOG", "info"))
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    match run(&cli) {
        Ok(status) => {
            println!("{}", status);
            ExitCode::SUCCESS
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            println!(
                "{}",
                json!({"status": "error", "command": name, "exit_code": code, "message": e.to_string()})
            );
            ExitCode::from(code as u8)
        }
        Err(Failure::Check(report)) => {
            println!("{}", report);
            ExitCode::from(2)
        }
    }
}

enum Failure {
    Error(Error),
    /// A check ran to completion and did not pass.
    Check(Value),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Kernel => "kernel",
        Command::Schmidt => "schmidt",
        Command::Sweep => "sweep",
        Command::Profile => "profile",
        Command::Validate(_) => "validate",
    }
}

fn run(cli: &Cli) -> std::result::Result<Value, Failure> {
    let g = &cli.global;
    if let Command::Validate(args) = &cli.command {
        return cmd_validate(args, g.dry_run);
    }
    let mut config = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &g.out {
        config.output.directory = out.clone();
        config.validate()?;
    }
    if g.jobs == Some(0) {
        return Err(Error::validation("--jobs", "must be >= 1").into());
    }
    if g.dry_run {
        return Ok(json!({
            "status": "ok",
            "command": command_name(&cli.command),
            "dry_run": true,
            "config": config,
        }));
    }
    let out = config.output.directory.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let options = RunOptions { jobs: g.jobs };
    let status = match cli.command {
        Command::Kernel => cmd_kernel(&config, &out)?,
        Command::Schmidt => cmd_schmidt(&config, &out)?,
        Command::Sweep => cmd_sweep(&config, &out, options)?,
        Command::Profile => cmd_profile(&config, &out, options)?,
        Command::Validate(_) => unreachable!(),
    };
    Ok(status)
}

fn file_list(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn write_text(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    write_atomic(&path, text.as_bytes())?;
    written.push(path);
    Ok(())
}

fn write_value(path: PathBuf, value: &Value, written: &mut Vec<PathBuf>) -> Result<()> {
    write_json(&path, value)?;
    written.push(path);
    Ok(())
}

fn cmd_kernel(config: &RunConfig, out: &Path) -> Result<Value> {
    let l = config.sweep.l;
    let geometry = config.geometry_at(l)?;
    let grid = config.angular_grid()?;
    let kernel = build_kernel(&geometry, &grid, config.geometry.crystals)?;
    log::info!("kernel at L = {:.3} mm, {} points", l * 1e3, grid.n_points());
    let meta = json!({
        "L": l,
        "n_points": grid.n_points(),
        "theta_max": grid.theta_max(),
        "quadrature": grid.quadrature(),
        "crystals": config.geometry.crystals,
        "pump_fwhm": geometry.pump_fwhm(),
        "sigma": geometry.sigma(),
        "k_p": geometry.k_p(),
        "delta_k": geometry.delta_k(),
        "interference_period": geometry.interference_period(),
        "frobenius_norm": kernel.norm,
    });
    let mut written = Vec::new();
    write_text(out.join("kernel.csv"), &io::kernel_csv(&kernel), &mut written)?;
    write_value(out.join("kernel.json"), &meta, &mut written)?;
    Ok(json!({"status": "ok", "command": "kernel", "files": file_list(&written), "L": l}))
}

fn cmd_schmidt(config: &RunConfig, out: &Path) -> Result<Value> {
    let l = config.sweep.l;
    let geometry = config.geometry_at(l)?;
    let grid = config.angular_grid()?;
    let kernel = build_kernel(&geometry, &grid, config.geometry.crystals)?;
    let d = decompose_matrix(&kernel.weighted, &grid, config.policy(), config.schmidt.solver)?;
    log::info!("L = {:.3} mm: K = {:.4}, {} modes retained", l * 1e3, d.schmidt_number, d.n_modes());
    let meta = json!({
        "L": l,
        "schmidt_number": d.schmidt_number,
        "retained": d.truncation.retained,
        "total": d.truncation.total,
        "discarded_mass": d.truncation.discarded_mass,
        "orthonormality_error": d.orthonormality_error(),
    });
    let mut written = Vec::new();
    write_text(out.join("spectrum.csv"), &io::spectrum_csv(&d), &mut written)?;
    write_text(
        out.join("modes.csv"),
        &io::modes_csv(&d, config.output.modes_to_write),
        &mut written,
    )?;
    write_value(out.join("schmidt.json"), &meta, &mut written)?;
    Ok(json!({
        "status": "ok",
        "command": "schmidt",
        "files": file_list(&written),
        "L": l,
        "schmidt_number": d.schmidt_number,
    }))
}

fn cache_for(config: &RunConfig) -> Result<Option<PointCache<f64>>> {
    match &config.sweep.cache_dir {
        Some(dir) => {
            bsv_modes::sweep::ensure_cache_dir(dir)?;
            Ok(Some(PointCache::with_spill(dir)))
        }
        None => Ok(None),
    }
}

fn peaks_json(peaks: &[bsv_modes::peaks::Peak<f64>]) -> Value {
    Value::Array(peaks.iter().map(|p| json!({"L": p.position, "value": p.value})).collect())
}

fn sweep_summary(config: &RunConfig, r: &SweepResult<f64>) -> Value {
    let envelope = envelope_summary(r).ok().map(|e| {
        json!({
            "values": e.values,
            "positions": e.positions,
            "argmax": e.argmax,
            "rising_run": e.rising_run,
            "interior_maximum": e.interior_maximum(),
        })
    });
    let narrowing = narrowing_from_sweep(r, NARROWING_MIN_L).ok();
    let min_m_t = r
        .intensity_peaks
        .iter()
        .filter_map(|p| r.points.iter().find(|q| q.l == p.position))
        .map(|q| q.m_t)
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))));
    json!({
        "schema_version": bsv_modes::config::SCHEMA_VERSION,
        "gain_G": r.gain_g,
        "coupling": r.coupling,
        "m_l": config.gain.m_l,
        "transverse_dims": r.transverse_dims,
        "n_points": r.points.len(),
        "failures": r.failures,
        "period_estimate_m": r.period_estimate.map(|p| p.mean),
        "period_std_m": r.period_estimate.map(|p| p.std),
        "period_n_peaks": r.period_estimate.map(|p| p.n_peaks),
        "period_estimate_g2_m": r.period_estimate_g2.map(|p| p.mean),
        "intensity_peaks": peaks_json(&r.intensity_peaks),
        "intensity_minima": peaks_json(&r.intensity_minima),
        "g2_peaks": peaks_json(&r.g2_peaks),
        "min_m_t_at_intensity_peak": min_m_t,
        "envelope": envelope,
        "narrowing": narrowing,
    })
}

fn cmd_sweep(config: &RunConfig, out: &Path, options: RunOptions) -> Result<Value> {
    let setup = config.sweep_setup()?;
    let cache = cache_for(config)?;
    let prepared = prepare_sweep(&setup, &config.sweep_spec(), cache.as_ref(), options)?;
    let r = prepared.evaluate(config.gain.gain_g, config.gain_settings(), config.gain.coupling)?;
    if r.points.is_empty() {
        return Err(Error::Numerical(format!("all {} sweep points failed", r.failures.len())));
    }
    let summary = sweep_summary(config, &r);
    let mut written = Vec::new();
    write_text(out.join("sweep.csv"), &io::sweep_csv(&r), &mut written)?;
    write_value(out.join("sweep_summary.json"), &summary, &mut written)?;

    let ls: Vec<f64> = r.points.iter().map(|p| p.l).collect();
    if config.output.svg {
        let g2: Vec<f64> = r.points.iter().map(|p| p.g2).collect();
        let intensity: Vec<f64> = r.points.iter().map(|p| p.total_photons).collect();
        let g2_marks: Vec<usize> = r.g2_peaks.iter().map(|p| p.index).collect();
        let i_marks: Vec<usize> = r.intensity_peaks.iter().map(|p| p.index).collect();
        let g2_svg = svg::render(&svg::Plot {
            title: &format!("g2 vs gap, G = {}", r.gain_g),
            x_label: "L (mm)",
            y_label: "g2",
            x_scale: 1e3,
            y_scale: 1.0,
            xs: &ls,
            ys: &g2,
            markers: &g2_marks,
        });
        let i_svg = svg::render(&svg::Plot {
            title: &format!("Signal photon number vs gap, G = {}", r.gain_g),
            x_label: "L (mm)",
            y_label: "photons per mode set",
            x_scale: 1e3,
            y_scale: 1.0,
            xs: &ls,
            ys: &intensity,
            markers: &i_marks,
        });
        write_text(out.join("g2_vs_L.svg"), &g2_svg, &mut written)?;
        write_text(out.join("intensity_vs_L.svg"), &i_svg, &mut written)?;
    }
    for &target in &config.output.profile_l {
        let Some(point) = nearest_point(&prepared, target) else {
            continue;
        };
        let g_eff = prepared.effective_gain(point, config.gain.gain_g, config.gain.coupling);
        let profile = point_profile(point, g_eff)?;
        let stem = format!("profile_L{:07.3}mm", point.l * 1e3);
        let theta = setup.grid.theta();
        write_text(out.join(format!("{stem}.csv")), &io::profile_csv(theta, &profile), &mut written)?;
        if config.output.svg {
            let plot = svg::render(&svg::Plot {
                title: &format!("Far field at L = {:.1} mm", point.l * 1e3),
                x_label: "theta (mrad)",
                y_label: "intensity",
                x_scale: 1e3,
                y_scale: 1.0,
                xs: theta,
                ys: &profile,
                markers: &[],
            });
            write_text(out.join(format!("{stem}.svg")), &plot, &mut written)?;
        }
    }
    log::info!(
        "sweep done: {} points, {} failures, period {}",
        r.points.len(),
        r.failures.len(),
        r.period_estimate
            .map_or("n/a".to_string(), |p| format!("{:.2} mm", p.mean * 1e3))
    );
    Ok(json!({
        "status": "ok",
        "command": "sweep",
        "files": file_list(&written),
        "n_points": r.points.len(),
        "n_failures": r.failures.len(),
        "period_estimate_m": r.period_estimate.map(|p| p.mean),
    }))
}

fn nearest_point(prepared: &PreparedSweep<f64>, target: f64) -> Option<&bsv_modes::sweep::PreparedPoint<f64>> {
    prepared
        .points
        .iter()
        .min_by(|a, b| {
            (a.l - target)
                .abs()
                .partial_cmp(&(b.l - target).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|p| p.as_ref())
}

fn cmd_profile(config: &RunConfig, out: &Path, options: RunOptions) -> Result<Value> {
    let l = config.sweep.l;
    let setup = config.sweep_setup()?;
    let spec = SweepSpec {
        l_start: l,
        l_stop: l,
        l_step: config.sweep.l_step,
    };
    let prepared = prepare_sweep(&setup, &spec, None, options)?;
    if let Some(f) = prepared.failures.first() {
        // Redo the point directly so the original error type (and exit code) surfaces.
        let geometry = config.geometry_at(l)?;
        build_kernel(&geometry, &setup.grid, setup.crystals)?;
        return Err(Error::Numerical(f.message.clone()));
    }
    let r = prepared.evaluate(config.gain.gain_g, config.gain_settings(), config.gain.coupling)?;
    let Some(p) = r.points.first() else {
        let message = r.failures.first().map_or("profile failed".to_string(), |f| f.message.clone());
        return Err(Error::Numerical(message));
    };
    let point = &prepared.points[0];
    let g_eff = prepared.effective_gain(point, config.gain.gain_g, config.gain.coupling);
    let profile = point_profile(point, g_eff)?;
    let theta = setup.grid.theta();
    let meta = json!({
        "L": l,
        "gain_G": config.gain.gain_g,
        "effective_gain": g_eff,
        "coupling": config.gain.coupling,
        "total_photons": p.total_photons,
        "g2": p.g2,
        "k_eff_spatial": p.k_eff_spatial,
        "m_t": p.m_t,
        "schmidt_number": p.schmidt_number,
        "fwhm_theta": p.fwhm_theta,
        "central_dip": p.central_dip,
    });
    let mut written = Vec::new();
    write_text(out.join("profile.csv"), &io::profile_csv(theta, &profile), &mut written)?;
    write_value(out.join("profile.json"), &meta, &mut written)?;
    if config.output.svg {
        let plot = svg::render(&svg::Plot {
            title: &format!("Far field at L = {:.1} mm", l * 1e3),
            x_label: "theta (mrad)",
            y_label: "intensity",
            x_scale: 1e3,
            y_scale: 1.0,
            xs: theta,
            ys: &profile,
            markers: &[],
        });
        write_text(out.join("profile.svg"), &plot, &mut written)?;
    }
    Ok(json!({
        "status": "ok",
        "command": "profile",
        "files": file_list(&written),
        "fwhm_theta": p.fwhm_theta,
        "central_dip": p.central_dip,
    }))
}

fn cmd_validate(args: &ValidateArgs, dry_run: bool) -> std::result::Result<Value, Failure> {
    let tolerances = validate::Tolerances {
        photons: args.photons_tol,
        g2: args.g2_tol,
        symplectic: args.symplectic_tol,
    };
    for (name, v) in [
        ("--photons-tol", tolerances.photons),
        ("--g2-tol", tolerances.g2),
        ("--symplectic-tol", tolerances.symplectic),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::validation(name, format!("must be finite and >= 0, got {v}")).into());
        }
    }
    if dry_run {
        return Ok(json!({"status": "ok", "command": "validate", "dry_run": true, "tolerances": tolerances}));
    }
    let report = validate::run(tolerances)?;
    let worst = report.worst_case();
    let status = json!({
        "status": if report.passed { "ok" } else { "failed" },
        "command": "validate",
        "passed": report.passed,
        "tolerances": report.tolerances,
        "grid_sizes": report.grid_sizes,
        "gains": report.gains,
        "n_cases": report.cases.len(),
        "worst_case": worst,
    });
    if report.passed {
        log::info!("validate: {} cases passed", report.cases.len());
        Ok(status)
    } else {
        eprintln!(
            "validate failed: worst case seed {} size {} G {}: photon error {:.3e}, g2 error {:.3e}, symplectic {:.3e}",
            worst.seed, worst.size, worst.gain_g, worst.photons_error, worst.g2_error, worst.symplectic_residual
        );
        Err(Failure::Check(status))
    }
}
