//! Command-line front end: scaling sweeps, recovery studies, rigidity
//! sweeps, curvature reports, single minimizations, and plotting.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use neplate::experiments::{
    emit_plot, run_geometry, run_minimize2d, run_minimize3d, run_recovery_study, run_rigidity,
    run_scaling, ExperimentConfig, ScalingRow, ScalingStudyResult, Verdict,
};
use neplate::Error;

#[derive(Parser)]
#[command(
    name = "neplate",
    about = "Prescribed-metric thin-plate energies: scaling laws, bending limits, recovery studies",
    version
)]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/SVG artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Curvature report and flatness check of the configured metric.
    Geometry,
    /// Minimize the 3d plate energy at a single thickness.
    Minimize3d,
    /// Minimize the 2d bending functional under the isometry penalty.
    Minimize2d,
    /// Recovery convergence study against the 2d limit energy.
    Recovery,
    /// Thickness sweep with the immersibility classifier.
    Scaling,
    /// Empirical rigidity-constant sweep.
    Rigidity,
    /// Log-log plot of a previous scaling run (reads `input=` CSV).
    Plot,
}

fn config_error(msg: &str) -> ExitCode {
    eprintln!("configuration error: {msg}");
    ExitCode::from(2)
}

fn numerical_error(msg: &str) -> ExitCode {
    eprintln!("numerical failure: {msg}");
    ExitCode::from(3)
}

fn classify_error(e: &Error) -> ExitCode {
    match e {
        Error::Parse(m) => config_error(m),
        Error::Io(m) => config_error(&m.to_string()),
        other => numerical_error(&other.to_string()),
    }
}

/// Reads the rows back from a scaling CSV for plotting.
fn load_scaling_csv(path: &PathBuf) -> Result<ScalingStudyResult, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('h') {
            continue;
        }
        let toks: Vec<&str> = t.split(',').collect();
        if toks.len() != 5 {
            return Err(Error::Parse(format!("bad scaling row: {t:?}")));
        }
        rows.push(ScalingRow {
            h: toks[0].parse().map_err(|_| Error::Parse("bad h".into()))?,
            min_energy: toks[1]
                .parse()
                .map_err(|_| Error::Parse("bad energy".into()))?,
            min_energy_over_h2: toks[2]
                .parse()
                .map_err(|_| Error::Parse("bad energy/h2".into()))?,
            iterations: toks[3]
                .parse()
                .map_err(|_| Error::Parse("bad iterations".into()))?,
            converged: toks[4]
                .parse()
                .map_err(|_| Error::Parse("bad converged flag".into()))?,
        });
    }
    Ok(ScalingStudyResult {
        rows,
        verdict: Verdict::Inconclusive,
        slope: None,
        aborted: None,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            return config_error(&format!("thread pool: {e}"));
        }
    }

    let mut cfg = match &cli.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => return config_error(&e.to_string()),
        },
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &cli.out {
        cfg.output_dir = Some(dir.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Err(e) = cfg.validate() {
        return config_error(&e.to_string());
    }

    match &cli.command {
        Command::Geometry => match run_geometry(&cfg) {
            Ok(report) => {
                println!(
                    "max |kappa| = {:.6e}, flat = {}",
                    report.max_abs_curvature, report.flat
                );
                ExitCode::SUCCESS
            }
            Err(e) => classify_error(&e),
        },
        Command::Minimize3d => match run_minimize3d(&cfg) {
            Ok(report) => {
                println!(
                    "energy = {:.6e}, grad = {:.3e}, iterations = {}, converged = {}",
                    report.energy, report.grad_norm, report.iterations, report.converged
                );
                if !report.converged {
                    return numerical_error("minimization did not converge");
                }
                ExitCode::SUCCESS
            }
            Err(e) => classify_error(&e),
        },
        Command::Minimize2d => match run_minimize2d(&cfg) {
            Ok(report) => {
                println!(
                    "limit energy = {:.6e}, isometry defect = {:.6e}, iterations = {}, converged = {}",
                    report.limit_energy,
                    report.isometry_defect,
                    report.report.iterations,
                    report.report.converged
                );
                if !report.report.converged {
                    return numerical_error("minimization did not converge");
                }
                ExitCode::SUCCESS
            }
            Err(e) => classify_error(&e),
        },
        Command::Recovery => match run_recovery_study(&cfg) {
            Ok(rows) => {
                for r in &rows {
                    let ratio = r
                        .ratio
                        .map(|v| format!("{v:.6}"))
                        .unwrap_or_else(|| "NA".into());
                    println!(
                        "h={:.4}: energy/h2 = {:.6e}, limit = {:.6e}, ratio = {ratio}",
                        r.h, r.energy_over_h2, r.limit_energy
                    );
                }
                ExitCode::SUCCESS
            }
            Err(e) => classify_error(&e),
        },
        Command::Scaling => match run_scaling(&cfg) {
            Ok(result) => {
                for r in &result.rows {
                    println!(
                        "h={:.4}: min_energy = {:.6e}, /h2 = {:.6e}, iters = {}, converged = {}",
                        r.h, r.min_energy, r.min_energy_over_h2, r.iterations, r.converged
                    );
                }
                let slope = result
                    .slope
                    .map(|s| format!("{s:.3}"))
                    .unwrap_or_else(|| "NA".into());
                println!("verdict = {}, slope = {slope}", result.verdict);
                if let Some(msg) = &result.aborted {
                    return numerical_error(msg);
                }
                ExitCode::SUCCESS
            }
            Err(e) => classify_error(&e),
        },
        Command::Rigidity => match run_rigidity(&cfg) {
            Ok(report) => {
                println!(
                    "C_obs = {:.6e} (worst sample {}), excluded = {}, samples = {}",
                    report.c_obs,
                    report.worst_sample,
                    report.excluded,
                    report.records.len()
                );
                ExitCode::SUCCESS
            }
            Err(e) => classify_error(&e),
        },
        Command::Plot => {
            let input = match &cfg.input {
                Some(p) => p.clone(),
                None => {
                    return config_error("plot needs input=<scaling csv> in the config")
                }
            };
            let result = match load_scaling_csv(&input) {
                Ok(r) => r,
                Err(e) => return classify_error(&e),
            };
            let out_dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            if let Err(e) = std::fs::create_dir_all(&out_dir) {
                return config_error(&e.to_string());
            }
            let path = out_dir.join("scaling.svg");
            match emit_plot(&result, &path) {
                Ok(()) => {
                    println!("wrote {}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => classify_error(&e),
            }
        }
    }
}
