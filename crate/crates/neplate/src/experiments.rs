//! Configuration-driven experiment drivers: scaling-law sweeps with the
//! immersibility classifier, recovery convergence studies, rigidity sweeps,
//! curvature reports, and deterministic CSV/SVG emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Grid3, Mesh2};
use crate::kirchhoff::{
    build_immersion, limit_energy, minimize_limit, ImmersionCatalog, ImmersionField2D,
    PenaltyReport,
};
use crate::metric::{gaussian_curvature, riemann_flat_3d, CatalogMetric, MetricField};
use crate::optim::MinimizeOptions;
use crate::plate::{energy_ih, init_deformation, minimize_ih, EnergyReport, InitKind};
use crate::recovery::{build_recovery, convergence_study, ConvergenceRow};
use crate::rigidity::{rigidity_sweep, SamplerSpec, SweepReport};
use crate::{csvio, recovery};

/// Classifier thresholds; engineering constants, overridable per config and
/// echoed into every output.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierThresholds {
    /// Absolute floor on `min_energy/h²` at the smallest thickness below
    /// which a metric counts as flat. The one scale-sensitive branch.
    pub eps_flat: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    /// Growth/decay factor across the sweep that separates the regimes.
    pub growth: f64,
}

impl Default for ClassifierThresholds {
    fn default() -> Self {
        Self {
            eps_flat: 1e-8,
            band_lo: 0.5,
            band_hi: 2.0,
            growth: 10.0,
        }
    }
}

/// Classifier verdicts for a scaling study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Flat,
    ImmersibleW22,
    /// Growth consistent with no `W²,²` immersion; at fixed thickness this
    /// can only be suggested, never confirmed.
    Obstructed,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Flat => "flat",
            Verdict::ImmersibleW22 => "immersible_W22",
            Verdict::Obstructed => "obstructed",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// One thickness of a scaling sweep.
#[derive(Debug, Clone, Copy)]
pub struct ScalingRow {
    pub h: f64,
    pub min_energy: f64,
    pub min_energy_over_h2: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Full result of a scaling sweep.
#[derive(Debug, Clone)]
pub struct ScalingStudyResult {
    /// Rows in order of decreasing thickness.
    pub rows: Vec<ScalingRow>,
    pub verdict: Verdict,
    /// Least-squares slope of `log min_energy` against `log h` over the
    /// converged rows, when at least two are usable.
    pub slope: Option<f64>,
    /// Present when a sub-operation failed mid-sweep; completed rows are
    /// kept and the verdict is inconclusive.
    pub aborted: Option<String>,
}

/// Applies the classification rule to the converged rows.
///
/// Order: flat (absolute floor at the smallest h, or ≥ `growth`-fold decay
/// across the sweep), then the immersible band `[band_lo, band_hi]·median`,
/// then `growth`-fold growth as obstructed, otherwise inconclusive. All
/// branches except the absolute floor are scale-invariant.
pub fn classify_immersability(
    rows: &[ScalingRow],
    thresholds: &ClassifierThresholds,
) -> Result<Verdict> {
    let values: Vec<f64> = rows
        .iter()
        .filter(|r| r.converged)
        .map(|r| r.min_energy_over_h2)
        .collect();
    if values.len() < 3 {
        return Err(Error::TooFewRows {
            needed: 3,
            got: values.len(),
        });
    }
    let first = values[0];
    let last = values[values.len() - 1];
    if last <= thresholds.eps_flat {
        return Ok(Verdict::Flat);
    }
    if last > 0.0 && first / last >= thresholds.growth {
        return Ok(Verdict::Flat);
    }
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    if values
        .iter()
        .all(|&v| v >= thresholds.band_lo * median && v <= thresholds.band_hi * median)
    {
        return Ok(Verdict::ImmersibleW22);
    }
    if first > 0.0 && last / first >= thresholds.growth {
        return Ok(Verdict::Obstructed);
    }
    Ok(Verdict::Inconclusive)
}

fn fit_slope(rows: &[ScalingRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.converged && r.min_energy > 1e-300)
        .map(|r| (r.h.ln(), r.min_energy.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Where a metric comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricSpec {
    Catalog(String),
    File(PathBuf),
}

/// Where a candidate immersion comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ImmersionSpec {
    Catalog(String),
    File(PathBuf),
}

/// Typed experiment configuration, parsed from flat `key=value` text.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub metric: MetricSpec,
    pub bump_c: f64,
    pub bump_sigma: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub h: f64,
    pub h_list: Vec<f64>,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub immersion: Option<ImmersionSpec>,
    pub penalty_schedule: Vec<f64>,
    pub thresholds: ClassifierThresholds,
    pub samples: usize,
    pub amplitude: f64,
    pub trig_modes: usize,
    pub bumps: usize,
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            metric: MetricSpec::Catalog("identity".into()),
            bump_c: 0.5,
            bump_sigma: 0.4,
            nx: 32,
            ny: 32,
            nz: 7,
            h: 0.1,
            h_list: vec![0.2, 0.1, 0.05, 0.025],
            tol: 1e-8,
            max_iters: 5000,
            seed: 42,
            immersion: None,
            penalty_schedule: vec![1e2, 1e3, 1e4],
            thresholds: ClassifierThresholds::default(),
            samples: 500,
            amplitude: 0.1,
            trig_modes: 3,
            bumps: 2,
            input: None,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses flat `key=value` text; `#` starts a comment, keys may appear
    /// once each, unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Parse(format!("duplicate key {key:?}")));
            }
            let bad = |what: &str| Error::Parse(format!("key {key}: invalid {what} {value:?}"));
            match key {
                "metric" => {
                    cfg.metric = if let Some(path) = value.strip_prefix("file:") {
                        MetricSpec::File(PathBuf::from(path))
                    } else {
                        MetricSpec::Catalog(value.to_string())
                    };
                }
                "immersion" => {
                    cfg.immersion = Some(if let Some(path) = value.strip_prefix("file:") {
                        ImmersionSpec::File(PathBuf::from(path))
                    } else {
                        ImmersionSpec::Catalog(value.to_string())
                    });
                }
                "bump_c" => cfg.bump_c = value.parse().map_err(|_| bad("number"))?,
                "bump_sigma" => cfg.bump_sigma = value.parse().map_err(|_| bad("number"))?,
                "nx" => cfg.nx = value.parse().map_err(|_| bad("count"))?,
                "ny" => cfg.ny = value.parse().map_err(|_| bad("count"))?,
                "nz" => cfg.nz = value.parse().map_err(|_| bad("count"))?,
                "h" => cfg.h = value.parse().map_err(|_| bad("number"))?,
                "h_list" => {
                    cfg.h_list = value
                        .split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("list"))?;
                }
                "penalty_schedule" => {
                    cfg.penalty_schedule = value
                        .split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad("list"))?;
                }
                "tol" => cfg.tol = value.parse().map_err(|_| bad("number"))?,
                "max_iters" => cfg.max_iters = value.parse().map_err(|_| bad("count"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "eps_flat" => {
                    cfg.thresholds.eps_flat = value.parse().map_err(|_| bad("number"))?
                }
                "band_lo" => {
                    cfg.thresholds.band_lo = value.parse().map_err(|_| bad("number"))?
                }
                "band_hi" => {
                    cfg.thresholds.band_hi = value.parse().map_err(|_| bad("number"))?
                }
                "growth" => cfg.thresholds.growth = value.parse().map_err(|_| bad("number"))?,
                "samples" => cfg.samples = value.parse().map_err(|_| bad("count"))?,
                "amplitude" => cfg.amplitude = value.parse().map_err(|_| bad("number"))?,
                "trig_modes" => cfg.trig_modes = value.parse().map_err(|_| bad("count"))?,
                "bumps" => cfg.bumps = value.parse().map_err(|_| bad("count"))?,
                "input" => cfg.input = Some(PathBuf::from(value)),
                "out" => cfg.output_dir = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::Parse(format!("unknown key {other:?}")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_list.is_empty() {
            return Err(Error::Parse("h_list must not be empty".into()));
        }
        for pair in self.h_list.windows(2) {
            if pair[1] >= pair[0] {
                return Err(Error::Parse("h_list must be strictly decreasing".into()));
            }
        }
        if *self.h_list.last().unwrap() <= 0.0 || self.h <= 0.0 {
            return Err(Error::Parse("thicknesses must be positive".into()));
        }
        if self.nz < 3 || self.nz % 2 == 0 {
            return Err(Error::Parse("nz must be odd and at least 3".into()));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::Parse("grid needs at least 2 nodes per axis".into()));
        }
        if self.bump_c <= -1.0 {
            return Err(Error::Parse("bump_c must exceed -1".into()));
        }
        Ok(())
    }

    /// Resolves the configured metric source.
    pub fn build_metric(&self) -> Result<MetricField<f64>> {
        match &self.metric {
            MetricSpec::Catalog(tag) => {
                let entry = match tag.as_str() {
                    "identity" => CatalogMetric::Identity,
                    "polar_flat" => CatalogMetric::PolarFlat,
                    "sphere" => CatalogMetric::Sphere,
                    "hyperbolic" => CatalogMetric::Hyperbolic,
                    "radial_bump" => CatalogMetric::RadialBump {
                        c: self.bump_c,
                        sigma: self.bump_sigma,
                    },
                    other => {
                        return Err(Error::Parse(format!("unknown catalog metric {other:?}")))
                    }
                };
                Ok(MetricField::catalog(entry))
            }
            MetricSpec::File(path) => csvio::read_sampled_metric(path),
        }
    }

    /// Resolves the candidate immersion on the metric's mesh, when
    /// configured.
    pub fn build_immersion(
        &self,
        metric: &MetricField<f64>,
    ) -> Result<Option<ImmersionField2D<f64>>> {
        let Some(spec) = &self.immersion else {
            return Ok(None);
        };
        let mesh = Mesh2::new(metric.domain(), self.nx, self.ny);
        let y = match spec {
            ImmersionSpec::Catalog(tag) => {
                let which = match tag.as_str() {
                    "plane" => ImmersionCatalog::Plane,
                    "polar" => ImmersionCatalog::PolarPlanar,
                    "sphere_cap" => ImmersionCatalog::SphereCap,
                    "hyperbolic_band" => ImmersionCatalog::HyperbolicBand,
                    other => {
                        return Err(Error::Parse(format!(
                            "unknown catalog immersion {other:?}"
                        )))
                    }
                };
                build_immersion(which, mesh)
            }
            ImmersionSpec::File(path) => {
                let y = csvio::read_immersion(path, metric.domain())?;
                if y.mesh.nx != self.nx || y.mesh.ny != self.ny {
                    return Err(Error::Parse(format!(
                        "immersion checkpoint is {}x{}, config wants {}x{}",
                        y.mesh.nx, y.mesh.ny, self.nx, self.ny
                    )));
                }
                y
            }
        };
        Ok(Some(y))
    }

    pub fn optimizer_options(&self) -> MinimizeOptions<f64> {
        MinimizeOptions {
            tol: self.tol,
            max_iters: self.max_iters,
            ..Default::default()
        }
    }

    /// Deterministic `key=value` echo of the effective configuration.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let metric = match &self.metric {
            MetricSpec::Catalog(tag) => tag.clone(),
            MetricSpec::File(p) => format!("file:{}", p.display()),
        };
        let _ = writeln!(s, "# metric={metric}");
        if let MetricSpec::Catalog(tag) = &self.metric {
            if tag == "radial_bump" {
                let _ = writeln!(s, "# bump_c={} bump_sigma={}", self.bump_c, self.bump_sigma);
            }
        }
        let _ = writeln!(s, "# nx={} ny={} nz={}", self.nx, self.ny, self.nz);
        let hs: Vec<String> = self.h_list.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(s, "# h={} h_list={}", self.h, hs.join(","));
        let _ = writeln!(
            s,
            "# tol={} max_iters={} seed={}",
            self.tol, self.max_iters, self.seed
        );
        if let Some(spec) = &self.immersion {
            let im = match spec {
                ImmersionSpec::Catalog(tag) => tag.clone(),
                ImmersionSpec::File(p) => format!("file:{}", p.display()),
            };
            let _ = writeln!(s, "# immersion={im}");
        }
        let t = &self.thresholds;
        let _ = writeln!(
            s,
            "# eps_flat={} band_lo={} band_hi={} growth={}",
            t.eps_flat, t.band_lo, t.band_hi, t.growth
        );
        s
    }
}

// ---------------------------------------------------------------------------
// Scaling sweeps
// ---------------------------------------------------------------------------

fn write_scaling_csv(
    path: &Path,
    cfg: &ExperimentConfig,
    rows: &[ScalingRow],
    verdict: Verdict,
    slope: Option<f64>,
    aborted: Option<&str>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&cfg.echo());
    out.push_str("h,min_energy,min_energy_over_h2,iterations,converged\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.h, r.min_energy, r.min_energy_over_h2, r.iterations, r.converged
        );
    }
    let slope_text = match slope {
        Some(s) => s.to_string(),
        None => "NA".into(),
    };
    let _ = writeln!(out, "# verdict={verdict} slope={slope_text}");
    if verdict == Verdict::Obstructed {
        let _ = writeln!(out, "# note=growth consistent with no W2,2 immersion");
    }
    if let Some(msg) = aborted {
        let _ = writeln!(out, "# aborted={msg}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Runs the scaling sweep: for each thickness, minimizes from the better of
/// the flat and recovery starts and records the row. A failing thickness
/// aborts the sweep with the completed rows flushed and an inconclusive
/// verdict.
pub fn run_scaling(cfg: &ExperimentConfig) -> Result<ScalingStudyResult> {
    cfg.validate()?;
    let metric = cfg.build_metric()?;
    let candidate = cfg.build_immersion(&metric)?;
    let mesh = Mesh2::new(metric.domain(), cfg.nx, cfg.ny);
    let opts = cfg.optimizer_options();

    let mut rows = Vec::new();
    let mut aborted = None;
    let mut warned_thin = false;
    for &h in &cfg.h_list {
        let outcome = (|| -> Result<ScalingRow> {
            let grid = Grid3::new(mesh, cfg.nz, h)?;
            if !warned_thin && !grid.thin_direction_resolved() {
                eprintln!(
                    "note: dz > min(dx,dy) at h={h}; through-thickness resolution is coarser than in-plane"
                );
                warned_thin = true;
            }
            let flat = init_deformation(InitKind::Flat, &grid)?;
            let mut init = flat;
            let mut init_energy = energy_ih(&init, &metric, &grid)?;
            if let Some(y) = &candidate {
                let rec = build_recovery(y, &metric, &grid)?;
                let rec_energy = energy_ih(&rec, &metric, &grid)?;
                if rec_energy < init_energy {
                    init = rec;
                    init_energy = rec_energy;
                }
            }
            let _ = init_energy;
            let (_, report) = minimize_ih(&metric, &grid, &init, &opts)?;
            Ok(ScalingRow {
                h,
                min_energy: report.energy,
                min_energy_over_h2: report.energy / (h * h),
                iterations: report.iterations,
                converged: report.converged,
            })
        })();
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        }
    }

    let verdict = if aborted.is_some() {
        Verdict::Inconclusive
    } else {
        classify_immersability(&rows, &cfg.thresholds).unwrap_or(Verdict::Inconclusive)
    };
    let slope = fit_slope(&rows);
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        write_scaling_csv(
            &dir.join("scaling.csv"),
            cfg,
            &rows,
            verdict,
            slope,
            aborted.as_deref(),
        )?;
    }
    Ok(ScalingStudyResult {
        rows,
        verdict,
        slope,
        aborted,
    })
}

// ---------------------------------------------------------------------------
// Recovery study
// ---------------------------------------------------------------------------

/// Runs the recovery convergence study and writes
/// `h,energy_over_h2,limit_energy,ratio` with the config echoed in the
/// header. Requires a configured candidate immersion.
pub fn run_recovery_study(cfg: &ExperimentConfig) -> Result<Vec<ConvergenceRow<f64>>> {
    cfg.validate()?;
    let metric = cfg.build_metric()?;
    let y = cfg
        .build_immersion(&metric)?
        .ok_or_else(|| Error::Parse("recovery study needs an immersion".into()))?;
    let rows = convergence_study(&y, &metric, &cfg.h_list, cfg.nz)?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        let mut out = String::new();
        out.push_str(&cfg.echo());
        out.push_str("h,energy_over_h2,limit_energy,ratio\n");
        for r in &rows {
            let ratio = match r.ratio {
                Some(v) => v.to_string(),
                None => "NA".into(),
            };
            let _ = writeln!(out, "{},{},{},{}", r.h, r.energy_over_h2, r.limit_energy, ratio);
        }
        std::fs::write(dir.join("recovery.csv"), out)?;
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Rigidity sweep
// ---------------------------------------------------------------------------

/// Runs the rigidity sweep and writes
/// `sample,lhs,well_term,geometry_term,ratio` plus a summary line.
pub fn run_rigidity(cfg: &ExperimentConfig) -> Result<SweepReport<f64>> {
    cfg.validate()?;
    let metric = cfg.build_metric()?;
    let mesh = Mesh2::new(metric.domain(), cfg.nx, cfg.ny);
    let grid = Grid3::new(mesh, cfg.nz, cfg.h)?;
    let spec = SamplerSpec {
        amplitude: cfg.amplitude,
        trig_modes: cfg.trig_modes,
        bump_count: cfg.bumps,
    };
    let report = rigidity_sweep(&metric, &grid, &spec, cfg.samples, cfg.seed)?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        let mut out = String::new();
        out.push_str(&cfg.echo());
        let _ = writeln!(out, "# samples={} amplitude={}", cfg.samples, cfg.amplitude);
        out.push_str("sample,lhs,well_term,geometry_term,ratio\n");
        for (idx, rec) in report.records.iter().enumerate() {
            let ratio = match rec.ratio {
                Some(v) => v.to_string(),
                None => "NA".into(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                idx, rec.lhs, rec.well_term, rec.geometry_term, ratio
            );
        }
        let _ = writeln!(
            out,
            "# C_obs={} worst_sample={} excluded={}",
            report.c_obs, report.worst_sample, report.excluded
        );
        std::fs::write(dir.join("rigidity.csv"), out)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Geometry report
// ---------------------------------------------------------------------------

/// Curvature summary of a metric.
#[derive(Debug, Clone, Copy)]
pub struct GeometryReport {
    pub max_abs_curvature: f64,
    pub flat: bool,
}

/// Writes `x1,x2,kappa` over the configured lattice plus a flatness
/// summary.
pub fn run_geometry(cfg: &ExperimentConfig) -> Result<GeometryReport> {
    cfg.validate()?;
    let metric = cfg.build_metric()?;
    let flatness = riemann_flat_3d(&metric);
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        let mut out = String::new();
        out.push_str(&cfg.echo());
        out.push_str("x1,x2,kappa\n");
        let r = metric.domain();
        let margin = metric.derivative_step().unwrap_or(0.0);
        let (x0, x1) = (r.x0 + margin, r.x1 - margin);
        let (y0, y1) = (r.y0 + margin, r.y1 - margin);
        for j in 0..cfg.ny {
            for i in 0..cfg.nx {
                let fx = i as f64 / (cfg.nx - 1) as f64;
                let fy = j as f64 / (cfg.ny - 1) as f64;
                let px = x0 + (x1 - x0) * fx;
                let py = y0 + (y1 - y0) * fy;
                let kappa = gaussian_curvature(&metric, px, py)?;
                let _ = writeln!(out, "{px},{py},{kappa}");
            }
        }
        let _ = writeln!(
            out,
            "# max_abs_kappa={} flat={} samples={}",
            flatness.max_abs_curvature, flatness.flat, flatness.samples
        );
        std::fs::write(dir.join("geometry.csv"), out)?;
    }
    Ok(GeometryReport {
        max_abs_curvature: flatness.max_abs_curvature,
        flat: flatness.flat,
    })
}

// ---------------------------------------------------------------------------
// Single minimizations
// ---------------------------------------------------------------------------

/// Minimizes the 3d energy at the configured thickness and writes the
/// deformation checkpoint.
pub fn run_minimize3d(cfg: &ExperimentConfig) -> Result<EnergyReport<f64>> {
    cfg.validate()?;
    let metric = cfg.build_metric()?;
    let mesh = Mesh2::new(metric.domain(), cfg.nx, cfg.ny);
    let grid = Grid3::new(mesh, cfg.nz, cfg.h)?;
    if !grid.thin_direction_resolved() {
        eprintln!("note: dz > min(dx,dy); through-thickness resolution is coarser than in-plane");
    }
    let candidate = cfg.build_immersion(&metric)?;
    let flat = init_deformation(InitKind::Flat, &grid)?;
    let mut init = flat;
    if let Some(y) = &candidate {
        let rec = build_recovery(y, &metric, &grid)?;
        if energy_ih(&rec, &metric, &grid)? < energy_ih(&init, &metric, &grid)? {
            init = rec;
        }
    }
    let (field, report) = minimize_ih(&metric, &grid, &init, &cfg.optimizer_options())?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        csvio::write_deformation(&dir.join("deformation.csv"), &field)?;
    }
    Ok(report)
}

/// Penalized minimization of the 2d limit functional; writes the immersion
/// checkpoint.
pub fn run_minimize2d(cfg: &ExperimentConfig) -> Result<PenaltyReport<f64>> {
    cfg.validate()?;
    let metric = cfg.build_metric()?;
    let init = match cfg.build_immersion(&metric)? {
        Some(y) => y,
        None => {
            let mesh = Mesh2::new(metric.domain(), cfg.nx, cfg.ny);
            build_immersion(ImmersionCatalog::Plane, mesh)
        }
    };
    let (field, report) = minimize_limit(
        &metric,
        &init,
        &cfg.penalty_schedule,
        &cfg.optimizer_options(),
    )?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        csvio::write_immersion(&dir.join("immersion.csv"), &field)?;
    }
    Ok(report)
}

/// Convenience wrapper exposing the recovery energies of a configured
/// immersion without minimization (used by tests and the CLI).
pub fn recovery_energies(
    cfg: &ExperimentConfig,
) -> Result<(f64, f64)> {
    let metric = cfg.build_metric()?;
    let y = cfg
        .build_immersion(&metric)?
        .ok_or_else(|| Error::Parse("needs an immersion".into()))?;
    let grid = Grid3::new(y.mesh, cfg.nz, cfg.h)?;
    let u = recovery::build_recovery(&y, &metric, &grid)?;
    Ok((
        energy_ih(&u, &metric, &grid)?,
        limit_energy(&y, &metric)?,
    ))
}

// ---------------------------------------------------------------------------
// Plot emission
// ---------------------------------------------------------------------------

fn log10_clamped(v: f64) -> f64 {
    v.max(1e-30).log10()
}

/// Writes a log-log SVG of `min_energy` and `min_energy/h²` against `h`,
/// plus the companion CSV next to it. Byte-deterministic for identical
/// inputs.
pub fn emit_plot(result: &ScalingStudyResult, path: &Path) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::EmptyResult);
    }
    let rows = &result.rows;
    let xs: Vec<f64> = rows.iter().map(|r| r.h.log10()).collect();
    let s1: Vec<f64> = rows.iter().map(|r| log10_clamped(r.min_energy)).collect();
    let s2: Vec<f64> = rows
        .iter()
        .map(|r| log10_clamped(r.min_energy_over_h2))
        .collect();
    let xmin = xs.iter().cloned().fold(f64::INFINITY, f64::min) - 0.1;
    let xmax = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.1;
    let ymin = s1
        .iter()
        .chain(&s2)
        .cloned()
        .fold(f64::INFINITY, f64::min)
        - 0.5;
    let ymax = s1
        .iter()
        .chain(&s2)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        + 0.5;

    let (w, h, ml, mr, mt, mb) = (640.0, 480.0, 70.0, 20.0, 20.0, 50.0);
    let px = |x: f64| ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{w}" height="{h}" fill="white" stroke="none"/>"#
    );
    // Axes.
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        ml,
        h - mb,
        w - mr,
        h - mb
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        ml,
        mt,
        ml,
        h - mb
    );
    // Decade ticks.
    let mut tick = xmin.ceil();
    while tick <= xmax {
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/><text x="{0:.2}" y="{3:.2}" font-size="12" text-anchor="middle">1e{4}</text>"#,
            px(tick),
            h - mb,
            h - mb + 5.0,
            h - mb + 20.0,
            tick as i64
        );
        tick += 1.0;
    }
    let mut tick = ymin.ceil();
    while tick <= ymax {
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="black"/><text x="{3:.2}" y="{4:.2}" font-size="12" text-anchor="end">1e{5}</text>"#,
            ml - 5.0,
            py(tick),
            ml,
            ml - 8.0,
            py(tick) + 4.0,
            tick as i64
        );
        tick += 1.0;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">h (log scale)</text>"#,
        (ml + w - mr) / 2.0,
        h - 10.0
    );
    for (series, color, label, dy) in
        [(&s1, "#1f77b4", "min_energy", 0.0), (&s2, "#d62728", "min_energy/h2", 18.0)]
    {
        let pts: Vec<String> = xs
            .iter()
            .zip(series.iter())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (cx, cy) = p.split_once(',').unwrap();
            let _ = writeln!(
                svg,
                r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{color}">{label}</text>"#,
            w - mr - 130.0,
            mt + 15.0 + dy
        );
    }
    let _ = writeln!(svg, "</svg>");
    std::fs::write(path, svg)?;

    let mut csv = String::new();
    csv.push_str("h,min_energy,min_energy_over_h2,iterations,converged\n");
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.h, r.min_energy, r.min_energy_over_h2, r.iterations, r.converged
        );
    }
    std::fs::write(path.with_extension("csv"), csv)?;
    Ok(())
}
