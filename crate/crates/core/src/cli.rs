//! Run configuration, orchestration and file output for the command-line
//! tool.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::caldeira_leggett::{cl_variance, CLParams};
use crate::engine::{run_ensemble, snapshot_density, DensitySnapshots, EnsembleConfig, EnsembleResult};
use crate::fock2d::SampleGrid;
use crate::params::{derive, DerivationReport, DimensionlessParams, PhysicalParams};
use crate::su11::SurvivalConvention;

/// Top-level probability above which a sample time is flagged as affected
/// by basis truncation.
pub const TRUNCATION_FLAG: f64 = 1e-3;

pub const SERIES_COLUMNS: [&str; 11] = [
    "tau",
    "mean_x",
    "mean_y",
    "mean_px",
    "mean_py",
    "var_x",
    "var_y",
    "mean_L",
    "var_L",
    "jumps_in_bin",
    "truncation_metric",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("output: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Numerical(#[from] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Density,
    ClCompare,
    Params,
}

fn default_cutoff() -> usize {
    40
}
fn default_hist_bin() -> f64 {
    5.0
}
fn default_half_width() -> f64 {
    3.0
}
fn default_points() -> usize {
    81
}
fn default_cl_tau_max() -> f64 {
    80.0
}
fn default_cl_dt() -> f64 {
    0.1
}
fn default_prefix() -> String {
    "run".into()
}
fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineBlock {
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    pub n_traj: usize,
    pub tau_max: f64,
    pub sample_dt: f64,
    #[serde(default)]
    pub initial: [f64; 4],
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub survival_convention: SurvivalConvention,
    #[serde(default = "default_hist_bin")]
    pub hist_bin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBlock {
    pub taus: Vec<f64>,
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClBlock {
    #[serde(flatten)]
    pub params: CLParams,
    #[serde(default = "default_cl_tau_max")]
    pub tau_max: f64,
    #[serde(default = "default_cl_dt")]
    pub dt: f64,
}

impl Default for ClBlock {
    fn default() -> Self {
        Self { params: CLParams::reference(), tau_max: default_cl_tau_max(), dt: default_cl_dt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: default_dir(), prefix: default_prefix() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensionless: Option<DimensionlessParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cl: Option<ClBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Parameters the run will actually use, with any diagnostics raised while
/// choosing them.
#[derive(Debug, Clone)]
pub struct ResolvedParams {
    pub params: DimensionlessParams,
    pub report: Option<DerivationReport>,
    pub notes: Vec<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn resolve_params(&self) -> Result<ResolvedParams, CliError> {
        let mut notes = Vec::new();
        let report = match &self.physical {
            Some(p) => Some(derive(p, self.dimensionless.as_ref()).map_err(|e| CliError::Config(e.to_string()))?),
            None => None,
        };
        let params = match (&self.dimensionless, &report) {
            (Some(d), Some(r)) => {
                notes.push("both dimensionless and physical blocks given; the dimensionless block is used".into());
                notes.extend(r.diagnostics.iter().map(|d| d.to_string()));
                *d
            }
            (Some(d), None) => *d,
            (None, Some(r)) => {
                notes.extend(r.diagnostics.iter().map(|d| d.to_string()));
                r.dimensionless().map_err(|e| CliError::Config(e.to_string()))?
            }
            (None, None) => {
                return Err(CliError::Config("a dimensionless or physical parameter block is required".into()))
            }
        };
        Ok(ResolvedParams { params, report, notes })
    }

    pub fn ensemble(&self, params: DimensionlessParams) -> Result<EnsembleConfig, CliError> {
        let e = self.engine.as_ref().ok_or_else(|| CliError::Config("mode requires an engine block".into()))?;
        let cfg = EnsembleConfig {
            params,
            cutoff: e.cutoff,
            n_traj: e.n_traj,
            tau_max: e.tau_max,
            sample_dt: e.sample_dt,
            initial: e.initial,
            seed: e.seed,
            survival_convention: e.survival_convention,
            hist_bin: e.hist_bin,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "glmotion",
    version,
    about = "Quantum-trajectory simulator for atomic motion in a Gaussian-Laguerre beam"
)]
pub struct Args {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the engine seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the ensemble.
    #[arg(long, env = "GLMOTION_THREADS")]
    pub threads: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Omit the timestamp comment so identical runs give identical files.
    #[arg(long)]
    pub no_timestamp: bool,
}

/// Files written by a run.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(config: &RunConfig, notes: &[String], timestamp: bool, extra: &[String]) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "# glmotion {}", env!("CARGO_PKG_VERSION"));
    if timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let _ = writeln!(h, "# generated_unix: {secs}");
    }
    let json = serde_json::to_string_pretty(config).expect("config serializes");
    for line in json.lines() {
        let _ = writeln!(h, "# config: {line}");
    }
    for n in notes {
        let _ = writeln!(h, "# diagnostic: {n}");
    }
    for e in extra {
        let _ = writeln!(h, "# {e}");
    }
    h
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

/// Series CSV body (no header comments).
pub fn series_csv(result: &EnsembleResult) -> String {
    let mut out = SERIES_COLUMNS.join(",");
    out.push('\n');
    for (r, t) in result.series.iter().zip(&result.truncation) {
        let row = [
            fmt_f64(r.tau),
            fmt_f64(r.mean_x),
            fmt_f64(r.mean_y),
            fmt_f64(r.mean_px),
            fmt_f64(r.mean_py),
            fmt_f64(r.var_x),
            fmt_f64(r.var_y),
            fmt_f64(r.mean_l),
            fmt_f64(r.var_l),
            r.jump_count.to_string(),
            fmt_f64(*t),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn ensemble_notes(result: &EnsembleResult) -> Vec<String> {
    let mut v = vec![
        format!("n_traj_effective: {}", result.n_traj_effective),
        format!("n_degenerate: {}", result.n_degenerate),
        format!("total_jumps: {}", result.total_jumps),
        format!("truncation_metric_max: {}", fmt_f64(result.truncation_metric)),
    ];
    if let Some(r) = result.series.iter().zip(&result.truncation).find(|(_, &t)| t > TRUNCATION_FLAG) {
        v.push(format!("truncation_flag: top-level probability exceeds {TRUNCATION_FLAG} from tau = {}", r.0.tau));
    }
    v
}

fn histogram_csv(result: &EnsembleResult) -> String {
    let mut out = String::from("bin_start,bin_end,jumps\n");
    for (i, n) in result.jump_histogram.iter().enumerate() {
        let lo = i as f64 * result.hist_bin;
        let _ = writeln!(out, "{},{},{n}", fmt_f64(lo), fmt_f64(lo + result.hist_bin));
    }
    out
}

#[derive(Serialize)]
struct DensitySidecar<'a> {
    tau: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    nx: usize,
    ny: usize,
    rows: &'a str,
    cols: &'a str,
    n_traj_effective: usize,
    csv: String,
}

fn density_files(
    dir: &Path,
    prefix: &str,
    head: &str,
    snaps: &DensitySnapshots,
    summary: &mut RunSummary,
) -> Result<(), CliError> {
    let g = &snaps.grid;
    for (k, (tau, grid)) in snaps.taus.iter().zip(&snaps.grids).enumerate() {
        let name = format!("{prefix}_density_{k:03}.csv");
        let mut body = head.to_string();
        let _ = writeln!(body, "# tau: {}", fmt_f64(*tau));
        for row in grid.rows() {
            let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            body.push_str(&line.join(","));
            body.push('\n');
        }
        let path = dir.join(&name);
        write_file(&path, &body)?;
        summary.files.push(path);
        let side = DensitySidecar {
            tau: *tau,
            x_min: g.xs[0],
            x_max: *g.xs.last().expect("grid"),
            y_min: g.ys[0],
            y_max: *g.ys.last().expect("grid"),
            nx: g.xs.len(),
            ny: g.ys.len(),
            rows: "x",
            cols: "y",
            n_traj_effective: snaps.n_traj_effective,
            csv: name,
        };
        let path = dir.join(format!("{prefix}_density_{k:03}.json"));
        write_file(&path, &(serde_json::to_string_pretty(&side).expect("sidecar serializes") + "\n"))?;
        summary.files.push(path);
    }
    Ok(())
}

/// Executes a configuration; `config` has already had command-line
/// overrides applied.
pub fn execute(config: &RunConfig, timestamp: bool) -> Result<RunSummary, CliError> {
    let dir = &config.output.dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))?;
    let prefix = &config.output.prefix;
    let mut summary = RunSummary::default();

    match config.mode {
        Mode::Params => {
            let physical = config
                .physical
                .as_ref()
                .ok_or_else(|| CliError::Config("params mode requires a physical block".into()))?;
            let report =
                derive(physical, config.dimensionless.as_ref()).map_err(|e| CliError::Config(e.to_string()))?;
            let notes: Vec<String> = report.diagnostics.iter().map(|d| d.to_string()).collect();
            let mut body = header(config, &notes, timestamp, &[]);
            body.push_str(&report.to_string());
            let path = dir.join(format!("{prefix}_params.txt"));
            write_file(&path, &body)?;
            summary.files.push(path);
            let json = serde_json::json!({
                "orbital_hz": report.scales.orbital_hz(),
                "scales": report.scales,
                "diagnostics": notes,
            });
            let path = dir.join(format!("{prefix}_params.json"));
            write_file(&path, &(serde_json::to_string_pretty(&json).expect("report serializes") + "\n"))?;
            summary.files.push(path);
            print!("{report}");
            summary.notes = notes;
        }
        Mode::ClCompare => {
            let cl = config.cl.clone().unwrap_or_default();
            cl.params.validate().map_err(|e| CliError::Config(e.to_string()))?;
            if !(cl.dt > 0.0 && cl.tau_max >= 0.0) {
                return Err(CliError::Config("cl block needs dt > 0 and tau_max >= 0".into()));
            }
            let mut body = header(config, &[], timestamp, &[]);
            body.push_str("tau,var_x,delta_x\n");
            let steps = (cl.tau_max / cl.dt).round() as usize;
            for k in 0..=steps {
                let tau = k as f64 * cl.dt;
                let v = cl_variance(tau, &cl.params);
                let _ = writeln!(body, "{},{},{}", fmt_f64(tau), fmt_f64(v), fmt_f64(v.sqrt()));
            }
            let path = dir.join(format!("{prefix}_cl.csv"));
            write_file(&path, &body)?;
            summary.files.push(path);
        }
        Mode::Simulate | Mode::Density => {
            let resolved = config.resolve_params()?;
            for n in &resolved.notes {
                log::warn!("{n}");
            }
            let ens = config.ensemble(resolved.params)?;
            let (result, snaps) = if config.mode == Mode::Density {
                let d = config
                    .density
                    .as_ref()
                    .ok_or_else(|| CliError::Config("density mode requires a density block".into()))?;
                if d.points < 2 || !(d.half_width > 0.0) {
                    return Err(CliError::Config("density grid needs points >= 2 and half_width > 0".into()));
                }
                let grid = SampleGrid::square(d.center[0], d.center[1], d.half_width, d.points);
                let (snaps, result) = snapshot_density(&ens, &d.taus, &grid).map_err(|e| match e {
                    crate::Error::OffLattice(_) => CliError::Config(e.to_string()),
                    other => CliError::Numerical(other),
                })?;
                (result, Some(snaps))
            } else {
                (run_ensemble(&ens)?, None)
            };
            let head = header(config, &resolved.notes, timestamp, &ensemble_notes(&result));
            let path = dir.join(format!("{prefix}_series.csv"));
            write_file(&path, &(head.clone() + &series_csv(&result)))?;
            summary.files.push(path);
            let path = dir.join(format!("{prefix}_jumps.csv"));
            write_file(&path, &(head.clone() + &histogram_csv(&result)))?;
            summary.files.push(path);
            if let Some(s) = snaps {
                density_files(dir, prefix, &head, &s, &mut summary)?;
            }
            summary.notes = resolved.notes;
        }
    }
    Ok(summary)
}

/// Loads the configuration, applies overrides and runs it.
pub fn run(args: &Args) -> Result<RunSummary, CliError> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        match config.engine.as_mut() {
            Some(e) => e.seed = seed,
            None => log::warn!("--seed ignored: no engine block"),
        }
    }
    if let Some(out) = &args.out {
        config.output.dir = out.clone();
    }
    match args.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(|| execute(&config, !args.no_timestamp)),
        None => execute(&config, !args.no_timestamp),
    }
}
