//! Quantum-trajectory ensemble.
//!
//! Each trajectory alternates analytic no-jump evolution with sampled jumps.
//! The waiting-time search never crosses a sampling time, so every stored
//! sample is taken exactly on the lattice `k * sample_dt`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock2d::{make_coherent, moments, position_density, Moments, ObservableRecord, SampleGrid, TruncatedState};
use crate::params::DimensionlessParams;
use crate::recoil::{apply_jump, sample_direction};
use crate::su11::{apply, find_crossing, propagator, PropagatorMatrix, SurvivalConvention};

/// Number of top levels per mode watched by the truncation sentinel.
pub const TOP_SHELLS: usize = 2;

/// Trajectories per reduction chunk. Fixed so sums do not depend on the
/// thread count.
const CHUNK: usize = 8;

fn default_cutoff() -> usize {
    40
}

fn default_hist_bin() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub params: DimensionlessParams,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    pub n_traj: usize,
    pub tau_max: f64,
    pub sample_dt: f64,
    /// `(x0, y0, px0, py0)` of the initial coherent state.
    #[serde(default)]
    pub initial: [f64; 4],
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub survival_convention: SurvivalConvention,
    /// Width of the jump-histogram bins.
    #[serde(default = "default_hist_bin")]
    pub hist_bin: f64,
}

impl EnsembleConfig {
    pub fn new(params: DimensionlessParams, cutoff: usize, n_traj: usize, tau_max: f64, sample_dt: f64) -> Self {
        Self {
            params,
            cutoff,
            n_traj,
            tau_max,
            sample_dt,
            initial: [0.0; 4],
            seed: 0,
            survival_convention: SurvivalConvention::Standard,
            hist_bin: default_hist_bin(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.n_traj < 1 {
            return bad("n_traj must be at least 1".into());
        }
        if self.cutoff < 2 {
            return bad(format!("cutoff must be at least 2, got {}", self.cutoff));
        }
        if !(self.sample_dt > 0.0 && self.sample_dt.is_finite()) {
            return bad(format!("sample_dt must be positive, got {}", self.sample_dt));
        }
        if !(self.tau_max >= 0.0 && self.tau_max.is_finite()) {
            return bad(format!("tau_max must be non-negative, got {}", self.tau_max));
        }
        let ratio = self.tau_max / self.sample_dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return bad(format!("tau_max / sample_dt = {ratio} is not an integer"));
        }
        if !(self.hist_bin > 0.0 && self.hist_bin.is_finite()) {
            return bad(format!("hist_bin must be positive, got {}", self.hist_bin));
        }
        if self.initial.iter().any(|v| !v.is_finite()) {
            return bad("initial coordinates must be finite".into());
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.tau_max / self.sample_dt).round() as usize
    }

    pub fn sample_time(&self, k: usize) -> f64 {
        k as f64 * self.sample_dt
    }

    pub fn initial_state(&self) -> Result<TruncatedState> {
        let [x, y, px, py] = self.initial;
        make_coherent(x, y, px, py, &self.params, self.cutoff)?.normalized()
    }

    /// Generator for trajectory `index`; streams are disjoint across indices.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    fn n_bins(&self) -> usize {
        ((self.tau_max / self.hist_bin).ceil() as usize).max(1)
    }
}

/// One trajectory's samples and jump times.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub samples: Vec<ObservableRecord>,
    pub moments: Vec<Moments>,
    pub top_shell: Vec<f64>,
    pub jump_times: Vec<f64>,
}

/// Draw from the open interval `(0, 1)`.
fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.random();
        if z > 0.0 {
            return z;
        }
    }
}

fn simulate<F>(
    config: &EnsembleConfig,
    index: u64,
    step: &PropagatorMatrix,
    initial: &TruncatedState,
    mut observe: F,
) -> Result<TrajectoryRecord>
where
    F: FnMut(usize, &TruncatedState) -> Result<()>,
{
    let params = &config.params;
    let mut rng = config.rng(index);
    let mut psi = initial.clone();
    let mut target = config.survival_convention.target(open_uniform(&mut rng));
    let n_samples = config.n_samples();

    let mut rec = TrajectoryRecord {
        index,
        samples: Vec::with_capacity(n_samples + 1),
        moments: Vec::with_capacity(n_samples + 1),
        top_shell: Vec::with_capacity(n_samples + 1),
        jump_times: Vec::new(),
    };
    let mut record = |k: usize, psi: &TruncatedState, jumps: u64, rec: &mut TrajectoryRecord| -> Result<()> {
        let m = moments(psi)?;
        rec.samples.push(ObservableRecord::from_moments(config.sample_time(k), &m, jumps));
        rec.moments.push(m);
        rec.top_shell.push(psi.top_shell_probability(TOP_SHELLS));
        observe(k, psi)
    };
    record(0, &psi, 0, &mut rec)?;

    for k in 1..=n_samples {
        let t_end = config.sample_time(k);
        let mut t = config.sample_time(k - 1);
        let mut fresh_segment = true;
        loop {
            let remaining = t_end - t;
            let u_rest = if fresh_segment { None } else { Some(propagator(remaining, params, config.cutoff)?) };
            let end = apply(u_rest.as_ref().unwrap_or(step), &psi)?;
            if end.norm_sq() > target {
                psi = end;
                break;
            }
            let s = find_crossing(&psi, target, params, remaining, Some(&end))?.unwrap_or(remaining);
            let before = if s >= remaining { end } else { apply(&propagator(s, params, config.cutoff)?, &psi)? };
            let direction = sample_direction(&mut rng);
            psi = apply_jump(&before, &direction, params)?;
            t += s;
            rec.jump_times.push(t);
            log::trace!("trajectory {index}: jump at tau = {t:.6}");
            target = config.survival_convention.target(open_uniform(&mut rng));
            fresh_segment = false;
        }
        // keep the stored amplitude on the unit sphere so underflow cannot build
        // up across many sample intervals; the target is rescaled to match
        let n = psi.norm_sq();
        psi.normalize()?;
        target /= n;
        record(k, &psi, rec.jump_times.len() as u64, &mut rec)?;
    }
    Ok(rec)
}

/// Runs trajectory `index` of the ensemble.
pub fn run_trajectory(config: &EnsembleConfig, index: u64) -> Result<TrajectoryRecord> {
    config.validate()?;
    let step = propagator(config.sample_dt, &config.params, config.cutoff)?;
    simulate(config, index, &step, &config.initial_state()?, |_, _| Ok(()))
}

/// Ensemble statistics on the sampling lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    /// Mean of per-trajectory means and pooled mixed-state variances; the
    /// `jump_count` field holds the jumps that occurred in the interval
    /// ending at that sample (summed over trajectories).
    pub series: Vec<ObservableRecord>,
    /// Standard error of each mean, per channel.
    pub mean_se: Vec<[f64; 5]>,
    /// Delta-method standard error of each pooled variance, per channel.
    pub var_se: Vec<[f64; 5]>,
    /// Ensemble probability in the top two levels of either mode.
    pub truncation: Vec<f64>,
    /// Largest top-level probability seen on any trajectory at any sample.
    pub truncation_metric: f64,
    pub jump_histogram: Vec<u64>,
    pub hist_bin: f64,
    pub total_jumps: u64,
    pub n_traj_effective: usize,
    pub n_degenerate: usize,
}

impl EnsembleResult {
    pub fn jumps_in_bin(&self) -> impl Iterator<Item = u64> + '_ {
        self.series.iter().map(|r| r.jump_count)
    }

    pub fn mean_jumps_per_trajectory(&self) -> f64 {
        self.total_jumps as f64 / self.n_traj_effective as f64
    }
}

/// Density grids averaged over the ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySnapshots {
    pub grid: SampleGrid,
    pub taus: Vec<f64>,
    pub grids: Vec<Array2<f64>>,
    pub n_traj_effective: usize,
}

#[derive(Debug, Clone)]
struct Accumulator {
    n: usize,
    degenerate: usize,
    mean: Vec<[f64; 5]>,
    second: Vec<[f64; 5]>,
    mean_sq: Vec<[f64; 5]>,
    second_sq: Vec<[f64; 5]>,
    mean_second: Vec<[f64; 5]>,
    top: Vec<f64>,
    top_max: f64,
    jumps_in_bin: Vec<u64>,
    hist: Vec<u64>,
    densities: Vec<Array2<f64>>,
}

impl Accumulator {
    fn new(samples: usize, bins: usize, density_shapes: usize, grid: Option<&SampleGrid>) -> Self {
        let zeros = vec![[0.0; 5]; samples];
        let densities = match grid {
            Some(g) => vec![Array2::zeros((g.xs.len(), g.ys.len())); density_shapes],
            None => Vec::new(),
        };
        Self {
            n: 0,
            degenerate: 0,
            mean: zeros.clone(),
            second: zeros.clone(),
            mean_sq: zeros.clone(),
            second_sq: zeros.clone(),
            mean_second: zeros,
            top: vec![0.0; samples],
            top_max: 0.0,
            jumps_in_bin: vec![0; samples],
            hist: vec![0; bins],
            densities,
        }
    }

    fn add(&mut self, rec: &TrajectoryRecord, config: &EnsembleConfig, densities: Vec<Array2<f64>>) {
        self.n += 1;
        for (k, m) in rec.moments.iter().enumerate() {
            for c in 0..5 {
                self.mean[k][c] += m.mean[c];
                self.second[k][c] += m.second[c];
                self.mean_sq[k][c] += m.mean[c] * m.mean[c];
                self.second_sq[k][c] += m.second[c] * m.second[c];
                self.mean_second[k][c] += m.mean[c] * m.second[c];
            }
            self.top[k] += rec.top_shell[k];
            self.top_max = self.top_max.max(rec.top_shell[k]);
        }
        let bins = self.hist.len();
        for &t in &rec.jump_times {
            let b = ((t / config.hist_bin).floor() as usize).min(bins - 1);
            self.hist[b] += 1;
            let k = ((t / config.sample_dt).ceil() as usize).clamp(1, self.jumps_in_bin.len() - 1);
            self.jumps_in_bin[k] += 1;
        }
        for (acc, d) in self.densities.iter_mut().zip(densities) {
            *acc += &d;
        }
    }

    fn merge(mut self, other: Accumulator) -> Self {
        self.n += other.n;
        self.degenerate += other.degenerate;
        let pairs = [
            (&mut self.mean, &other.mean),
            (&mut self.second, &other.second),
            (&mut self.mean_sq, &other.mean_sq),
            (&mut self.second_sq, &other.second_sq),
            (&mut self.mean_second, &other.mean_second),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter_mut().zip(b) {
                for c in 0..5 {
                    x[c] += y[c];
                }
            }
        }
        for (a, b) in self.top.iter_mut().zip(&other.top) {
            *a += b;
        }
        self.top_max = self.top_max.max(other.top_max);
        for (a, b) in self.jumps_in_bin.iter_mut().zip(&other.jumps_in_bin) {
            *a += b;
        }
        for (a, b) in self.hist.iter_mut().zip(&other.hist) {
            *a += b;
        }
        for (a, b) in self.densities.iter_mut().zip(&other.densities) {
            *a += b;
        }
        self
    }
}

fn density_indices(config: &EnsembleConfig, taus: &[f64]) -> Result<Vec<usize>> {
    taus.iter()
        .map(|&tau| {
            let k = tau / config.sample_dt;
            let r = k.round();
            if !(tau >= 0.0) || (k - r).abs() > 1e-9 * r.max(1.0) || r as usize > config.n_samples() {
                Err(Error::OffLattice(tau))
            } else {
                Ok(r as usize)
            }
        })
        .collect()
}

fn run_accumulate(config: &EnsembleConfig, density: Option<(&SampleGrid, &[usize])>) -> Result<Accumulator> {
    config.validate()?;
    let samples = config.n_samples() + 1;
    let step = propagator(config.sample_dt, &config.params, config.cutoff)?;
    let initial = config.initial_state()?;
    let n_dens = density.map_or(0, |(_, idx)| idx.len());
    let grid = density.map(|(g, _)| g);
    let empty = || Accumulator::new(samples, config.n_bins(), n_dens, grid);

    let chunks: Vec<(usize, usize)> =
        (0..config.n_traj).step_by(CHUNK).map(|lo| (lo, (lo + CHUNK).min(config.n_traj))).collect();
    let partials: Vec<Result<Accumulator>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = empty();
            for index in lo..hi {
                let mut dens: Vec<Array2<f64>> = Vec::with_capacity(n_dens);
                let outcome = simulate(config, index as u64, &step, &initial, |k, psi| {
                    if let Some((g, idx)) = density {
                        for _ in idx.iter().filter(|&&i| i == k) {
                            dens.push(position_density(psi, g)?);
                        }
                    }
                    Ok(())
                });
                match outcome {
                    Ok(rec) => {
                        // requested indices may repeat or be unsorted; rebuild in request order
                        let dens = match density {
                            Some((_, idx)) => reorder(idx, dens),
                            None => Vec::new(),
                        };
                        acc.add(&rec, config, dens);
                    }
                    Err(Error::DegenerateJump { norm_sq }) => {
                        log::warn!("trajectory {index}: degenerate jump (norm^2 {norm_sq:.3e}), excluded");
                        acc.degenerate += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = empty();
    for p in partials {
        total = total.merge(p?);
    }
    if total.n == 0 {
        return Err(Error::EnsembleFailure);
    }
    Ok(total)
}

/// `dens` holds one grid per request, emitted in lattice order with
/// duplicates adjacent; map back to the order of `idx`.
fn reorder(idx: &[usize], dens: Vec<Array2<f64>>) -> Vec<Array2<f64>> {
    let mut order: Vec<usize> = (0..idx.len()).collect();
    order.sort_by_key(|&i| idx[i]);
    let mut out: Vec<Option<Array2<f64>>> = vec![None; idx.len()];
    for (slot, d) in order.into_iter().zip(dens) {
        out[slot] = Some(d);
    }
    out.into_iter().map(|d| d.expect("density for every request")).collect()
}

/// Runs the ensemble and reduces it to lattice statistics.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleResult> {
    let acc = run_accumulate(config, None)?;
    Ok(finish(config, acc))
}

fn finish(config: &EnsembleConfig, acc: Accumulator) -> EnsembleResult {
    let n = acc.n as f64;
    let mut series = Vec::with_capacity(acc.mean.len());
    let mut mean_se = Vec::with_capacity(acc.mean.len());
    let mut var_se = Vec::with_capacity(acc.mean.len());
    for k in 0..acc.mean.len() {
        let mut m = Moments::default();
        let mut se_m = [0.0; 5];
        let mut se_v = [0.0; 5];
        for c in 0..5 {
            let mu = acc.mean[k][c] / n;
            let s2 = acc.second[k][c] / n;
            m.mean[c] = mu;
            m.second[c] = s2;
            if acc.n > 1 {
                let var_mean = (acc.mean_sq[k][c] / n - mu * mu).max(0.0) * n / (n - 1.0);
                se_m[c] = (var_mean / n).sqrt();
                // pooled variance = E[s] - E[m]^2; linearize with z = s - 2 mu m
                let ez2 = acc.second_sq[k][c] / n - 4.0 * mu * acc.mean_second[k][c] / n
                    + 4.0 * mu * mu * acc.mean_sq[k][c] / n;
                let ez = s2 - 2.0 * mu * mu;
                let var_z = (ez2 - ez * ez).max(0.0) * n / (n - 1.0);
                se_v[c] = (var_z / n).sqrt();
            }
        }
        series.push(ObservableRecord::from_moments(config.sample_time(k), &m, acc.jumps_in_bin[k]));
        mean_se.push(se_m);
        var_se.push(se_v);
    }
    let total_jumps = acc.hist.iter().sum();
    EnsembleResult {
        series,
        mean_se,
        var_se,
        truncation: acc.top.iter().map(|t| t / n).collect(),
        truncation_metric: acc.top_max,
        jump_histogram: acc.hist,
        hist_bin: config.hist_bin,
        total_jumps,
        n_traj_effective: acc.n,
        n_degenerate: acc.degenerate,
    }
}

/// Runs the ensemble and averages position densities at the requested
/// lattice times. Also returns the ordinary statistics.
pub fn snapshot_density(
    config: &EnsembleConfig,
    taus: &[f64],
    grid: &SampleGrid,
) -> Result<(DensitySnapshots, EnsembleResult)> {
    config.validate()?;
    let idx = density_indices(config, taus)?;
    let acc = run_accumulate(config, Some((grid, &idx)))?;
    let n = acc.n as f64;
    let grids = acc.densities.iter().map(|g| g / n).collect();
    let snaps = DensitySnapshots {
        grid: grid.clone(),
        taus: idx.iter().map(|&k| config.sample_time(k)).collect(),
        grids,
        n_traj_effective: acc.n,
    };
    Ok((snaps, finish(config, acc)))
}
