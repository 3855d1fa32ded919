//! Disorder ensembles: defect configurations and noise histories averaged
//! over `N_R` realizations.
//!
//! Realization `r` uses the seed `derive_seed(base_seed, r)`. Its defect
//! pattern and its noise history come from the two sub-seeds
//! `derive_seed(seed, 0)` and `derive_seed(seed, 1)`. Realizations run on a
//! rayon pool and are gathered by index, so results do not depend on the
//! number of workers.

use log::warn;
use rayon::prelude::*;

use crate::error::{invalid, BilliardError, Result};
use crate::evolution::{
    characteristic_times, diagonalize, evolve_stroboscopic_with, initial_state, CharacteristicTimes,
    PropagationPlan,
};
use crate::geometry::{
    apply_defects, build_quarter_stadium, build_rectangle, BilliardGeometry, DefectConfig, SiteCoord,
};
use crate::hamiltonian::{build_hamiltonian, NoiseModel};
use crate::observables::{
    autocorrelation, cgf_over, cgf_region, momentum_distribution, population_snapshot, CgfMode, Grid,
    TimeSeries,
};
use crate::spectral_stats::{
    collapse_degeneracies, ks_summary, spacing_histogram, unfold_trimmed, Reference, SpacingHistogram, DEFAULT_EDGE_TRIM,
    DEFAULT_POLY_DEGREE,
};

const DEGENERACY_TOL: f64 = 1e-9;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer applied to `base + (index + 1) * γ`.
///
/// For a fixed base the map is injective over all indices: the affine step
/// is a bijection mod 2^64 (γ is odd) and so is the finalizer.
pub fn derive_seed(base_seed: u64, realization_index: u64) -> u64 {
    let mut z = base_seed.wrapping_add(realization_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSpec {
    Rectangle { lx: usize, ly: usize },
    QuarterStadium { a: usize, r: usize },
    Custom(BilliardGeometry),
}

impl ShapeSpec {
    pub fn build(&self) -> Result<BilliardGeometry> {
        match self {
            ShapeSpec::Rectangle { lx, ly } => build_rectangle(*lx, *ly),
            ShapeSpec::QuarterStadium { a, r } => build_quarter_stadium(*a, *r),
            ShapeSpec::Custom(g) => Ok(g.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionParams {
    pub lambda: f64,
    /// Step duration; `None` means one swap time `T_λ`.
    pub dt: Option<f64>,
    pub t_final_in_tl: f64,
    pub record_stride: usize,
    pub cgf_n: usize,
    pub cgf_origin: SiteCoord,
    /// Which CGF series feeds the autocorrelation.
    pub acf_mode: CgfMode,
    /// Absolute snapshot times; `None` means `{0, T_L/2, t_final}`.
    pub snapshot_times: Option<Vec<f64>>,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        EvolutionParams {
            lambda: 1.0,
            dt: None,
            t_final_in_tl: 10.0,
            record_stride: 1,
            cgf_n: 3,
            cgf_origin: SiteCoord::ORIGIN,
            acf_mode: CgfMode::Coherent,
            snapshot_times: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumParams {
    pub poly_degree: usize,
    pub edge_trim: f64,
    pub n_bins: usize,
    pub s_max: f64,
    /// Merge levels closer than `1e-9` before unfolding. Off by default.
    pub collapse_degenerate: bool,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            poly_degree: DEFAULT_POLY_DEGREE,
            edge_trim: DEFAULT_EDGE_TRIM,
            n_bins: 30,
            s_max: 4.0,
            collapse_degenerate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub shape: ShapeSpec,
    pub evolution: EvolutionParams,
    pub spectrum: SpectrumParams,
    pub n_realizations: usize,
    pub p_defect: f64,
    pub epsilon_max: f64,
    pub base_seed: u64,
}

/// Step grid shared by every realization, fixed by the defect-free shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub times: CharacteristicTimes,
    pub dt: f64,
    pub n_steps: usize,
    pub record_stride: usize,
    /// Recorded step indices for each snapshot.
    pub snapshot_steps: Vec<usize>,
}

impl TimeGrid {
    pub fn recorded_times(&self) -> Vec<f64> {
        (0..=self.n_steps)
            .step_by(self.record_stride)
            .map(|k| k as f64 * self.dt)
            .collect()
    }

    pub fn final_recorded_step(&self) -> usize {
        self.n_steps - self.n_steps % self.record_stride
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return invalid("n_realizations must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.p_defect) {
            return invalid(format!("p_defect must lie in [0, 1], got {}", self.p_defect));
        }
        if !(self.epsilon_max >= 0.0 && self.epsilon_max.is_finite()) {
            return invalid(format!("epsilon_max must be >= 0, got {}", self.epsilon_max));
        }
        let e = &self.evolution;
        if !(e.t_final_in_tl >= 0.0 && e.t_final_in_tl.is_finite()) {
            return invalid(format!("t_final_in_tl must be >= 0, got {}", e.t_final_in_tl));
        }
        if e.record_stride == 0 {
            return invalid("record_stride must be >= 1");
        }
        if let Some(dt) = e.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return invalid(format!("dt must be positive, got {dt}"));
            }
        }
        Ok(())
    }

    pub fn time_grid(&self, base: &BilliardGeometry) -> Result<TimeGrid> {
        self.validate()?;
        let times = characteristic_times(base, self.evolution.lambda)?;
        let dt = self.evolution.dt.unwrap_or(times.t_lambda);
        let t_final = self.evolution.t_final_in_tl * times.t_l;
        let n_steps = (t_final / dt).round() as usize;
        let stride = self.evolution.record_stride;

        let requested = match &self.evolution.snapshot_times {
            Some(list) => list.clone(),
            None => vec![0.0, 0.5 * times.t_l, t_final],
        };
        let last = n_steps - n_steps % stride;
        let mut snapshot_steps = Vec::with_capacity(requested.len());
        for t in requested {
            if !(t >= 0.0 && t.is_finite()) {
                return invalid(format!("snapshot time must be >= 0, got {t}"));
            }
            let k = ((t / (dt * stride as f64)).round() as usize * stride).min(last);
            if !snapshot_steps.contains(&k) {
                snapshot_steps.push(k);
            }
        }
        snapshot_steps.sort_unstable();

        Ok(TimeGrid {
            times,
            dt,
            n_steps,
            record_stride: stride,
            snapshot_steps,
        })
    }
}

/// Everything measured on one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationOutput {
    pub index: usize,
    pub seed: u64,
    pub n_sites: usize,
    pub eigenvalues: Vec<f64>,
    /// Unfolded, edge-trimmed spacings; `None` when the spectrum is too
    /// short to unfold.
    pub spacings: Option<Vec<f64>>,
    pub cgf_coherent: Vec<f64>,
    pub cgf_incoherent: Vec<f64>,
    pub snapshots: Vec<Grid>,
    pub momentum: Grid,
}

pub fn run_realization(
    cfg: &EnsembleConfig,
    base: &BilliardGeometry,
    grid: &TimeGrid,
    index: usize,
) -> Result<RealizationOutput> {
    let seed = derive_seed(cfg.base_seed, index as u64);
    let inner = || -> Result<RealizationOutput> {
        let g = realization_geometry(cfg, base, index)?;

        let h = build_hamiltonian(&g, cfg.evolution.lambda)?;
        let sd = diagonalize(&h)?;
        let eigenvalues = sd.eigenvalues().to_vec();
        let spacings = level_spacings(cfg, index, &eigenvalues)?;

        let noise = if cfg.epsilon_max > 0.0 {
            Some(NoiseModel::new(cfg.epsilon_max, derive_seed(seed, 1), &g)?)
        } else {
            None
        };
        let plan = PropagationPlan {
            dt: grid.dt,
            n_steps: grid.n_steps,
            record_stride: grid.record_stride,
            noise,
        };
        let psi0 = initial_state(&g, SiteCoord::ORIGIN)?;
        let region = cgf_region(&g, cfg.evolution.cgf_origin, cfg.evolution.cgf_n)?;

        let n_rec = grid.n_steps / grid.record_stride + 1;
        let mut coherent = Vec::with_capacity(n_rec);
        let mut incoherent = Vec::with_capacity(n_rec);
        let mut snapshots = Vec::with_capacity(grid.snapshot_steps.len());
        let mut momentum = None;
        let mut failure = None;
        let final_step = grid.final_recorded_step();
        evolve_stroboscopic_with(&sd, &plan, &psi0, |step, _, psi| {
            coherent.push(cgf_over(psi, &region, CgfMode::Coherent));
            incoherent.push(cgf_over(psi, &region, CgfMode::Incoherent));
            if grid.snapshot_steps.contains(&step) {
                match population_snapshot(psi, &g) {
                    Ok(s) => snapshots.push(s),
                    Err(e) => failure = Some(e),
                }
            }
            if step == final_step {
                match momentum_distribution(psi, &g) {
                    Ok(m) => momentum = Some(m),
                    Err(e) => failure = Some(e),
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }

        Ok(RealizationOutput {
            index,
            seed,
            n_sites: g.n_sites(),
            eigenvalues,
            spacings,
            cgf_coherent: coherent,
            cgf_incoherent: incoherent,
            snapshots,
            momentum: momentum.expect("final step is always recorded"),
        })
    };
    inner().map_err(|e| BilliardError::Realization {
        index,
        seed,
        source: Box::new(e),
    })
}

/// Pointwise mean and standard error of the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanStderr {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Aggregates equal-length samples in the order given. The standard error
/// is the sample standard deviation over `sqrt(n)`, zero for one sample.
pub fn aggregate(samples: &[&[f64]]) -> MeanStderr {
    let n = samples.len();
    let len = samples.first().map_or(0, |s| s.len());
    debug_assert!(samples.iter().all(|s| s.len() == len));
    let mut mean = vec![0.0; len];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let stderr = if n < 2 {
        vec![0.0; len]
    } else {
        let mut var = vec![0.0; len];
        for s in samples {
            for ((acc, v), m) in var.iter_mut().zip(s.iter()).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        var.iter()
            .map(|v| (v / (n - 1) as f64).sqrt() / (n as f64).sqrt())
            .collect()
    };
    MeanStderr { mean, stderr }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelStatistics {
    pub pooled_spacings: Vec<f64>,
    pub histogram: SpacingHistogram,
    pub ks: [(Reference, f64); 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub n_realizations: usize,
    pub grid: TimeGrid,
    pub times: Vec<f64>,
    pub cgf_coherent: MeanStderr,
    pub cgf_incoherent: MeanStderr,
    pub acf_lags: Vec<f64>,
    /// Autocorrelation of the ensemble-mean CGF selected by `acf_mode`.
    pub acf: Vec<f64>,
    /// Standard error of the per-realization autocorrelations.
    pub acf_stderr: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<MeanStderr>,
    pub momentum: MeanStderr,
    pub bounding_box: (usize, usize),
    pub levels: Option<LevelStatistics>,
    pub realizations: Vec<RealizationSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationSummary {
    pub index: usize,
    pub seed: u64,
    pub n_sites: usize,
    pub eigenvalues: Vec<f64>,
}

fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    builder
        .build()
        .map_err(|e| BilliardError::InvalidArgument(format!("cannot start worker pool: {e}")))
}

/// Defect geometry of realization `index`, drawn exactly as in
/// [`run_realization`].
pub fn realization_geometry(cfg: &EnsembleConfig, base: &BilliardGeometry, index: usize) -> Result<BilliardGeometry> {
    let seed = derive_seed(cfg.base_seed, index as u64);
    let mut defects = DefectConfig::new(cfg.p_defect, derive_seed(seed, 0));
    defects.protected_sites = vec![cfg.evolution.cgf_origin, SiteCoord::ORIGIN];
    defects.protected_sites.dedup();
    apply_defects(base, &defects)
}

/// Spectra only: per-realization eigenvalues and pooled level statistics,
/// using the same defect draws as [`run_ensemble`].
pub fn run_spectrum_ensemble(
    cfg: &EnsembleConfig,
    workers: Option<usize>,
) -> Result<(Vec<RealizationSummary>, Option<LevelStatistics>)> {
    cfg.validate()?;
    let base = cfg.shape.build()?;
    let per: Vec<(RealizationSummary, Option<Vec<f64>>)> = worker_pool(workers)?.install(|| {
        (0..cfg.n_realizations)
            .into_par_iter()
            .map(|index| {
                let seed = derive_seed(cfg.base_seed, index as u64);
                let inner = || -> Result<_> {
                    let g = realization_geometry(cfg, &base, index)?;
                    let sd = diagonalize(&build_hamiltonian(&g, cfg.evolution.lambda)?)?;
                    let eigenvalues = sd.eigenvalues().to_vec();
                    let spacings = level_spacings(cfg, index, &eigenvalues)?;
                    Ok((
                        RealizationSummary {
                            index,
                            seed,
                            n_sites: g.n_sites(),
                            eigenvalues,
                        },
                        spacings,
                    ))
                };
                inner().map_err(|e| BilliardError::Realization {
                    index,
                    seed,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let pooled: Vec<f64> = per.iter().filter_map(|(_, s)| s.as_deref()).flatten().copied().collect();
    let levels = level_statistics(cfg, pooled)?;
    Ok((per.into_iter().map(|(s, _)| s).collect(), levels))
}

fn level_spacings(cfg: &EnsembleConfig, index: usize, eigenvalues: &[f64]) -> Result<Option<Vec<f64>>> {
    let collapsed;
    let levels = if cfg.spectrum.collapse_degenerate {
        collapsed = collapse_degeneracies(eigenvalues, DEGENERACY_TOL)?;
        &collapsed[..]
    } else {
        eigenvalues
    };
    match unfold_trimmed(levels, cfg.spectrum.poly_degree, cfg.spectrum.edge_trim) {
        Ok(u) => Ok(Some(u.spacings)),
        Err(BilliardError::InvalidArgument(msg)) => {
            warn!("realization {index}: skipping level statistics: {msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn level_statistics(cfg: &EnsembleConfig, pooled: Vec<f64>) -> Result<Option<LevelStatistics>> {
    if pooled.len() < 10 {
        if !pooled.is_empty() {
            warn!("only {} spacings, skipping KS distances", pooled.len());
        }
        return Ok(None);
    }
    Ok(Some(LevelStatistics {
        histogram: spacing_histogram(&pooled, cfg.spectrum.n_bins, cfg.spectrum.s_max)?,
        ks: ks_summary(&pooled)?,
        pooled_spacings: pooled,
    }))
}

pub fn run_ensemble(cfg: &EnsembleConfig, workers: Option<usize>) -> Result<EnsembleResult> {
    let base = cfg.shape.build()?;
    let grid = cfg.time_grid(&base)?;

    let outputs: Vec<RealizationOutput> = worker_pool(workers)?.install(|| {
        (0..cfg.n_realizations)
            .into_par_iter()
            .map(|r| run_realization(cfg, &base, &grid, r))
            .collect::<Result<Vec<_>>>()
    })?;
    aggregate_outputs(cfg, &base, grid, &outputs)
}

pub fn aggregate_outputs(
    cfg: &EnsembleConfig,
    base: &BilliardGeometry,
    grid: TimeGrid,
    outputs: &[RealizationOutput],
) -> Result<EnsembleResult> {
    let times = grid.recorded_times();
    let coherent: Vec<&[f64]> = outputs.iter().map(|o| o.cgf_coherent.as_slice()).collect();
    let incoherent: Vec<&[f64]> = outputs.iter().map(|o| o.cgf_incoherent.as_slice()).collect();
    let cgf_coherent = aggregate(&coherent);
    let cgf_incoherent = aggregate(&incoherent);

    let (acf_lags, acf, acf_stderr) = if times.len() >= 2 {
        let (mean, pick): (&MeanStderr, fn(&RealizationOutput) -> &Vec<f64>) = match cfg.evolution.acf_mode {
            CgfMode::Coherent => (&cgf_coherent, |o| &o.cgf_coherent),
            CgfMode::Incoherent => (&cgf_incoherent, |o| &o.cgf_incoherent),
        };
        let mean_acf = autocorrelation(&TimeSeries::new(times.clone(), mean.mean.clone())?)?;
        let per: Vec<Vec<f64>> = outputs
            .iter()
            .map(|o| {
                autocorrelation(&TimeSeries::new(times.clone(), pick(o).clone())?)
                    .map(|s| s.values().to_vec())
            })
            .collect::<Result<_>>()?;
        let per_refs: Vec<&[f64]> = per.iter().map(Vec::as_slice).collect();
        let spread = aggregate(&per_refs);
        (mean_acf.times().to_vec(), mean_acf.values().to_vec(), spread.stderr)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };

    let snapshots = (0..grid.snapshot_steps.len())
        .map(|k| {
            let slices: Vec<&[f64]> = outputs.iter().map(|o| o.snapshots[k].values.as_slice()).collect();
            aggregate(&slices)
        })
        .collect();
    let momenta: Vec<&[f64]> = outputs.iter().map(|o| o.momentum.values.as_slice()).collect();

    let pooled: Vec<f64> = outputs
        .iter()
        .filter_map(|o| o.spacings.as_deref())
        .flatten()
        .copied()
        .collect();
    let levels = level_statistics(cfg, pooled)?;

    Ok(EnsembleResult {
        n_realizations: outputs.len(),
        snapshot_times: grid.snapshot_steps.iter().map(|&k| k as f64 * grid.dt).collect(),
        grid,
        times,
        cgf_coherent,
        cgf_incoherent,
        acf_lags,
        acf,
        acf_stderr,
        snapshots,
        momentum: aggregate(&momenta),
        bounding_box: base.bounding_box(),
        levels,
        realizations: outputs
            .iter()
            .map(|o| RealizationSummary {
                index: o.index,
                seed: o.seed,
                n_sites: o.n_sites,
                eigenvalues: o.eigenvalues.clone(),
            })
            .collect(),
    })
}
