//! Measured quantities: fidelity, coarse-grained fidelity, autocorrelation,
//! population snapshots, momentum distribution and revival contrast.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, BilliardError, Result};
use crate::evolution::StateVector;
use crate::geometry::{BilliardGeometry, SiteCoord};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return invalid(format!(
                "time series has {} times but {} values",
                times.len(),
                values.len()
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("time series times must be strictly increasing");
        }
        Ok(TimeSeries { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// `|⟨ψ0|ψt⟩|²`.
pub fn fidelity(psi0: &StateVector, psit: &StateVector) -> Result<f64> {
    Ok(psi0.inner(psit)?.norm_sqr())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CgfMode {
    /// `|Σ_region ψ_m|²`
    #[default]
    Coherent,
    /// `Σ_region |ψ_m|²`
    Incoherent,
}

impl std::str::FromStr for CgfMode {
    type Err = BilliardError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coherent" => Ok(CgfMode::Coherent),
            "incoherent" => Ok(CgfMode::Incoherent),
            other => invalid(format!("unknown cgf mode {other:?}")),
        }
    }
}

/// Occupied sites of the `(n+1) x (n+1)` block with lower corner `origin`.
pub fn cgf_region(g: &BilliardGeometry, origin: SiteCoord, n: usize) -> Result<Vec<usize>> {
    if !g.is_occupied(origin) {
        return invalid(format!("cgf origin {origin} is not occupied"));
    }
    let mut region = Vec::with_capacity((n + 1) * (n + 1));
    for j in origin.j..=origin.j + n {
        for i in origin.i..=origin.i + n {
            if let Some(m) = g.index_of(SiteCoord { i, j }) {
                region.push(m);
            }
        }
    }
    region.sort_unstable();
    Ok(region)
}

pub fn cgf_over(psi: &StateVector, region: &[usize], mode: CgfMode) -> f64 {
    let a = psi.amplitudes();
    match mode {
        CgfMode::Coherent => region.iter().map(|&m| a[m]).sum::<Complex64>().norm_sqr(),
        CgfMode::Incoherent => region.iter().map(|&m| a[m].norm_sqr()).sum(),
    }
}

/// Coarse-grained fidelity over the block `[origin, origin + n]`.
pub fn cgf(
    psi: &StateVector,
    g: &BilliardGeometry,
    origin: SiteCoord,
    n: usize,
    mode: CgfMode,
) -> Result<f64> {
    if psi.len() != g.n_sites() {
        return invalid(format!(
            "state has {} amplitudes for {} sites",
            psi.len(),
            g.n_sites()
        ));
    }
    Ok(cgf_over(psi, &cgf_region(g, origin, n)?, mode))
}

/// Normalized autocorrelation
/// `C(k) = Σ_{t < N-k} (v_t - v̄)(v_{t+k} - v̄) / Σ_t (v_t - v̄)²`
/// for lags `k = 0..N`, returned against lag time.
pub fn autocorrelation(s: &TimeSeries) -> Result<TimeSeries> {
    let n = s.len();
    if n < 2 {
        return invalid(format!("autocorrelation needs at least 2 points, got {n}"));
    }
    let t = s.times();
    let step = t[1] - t[0];
    if t.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1.0)) {
        return invalid("autocorrelation needs uniformly spaced times");
    }

    let mean = s.mean();
    let centered: Vec<f64> = s.values().iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(BilliardError::DegenerateInput(
            "autocorrelation of a constant series".into(),
        ));
    }

    let values = (0..n)
        .map(|k| {
            centered[..n - k]
                .iter()
                .zip(&centered[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom
        })
        .collect();
    let lags = (0..n).map(|k| k as f64 * step).collect();
    TimeSeries::new(lags, values)
}

/// Real-valued grid over the bounding box, row-major (`j` rows).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lx: usize,
    pub ly: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.lx + i]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// `|ψ|²` on the bounding box, zero outside the mask.
pub fn population_snapshot(psi: &StateVector, g: &BilliardGeometry) -> Result<Grid> {
    let (lx, ly) = g.bounding_box();
    if psi.len() != g.n_sites() {
        return invalid(format!("state has {} amplitudes for {} sites", psi.len(), g.n_sites()));
    }
    let mut values = vec![0.0; lx * ly];
    for (a, s) in psi.amplitudes().iter().zip(g.coords()) {
        values[s.j * lx + s.i] = a.norm_sqr();
    }
    Ok(Grid { lx, ly, values })
}

/// `|F(ω_x, ω_y)|` of the unnormalized forward 2D DFT of the amplitudes
/// embedded in the bounding box. Indexed `values[wy * lx + wx]`.
pub type MomentumGrid = Grid;

pub fn momentum_distribution(psi: &StateVector, g: &BilliardGeometry) -> Result<MomentumGrid> {
    let (lx, ly) = g.bounding_box();
    if psi.len() != g.n_sites() {
        return invalid(format!("state has {} amplitudes for {} sites", psi.len(), g.n_sites()));
    }
    let mut field = vec![Complex64::new(0.0, 0.0); lx * ly];
    for (a, s) in psi.amplitudes().iter().zip(g.coords()) {
        field[s.j * lx + s.i] = *a;
    }

    let mut planner = FftPlanner::new();
    // rows
    planner.plan_fft_forward(lx).process(&mut field);
    // columns
    let col_fft = planner.plan_fft_forward(ly);
    let mut column = vec![Complex64::new(0.0, 0.0); ly];
    for i in 0..lx {
        for j in 0..ly {
            column[j] = field[j * lx + i];
        }
        col_fft.process(&mut column);
        for j in 0..ly {
            field[j * lx + i] = column[j];
        }
    }

    Ok(Grid {
        lx,
        ly,
        values: field.iter().map(|z| z.norm()).collect(),
    })
}

/// Number of cells with magnitude at least `threshold_fraction` times the
/// maximum.
pub fn peak_census(mg: &MomentumGrid, threshold_fraction: f64) -> Result<usize> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return invalid(format!(
            "threshold fraction must lie in (0, 1), got {threshold_fraction}"
        ));
    }
    let cut = threshold_fraction * mg.max();
    Ok(mg.values.iter().filter(|&&v| v >= cut).count())
}

/// Maximum of `s` within `±window_fraction * period` of each `k * period`,
/// `k = 1..=n_max`.
pub fn revival_peaks(
    s: &TimeSeries,
    period: f64,
    n_max: usize,
    window_fraction: f64,
) -> Result<Vec<f64>> {
    if !(period > 0.0) || n_max == 0 || !(window_fraction > 0.0) {
        return invalid(format!(
            "revival search needs period > 0, n_max >= 1, window > 0 (got {period}, {n_max}, {window_fraction})"
        ));
    }
    let span = s.times().last().copied().unwrap_or(0.0) - s.times().first().copied().unwrap_or(0.0);
    let needed = n_max as f64 * period;
    if span < needed * (1.0 - 1e-9) {
        return invalid(format!("series spans {span}, needs {needed}"));
    }
    let t0 = s.times()[0];
    let half = window_fraction * period;
    (1..=n_max)
        .map(|k| {
            let centre = t0 + k as f64 * period;
            s.times()
                .iter()
                .zip(s.values())
                .filter(|(t, _)| (**t - centre).abs() <= half)
                .map(|(_, v)| *v)
                .reduce(f64::max)
                .ok_or_else(|| {
                    BilliardError::InvalidArgument(format!("no samples near t = {centre}"))
                })
        })
        .collect()
}

/// Mean of the revival-window maxima divided by the global mean.
pub fn revival_contrast(
    s: &TimeSeries,
    period: f64,
    n_max: usize,
    window_fraction: f64,
) -> Result<f64> {
    let peaks = revival_peaks(s, period, n_max, window_fraction)?;
    let global = s.mean();
    if global == 0.0 {
        return Err(BilliardError::DegenerateInput("series has zero mean".into()));
    }
    Ok(peaks.iter().sum::<f64>() / peaks.len() as f64 / global)
}

/// Indices `k` with `v[k-1] < v[k] >= v[k+1]`.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&k| values[k] > values[k - 1] && values[k] >= values[k + 1])
        .collect()
}
