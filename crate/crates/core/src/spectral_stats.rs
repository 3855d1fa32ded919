//! Nearest-neighbor level spacing statistics.
//!
//! Levels are unfolded with a least-squares polynomial fit of the cumulative
//! staircase `N(E)`, expressed in Legendre polynomials on the rescaled
//! interval `[-1, 1]` so the fit is independent of the energy origin and
//! scale.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, BilliardError, Result};

pub const DEFAULT_POLY_DEGREE: usize = 7;
pub const DEFAULT_EDGE_TRIM: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedSpectrum {
    pub unfolded_levels: Vec<f64>,
    pub spacings: Vec<f64>,
    /// Spacings that came out negative from a locally decreasing fit and
    /// were set to zero.
    pub clamped: usize,
}

impl UnfoldedSpectrum {
    pub fn mean_spacing(&self) -> f64 {
        self.spacings.iter().sum::<f64>() / self.spacings.len() as f64
    }
}

/// Legendre polynomials `P_0..=P_degree` at `x`.
fn legendre_row(x: f64, degree: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(degree + 1);
    p.push(1.0);
    if degree >= 1 {
        p.push(x);
    }
    for n in 1..degree {
        let nf = n as f64;
        p.push(((2.0 * nf + 1.0) * x * p[n] - nf * p[n - 1]) / (nf + 1.0));
    }
    p
}

fn sorted(levels: &[f64]) -> Result<Vec<f64>> {
    if levels.iter().any(|e| !e.is_finite()) {
        return invalid("levels must be finite");
    }
    let mut e = levels.to_vec();
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// Optional pre-filter: keeps one representative of each run of levels
/// within `tol` of its predecessor. Exact degeneracies come from lattice
/// reflection symmetries; merging them approximates a symmetry-reduced
/// sector without building the sectors.
pub fn collapse_degeneracies(levels: &[f64], tol: f64) -> Result<Vec<f64>> {
    if !(tol >= 0.0 && tol.is_finite()) {
        return invalid(format!("degeneracy tolerance must be >= 0, got {tol}"));
    }
    let mut out: Vec<f64> = Vec::with_capacity(levels.len());
    let mut last = f64::NEG_INFINITY;
    for e in sorted(levels)? {
        if e - last > tol {
            out.push(e);
        }
        last = e;
    }
    Ok(out)
}

/// Unfolds the full spectrum with a degree-`poly_degree` staircase fit.
pub fn unfold(eigenvalues: &[f64], poly_degree: usize) -> Result<UnfoldedSpectrum> {
    unfold_trimmed(eigenvalues, poly_degree, 0.0)
}

/// Drops `floor(edge_trim * n)` levels at each spectral edge, then unfolds
/// what remains.
pub fn unfold_trimmed(eigenvalues: &[f64], poly_degree: usize, edge_trim: f64) -> Result<UnfoldedSpectrum> {
    if poly_degree == 0 {
        return invalid("polynomial degree must be >= 1");
    }
    if !(0.0..0.5).contains(&edge_trim) {
        return invalid(format!("edge trim must lie in [0, 0.5), got {edge_trim}"));
    }
    let all = sorted(eigenvalues)?;
    let cut = (edge_trim * all.len() as f64).floor() as usize;
    let levels = &all[cut..all.len() - cut];

    let mut distinct = levels.to_vec();
    distinct.dedup();
    if distinct.len() < poly_degree + 2 {
        return invalid(format!(
            "unfolding with degree {poly_degree} needs at least {} distinct levels, got {}",
            poly_degree + 2,
            distinct.len()
        ));
    }

    let lo = levels[0];
    let hi = levels[levels.len() - 1];
    let scale = |e: f64| (2.0 * e - (lo + hi)) / (hi - lo);

    let n = levels.len();
    let design = DMatrix::from_fn(n, poly_degree + 1, |r, c| legendre_row(scale(levels[r]), poly_degree)[c]);
    let staircase = DVector::from_iterator(n, (1..=n).map(|k| k as f64));
    let coeffs = design
        .svd(true, true)
        .solve(&staircase, 1e-14)
        .map_err(|e| BilliardError::NumericFailure(format!("staircase fit failed: {e}")))?;

    let unfolded_levels: Vec<f64> = levels
        .iter()
        .map(|&e| {
            legendre_row(scale(e), poly_degree)
                .iter()
                .zip(coeffs.iter())
                .map(|(p, c)| p * c)
                .sum()
        })
        .collect();

    let mut clamped = 0;
    let spacings = unfolded_levels
        .windows(2)
        .map(|w| {
            let s = w[1] - w[0];
            if s < 0.0 {
                clamped += 1;
                0.0
            } else {
                s
            }
        })
        .collect();

    Ok(UnfoldedSpectrum {
        unfolded_levels,
        spacings,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpacingHistogram {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub overflow: usize,
}

impl SpacingHistogram {
    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Density histogram on `[0, s_max]`; spacings above `s_max` are counted in
/// `overflow` and excluded from the normalization.
pub fn spacing_histogram(spacings: &[f64], n_bins: usize, s_max: f64) -> Result<SpacingHistogram> {
    if n_bins < 2 {
        return invalid(format!("need at least 2 bins, got {n_bins}"));
    }
    if !(s_max > 0.0 && s_max.is_finite()) {
        return invalid(format!("s_max must be positive, got {s_max}"));
    }
    if spacings.is_empty() {
        return invalid("no spacings to histogram");
    }
    let width = s_max / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    let mut overflow = 0;
    for &s in spacings {
        if s > s_max {
            overflow += 1;
        } else {
            let b = ((s / width).floor() as usize).min(n_bins - 1);
            counts[b] += 1;
        }
    }
    let inside = spacings.len() - overflow;
    if inside == 0 {
        return invalid(format!("all {} spacings exceed s_max = {s_max}", spacings.len()));
    }
    let bin_edges = (0..=n_bins).map(|k| k as f64 * width).collect();
    let densities = counts
        .iter()
        .map(|&c| c as f64 / (inside as f64 * width))
        .collect();
    Ok(SpacingHistogram {
        bin_edges,
        densities,
        overflow,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Poisson,
    SemiPoisson,
    Wigner,
}

impl Reference {
    pub const ALL: [Reference; 3] = [Reference::Poisson, Reference::SemiPoisson, Reference::Wigner];

    pub fn name(self) -> &'static str {
        match self {
            Reference::Poisson => "poisson",
            Reference::SemiPoisson => "semi_poisson",
            Reference::Wigner => "wigner",
        }
    }

    fn pdf_unchecked(self, s: f64) -> f64 {
        match self {
            Reference::Poisson => (-s).exp(),
            Reference::SemiPoisson => 4.0 * s * (-2.0 * s).exp(),
            Reference::Wigner => 0.5 * PI * s * (-0.25 * PI * s * s).exp(),
        }
    }

    fn cdf_unchecked(self, s: f64) -> f64 {
        match self {
            Reference::Poisson => -(-s).exp_m1(),
            Reference::SemiPoisson => 1.0 - (1.0 + 2.0 * s) * (-2.0 * s).exp(),
            Reference::Wigner => -(-0.25 * PI * s * s).exp_m1(),
        }
    }

    pub fn cdf(self, s: f64) -> Result<f64> {
        check_spacing(s)?;
        Ok(self.cdf_unchecked(s))
    }
}

impl FromStr for Reference {
    type Err = BilliardError;

    fn from_str(s: &str) -> Result<Self> {
        Reference::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| BilliardError::InvalidArgument(format!("unknown reference distribution {s:?}")))
    }
}

fn check_spacing(s: f64) -> Result<()> {
    if s >= 0.0 {
        Ok(())
    } else {
        invalid(format!("spacing must be >= 0, got {s}"))
    }
}

/// Poisson `e^{-s}`, semi-Poisson `4s e^{-2s}`, Wigner `(π/2) s e^{-πs²/4}`.
pub fn reference_pdf(kind: Reference, s: f64) -> Result<f64> {
    check_spacing(s)?;
    Ok(kind.pdf_unchecked(s))
}

/// Kolmogorov–Smirnov statistic of the sample against a reference CDF.
pub fn ks_distance(spacings: &[f64], kind: Reference) -> Result<f64> {
    if spacings.len() < 10 {
        return invalid(format!("KS distance needs at least 10 spacings, got {}", spacings.len()));
    }
    let sample = sorted(spacings)?;
    if let Some(&s) = sample.first() {
        check_spacing(s)?;
    }
    let n = sample.len() as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let f = kind.cdf_unchecked(s);
            let above = (k + 1) as f64 / n - f;
            let below = f - k as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max);
    Ok(d.clamp(0.0, 1.0))
}

/// KS distances to every reference, in [`Reference::ALL`] order.
pub fn ks_summary(spacings: &[f64]) -> Result<[(Reference, f64); 3]> {
    let mut out = [(Reference::Poisson, 0.0); 3];
    for (slot, kind) in out.iter_mut().zip(Reference::ALL) {
        *slot = (kind, ks_distance(spacings, kind)?);
    }
    Ok(out)
}

/// Reference with the smallest KS distance.
pub fn best_fit(spacings: &[f64]) -> Result<Reference> {
    let summary = ks_summary(spacings)?;
    Ok(summary
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| *k)
        .expect("three references"))
}
