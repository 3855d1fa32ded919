//! Single-excitation XX Hamiltonian and the stroboscopic gradient noise.
//!
//! In the sector with one spin up, the XX coupling
//! `λ(σx σx + σy σy)` moves the excitation between bonded sites with
//! amplitude `2λ`. The uniform transverse field only adds a constant and is
//! dropped. The gradient term `ε(t) Σ (i + j) σz` projects to the diagonal
//! `2ε(t)(i_m + j_m)` plus a constant, with `σz|↑⟩ = +|↑⟩`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::geometry::BilliardGeometry;

#[derive(Debug, Clone)]
pub struct Hamiltonian {
    n: usize,
    lambda: f64,
    bonds: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn hopping(&self) -> f64 {
        2.0 * self.lambda
    }

    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        let t = self.hopping();
        for &(a, b) in &self.bonds {
            h[(a, b)] = t;
            h[(b, a)] = t;
        }
        h
    }

    /// `H ψ` using the sparse bond structure.
    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let t = self.hopping();
        self.adjacency
            .iter()
            .map(|nbrs| nbrs.iter().map(|&k| psi[k]).sum::<Complex64>() * t)
            .collect()
    }

    /// `⟨ψ|H|ψ⟩`, real for Hermitian `H`.
    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        let t = self.hopping();
        self.bonds
            .iter()
            .map(|&(a, b)| 2.0 * t * (psi[a].conj() * psi[b]).re)
            .sum()
    }

    /// Coordinate triplets `m m' value`, both triangles, sorted by `(m, m')`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let t = self.hopping();
        let mut out: Vec<_> = self
            .bonds
            .iter()
            .flat_map(|&(a, b)| [(a, b, t), (b, a, t)])
            .collect();
        out.sort_by_key(|&(a, b, _)| (a, b));
        out
    }

    pub fn triplet_dump(&self) -> String {
        let mut s = String::new();
        for (a, b, v) in self.triplets() {
            writeln!(s, "{a} {b} {v}").unwrap();
        }
        s
    }
}

pub fn build_hamiltonian(g: &BilliardGeometry, lambda: f64) -> Result<Hamiltonian> {
    if g.n_sites() == 0 {
        return invalid("geometry has no sites");
    }
    if !lambda.is_finite() {
        return invalid(format!("coupling must be finite, got {lambda}"));
    }
    let adjacency = (0..g.n_sites())
        .map(|m| g.neighbors(m).map(<[usize]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    Ok(Hamiltonian {
        n: g.n_sites(),
        lambda,
        bonds: g.bonds().to_vec(),
        adjacency,
    })
}

/// Gradient noise `ε(t)(i + j)` with `ε(t)` uniform on `[0, epsilon_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub epsilon_max: f64,
    pub seed: u64,
    gradient: Vec<f64>,
}

impl NoiseModel {
    pub fn new(epsilon_max: f64, seed: u64, g: &BilliardGeometry) -> Result<Self> {
        if !(epsilon_max >= 0.0 && epsilon_max.is_finite()) {
            return invalid(format!("epsilon_max must be finite and >= 0, got {epsilon_max}"));
        }
        Ok(NoiseModel {
            epsilon_max,
            seed,
            gradient: g.coords().iter().map(|s| (s.i + s.j) as f64).collect(),
        })
    }

    /// Per-site `i + j`.
    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn sampler(&self) -> NoiseSampler {
        NoiseSampler {
            epsilon_max: self.epsilon_max,
            rng: ChaCha8Rng::seed_from_u64(self.seed),
        }
    }
}

/// Owns the generator for one noise history.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    epsilon_max: f64,
    rng: ChaCha8Rng,
}

impl NoiseSampler {
    pub fn sample(&mut self) -> f64 {
        sample_noise_amplitude(self.epsilon_max, &mut self.rng)
    }
}

/// Uniform draw on `[0, epsilon_max]`. Always consumes one draw so streams
/// stay aligned across `epsilon_max` values.
pub fn sample_noise_amplitude<R: Rng + ?Sized>(epsilon_max: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    u * epsilon_max
}

/// Diagonal `d_m = 2 eps_k (i_m + j_m)`.
pub fn noise_diagonal(nm: &NoiseModel, eps_k: f64) -> Vec<f64> {
    nm.gradient.iter().map(|&g| 2.0 * eps_k * g).collect()
}
