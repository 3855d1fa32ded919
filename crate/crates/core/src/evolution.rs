//! Exact spectral propagation and the stroboscopic split-step propagator.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, BilliardError, Result};
use crate::geometry::{BilliardGeometry, SiteCoord};
use crate::hamiltonian::{Hamiltonian, NoiseModel};

/// Complex amplitudes over the occupied sites.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<Complex64>);

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        StateVector(amplitudes)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(Complex64::norm_sqr).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        check_dims(self.len(), other.len())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.iter().map(Complex64::norm_sqr).collect()
    }

    fn to_dvector(&self) -> DVector<Complex64> {
        DVector::from_column_slice(&self.0)
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        invalid(format!("dimension mismatch: {a} vs {b}"))
    }
}

pub fn initial_state(g: &BilliardGeometry, s: SiteCoord) -> Result<StateVector> {
    let Some(m) = g.index_of(s) else {
        return invalid(format!("initial site {s} is not occupied"));
    };
    let mut amps = vec![Complex64::new(0.0, 0.0); g.n_sites()];
    amps[m] = Complex64::new(1.0, 0.0);
    Ok(StateVector(amps))
}

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    /// Columns are the normalized eigenvectors.
    eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Max-norm of `V diag(E) Vᵀ - h`.
    pub fn reconstruction_error(&self, h: &DMatrix<f64>) -> f64 {
        let v = &self.eigenvectors;
        let scaled = v * DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        (scaled * v.transpose() - h).amax()
    }

    /// Max-norm of `VᵀV - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.dim();
        (self.eigenvectors.transpose() * &self.eigenvectors - DMatrix::identity(n, n)).amax()
    }

    /// Dense `V diag(exp(-i E t)) Vᵀ`.
    pub fn propagator(&self, t: f64) -> DMatrix<Complex64> {
        let v = &self.eigenvectors;
        let n = self.dim();
        let mut cos_part = v.clone();
        let mut sin_part = v.clone();
        for (k, &e) in self.eigenvalues.iter().enumerate() {
            let (s, c) = (e * t).sin_cos();
            cos_part.column_mut(k).scale_mut(c);
            sin_part.column_mut(k).scale_mut(s);
        }
        let re = cos_part * v.transpose();
        let im = sin_part * v.transpose();
        DMatrix::from_fn(n, n, |r, c| Complex64::new(re[(r, c)], -im[(r, c)]))
    }
}

pub fn diagonalize(h: &Hamiltonian) -> Result<SpectralDecomposition> {
    diagonalize_dense(h.to_dense())
}

pub fn diagonalize_dense(m: DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return invalid(format!("expected a non-empty square matrix, got {}x{}", n, m.ncols()));
    }
    let max_iter = 1000 * n.max(10);
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, max_iter).ok_or_else(|| {
        BilliardError::NumericFailure(format!(
            "symmetric eigensolver did not converge within {max_iter} iterations (n = {n})"
        ))
    })?;
    if eig.eigenvalues.iter().any(|e| !e.is_finite()) {
        return Err(BilliardError::NumericFailure(format!(
            "non-finite eigenvalue in {n}x{n} decomposition"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// `ψ(t) = V exp(-i E t) Vᵀ ψ0`.
pub fn evolve_spectral(sd: &SpectralDecomposition, psi0: &StateVector, t: f64) -> Result<StateVector> {
    check_dims(sd.dim(), psi0.len())?;
    let v = &sd.eigenvectors;
    let re = DVector::from_iterator(psi0.len(), psi0.0.iter().map(|z| z.re));
    let im = DVector::from_iterator(psi0.len(), psi0.0.iter().map(|z| z.im));
    let cr = v.tr_mul(&re);
    let ci = v.tr_mul(&im);

    let mut rot_re = DVector::zeros(sd.dim());
    let mut rot_im = DVector::zeros(sd.dim());
    for (k, &e) in sd.eigenvalues.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -e * t);
        let c = Complex64::new(cr[k], ci[k]) * phase;
        rot_re[k] = c.re;
        rot_im[k] = c.im;
    }
    let out_re = v * rot_re;
    let out_im = v * rot_im;
    Ok(StateVector(
        out_re.iter().zip(out_im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect(),
    ))
}

#[derive(Debug, Clone)]
pub struct PropagationPlan {
    pub dt: f64,
    pub n_steps: usize,
    pub record_stride: usize,
    pub noise: Option<NoiseModel>,
}

impl PropagationPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return invalid(format!("dt must be positive, got {}", self.dt));
        }
        if self.record_stride == 0 {
            return invalid("record_stride must be >= 1");
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps)
            .step_by(self.record_stride)
            .map(|k| k as f64 * self.dt)
            .collect()
    }
}

/// One stroboscopic step `D(dt/2) U0(dt) D(dt/2)` with `D = exp(-i d dt / 2)`
/// and `d = 2 eps (i + j)`.
#[derive(Debug, Clone)]
pub struct StroboscopicPropagator {
    dt: f64,
    free: DMatrix<Complex64>,
    gradient: Vec<f64>,
}

impl StroboscopicPropagator {
    pub fn new(sd: &SpectralDecomposition, dt: f64, gradient: Vec<f64>) -> Result<Self> {
        check_dims(sd.dim(), gradient.len())?;
        Ok(StroboscopicPropagator {
            dt,
            free: sd.propagator(dt),
            gradient,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, psi: &mut StateVector, eps: f64) {
        if eps == 0.0 {
            let next = &self.free * psi.to_dvector();
            psi.0.copy_from_slice(next.as_slice());
            return;
        }
        let half: Vec<Complex64> = self
            .gradient
            .iter()
            .map(|&g| Complex64::from_polar(1.0, -2.0 * eps * g * self.dt / 2.0))
            .collect();
        for (a, p) in psi.0.iter_mut().zip(&half) {
            *a *= p;
        }
        let next = &self.free * psi.to_dvector();
        for ((a, n), p) in psi.0.iter_mut().zip(next.iter()).zip(&half) {
            *a = n * p;
        }
    }
}

/// Steps `psi0` through `plan`, calling `visit(step, t, ψ)` at `k = 0` and
/// every `record_stride` steps.
pub fn evolve_stroboscopic_with<F>(
    sd: &SpectralDecomposition,
    plan: &PropagationPlan,
    psi0: &StateVector,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, f64, &StateVector),
{
    plan.validate()?;
    check_dims(sd.dim(), psi0.len())?;
    let gradient = match &plan.noise {
        Some(nm) => {
            check_dims(nm.gradient().len(), psi0.len())?;
            nm.gradient().to_vec()
        }
        None => vec![0.0; psi0.len()],
    };
    let prop = StroboscopicPropagator::new(sd, plan.dt, gradient)?;
    let mut sampler = plan.noise.as_ref().map(NoiseModel::sampler);

    let mut psi = psi0.clone();
    visit(0, 0.0, &psi);
    for k in 1..=plan.n_steps {
        let eps = sampler.as_mut().map_or(0.0, |s| s.sample());
        prop.step(&mut psi, eps);
        if k % plan.record_stride == 0 {
            visit(k, k as f64 * plan.dt, &psi);
        }
    }
    Ok(())
}

pub type Trajectory = Vec<(f64, StateVector)>;

pub fn evolve_stroboscopic(h: &Hamiltonian, plan: &PropagationPlan, psi0: &StateVector) -> Result<Trajectory> {
    let sd = diagonalize(h)?;
    let mut out = Vec::with_capacity(plan.n_steps / plan.record_stride.max(1) + 1);
    evolve_stroboscopic_with(&sd, plan, psi0, |_, t, psi| out.push((t, psi.clone())))?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicTimes {
    /// Duration of one neighbor swap, `π / (4λ)`.
    pub t_lambda: f64,
    /// Revival scale `2 L T_λ` with `L` the larger bounding-box side.
    pub t_l: f64,
    pub length: usize,
}

pub fn characteristic_times(g: &BilliardGeometry, lambda: f64) -> Result<CharacteristicTimes> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be positive, got {lambda}"));
    }
    let t_lambda = PI / (4.0 * lambda);
    let length = g.characteristic_length();
    Ok(CharacteristicTimes {
        t_lambda,
        t_l: 2.0 * length as f64 * t_lambda,
        length,
    })
}
