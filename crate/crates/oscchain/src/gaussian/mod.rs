//! Gaussian (covariance-matrix) description of the chain.
//!
//! The quadrature vector is ordered `(x_1, p_1, x_2, p_2, …)` and the mode
//! operators follow `a_i = (ω_i x_i + i p_i)/√(2ω_i)` with unit mass. Second
//! moments evolve as `dV/dt = K V + V Kᵀ + D`; the steady state solves
//! `K V + V Kᵀ + D = 0`.

mod lyapunov;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::model::ChainSpec;

pub use lyapunov::{solve_bartels_stewart, solve_kronecker};

#[derive(Debug, Error, PartialEq)]
pub enum GaussianError {
    #[error("drift matrix is not Hurwitz (max eigenvalue real part {max_real:e}); no steady state")]
    NonHurwitz { max_real: f64 },
    #[error("Lyapunov system is numerically singular")]
    SolverSingular,
    #[error("operation requires N=2 and eta=0, got N={n_sites}, eta={eta}")]
    WrongShape { n_sites: usize, eta: f64 },
    #[error("covariance matrix is unphysical (symplectic eigenvalue {nu_min} < 1/2)")]
    Unphysical { nu_min: f64 },
    #[error("covariance matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
}

/// Quadrature covariance matrix `V(i,j) = ½⟨{Y_i, Y_j}⟩`, `Y = (x_1,p_1,…)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    matrix: DMatrix<f64>,
}

impl CovarianceState {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, GaussianError> {
        assert_eq!(matrix.nrows(), matrix.ncols());
        assert_eq!(matrix.nrows() % 2, 0);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * matrix.amax().max(1.0) {
            return Err(GaussianError::NotSymmetric(asym));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    /// Symplectic eigenvalues, descending. Physical states have all ≥ 1/2.
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        let n = self.n_modes();
        let omega = symplectic_form(n);
        let m = &omega * &self.matrix;
        let eig = m.complex_eigenvalues();
        let mut nus: Vec<f64> = eig.iter().filter(|z| z.im > 0.0).map(|z| z.im).collect();
        // Roundoff can push a pair onto the real axis; fall back to |λ| pairing.
        if nus.len() != n {
            let mut mags: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
            nus = mags.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect();
        }
        nus.sort_by(|a, b| b.partial_cmp(a).unwrap());
        nus
    }
}

/// Drift matrix `K` and diffusion matrix `D` of the covariance dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDiffusion {
    pub drift: DMatrix<f64>,
    pub diffusion: DMatrix<f64>,
}

fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for i in 0..n_modes {
        omega[(2 * i, 2 * i + 1)] = 1.0;
        omega[(2 * i + 1, 2 * i)] = -1.0;
    }
    omega
}

/// Drift and diffusion matrices of the local master equation.
///
/// In quadratures the chain Hamiltonian reads
/// `H = Σ (p_i² + ω_i²x_i²)/2 + Σ [(ε+η)√(ω_iω_j) x_i x_j + (ε-η) p_i p_j/√(ω_iω_j)]`
/// over neighbours `j = i+1`; the boundary dissipators damp both quadratures
/// of sites 1 and N at rate γ/2 and inject thermal noise.
pub fn build_drift_diffusion(spec: &ChainSpec) -> DriftDiffusion {
    let n = spec.n_sites();
    let gamma = spec.gamma();
    let occ = spec.occupations();
    let mut k = DMatrix::zeros(2 * n, 2 * n);
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let (x, p) = (2 * i, 2 * i + 1);
        k[(x, p)] = 1.0;
        k[(p, x)] = -spec.omega(i) * spec.omega(i);
        if i == 0 || i + 1 == n {
            k[(x, x)] -= gamma / 2.0;
            k[(p, p)] -= gamma / 2.0;
        }
    }
    for i in 0..n - 1 {
        let j = i + 1;
        let root = (spec.omega(i) * spec.omega(j)).sqrt();
        let pp = (spec.epsilon() - spec.eta()) / root;
        let xx = (spec.epsilon() + spec.eta()) * root;
        k[(2 * i, 2 * j + 1)] += pp;
        k[(2 * j, 2 * i + 1)] += pp;
        k[(2 * i + 1, 2 * j)] -= xx;
        k[(2 * j + 1, 2 * i)] -= xx;
    }
    let boundary = [(0, occ.n_cold), (n - 1, occ.n_hot)];
    for (site, nbar) in boundary {
        let w = spec.omega(site);
        d[(2 * site, 2 * site)] = gamma * (2.0 * nbar + 1.0) / (2.0 * w);
        d[(2 * site + 1, 2 * site + 1)] = gamma * w * (2.0 * nbar + 1.0) / 2.0;
    }
    DriftDiffusion {
        drift: k,
        diffusion: d,
    }
}

fn hurwitz_check(k: &DMatrix<f64>) -> Result<(), GaussianError> {
    let eig = k.complex_eigenvalues();
    let max_real = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if max_real < -1e-10 * k.amax() {
        Ok(())
    } else {
        Err(GaussianError::NonHurwitz { max_real })
    }
}

/// Steady-state covariance: unique solution of `K V + V Kᵀ + D = 0` when `K`
/// is Hurwitz.
pub fn solve_steady(dd: &DriftDiffusion) -> Result<CovarianceState, GaussianError> {
    hurwitz_check(&dd.drift)?;
    let v = lyapunov::solve_lyapunov(&dd.drift, &dd.diffusion)?;
    let v = 0.5 * (&v + v.transpose());
    CovarianceState::new(v)
}

/// Exact propagation of the covariance through time `t`:
/// `V(t) = e^{Kt} V_0 e^{Kᵀt} + ∫_0^t e^{Ks} D e^{Kᵀs} ds`,
/// with the integral taken from the block matrix exponential of
/// `[[K, D], [0, -Kᵀ]]` (works for non-Hurwitz drift too).
pub fn evolve_covariance(
    dd: &DriftDiffusion,
    v0: &CovarianceState,
    t: f64,
) -> Result<CovarianceState, GaussianError> {
    assert!(t >= 0.0, "time must be nonnegative");
    let n = dd.drift.nrows();
    assert_eq!(v0.matrix().nrows(), n);
    if t == 0.0 {
        return Ok(v0.clone());
    }
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&dd.drift);
    block.view_mut((0, n), (n, n)).copy_from(&dd.diffusion);
    block
        .view_mut((n, n), (n, n))
        .copy_from(&(-dd.drift.transpose()));
    let e = (block * t).exp();
    let f = e.view((0, 0), (n, n)).clone_owned(); // e^{Kt}
    let g = e.view((0, n), (n, n)).clone_owned();
    let ft = f.transpose();
    let v = &f * v0.matrix() * &ft + g * &ft;
    let v = 0.5 * (&v + v.transpose());
    CovarianceState::new(v)
}

/// Table of quadratic mode moments `⟨a_i†a_j⟩` and `⟨a_i a_j⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    /// `number[(i, j)] = ⟨a_i† a_j⟩`
    pub number: DMatrix<Complex64>,
    /// `pair[(i, j)] = ⟨a_i a_j⟩`
    pub pair: DMatrix<Complex64>,
}

impl MomentTable {
    pub fn occupation(&self, i: usize) -> f64 {
        self.number[(i, i)].re
    }
}

/// Convert a covariance matrix to mode moments under
/// `a_i = (ω_i x_i + i p_i)/√(2ω_i)`.
pub fn mode_moments(v: &CovarianceState, spec: &ChainSpec) -> MomentTable {
    let n = spec.n_sites();
    assert_eq!(v.n_modes(), n, "covariance/spec dimension mismatch");
    let m = v.matrix();
    let mut number = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut pair = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            let (wi, wj) = (spec.omega(i), spec.omega(j));
            let (xi, pi, xj, pj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            let norm = 2.0 * (wi * wj).sqrt();
            let re_num = (wi * wj * m[(xi, xj)] + m[(pi, pj)]) / norm;
            let im_num = (wi * m[(xi, pj)] - wj * m[(pi, xj)]) / norm;
            number[(i, j)] = Complex64::new(re_num, im_num)
                - if i == j {
                    Complex64::new(0.5, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
            let re_pair = (wi * wj * m[(xi, xj)] - m[(pi, pj)]) / norm;
            let im_pair = (wi * m[(xi, pj)] + wj * m[(pi, xj)]) / norm;
            pair[(i, j)] = Complex64::new(re_pair, im_pair);
        }
    }
    MomentTable { number, pair }
}

/// Analytic steady-state moments for two oscillators with `η = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoOscClosedForm {
    pub moments: MomentTable,
    /// `⟨H_1⟩`, `⟨H_2⟩` including the zero-point term.
    pub local_energy: [f64; 2],
}

/// Closed-form steady-state moments for the two-oscillator chain:
/// `⟨a_1†a_1⟩ = n_1 + (2ε²/Δ²)(n_2-n_1)`, `⟨a_2†a_2⟩ = n_2 - (2ε²/Δ²)(n_2-n_1)`,
/// `⟨a_2†a_1⟩ = (ε/Δ²)(ω_1-ω_2+iγ)(n_1-n_2)` with
/// `Δ² = γ² + 4ε² + (ω_1-ω_2)²`.
pub fn closed_form_two_osc(spec: &ChainSpec) -> Result<TwoOscClosedForm, GaussianError> {
    if spec.n_sites() != 2 || spec.eta() != 0.0 {
        return Err(GaussianError::WrongShape {
            n_sites: spec.n_sites(),
            eta: spec.eta(),
        });
    }
    let (w1, w2) = (spec.omega(0), spec.omega(1));
    let (eps, gamma) = (spec.epsilon(), spec.gamma());
    let occ = spec.occupations();
    let (n1, n2) = (occ.n_cold, occ.n_hot);
    let delta2 = gamma * gamma + 4.0 * eps * eps + (w1 - w2) * (w1 - w2);
    let shift = 2.0 * eps * eps / delta2 * (n2 - n1);
    let mut number = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
    let pair = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
    number[(0, 0)] = Complex64::new(n1 + shift, 0.0);
    number[(1, 1)] = Complex64::new(n2 - shift, 0.0);
    let cross = Complex64::new(w1 - w2, gamma) * (eps / delta2 * (n1 - n2));
    number[(1, 0)] = cross; // ⟨a_2† a_1⟩
    number[(0, 1)] = cross.conj();
    let local_energy = [
        w1 * (n1 + 0.5) + w1 * shift,
        w2 * (n2 + 0.5) - w2 * shift,
    ];
    Ok(TwoOscClosedForm {
        moments: MomentTable { number, pair },
        local_energy,
    })
}

/// Von Neumann entropy of the Gaussian state with covariance `V`:
/// `S = Σ_k [(ν_k+½)ln(ν_k+½) - (ν_k-½)ln(ν_k-½)]` over symplectic
/// eigenvalues ν_k.
pub fn gaussian_entropy(v: &CovarianceState) -> Result<f64, GaussianError> {
    let nus = v.symplectic_eigenvalues();
    let nu_min = nus.iter().copied().fold(f64::INFINITY, f64::min);
    if nu_min < 0.5 - 1e-9 {
        return Err(GaussianError::Unphysical { nu_min });
    }
    let mut s = 0.0;
    for nu in nus {
        let plus = nu + 0.5;
        let minus = (nu - 0.5).max(0.0);
        s += plus * plus.ln();
        if minus > 0.0 {
            s -= minus * minus.ln();
        }
    }
    Ok(s.max(0.0))
}

/// Thermal covariance of decoupled modes with the given occupations.
pub fn thermal_covariance(frequencies: &[f64], occupations: &[f64]) -> CovarianceState {
    assert_eq!(frequencies.len(), occupations.len());
    let n = frequencies.len();
    let mut v = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let (w, nbar) = (frequencies[i], occupations[i]);
        v[(2 * i, 2 * i)] = (2.0 * nbar + 1.0) / (2.0 * w);
        v[(2 * i + 1, 2 * i + 1)] = w * (2.0 * nbar + 1.0) / 2.0;
    }
    CovarianceState::new(v).expect("diagonal matrix is symmetric")
}

/// Residual `‖K V + V Kᵀ + D‖_max`, the direct oracle for any solved state.
pub fn lyapunov_residual(dd: &DriftDiffusion, v: &CovarianceState) -> f64 {
    (&dd.drift * v.matrix() + v.matrix() * dd.drift.transpose() + &dd.diffusion).amax()
}
