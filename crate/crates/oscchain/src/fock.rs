//! Truncated-Fock-space reference solver.
//!
//! Builds the exact Liouvillian of the local master equation on a finite
//! Hilbert space and finds its steady state. This is the oracle path: dense,
//! slow, and trusted — it shares no code with the Gaussian solver.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::gaussian::MomentTable;
use crate::model::ChainSpec;

pub type CMatrix = DMatrix<Complex64>;

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Hilbert-space budget for model construction (`d^N` states).
pub const STATE_BUDGET: usize = 4096;
/// Budget for materializing the full `d^{2N}`-sized superoperator.
pub const SUPEROP_STATE_BUDGET: usize = 64;
/// Budget for the number-sector reduced steady-state solve (total reduced
/// dimension `Σ_M s_M²`).
const SECTOR_BUDGET: usize = 6000;

#[derive(Debug, Error, PartialEq)]
pub enum FockError {
    #[error("Hilbert space too large: {states} states exceeds budget {limit}")]
    DimensionBudget { states: usize, limit: usize },
    #[error("Liouvillian kernel is degenerate; steady state not unique")]
    DegenerateKernel,
    #[error("steady-state iteration failed to converge")]
    NotConverged,
    #[error("operator shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("steady state has negative eigenvalue {min_eigenvalue:e}")]
    Unphysical { min_eigenvalue: f64 },
}

/// Truncated annihilation operator: `a|n⟩ = √n |n-1⟩`, `n < d`.
pub fn destroy(d: usize) -> CMatrix {
    let mut a = CMatrix::from_element(d, d, C_ZERO);
    for n in 1..d {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// `a_site` embedded in the `N`-mode space; site 0 is the leftmost tensor
/// factor (most significant digit of the basis index).
pub fn mode_lowering(n_sites: usize, d: usize, site: usize) -> CMatrix {
    assert!(site < n_sites);
    let mut op = if site == 0 { destroy(d) } else { identity(d) };
    for k in 1..n_sites {
        let factor = if k == site { destroy(d) } else { identity(d) };
        op = op.kronecker(&factor);
    }
    op
}

/// One thermal dissipation channel attached to `site`:
/// `D(ρ) = rate_down ℒ[L,ρ] + rate_up ℒ[L†,ρ]` with `L = a_site`.
#[derive(Debug, Clone)]
pub struct JumpChannel {
    pub site: usize,
    pub operator: CMatrix,
    pub bohr_frequency: f64,
    pub rate_down: f64,
    pub rate_up: f64,
}

/// The local master equation on the truncated space:
/// `dρ/dt = −i[H,ρ] + Σ_k {rate_down ℒ[L_k,ρ] + rate_up ℒ[L_k†,ρ]}`.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    n_sites: usize,
    dim_per_mode: usize,
    hamiltonian: CMatrix,
    interaction: CMatrix,
    jumps: Vec<JumpChannel>,
    number_conserving: bool,
}

impl LindbladModel {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim_per_mode(&self) -> usize {
        self.dim_per_mode
    }

    pub fn states(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// Full chain Hamiltonian `H_S` (local + interaction).
    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    /// Interaction part `H_I` alone.
    pub fn interaction(&self) -> &CMatrix {
        &self.interaction
    }

    pub fn jumps(&self) -> &[JumpChannel] {
        &self.jumps
    }

    /// True when `[H, Σ a_i†a_i] = 0` (η = 0) and all jumps are ladder
    /// operators, so the steady state lives in the zero-charge sector.
    pub fn number_conserving(&self) -> bool {
        self.number_conserving
    }

    pub fn lowering(&self, site: usize) -> CMatrix {
        mode_lowering(self.n_sites, self.dim_per_mode, site)
    }
}

/// Assemble `H_S`, `H_I` and the boundary jump channels for `spec` with `d`
/// Fock levels per mode.
pub fn build_model(spec: &ChainSpec, d: usize) -> Result<LindbladModel, FockError> {
    assert!(d >= 2, "need at least two Fock levels");
    let n = spec.n_sites();
    let states = d
        .checked_pow(n as u32)
        .filter(|&s| s <= STATE_BUDGET)
        .ok_or(FockError::DimensionBudget {
            states: d.pow(n.min(8) as u32),
            limit: STATE_BUDGET,
        })?;
    let lower: Vec<CMatrix> = (0..n).map(|i| mode_lowering(n, d, i)).collect();
    let mut h = CMatrix::from_element(states, states, C_ZERO);
    for i in 0..n {
        h += (lower[i].adjoint() * &lower[i]).scale(spec.omega(i));
    }
    let mut h_int = CMatrix::from_element(states, states, C_ZERO);
    for i in 0..n - 1 {
        let hop = lower[i].adjoint() * &lower[i + 1];
        h_int += (&hop + hop.adjoint()).scale(spec.epsilon());
        if spec.eta() != 0.0 {
            let pair = lower[i].adjoint() * lower[i + 1].adjoint();
            h_int += (&pair + pair.adjoint()).scale(spec.eta());
        }
    }
    h += &h_int;
    let occ = spec.occupations();
    let baths = [(0usize, occ.n_cold), (n - 1, occ.n_hot)];
    let jumps = baths
        .into_iter()
        .map(|(site, nbar)| JumpChannel {
            site,
            operator: lower[site].clone(),
            bohr_frequency: spec.omega(site),
            rate_down: spec.gamma() * (nbar + 1.0),
            rate_up: spec.gamma() * nbar,
        })
        .collect();
    Ok(LindbladModel {
        n_sites: n,
        dim_per_mode: d,
        hamiltonian: h,
        interaction: h_int,
        jumps,
        number_conserving: spec.eta() == 0.0,
    })
}

/// `dρ/dt` for a given `ρ`, applied operator-by-operator (no superoperator).
pub fn apply_liouvillian(model: &LindbladModel, rho: &CMatrix) -> CMatrix {
    let h = &model.hamiltonian;
    let mut out = (h * rho - rho * h).scale(1.0) * Complex64::new(0.0, -1.0);
    for ch in &model.jumps {
        for (op, rate) in [(ch.operator.clone(), ch.rate_down), (ch.operator.adjoint(), ch.rate_up)] {
            if rate == 0.0 {
                continue;
            }
            let ld = op.adjoint();
            let opdop = &ld * &op;
            out += ((&op * rho * &ld) - (&opdop * rho + rho * &opdop).scale(0.5)).scale(rate);
        }
    }
    out
}

/// Full superoperator in column-stacking convention `vec(AρB) = (Bᵀ⊗A)vec(ρ)`.
pub fn liouvillian(model: &LindbladModel) -> Result<CMatrix, FockError> {
    let m = model.states();
    if m > SUPEROP_STATE_BUDGET {
        return Err(FockError::DimensionBudget {
            states: m,
            limit: SUPEROP_STATE_BUDGET,
        });
    }
    let id = identity(m);
    let h = &model.hamiltonian;
    let mut sup = (id.kronecker(h) - h.transpose().kronecker(&id)).scale(1.0)
        * Complex64::new(0.0, -1.0);
    for ch in &model.jumps {
        for (op, rate) in [(ch.operator.clone(), ch.rate_down), (ch.operator.adjoint(), ch.rate_up)] {
            if rate == 0.0 {
                continue;
            }
            let opdop = op.adjoint() * &op;
            sup += (op.conjugate().kronecker(&op)
                - (id.kronecker(&opdop) + opdop.transpose().kronecker(&id)).scale(0.5))
            .scale(rate);
        }
    }
    Ok(sup)
}

/// `⟨O⟩ = tr(ρO)`.
pub fn expectation(rho: &CMatrix, obs: &CMatrix) -> Complex64 {
    assert_eq!(rho.shape(), obs.shape(), "operator shape mismatch");
    let mut tr = C_ZERO;
    for i in 0..rho.nrows() {
        for k in 0..rho.ncols() {
            tr += rho[(i, k)] * obs[(k, i)];
        }
    }
    tr
}

/// First and second mode moments of `ρ` in the model's mode basis.
pub fn moments_from_rho(model: &LindbladModel, rho: &CMatrix) -> MomentTable {
    let n = model.n_sites();
    let lower: Vec<CMatrix> = (0..n).map(|i| model.lowering(i)).collect();
    let mut number = DMatrix::from_element(n, n, C_ZERO);
    let mut pair = DMatrix::from_element(n, n, C_ZERO);
    for i in 0..n {
        for j in 0..n {
            number[(i, j)] = expectation(rho, &(lower[i].adjoint() * &lower[j]));
            pair[(i, j)] = expectation(rho, &(&lower[i] * &lower[j]));
        }
    }
    MomentTable { number, pair }
}

/// Largest steady-state population of the top Fock level over all modes —
/// the truncation-bias diagnostic.
pub fn top_level_population(model: &LindbladModel, rho: &CMatrix) -> f64 {
    let (n, d, m) = (model.n_sites(), model.dim_per_mode(), model.states());
    let mut worst: f64 = 0.0;
    for site in 0..n {
        let stride = d.pow((n - 1 - site) as u32);
        let mut pop = 0.0;
        for idx in 0..m {
            if (idx / stride) % d == d - 1 {
                pop += rho[(idx, idx)].re;
            }
        }
        worst = worst.max(pop);
    }
    worst
}

/// Steady state plus its truncation diagnostics.
#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: CMatrix,
    pub top_level_population: f64,
    /// Set when the top-level population exceeds 1e−6: the truncated answer
    /// may not represent the infinite-dimensional model.
    pub low_confidence: bool,
}

/// Steady state of the model: the (unique) density matrix annihilated by the
/// Liouvillian. Number-conserving models are solved inside the zero-charge
/// sector with a block-tridiagonal factorization; otherwise a dense
/// superoperator is used (small spaces only).
pub fn steady_state(model: &LindbladModel) -> Result<SteadyState, FockError> {
    let rho = if model.number_conserving {
        let sectors = SectorBasis::build(model.n_sites, model.dim_per_mode);
        if sectors.reduced_dim() <= SECTOR_BUDGET {
            sector_steady_state(model, &sectors)?
        } else if model.states() <= SUPEROP_STATE_BUDGET {
            dense_steady_state(model)?
        } else {
            return Err(FockError::DimensionBudget {
                states: model.states(),
                limit: SUPEROP_STATE_BUDGET,
            });
        }
    } else {
        dense_steady_state(model)?
    };
    let rho = finalize_density(rho)?;
    let top = top_level_population(model, &rho);
    Ok(SteadyState {
        rho,
        top_level_population: top,
        low_confidence: top > 1e-6,
    })
}

/// Hermitize, trace-normalize and positivity-check a kernel vector's matrix.
fn finalize_density(rho: CMatrix) -> Result<CMatrix, FockError> {
    let mut rho = (&rho + rho.adjoint()).scale(0.5);
    let tr = rho.trace();
    if tr.norm() < 1e-300 {
        return Err(FockError::NotConverged);
    }
    rho /= tr;
    let eig = nalgebra::SymmetricEigen::new(rho.clone()).eigenvalues;
    let min_eig = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-10 {
        return Err(FockError::Unphysical {
            min_eigenvalue: min_eig,
        });
    }
    Ok(rho)
}

// ---------------------------------------------------------------------------
// Dense path: inverse iteration on the full superoperator.

fn dense_steady_state(model: &LindbladModel) -> Result<CMatrix, FockError> {
    let m = model.states();
    let sup = liouvillian(model)?;
    let scale = sup.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let shifted = &sup - CMatrix::identity(m * m, m * m).scale(1e-9 * scale);
    let lu = shifted.lu();
    let apply = |v: &nalgebra::DVector<Complex64>| &sup * v;
    let solve = |v: &nalgebra::DVector<Complex64>| lu.solve(v).ok_or(FockError::NotConverged);
    let start = nalgebra::DVector::from_fn(m * m, |k, _| {
        if k % (m + 1) == 0 {
            C_ONE
        } else {
            C_ZERO
        }
    });
    let v = inverse_iteration(&solve, &apply, start, scale, None)?;
    check_second_kernel_vector(&solve, &apply, &v, scale)?;
    Ok(CMatrix::from_iterator(m, m, v.iter().copied()))
}

/// Inverse-iterate toward the eigenvalue nearest the (tiny) shift. `deflate`
/// removes a known kernel direction so the iteration finds the next-smallest
/// eigenvalue instead.
fn inverse_iteration(
    solve: &dyn Fn(&nalgebra::DVector<Complex64>) -> Result<nalgebra::DVector<Complex64>, FockError>,
    apply: &dyn Fn(&nalgebra::DVector<Complex64>) -> nalgebra::DVector<Complex64>,
    start: nalgebra::DVector<Complex64>,
    scale: f64,
    deflate: Option<&nalgebra::DVector<Complex64>>,
) -> Result<nalgebra::DVector<Complex64>, FockError> {
    let mut v = start;
    let orth = |v: &mut nalgebra::DVector<Complex64>| {
        if let Some(w) = deflate {
            let overlap = w.dotc(v);
            *v -= w.scale(1.0) * overlap;
        }
    };
    orth(&mut v);
    let norm = v.norm();
    if norm == 0.0 {
        return Err(FockError::NotConverged);
    }
    v /= Complex64::new(norm, 0.0);
    for _ in 0..60 {
        let mut next = solve(&v)?;
        orth(&mut next);
        let norm = next.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(FockError::NotConverged);
        }
        next /= Complex64::new(norm, 0.0);
        let residual = apply(&next).norm();
        let settled = (&next - &v).norm().min((&next + &v).norm());
        v = next;
        if deflate.is_none() {
            if residual < 1e-12 * scale {
                return Ok(v);
            }
        } else if settled < 1e-8 {
            return Ok(v);
        }
    }
    if deflate.is_some() {
        // Non-convergence of the deflated iteration means no second near-kernel
        // direction dominates; report the last iterate for the gap estimate.
        return Ok(v);
    }
    Err(FockError::NotConverged)
}

/// Kernel-degeneracy probe: a deflated inverse iteration from a fixed
/// pseudo-random start; if its Rayleigh quotient also sits at zero the kernel
/// is (at least) two-dimensional.
fn check_second_kernel_vector(
    solve: &dyn Fn(&nalgebra::DVector<Complex64>) -> Result<nalgebra::DVector<Complex64>, FockError>,
    apply: &dyn Fn(&nalgebra::DVector<Complex64>) -> nalgebra::DVector<Complex64>,
    kernel: &nalgebra::DVector<Complex64>,
    scale: f64,
) -> Result<(), FockError> {
    let dim = kernel.len();
    let mut state = 0x1234_5678_9abc_def0u64;
    let start = nalgebra::DVector::from_fn(dim, |_, _| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let re = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let im = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        Complex64::new(re, im)
    });
    let v2 = inverse_iteration(solve, apply, start, scale, Some(kernel))?;
    let gap = apply(&v2).norm();
    if gap < 1e-8 * scale {
        return Err(FockError::DegenerateKernel);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Number-conserving path: the Liouvillian preserves the charge
// q = (total of bra) − (total of ket) of a matrix element, and couples the
// q = 0 pairs (i, j) with tot(i) = tot(j) = M only to M ± 1: a
// block-tridiagonal system in M, factorized once by block elimination.

pub(crate) struct SectorBasis {
    pub(crate) n_sites: usize,
    pub(crate) d: usize,
    /// Basis states (linear indices) grouped by total excitation number M.
    pub(crate) states_by_m: Vec<Vec<usize>>,
    /// For each linear index: (sector, position within its group).
    pub(crate) position: Vec<(usize, usize)>,
}

impl SectorBasis {
    pub(crate) fn build(n_sites: usize, d: usize) -> Self {
        let states = d.pow(n_sites as u32);
        let m_max = n_sites * (d - 1);
        let mut states_by_m = vec![Vec::new(); m_max + 1];
        let mut position = vec![(0usize, 0usize); states];
        for idx in 0..states {
            let mut total = 0;
            let mut rest = idx;
            for _ in 0..n_sites {
                total += rest % d;
                rest /= d;
            }
            position[idx] = (total, states_by_m[total].len());
            states_by_m[total].push(idx);
        }
        Self {
            n_sites,
            d,
            states_by_m,
            position,
        }
    }

    /// Degenerate grouping: all states in one sector (no conserved charge).
    pub(crate) fn trivial(n_sites: usize, d: usize) -> Self {
        let states = d.pow(n_sites as u32);
        Self {
            n_sites,
            d,
            states_by_m: vec![(0..states).collect()],
            position: (0..states).map(|i| (0, i)).collect(),
        }
    }

    pub(crate) fn reduced_dim(&self) -> usize {
        self.states_by_m.iter().map(|s| s.len() * s.len()).sum()
    }
}

/// The q = 0 blocks of the Liouvillian: `(T x)_M = A_M x_M + Down_M x_{M+1}
/// + Up_M x_{M−1}` with pair index `p = a·s_M + b` for ρ[i_a, j_b].
struct SectorBlocks {
    diag: Vec<CMatrix>,
    down: Vec<CMatrix>, // rows M, cols M+1 (down-jump AρA†, A lowering)
    up: Vec<CMatrix>,   // rows M, cols M−1 (up-jump A†ρA)
}

fn build_sector_blocks(model: &LindbladModel, basis: &SectorBasis) -> SectorBlocks {
    let n_blocks = basis.states_by_m.len();
    let h = &model.hamiltonian;
    // Diagonal of the anticommutator part: Σ rate·diag(L†L or LL†)/2.
    let m = model.states();
    let mut damp = vec![0.0f64; m];
    for ch in &model.jumps {
        for (op, rate) in [(ch.operator.clone(), ch.rate_down), (ch.operator.adjoint(), ch.rate_up)] {
            if rate == 0.0 {
                continue;
            }
            let k = op.adjoint() * &op;
            for i in 0..m {
                damp[i] += 0.5 * rate * k[(i, i)].re;
            }
        }
    }
    let mut diag = Vec::with_capacity(n_blocks);
    let mut down = Vec::with_capacity(n_blocks);
    let mut up = Vec::with_capacity(n_blocks);
    for bm in 0..n_blocks {
        let states = &basis.states_by_m[bm];
        let s = states.len();
        let mut a_blk = CMatrix::from_element(s * s, s * s, C_ZERO);
        for (a, &ia) in states.iter().enumerate() {
            for (b, &jb) in states.iter().enumerate() {
                let col = a * s + b;
                a_blk[(col, col)] -= Complex64::new(damp[ia] + damp[jb], 0.0);
                // −i(Hρ − ρH): H conserves M, so rows stay in this block.
                for (ap, &iap) in states.iter().enumerate() {
                    let hv = h[(iap, ia)];
                    if hv != C_ZERO {
                        a_blk[(ap * s + b, col)] += Complex64::new(0.0, -1.0) * hv;
                    }
                }
                for (bp, &jbp) in states.iter().enumerate() {
                    let hv = h[(jb, jbp)];
                    if hv != C_ZERO {
                        a_blk[(a * s + bp, col)] += Complex64::new(0.0, 1.0) * hv;
                    }
                }
            }
        }
        diag.push(a_blk);

        // Down_M: γ⁻ L ρ L† maps block M+1 → M.
        let mut d_blk = if bm + 1 < n_blocks {
            let sc = basis.states_by_m[bm + 1].len();
            CMatrix::from_element(s * s, sc * sc, C_ZERO)
        } else {
            CMatrix::from_element(s * s, 0, C_ZERO)
        };
        // Up_M: γ⁺ L† ρ L maps block M−1 → M.
        let mut u_blk = if bm >= 1 {
            let sc = basis.states_by_m[bm - 1].len();
            CMatrix::from_element(s * s, sc * sc, C_ZERO)
        } else {
            CMatrix::from_element(s * s, 0, C_ZERO)
        };
        for ch in &model.jumps {
            let l = &ch.operator;
            if ch.rate_down > 0.0 && bm + 1 < n_blocks {
                let src = &basis.states_by_m[bm + 1];
                let sc = src.len();
                for (ap, &iap) in basis.states_by_m[bm].iter().enumerate() {
                    for (a, &ia) in src.iter().enumerate() {
                        let lv = l[(iap, ia)];
                        if lv == C_ZERO {
                            continue;
                        }
                        for (bp, &jbp) in basis.states_by_m[bm].iter().enumerate() {
                            for (b, &jb) in src.iter().enumerate() {
                                let rv = l[(jbp, jb)].conj();
                                if rv != C_ZERO {
                                    d_blk[(ap * s + bp, a * sc + b)] +=
                                        Complex64::new(ch.rate_down, 0.0) * lv * rv;
                                }
                            }
                        }
                    }
                }
            }
            if ch.rate_up > 0.0 && bm >= 1 {
                let ld = l.adjoint();
                let src = &basis.states_by_m[bm - 1];
                let sc = src.len();
                for (ap, &iap) in basis.states_by_m[bm].iter().enumerate() {
                    for (a, &ia) in src.iter().enumerate() {
                        let lv = ld[(iap, ia)];
                        if lv == C_ZERO {
                            continue;
                        }
                        for (bp, &jbp) in basis.states_by_m[bm].iter().enumerate() {
                            for (b, &jb) in src.iter().enumerate() {
                                let rv = ld[(jbp, jb)].conj();
                                if rv != C_ZERO {
                                    u_blk[(ap * s + bp, a * sc + b)] +=
                                        Complex64::new(ch.rate_up, 0.0) * lv * rv;
                                }
                            }
                        }
                    }
                }
            }
        }
        down.push(d_blk);
        up.push(u_blk);
    }
    SectorBlocks { diag, down, up }
}

/// Block-tridiagonal LU of `(T − σ)` ready for repeated solves.
struct SectorFactorization<'a> {
    blocks: &'a SectorBlocks,
    lus: Vec<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl<'a> SectorFactorization<'a> {
    fn new(blocks: &'a SectorBlocks, shift: f64) -> Result<Self, FockError> {
        let n = blocks.diag.len();
        let mut lus = Vec::with_capacity(n);
        let mut carried: Option<CMatrix> = None; // ũ_{M−1}^{-1} Down_{M−1}
        for bm in 0..n {
            let s2 = blocks.diag[bm].nrows();
            let mut u = blocks.diag[bm].clone() - CMatrix::identity(s2, s2).scale(shift);
            if bm >= 1 {
                if let Some(prev) = &carried {
                    u -= &blocks.up[bm] * prev;
                }
            }
            let lu = u.lu();
            if bm + 1 < n {
                carried = Some(
                    lu.solve(&blocks.down[bm])
                        .ok_or(FockError::NotConverged)?,
                );
            }
            lus.push(lu);
        }
        Ok(Self { blocks, lus })
    }

    fn solve(
        &self,
        rhs: &[nalgebra::DVector<Complex64>],
    ) -> Result<Vec<nalgebra::DVector<Complex64>>, FockError> {
        let n = self.lus.len();
        let mut fwd: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(n);
        for bm in 0..n {
            let mut r = rhs[bm].clone();
            if bm >= 1 {
                let prev = self.lus[bm - 1]
                    .solve(&fwd[bm - 1])
                    .ok_or(FockError::NotConverged)?;
                r -= &self.blocks.up[bm] * prev;
            }
            fwd.push(r);
        }
        let mut x: Vec<nalgebra::DVector<Complex64>> =
            vec![nalgebra::DVector::from_element(0, C_ZERO); n];
        for bm in (0..n).rev() {
            let mut r = fwd[bm].clone();
            if bm + 1 < n {
                r -= &self.blocks.down[bm] * &x[bm + 1];
            }
            x[bm] = self.lus[bm].solve(&r).ok_or(FockError::NotConverged)?;
        }
        Ok(x)
    }
}

fn sector_apply(
    blocks: &SectorBlocks,
    x: &[nalgebra::DVector<Complex64>],
) -> Vec<nalgebra::DVector<Complex64>> {
    let n = blocks.diag.len();
    (0..n)
        .map(|bm| {
            let mut y = &blocks.diag[bm] * &x[bm];
            if bm + 1 < n {
                y += &blocks.down[bm] * &x[bm + 1];
            }
            if bm >= 1 {
                y += &blocks.up[bm] * &x[bm - 1];
            }
            y
        })
        .collect()
}

fn flatten(x: &[nalgebra::DVector<Complex64>]) -> nalgebra::DVector<Complex64> {
    let total: usize = x.iter().map(|v| v.len()).sum();
    let mut out = nalgebra::DVector::from_element(total, C_ZERO);
    let mut k = 0;
    for v in x {
        out.rows_mut(k, v.len()).copy_from(v);
        k += v.len();
    }
    out
}

fn unflatten(
    v: &nalgebra::DVector<Complex64>,
    template: &[nalgebra::DVector<Complex64>],
) -> Vec<nalgebra::DVector<Complex64>> {
    let mut out = Vec::with_capacity(template.len());
    let mut k = 0;
    for t in template {
        out.push(v.rows(k, t.len()).clone_owned());
        k += t.len();
    }
    out
}

fn sector_steady_state(
    model: &LindbladModel,
    basis: &SectorBasis,
) -> Result<CMatrix, FockError> {
    debug_assert_eq!(basis.n_sites, model.n_sites);
    debug_assert_eq!(basis.d, model.dim_per_mode);
    let blocks = build_sector_blocks(model, basis);
    let scale = blocks
        .diag
        .iter()
        .flat_map(|b| b.iter())
        .map(|z| z.norm())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let fact = SectorFactorization::new(&blocks, 1e-9 * scale)?;
    let template: Vec<nalgebra::DVector<Complex64>> = basis
        .states_by_m
        .iter()
        .map(|s| nalgebra::DVector::from_element(s.len() * s.len(), C_ZERO))
        .collect();
    let solve = |v: &nalgebra::DVector<Complex64>| {
        let parts = unflatten(v, &template);
        Ok(flatten(&fact.solve(&parts)?))
    };
    let apply = |v: &nalgebra::DVector<Complex64>| {
        let parts = unflatten(v, &template);
        flatten(&sector_apply(&blocks, &parts))
    };
    // Start from the identity: pairs (a, a) in every block.
    let mut start = template.clone();
    for (bm, s) in basis.states_by_m.iter().enumerate() {
        for a in 0..s.len() {
            start[bm][a * s.len() + a] = C_ONE;
        }
    }
    let v = inverse_iteration(&solve, &apply, flatten(&start), scale, None)?;
    check_second_kernel_vector(&solve, &apply, &v, scale)?;
    // Reassemble the full density matrix from the q = 0 amplitudes.
    let m = model.states();
    let parts = unflatten(&v, &template);
    let mut rho = CMatrix::from_element(m, m, C_ZERO);
    for (bm, states) in basis.states_by_m.iter().enumerate() {
        let s = states.len();
        for (a, &ia) in states.iter().enumerate() {
            for (b, &jb) in states.iter().enumerate() {
                rho[(ia, jb)] = parts[bm][a * s + b];
            }
        }
    }
    Ok(rho)
}
