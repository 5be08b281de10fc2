//! Repeated-interactions (collision model) simulator.
//!
//! Each stroke couples the chain to one fresh thermal ancilla per bath with
//! `H_tot = H_S + Σ_i {ω_i b_i†b_i + (g/√τ)(a_i†b_i + b_i†a_i)}`, evolves the
//! joint state unitarily for a time τ, and traces the ancillas out again.
//! Energy bookkeeping follows the stroke ledger exactly: `δQ_i` is the energy
//! lost by ancilla `i` and `δW = ΔH_S − Σ δQ_i`, so the first law holds by
//! construction. Entropy production is evaluated on the pre-trace joint state.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fock::{self, CMatrix, FockError, SectorBasis};
use crate::gaussian;
use crate::model::ChainSpec;
use crate::thermo::{self, Rates};

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Budget for the charge-sector representation of the joint state
/// (`Σ_M s_M²` complex entries).
const SECTOR_BUDGET: usize = 30_000_000;
/// Budget for the dense joint representation (no conserved charge).
const DENSE_BUDGET: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum CollisionError {
    #[error("joint Hilbert space too large: {size} exceeds budget {limit}")]
    DimensionBudget { size: usize, limit: usize },
    #[error("need at least 3 tau samples, got {0}")]
    InsufficientSamples(usize),
    #[error("system state is {got}x{got}, expected d^N = {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Per-stroke energy and entropy ledger. All energies positive into the
/// system.
#[derive(Debug, Clone, Serialize)]
pub struct StrokeRecord {
    /// Heat drawn from each bath ancilla: `[δQ_cold, δQ_hot]`,
    /// `δQ_i = ⟨H_{E_i}⟩_0 − ⟨H_{E_i}⟩_τ`.
    pub heat: [f64; 2],
    /// External work `δW = ΔH_S + Σ_i ΔH_{E_i}`.
    pub work: f64,
    /// System energy change `ΔH_S` over the stroke.
    pub d_e_system: f64,
    /// `Σ = I(S:E) + S(ρ_E(τ)‖ρ_E^th) ≥ 0`.
    pub entropy_production: f64,
    pub mutual_information: f64,
    pub relative_entropy: f64,
    /// Set when any mode's top Fock level carries more than 1e−6 population
    /// after the stroke.
    pub truncation_flagged: bool,
}

/// Truncated Gibbs state of a `d`-level oscillator.
pub fn thermal_ancilla(omega: f64, temperature: f64, d: usize) -> CMatrix {
    let p = thermal_populations(omega, temperature, d);
    CMatrix::from_fn(d, d, |i, j| {
        if i == j {
            Complex64::new(p[i], 0.0)
        } else {
            C_ZERO
        }
    })
}

fn thermal_populations(omega: f64, temperature: f64, d: usize) -> Vec<f64> {
    let beta = 1.0 / temperature;
    let w: Vec<f64> = (0..d).map(|n| (-beta * omega * n as f64).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|p| p / z).collect()
}

fn log_partition(omega: f64, temperature: f64, d: usize) -> f64 {
    let beta = 1.0 / temperature;
    (0..d)
        .map(|n| (-beta * omega * n as f64).exp())
        .sum::<f64>()
        .ln()
}

// ---------------------------------------------------------------------------
// Sparse per-sector Hamiltonian and exact (machine-precision) propagation.

/// One charge sector of a real symmetric quadratic-Hamiltonian, stored by
/// rows.
struct SparseH {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseH {
    fn mul(&self, x: &CMatrix) -> CMatrix {
        let (n, cols) = x.shape();
        let mut y = CMatrix::from_element(n, cols, C_ZERO);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                for j in 0..cols {
                    y[(r, j)] += x[(c, j)] * v;
                }
            }
        }
        y
    }

    fn norm_inf(&self) -> f64 {
        self.rows
            .iter()
            .map(|row| row.iter().map(|(_, v)| v.abs()).sum())
            .fold(0.0f64, f64::max)
    }
}

/// Build the per-sector matrices of `Σ_k ω_k n_k + Σ hops t(a_k†a_l + h.c.)
/// + Σ pairs t(a_k†a_l† + h.c.)` over the given basis.
fn build_sector_h(
    basis: &SectorBasis,
    freqs: &[f64],
    hops: &[(usize, usize, f64)],
    pairs: &[(usize, usize, f64)],
) -> Vec<SparseH> {
    let (n_modes, d) = (basis.n_sites, basis.d);
    assert_eq!(freqs.len(), n_modes);
    let stride = |k: usize| d.pow((n_modes - 1 - k) as u32);
    let digit = |idx: usize, k: usize| (idx / stride(k)) % d;
    basis
        .states_by_m
        .iter()
        .map(|states| {
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); states.len()];
            for (r, &idx) in states.iter().enumerate() {
                let mut diag = 0.0;
                for k in 0..n_modes {
                    diag += freqs[k] * digit(idx, k) as f64;
                }
                rows[r].push((r, diag));
                for &(k, l, t) in hops {
                    // t a_k† a_l and t a_l† a_k
                    for (from, to) in [(l, k), (k, l)] {
                        let (nf, nt) = (digit(idx, from), digit(idx, to));
                        if nf >= 1 && nt + 1 < d {
                            let jdx = idx - stride(from) + stride(to);
                            let (sec, pos) = basis.position[jdx];
                            debug_assert_eq!(states[pos], jdx);
                            let _ = sec;
                            let v = t * ((nf as f64) * (nt as f64 + 1.0)).sqrt();
                            rows[r].push((pos, v));
                        }
                    }
                }
                for &(k, l, t) in pairs {
                    let (nk, nl) = (digit(idx, k), digit(idx, l));
                    if nk + 1 < d && nl + 1 < d {
                        let jdx = idx + stride(k) + stride(l);
                        let (_, pos) = basis.position[jdx];
                        let v = t * ((nk as f64 + 1.0) * (nl as f64 + 1.0)).sqrt();
                        rows[r].push((pos, v));
                    }
                    if nk >= 1 && nl >= 1 {
                        let jdx = idx - stride(k) - stride(l);
                        let (_, pos) = basis.position[jdx];
                        let v = t * ((nk as f64) * (nl as f64)).sqrt();
                        rows[r].push((pos, v));
                    }
                }
            }
            // Rows were built column-by-column against the *global* index of
            // the target; entries above point at local positions only when the
            // target stays inside this sector, which holds for hops always and
            // for pairs only in the trivial basis. (Pair terms change the
            // total number, so callers use them with `SectorBasis::trivial`.)
            SparseH { rows }
        })
        .collect()
}

/// `Y = e^{−iτH} X`, scaling + truncated Taylor; exact to machine precision.
fn propagate(h: &SparseH, tau: f64, x: &CMatrix) -> CMatrix {
    let norm = h.norm_inf();
    let mut steps = 1u32;
    while tau * norm / steps as f64 > 3.0 {
        steps *= 2;
    }
    let dt = tau / steps as f64;
    let mut y = x.clone();
    for _ in 0..steps {
        let mut acc = y.clone();
        let mut term = y;
        for k in 1..200 {
            term = h.mul(&term) * Complex64::new(0.0, -dt / k as f64);
            acc += &term;
            if term.camax() < 1e-16 * acc.camax().max(1e-300) {
                break;
            }
        }
        y = acc;
    }
    y
}

/// `ρ' = U ρ U†` with `U = e^{−iτH}`: `Y = Uρ`, `ρ' = (U Y†)†`.
fn evolve_density(h: &SparseH, tau: f64, rho: &CMatrix) -> CMatrix {
    let y = propagate(h, tau, rho);
    propagate(h, tau, &y.adjoint()).adjoint()
}

// ---------------------------------------------------------------------------
// Stroke engine: bases, Hamiltonians and ancilla data, built once per (τ, g).

struct Engine {
    d: usize,
    tau: f64,
    n_sites: usize,
    joint: SectorBasis,
    sys: SectorBasis,
    joint_h: Vec<SparseH>,
    h_s: CMatrix,
    /// Thermal populations of the two ancillas, `[cold, hot]`.
    anc_pop: [Vec<f64>; 2],
    anc_omega: [f64; 2],
    anc_temp: [f64; 2],
}

impl Engine {
    fn new(spec: &ChainSpec, tau: f64, g: f64, d: usize) -> Result<Self, CollisionError> {
        assert!(tau > 0.0 && g >= 0.0 && d >= 2);
        let n = spec.n_sites();
        let n_modes = n + 2;
        let joint_states = d
            .checked_pow(n_modes as u32)
            .ok_or(CollisionError::DimensionBudget {
                size: usize::MAX,
                limit: SECTOR_BUDGET,
            })?;
        let sectored = spec.eta() == 0.0;
        let joint = if sectored {
            let b = SectorBasis::build(n_modes, d);
            if b.reduced_dim() > SECTOR_BUDGET {
                return Err(CollisionError::DimensionBudget {
                    size: b.reduced_dim(),
                    limit: SECTOR_BUDGET,
                });
            }
            b
        } else {
            if joint_states > DENSE_BUDGET {
                return Err(CollisionError::DimensionBudget {
                    size: joint_states,
                    limit: DENSE_BUDGET,
                });
            }
            SectorBasis::trivial(n_modes, d)
        };
        let sys = if sectored {
            SectorBasis::build(n, d)
        } else {
            SectorBasis::trivial(n, d)
        };
        let mut freqs: Vec<f64> = spec.frequencies().to_vec();
        freqs.push(spec.omega_first());
        freqs.push(spec.omega_last());
        let mut hops: Vec<(usize, usize, f64)> = (0..n - 1)
            .map(|i| (i, i + 1, spec.epsilon()))
            .collect();
        let coupling = g / tau.sqrt();
        hops.push((0, n, coupling));
        hops.push((n - 1, n + 1, coupling));
        let pairs: Vec<(usize, usize, f64)> = if spec.eta() != 0.0 {
            (0..n - 1).map(|i| (i, i + 1, spec.eta())).collect()
        } else {
            Vec::new()
        };
        let joint_h = build_sector_h(&joint, &freqs, &hops, &pairs);
        let h_s = fock::build_model(spec, d)
            .map_err(CollisionError::Fock)?
            .hamiltonian()
            .clone();
        Ok(Self {
            d,
            tau,
            n_sites: n,
            joint,
            sys,
            joint_h,
            h_s,
            anc_pop: [
                thermal_populations(spec.omega_first(), spec.t_cold(), d),
                thermal_populations(spec.omega_last(), spec.t_hot(), d),
            ],
            anc_omega: [spec.omega_first(), spec.omega_last()],
            anc_temp: [spec.t_cold(), spec.t_hot()],
        })
    }

    fn sys_states(&self) -> usize {
        self.d.pow(self.n_sites as u32)
    }

    /// Joint blocks of `ρ_S ⊗ ρ_E1 ⊗ ρ_E2` (ancillas diagonal).
    fn attach_ancillas(&self, rho_s: &CMatrix) -> Vec<CMatrix> {
        let d = self.d;
        let mut blocks: Vec<CMatrix> = self
            .joint
            .states_by_m
            .iter()
            .map(|s| CMatrix::from_element(s.len(), s.len(), C_ZERO))
            .collect();
        for (sec, states) in self.joint.states_by_m.iter().enumerate() {
            for (p, &idx) in states.iter().enumerate() {
                let (is, rest) = (idx / (d * d), idx % (d * d));
                let (a1, a2) = (rest / d, rest % d);
                let weight = self.anc_pop[0][a1] * self.anc_pop[1][a2];
                if weight == 0.0 {
                    continue;
                }
                // Pair with every system ket sharing this ancilla config.
                let (ssec, _) = self.sys.position[is];
                for &js in &self.sys.states_by_m[ssec] {
                    let jdx = js * d * d + rest;
                    let (qsec, q) = self.joint.position[jdx];
                    if qsec == sec {
                        blocks[sec][(p, q)] = rho_s[(is, js)] * weight;
                    }
                }
            }
        }
        blocks
    }

    /// Partial trace over the two ancillas.
    fn reduce_system(&self, blocks: &[CMatrix]) -> CMatrix {
        let d = self.d;
        let m = self.sys_states();
        let mut out = CMatrix::from_element(m, m, C_ZERO);
        for (sec, states) in self.joint.states_by_m.iter().enumerate() {
            for (p, &idx) in states.iter().enumerate() {
                let (is, rest) = (idx / (d * d), idx % (d * d));
                let (ssec, _) = self.sys.position[is];
                for &js in &self.sys.states_by_m[ssec] {
                    let jdx = js * d * d + rest;
                    let (qsec, q) = self.joint.position[jdx];
                    if qsec == sec {
                        out[(is, js)] += blocks[sec][(p, q)];
                    }
                }
            }
        }
        out
    }

    /// Partial trace over the system: the joint state of both ancillas.
    fn reduce_env(&self, blocks: &[CMatrix]) -> CMatrix {
        let d = self.d;
        let mut out = CMatrix::from_element(d * d, d * d, C_ZERO);
        for (sec, states) in self.joint.states_by_m.iter().enumerate() {
            for (p, &idx) in states.iter().enumerate() {
                let (is, rest) = (idx / (d * d), idx % (d * d));
                for a in 0..d * d {
                    let jdx = is * d * d + a;
                    let (qsec, q) = self.joint.position[jdx];
                    if qsec == sec {
                        out[(rest, a)] += blocks[sec][(p, q)];
                    }
                }
            }
        }
        out
    }

    /// `⟨n_mode⟩` from the joint diagonal.
    fn mode_occupation(&self, blocks: &[CMatrix], mode: usize) -> f64 {
        let (d, n_modes) = (self.d, self.n_sites + 2);
        let stride = d.pow((n_modes - 1 - mode) as u32);
        let mut acc = 0.0;
        for (sec, states) in self.joint.states_by_m.iter().enumerate() {
            for (p, &idx) in states.iter().enumerate() {
                let n = (idx / stride) % d;
                if n > 0 {
                    acc += blocks[sec][(p, p)].re * n as f64;
                }
            }
        }
        acc
    }

    /// Worst top-Fock-level population over all joint modes.
    fn top_population(&self, blocks: &[CMatrix]) -> f64 {
        let (d, n_modes) = (self.d, self.n_sites + 2);
        let mut per_mode = vec![0.0f64; n_modes];
        for (sec, states) in self.joint.states_by_m.iter().enumerate() {
            for (p, &idx) in states.iter().enumerate() {
                let w = blocks[sec][(p, p)].re;
                for (k, acc) in per_mode.iter_mut().enumerate() {
                    let stride = d.pow((n_modes - 1 - k) as u32);
                    if (idx / stride) % d == d - 1 {
                        *acc += w;
                    }
                }
            }
        }
        per_mode.into_iter().fold(0.0, f64::max)
    }

    fn run_stroke(&self, rho_s: &CMatrix) -> Result<(CMatrix, StrokeRecord), CollisionError> {
        let m = self.sys_states();
        if rho_s.nrows() != m || rho_s.ncols() != m {
            return Err(CollisionError::ShapeMismatch {
                expected: m,
                got: rho_s.nrows(),
            });
        }
        let blocks = self.attach_ancillas(rho_s);
        let evolved: Vec<CMatrix> = blocks
            .par_iter()
            .zip(self.joint_h.par_iter())
            .map(|(b, h)| {
                if b.nrows() == 0 {
                    b.clone()
                } else {
                    evolve_density(h, self.tau, b)
                }
            })
            .collect();
        let rho_s_out = self.reduce_system(&evolved);
        let rho_e_out = self.reduce_env(&evolved);

        // Energy ledger.
        let e_s0 = fock::expectation(rho_s, &self.h_s).re;
        let e_s1 = fock::expectation(&rho_s_out, &self.h_s).re;
        let mut heat = [0.0f64; 2];
        for (i, q) in heat.iter_mut().enumerate() {
            let n0: f64 = self.anc_pop[i]
                .iter()
                .enumerate()
                .map(|(n, p)| n as f64 * p)
                .sum();
            let n1 = self.mode_occupation(&evolved, self.n_sites + i);
            *q = self.anc_omega[i] * (n0 - n1);
        }
        let d_e_system = e_s1 - e_s0;
        let work = d_e_system - heat[0] - heat[1];

        // Entropy ledger on the pre-trace joint state (unitarily invariant:
        // S(ρ_SE(τ)) = S(ρ_S) + Σ S(ρ_Ei^th)).
        let s_s0 = vn_entropy(rho_s);
        let s_s1 = vn_entropy(&rho_s_out);
        let s_e1 = vn_entropy(&rho_e_out);
        let s_e0: f64 = (0..2)
            .map(|i| diag_entropy(&self.anc_pop[i]))
            .sum();
        let mutual_information = s_s1 + s_e1 - s_s0 - s_e0;
        let mut relative_entropy = -s_e1;
        for i in 0..2 {
            let beta = 1.0 / self.anc_temp[i];
            let n1 = self.mode_occupation(&evolved, self.n_sites + i);
            relative_entropy += beta * self.anc_omega[i] * n1
                + log_partition(self.anc_omega[i], self.anc_temp[i], self.d);
        }
        let record = StrokeRecord {
            heat,
            work,
            d_e_system,
            entropy_production: mutual_information + relative_entropy,
            mutual_information,
            relative_entropy,
            truncation_flagged: self.top_population(&evolved) > 1e-6,
        };
        Ok((rho_s_out, record))
    }

    /// Off-charge-sector mass of a system state; the sector representation
    /// silently drops it, so reject states where it matters.
    fn off_sector_mass(&self, rho_s: &CMatrix) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..rho_s.nrows() {
            for j in 0..rho_s.ncols() {
                if self.sys.position[i].0 != self.sys.position[j].0 {
                    worst = worst.max(rho_s[(i, j)].norm());
                }
            }
        }
        worst
    }
}

fn vn_entropy(rho: &CMatrix) -> f64 {
    let herm = (rho + rho.adjoint()).scale(0.5);
    let eig = nalgebra::SymmetricEigen::new(herm).eigenvalues;
    -eig.iter()
        .filter(|&&p| p > 1e-300)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

fn diag_entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 1e-300)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

fn make_engine(
    spec: &ChainSpec,
    rho_s: &CMatrix,
    tau: f64,
    g: f64,
    d: usize,
) -> Result<Engine, CollisionError> {
    let engine = Engine::new(spec, tau, g, d)?;
    if spec.eta() == 0.0 && engine.off_sector_mass(rho_s) > 1e-12 {
        // Cross-charge coherences need the dense representation.
        let states = d.pow((spec.n_sites() + 2) as u32);
        if states > DENSE_BUDGET {
            return Err(CollisionError::DimensionBudget {
                size: states,
                limit: DENSE_BUDGET,
            });
        }
        let mut dense = engine;
        dense.joint = SectorBasis::trivial(spec.n_sites() + 2, d);
        dense.sys = SectorBasis::trivial(spec.n_sites(), d);
        let mut freqs: Vec<f64> = spec.frequencies().to_vec();
        freqs.push(spec.omega_first());
        freqs.push(spec.omega_last());
        let n = spec.n_sites();
        let mut hops: Vec<(usize, usize, f64)> =
            (0..n - 1).map(|i| (i, i + 1, spec.epsilon())).collect();
        hops.push((0, n, g / tau.sqrt()));
        hops.push((n - 1, n + 1, g / tau.sqrt()));
        dense.joint_h = build_sector_h(&dense.joint, &freqs, &hops, &[]);
        return Ok(dense);
    }
    Ok(engine)
}

/// One collision stroke: returns the post-stroke system state and its ledger.
pub fn stroke(
    rho_s: &CMatrix,
    spec: &ChainSpec,
    tau: f64,
    g: f64,
    d: usize,
) -> Result<(CMatrix, StrokeRecord), CollisionError> {
    make_engine(spec, rho_s, tau, g, d)?.run_stroke(rho_s)
}

/// Repeated strokes with fresh ancillas each time.
pub fn run_strokes(
    rho0: &CMatrix,
    spec: &ChainSpec,
    tau: f64,
    g: f64,
    d: usize,
    count: usize,
) -> Result<(CMatrix, Vec<StrokeRecord>), CollisionError> {
    assert!(count >= 1);
    let engine = make_engine(spec, rho0, tau, g, d)?;
    let mut rho = rho0.clone();
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let (next, record) = engine.run_stroke(&rho)?;
        rho = next;
        records.push(record);
    }
    Ok((rho, records))
}

/// Linear fit `y ≈ intercept + slope·x` by least squares.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    pub intercept: f64,
    pub slope: f64,
}

fn linear_fit(x: &[f64], y: &[f64]) -> RateFit {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    RateFit {
        intercept: (sy - slope * sx) / n,
        slope,
    }
}

/// τ → 0 convergence study of the per-stroke rates against the continuous
/// master-equation rates.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub taus: Vec<f64>,
    /// Per-stroke rates `δQ_1/τ`, `δQ_N/τ`, `δW/τ`, `Σ/τ` at each τ,
    /// evaluated at the master-equation steady state.
    pub q_first: Vec<f64>,
    pub q_last: Vec<f64>,
    pub w: Vec<f64>,
    pub sigma: Vec<f64>,
    pub q_first_fit: RateFit,
    pub q_last_fit: RateFit,
    pub w_fit: RateFit,
    /// Continuous-limit reference rates from the Gaussian steady state.
    pub lme: Rates,
    pub truncation_flagged: bool,
}

/// Hold the system at the master-equation steady state and measure per-stroke
/// rates for each τ; the linear-in-τ intercepts recover the LME rates when
/// `g² = γ`.
pub fn rate_extrapolation(
    spec: &ChainSpec,
    g: f64,
    d: usize,
    taus: &[f64],
) -> Result<ConvergenceReport, CollisionError> {
    if taus.len() < 3 {
        return Err(CollisionError::InsufficientSamples(taus.len()));
    }
    let mut taus: Vec<f64> = taus.to_vec();
    taus.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let model = fock::build_model(spec, d)?;
    let rho = fock::steady_state(&model)?.rho;
    let results: Vec<(StrokeRecord, f64)> = taus
        .iter()
        .map(|&tau| {
            let (_, rec) = stroke(&rho, spec, tau, g, d)?;
            Ok((rec, tau))
        })
        .collect::<Result<_, CollisionError>>()?;
    let q_first: Vec<f64> = results.iter().map(|(r, t)| r.heat[0] / t).collect();
    let q_last: Vec<f64> = results.iter().map(|(r, t)| r.heat[1] / t).collect();
    let w: Vec<f64> = results.iter().map(|(r, t)| r.work / t).collect();
    let sigma: Vec<f64> = results
        .iter()
        .map(|(r, t)| r.entropy_production / t)
        .collect();
    let truncation_flagged = results.iter().any(|(r, _)| r.truncation_flagged);
    let dd = gaussian::build_drift_diffusion(spec);
    let lme = gaussian::solve_steady(&dd)
        .map(|v| thermo::gaussian_rates(spec, &gaussian::mode_moments(&v, spec)))
        .unwrap_or(Rates {
            q_first: f64::NAN,
            q_last: f64::NAN,
            w_ext: f64::NAN,
        });
    Ok(ConvergenceReport {
        q_first_fit: linear_fit(&taus, &q_first),
        q_last_fit: linear_fit(&taus, &q_last),
        w_fit: linear_fit(&taus, &w),
        taus,
        q_first,
        q_last,
        w,
        sigma,
        lme,
        truncation_flagged,
    })
}

/// Detailed-balance commutator diagnostics on the joint truncated space:
/// `local = max_i ‖[H_{S_i} + H_{E_i}, V_i]‖`, which vanishes for matched
/// system/ancilla frequencies, and `global = ‖[H_I, V]‖`, the work source.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BalanceDiagnostics {
    pub local: f64,
    pub global: f64,
}

pub fn balance_commutators(
    spec: &ChainSpec,
    g: f64,
    d: usize,
) -> Result<BalanceDiagnostics, CollisionError> {
    let n = spec.n_sites();
    let n_modes = n + 2;
    let states = d
        .checked_pow(n_modes as u32)
        .filter(|&s| s <= DENSE_BUDGET)
        .ok_or(CollisionError::DimensionBudget {
            size: usize::MAX,
            limit: DENSE_BUDGET,
        })?;
    let _ = states;
    let lower: Vec<CMatrix> = (0..n_modes)
        .map(|k| fock::mode_lowering(n_modes, d, k))
        .collect();
    let amax = |m: &CMatrix| m.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let mut local = 0.0f64;
    let mut v_total = CMatrix::from_element(
        lower[0].nrows(),
        lower[0].ncols(),
        C_ZERO,
    );
    for (site, anc) in [(0usize, n), (n - 1, n + 1)] {
        let h_pair = (lower[site].adjoint() * &lower[site]
            + lower[anc].adjoint() * &lower[anc])
            .scale(spec.omega(site));
        let v = (lower[site].adjoint() * &lower[anc]
            + lower[anc].adjoint() * &lower[site])
            .scale(g);
        local = local.max(amax(&(&h_pair * &v - &v * &h_pair)));
        v_total += v;
    }
    let mut h_int = CMatrix::from_element(lower[0].nrows(), lower[0].ncols(), C_ZERO);
    for i in 0..n - 1 {
        let hop = lower[i].adjoint() * &lower[i + 1];
        h_int += (&hop + hop.adjoint()).scale(spec.epsilon());
        if spec.eta() != 0.0 {
            let pair = lower[i].adjoint() * lower[i + 1].adjoint();
            h_int += (&pair + pair.adjoint()).scale(spec.eta());
        }
    }
    let global = amax(&(&h_int * &v_total - &v_total * &h_int));
    Ok(BalanceDiagnostics { local, global })
}
