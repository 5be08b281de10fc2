//! Steady-state thermodynamics: heat currents, external work rate, entropy
//! production, regime classification and figures of merit.
//!
//! Sign convention throughout: positive heat or work always means energy
//! entering the system.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::fock::{expectation, CMatrix, JumpChannel};
use crate::gaussian::{self, CovarianceState, GaussianError, MomentTable};
use crate::model::ChainSpec;

#[derive(Debug, Error, PartialEq)]
pub enum ThermoError {
    #[error("rate signs (Q1={q_first:e}, QN={q_last:e}, W={w_ext:e}) match no operating regime")]
    InconsistentSigns {
        q_first: f64,
        q_last: f64,
        w_ext: f64,
    },
    #[error("operation requires N=2 and eta=0, got N={n_sites}, eta={eta}")]
    WrongShape { n_sites: usize, eta: f64 },
    #[error("operation requires N=2, got N={0}")]
    NotTwoSites(usize),
}

/// Steady-state energy flow triple, positive into the system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rates {
    pub q_first: f64,
    pub q_last: f64,
    pub w_ext: f64,
}

/// Operating regime per the sign pattern of `(Q̇_1, Q̇_N, Ẇ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Heat out of the cold bath, work consumed: `(+, −, +)`.
    Refrigerator,
    /// Work extracted from the hot-to-cold flow: `(−, +, −)`.
    Engine,
    /// Work consumed to boost the hot-to-cold flow: `(−, +, +)`.
    Accelerator,
    /// All rates vanish at `ω_1/ω_N = T_1/T_N`.
    CarnotPoint,
    /// `ω_1 = ω_N`: pure heat conduction, zero work.
    EqualFrequency,
    /// Uncoupled chain: nothing flows.
    Degenerate,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::Refrigerator => "refrigerator",
            Regime::Engine => "engine",
            Regime::Accelerator => "accelerator",
            Regime::CarnotPoint => "carnot",
            Regime::EqualFrequency => "equal_frequency",
            Regime::Degenerate => "degenerate",
        }
    }
}

/// Full steady-state ledger for one parameter point.
#[derive(Debug, Clone, Serialize)]
pub struct ThermoReport {
    pub q_first: f64,
    pub q_last: f64,
    pub w_ext: f64,
    /// `Q̇_{1→2}` (only for N=2, η=0 chains).
    pub internal_current: Option<f64>,
    /// Entropy production rate Π.
    pub entropy_rate: f64,
    pub regime: Regime,
    /// COP for refrigerators, efficiency for engines.
    pub figure_of_merit: Option<f64>,
}

/// General eigenoperator heat rates, one entry per bath site:
/// `Q̇_i = Σ_k ω_{i,k} {γ⁺⟨L L†⟩ − γ⁻⟨L†L⟩}`.
pub fn heat_rate_general(jumps: &[JumpChannel], rho: &CMatrix) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for ch in jumps {
        let l = &ch.operator;
        let up = expectation(rho, &(l * l.adjoint())).re;
        let down = expectation(rho, &(l.adjoint() * l)).re;
        let q = ch.bohr_frequency * (ch.rate_up * up - ch.rate_down * down);
        match out.iter_mut().find(|(site, _)| *site == ch.site) {
            Some((_, acc)) => *acc += q,
            None => out.push((ch.site, q)),
        }
    }
    out
}

/// General external work rate,
/// `Ẇ = ½ Σ_k {γ⁻⟨L†F⟩ − γ⁺⟨F L†⟩} + c.c.` with `F = [H_I, L]`;
/// vanishes whenever every jump operator commutes with the interaction.
pub fn work_rate_general(jumps: &[JumpChannel], h_int: &CMatrix, rho: &CMatrix) -> f64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for ch in jumps {
        let l = &ch.operator;
        let f = h_int * l - l * h_int;
        sum += expectation(rho, &(l.adjoint() * &f)) * ch.rate_down;
        sum -= expectation(rho, &(&f * l.adjoint())) * ch.rate_up;
    }
    sum.re
}

/// Boundary heat rates and work rate from Gaussian steady-state moments:
/// `Q̇_i = γω_i(n_i − ⟨a_i†a_i⟩)` at the bath sites and the quadratic
/// specialization of the general work formula,
/// `Ẇ = −γ Σ_{bath i, neighbour j} {ε Re⟨a_i†a_j⟩ + η Re⟨a_i a_j⟩}`.
pub fn gaussian_rates(spec: &ChainSpec, moments: &MomentTable) -> Rates {
    let n = spec.n_sites();
    let occ = spec.occupations();
    let gamma = spec.gamma();
    let q_first = gamma * spec.omega(0) * (occ.n_cold - moments.occupation(0));
    let q_last = gamma * spec.omega(n - 1) * (occ.n_hot - moments.occupation(n - 1));
    let hop = moments.number[(0, 1)].re + moments.number[(n - 1, n - 2)].re;
    let pair = moments.pair[(0, 1)].re + moments.pair[(n - 1, n - 2)].re;
    let w_ext = -gamma * (spec.epsilon() * hop + spec.eta() * pair);
    Rates {
        q_first,
        q_last,
        w_ext,
    }
}

/// Internal current from site 1 to site 2, `Q̇_{1→2} = 2ω_1ε Im⟨a_1†a_2⟩`;
/// equals `−Q̇_1` at the steady state.
pub fn internal_current(spec: &ChainSpec, moments: &MomentTable) -> Result<f64, ThermoError> {
    if spec.n_sites() != 2 || spec.eta() != 0.0 {
        return Err(ThermoError::WrongShape {
            n_sites: spec.n_sites(),
            eta: spec.eta(),
        });
    }
    Ok(2.0 * spec.omega(0) * spec.epsilon() * moments.number[(0, 1)].im)
}

/// Large-γ asymptotics of the two-oscillator rates:
/// `Q̇_1 = (2ω_1/γ)[ε²(n_1−n_2) − η²(n_1+n_2+1)]`,
/// `Q̇_2 = −(2ω_2/γ)[ε²(n_1−n_2) + η²(n_1+n_2+1)]`,
/// `Ẇ = −(2/γ)[ε²(n_1−n_2)(ω_1−ω_2) − η²(ω_1+ω_2)(n_1+n_2+1)]`.
pub fn large_gamma_rates(spec: &ChainSpec) -> Result<Rates, ThermoError> {
    if spec.n_sites() != 2 {
        return Err(ThermoError::NotTwoSites(spec.n_sites()));
    }
    let occ = spec.occupations();
    let (n1, n2) = (occ.n_cold, occ.n_hot);
    let (w1, w2) = (spec.omega(0), spec.omega(1));
    let e2 = spec.epsilon() * spec.epsilon();
    let h2 = spec.eta() * spec.eta();
    let diff = n1 - n2;
    let therm = n1 + n2 + 1.0;
    let g = spec.gamma();
    Ok(Rates {
        q_first: 2.0 * w1 / g * (e2 * diff - h2 * therm),
        q_last: -2.0 * w2 / g * (e2 * diff + h2 * therm),
        w_ext: -2.0 / g * (e2 * diff * (w1 - w2) - h2 * (w1 + w2) * therm),
    })
}

/// Steady-state entropy production rate `Π = −β_1 Q̇_1 − β_N Q̇_N ≥ 0`.
pub fn entropy_production_rate(rates: &Rates, spec: &ChainSpec) -> f64 {
    -rates.q_first / spec.t_cold() - rates.q_last / spec.t_hot()
}

/// Regime classification from the sign pattern of the rate triple; a rate is
/// treated as zero below `1e−12·max(|Q̇_1|,|Q̇_N|,|Ẇ|, γω_N)`.
pub fn classify(rates: &Rates, spec: &ChainSpec) -> Result<(Regime, Option<f64>), ThermoError> {
    let Rates {
        q_first: q1,
        q_last: qn,
        w_ext: w,
    } = *rates;
    let tol = 1e-12
        * q1.abs()
            .max(qn.abs())
            .max(w.abs())
            .max(spec.gamma() * spec.omega_last());
    let sign = |x: f64| {
        if x > tol {
            1
        } else if x < -tol {
            -1
        } else {
            0
        }
    };
    let pattern = (sign(q1), sign(qn), sign(w));
    let regime = match pattern {
        (0, 0, 0) => {
            if spec.epsilon() == 0.0 && spec.eta() == 0.0 {
                (Regime::Degenerate, None)
            } else {
                (Regime::CarnotPoint, None)
            }
        }
        (1, -1, 1) => (Regime::Refrigerator, Some(q1 / w)),
        (-1, 1, -1) => (Regime::Engine, Some(-w / qn)),
        (-1, 1, 1) => (Regime::Accelerator, None),
        (-1, 1, 0) => (Regime::EqualFrequency, None),
        _ => {
            return Err(ThermoError::InconsistentSigns {
                q_first: q1,
                q_last: qn,
                w_ext: w,
            })
        }
    };
    Ok(regime)
}

#[derive(Debug, Error, PartialEq)]
pub enum SteadyError {
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

/// Solve the chain's Gaussian steady state and assemble the full report.
pub fn steady_report(spec: &ChainSpec) -> Result<(ThermoReport, CovarianceState), SteadyError> {
    let dd = gaussian::build_drift_diffusion(spec);
    let v = gaussian::solve_steady(&dd)?;
    let moments = gaussian::mode_moments(&v, spec);
    let report = report_from_moments(spec, &moments)?;
    Ok((report, v))
}

/// Assemble a report from precomputed steady-state moments.
pub fn report_from_moments(
    spec: &ChainSpec,
    moments: &MomentTable,
) -> Result<ThermoReport, ThermoError> {
    let rates = gaussian_rates(spec, moments);
    let (regime, figure_of_merit) = classify(&rates, spec)?;
    let internal = internal_current(spec, moments).ok();
    Ok(ThermoReport {
        q_first: rates.q_first,
        q_last: rates.q_last,
        w_ext: rates.w_ext,
        internal_current: internal,
        entropy_rate: entropy_production_rate(&rates, spec),
        regime,
        figure_of_merit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock;
    use approx::assert_relative_eq;

    fn steady_moments(spec: &ChainSpec) -> MomentTable {
        let dd = gaussian::build_drift_diffusion(spec);
        let v = gaussian::solve_steady(&dd).unwrap();
        gaussian::mode_moments(&v, spec)
    }

    fn two_osc(w1: f64, w2: f64, eps: f64, eta: f64, gamma: f64, t1: f64, t2: f64) -> ChainSpec {
        ChainSpec::new(vec![w1, w2], eps, eta, gamma, t1, t2).unwrap()
    }

    #[test]
    fn rates_match_closed_forms() {
        // Eqs: Q̇_1 = (2γε²/Δ²)ω_1(n_1−n_2), Ẇ = −(2γε²/Δ²)(ω_1−ω_2)(n_1−n_2).
        let spec = two_osc(0.7, 1.3, 0.23, 0.0, 0.9, 0.8, 1.7);
        let m = steady_moments(&spec);
        let r = gaussian_rates(&spec, &m);
        let occ = spec.occupations();
        let d2 = 0.9 * 0.9 + 4.0 * 0.23 * 0.23 + (0.7 - 1.3) * (0.7 - 1.3);
        let front = 2.0 * 0.9 * 0.23 * 0.23 / d2 * (occ.n_cold - occ.n_hot);
        assert_relative_eq!(r.q_first, front * 0.7, max_relative = 1e-10);
        assert_relative_eq!(r.q_last, -front * 1.3, max_relative = 1e-10);
        assert_relative_eq!(r.w_ext, -front * (0.7 - 1.3), max_relative = 1e-10);
        // First law.
        assert!((r.q_first + r.q_last + r.w_ext).abs() < 1e-12);
    }

    #[test]
    fn internal_current_equals_minus_q1() {
        let spec = two_osc(0.7, 1.3, 0.23, 0.0, 0.9, 0.8, 1.7);
        let m = steady_moments(&spec);
        let r = gaussian_rates(&spec, &m);
        let j = internal_current(&spec, &m).unwrap();
        assert_relative_eq!(j, -r.q_first, max_relative = 1e-10);
        // Same-temperature baths still conduct when ω_1 ≠ ω_2.
        let spec_t = two_osc(0.7, 1.3, 0.23, 0.0, 0.9, 1.0, 1.0);
        let m_t = steady_moments(&spec_t);
        assert!(internal_current(&spec_t, &m_t).unwrap().abs() > 1e-4);
        let spec3 = ChainSpec::with_linear_profile(3, 0.5, 1.0, 0.1, 0.0, 1.0, 0.5, 1.0).unwrap();
        assert!(internal_current(&spec3, &steady_moments(&spec3)).is_err());
    }

    #[test]
    fn classification_examples() {
        // ω_1 < ω_2 T_1/T_2: refrigerator with Otto COP ω_1/(ω_2−ω_1).
        let fridge = two_osc(0.4, 2.0, 0.2, 0.0, 1.0, 1.0, 2.0);
        let (regime, fom) =
            classify(&gaussian_rates(&fridge, &steady_moments(&fridge)), &fridge).unwrap();
        assert_eq!(regime, Regime::Refrigerator);
        assert_relative_eq!(fom.unwrap(), 0.25, max_relative = 1e-9);
        // ω_2 T_1/T_2 < ω_1 < ω_2: engine with efficiency 1 − ω_1/ω_2.
        let engine = two_osc(1.5, 2.0, 0.2, 0.0, 1.0, 1.0, 2.0);
        let (regime, fom) =
            classify(&gaussian_rates(&engine, &steady_moments(&engine)), &engine).unwrap();
        assert_eq!(regime, Regime::Engine);
        assert_relative_eq!(fom.unwrap(), 0.25, max_relative = 1e-9);
        // ω_1 > ω_2: accelerator, no figure of merit.
        let accel = two_osc(2.5, 2.0, 0.2, 0.0, 1.0, 1.0, 2.0);
        let (regime, fom) =
            classify(&gaussian_rates(&accel, &steady_moments(&accel)), &accel).unwrap();
        assert_eq!(regime, Regime::Accelerator);
        assert!(fom.is_none());
        // ω_1 = ω_2: heat conduction with zero work.
        let cond = two_osc(2.0, 2.0, 0.2, 0.0, 1.0, 1.0, 2.0);
        let (regime, _) =
            classify(&gaussian_rates(&cond, &steady_moments(&cond)), &cond).unwrap();
        assert_eq!(regime, Regime::EqualFrequency);
        // ε = η = 0: nothing flows.
        let dead = two_osc(0.4, 2.0, 0.0, 0.0, 1.0, 1.0, 2.0);
        let (regime, _) =
            classify(&gaussian_rates(&dead, &steady_moments(&dead)), &dead).unwrap();
        assert_eq!(regime, Regime::Degenerate);
        // ω_1/ω_2 = T_1/T_2 exactly: Carnot point.
        let carnot = two_osc(1.0, 2.0, 0.2, 0.0, 1.0, 1.0, 2.0);
        let (regime, _) =
            classify(&gaussian_rates(&carnot, &steady_moments(&carnot)), &carnot).unwrap();
        assert_eq!(regime, Regime::CarnotPoint);
    }

    #[test]
    fn entropy_production_nonnegative_and_limits() {
        // ε = 0: no transport, Π = 0.
        let dead = two_osc(0.4, 2.0, 0.0, 0.0, 1.0, 1.0, 2.0);
        let r = gaussian_rates(&dead, &steady_moments(&dead));
        assert!(entropy_production_rate(&r, &dead).abs() < 1e-14);
        // T_1 = T_2 = T: Π = βẆ ≥ 0.
        let iso = two_osc(0.7, 1.3, 0.23, 0.1, 0.9, 1.1, 1.1);
        let r = gaussian_rates(&iso, &steady_moments(&iso));
        let pi = entropy_production_rate(&r, &iso);
        assert_relative_eq!(pi, r.w_ext / 1.1, max_relative = 1e-9);
        assert!(pi >= 0.0);
        // Pseudo-random sweep: second law.
        let mut state = 7u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let spec = two_osc(
                0.1 + 2.9 * next(),
                0.1 + 2.9 * next(),
                0.5 * next(),
                0.0,
                0.1 + 4.9 * next(),
                0.2 + 4.8 * next(),
                0.2 + 4.8 * next(),
            );
            let r = gaussian_rates(&spec, &steady_moments(&spec));
            assert!(entropy_production_rate(&r, &spec) >= -1e-12);
        }
    }

    #[test]
    fn large_gamma_limit_agrees_with_full_solve() {
        let spec = two_osc(0.7, 1.0, 0.2, 0.12, 100.0, 0.4, 0.8);
        let asym = large_gamma_rates(&spec).unwrap();
        let full = gaussian_rates(&spec, &steady_moments(&spec));
        assert_relative_eq!(asym.q_first, full.q_first, max_relative = 1e-3);
        assert_relative_eq!(asym.q_last, full.q_last, max_relative = 1e-3);
        assert_relative_eq!(asym.w_ext, full.w_ext, max_relative = 1e-3);
        // η = 0 reduction: (2ω_1ε²/γ)(n_1−n_2).
        let spec0 = two_osc(0.7, 1.0, 0.2, 0.0, 100.0, 0.4, 0.8);
        let occ = spec0.occupations();
        let a0 = large_gamma_rates(&spec0).unwrap();
        assert_relative_eq!(
            a0.q_first,
            2.0 * 0.7 * 0.04 / 100.0 * (occ.n_cold - occ.n_hot),
            max_relative = 1e-12
        );
        // Asymptotic triple satisfies the first law identically.
        assert!((asym.q_first + asym.q_last + asym.w_ext).abs() < 1e-15);
    }

    #[test]
    fn general_rates_match_gaussian_on_fock_steady_state() {
        let spec = two_osc(0.9, 1.0, 0.2, 0.0, 0.7, 0.35, 0.6);
        let model = fock::build_model(&spec, 12).unwrap();
        let ss = fock::steady_state(&model).unwrap();
        let heats = heat_rate_general(model.jumps(), &ss.rho);
        let w = work_rate_general(model.jumps(), model.interaction(), &ss.rho);
        let g = gaussian_rates(&spec, &steady_moments(&spec));
        let q1 = heats.iter().find(|(s, _)| *s == 0).unwrap().1;
        let q2 = heats.iter().find(|(s, _)| *s == 1).unwrap().1;
        assert!((q1 - g.q_first).abs() < 1e-6);
        assert!((q2 - g.q_last).abs() < 1e-6);
        assert!((w - g.w_ext).abs() < 1e-6);
        // Eq. (15) form: Ẇ = −γε⟨a_1†a_2 + a_2†a_1⟩ on the same state.
        let moments = fock::moments_from_rho(&model, &ss.rho);
        let direct = -spec.gamma() * spec.epsilon() * 2.0 * moments.number[(0, 1)].re;
        // Exact identity up to the broken ladder at the top Fock level.
        assert_relative_eq!(w, direct, max_relative = 1e-6);
    }

    #[test]
    fn work_rate_vanishes_without_interaction() {
        let spec = two_osc(0.9, 1.0, 0.0, 0.0, 0.7, 0.35, 0.6);
        let model = fock::build_model(&spec, 6).unwrap();
        let ss = fock::steady_state(&model).unwrap();
        let w = work_rate_general(model.jumps(), model.interaction(), &ss.rho);
        assert!(w.abs() < 1e-12);
        // Thermal moments at the bath occupation give zero heat flow.
        for (_, q) in heat_rate_general(model.jumps(), &ss.rho) {
            assert!(q.abs() < 1e-10);
        }
    }

    #[test]
    fn steady_report_assembles_everything() {
        let spec = two_osc(0.4, 2.0, 0.2, 0.0, 1.0, 1.0, 2.0);
        let (report, v) = steady_report(&spec).unwrap();
        assert_eq!(report.regime, Regime::Refrigerator);
        assert_relative_eq!(report.figure_of_merit.unwrap(), 0.25, max_relative = 1e-9);
        assert_relative_eq!(
            report.internal_current.unwrap(),
            -report.q_first,
            max_relative = 1e-9
        );
        assert!(report.entropy_rate >= 0.0);
        assert_eq!(v.n_modes(), 2);
        // Unstable spec surfaces as a Gaussian error.
        let bad = two_osc(1.0, 1.0, 0.6, 0.5, 0.05, 0.5, 1.0);
        assert!(matches!(
            steady_report(&bad),
            Err(SteadyError::Gaussian(GaussianError::NonHurwitz { .. }))
        ));
    }
}
