//! Physical description of the oscillator chain and its boundary baths.
//!
//! Units: `ħ = k_B = 1`, unit mass. All frequencies and rates are angular
//! frequencies in whatever reference unit the caller picks (figure data uses
//! the hot-side frequency `ω_N`).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("chain needs at least 2 sites, got {0}")]
    TooFewSites(usize),
    #[error("expected {expected} frequencies, got {got}")]
    FrequencyCount { expected: usize, got: usize },
    #[error("{name} must be finite")]
    NotFinite { name: &'static str },
}

fn require_positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if !value.is_finite() {
        return Err(ModelError::NotFinite { name });
    }
    if value <= 0.0 {
        return Err(ModelError::NonPositive { name, value });
    }
    Ok(())
}

fn require_nonnegative(name: &'static str, value: f64) -> Result<(), ModelError> {
    if !value.is_finite() {
        return Err(ModelError::NotFinite { name });
    }
    if value < 0.0 {
        return Err(ModelError::Negative { name, value });
    }
    Ok(())
}

/// Bose-Einstein occupation `n = 1/(e^{ω/T} - 1)`.
pub fn bose_einstein(omega: f64, temperature: f64) -> Result<f64, ModelError> {
    require_positive("omega", omega)?;
    require_positive("temperature", temperature)?;
    // exp_m1 keeps precision in the classical limit ω/T -> 0; for T -> 0 the
    // exponential overflows to +inf and the occupation correctly underflows to 0.
    Ok(1.0 / f64::exp_m1(omega / temperature))
}

/// Affine frequency profile `ω_i = ((N-i)ω_1 + (i-1)ω_N)/(N-1)`, `i = 1..N`.
pub fn linear_profile(
    omega_first: f64,
    omega_last: f64,
    n_sites: usize,
) -> Result<Vec<f64>, ModelError> {
    require_positive("omega_first", omega_first)?;
    require_positive("omega_last", omega_last)?;
    if n_sites < 2 {
        return Err(ModelError::TooFewSites(n_sites));
    }
    let n = n_sites as f64;
    Ok((1..=n_sites)
        .map(|i| {
            let i = i as f64;
            ((n - i) * omega_first + (i - 1.0) * omega_last) / (n - 1.0)
        })
        .collect())
}

/// Boundary-bath occupations for a [`ChainSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathOccupations {
    pub n_cold: f64,
    pub n_hot: f64,
}

/// Chain of `N` harmonic oscillators with nearest-neighbour couplings `ε`
/// (excitation-conserving) and `η` (counter-rotating), driven by thermal baths
/// at rate `γ` attached to the first and last site only.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    frequencies: Vec<f64>,
    epsilon: f64,
    eta: f64,
    gamma: f64,
    t_cold: f64,
    t_hot: f64,
}

impl ChainSpec {
    pub fn new(
        frequencies: Vec<f64>,
        epsilon: f64,
        eta: f64,
        gamma: f64,
        t_cold: f64,
        t_hot: f64,
    ) -> Result<Self, ModelError> {
        if frequencies.len() < 2 {
            return Err(ModelError::TooFewSites(frequencies.len()));
        }
        for &w in &frequencies {
            require_positive("frequency", w)?;
        }
        require_nonnegative("epsilon", epsilon)?;
        require_nonnegative("eta", eta)?;
        require_positive("gamma", gamma)?;
        require_positive("t_cold", t_cold)?;
        require_positive("t_hot", t_hot)?;
        Ok(Self {
            frequencies,
            epsilon,
            eta,
            gamma,
            t_cold,
            t_hot,
        })
    }

    /// Chain with the linear frequency profile between `omega_first` and `omega_last`.
    pub fn with_linear_profile(
        n_sites: usize,
        omega_first: f64,
        omega_last: f64,
        epsilon: f64,
        eta: f64,
        gamma: f64,
        t_cold: f64,
        t_hot: f64,
    ) -> Result<Self, ModelError> {
        let frequencies = linear_profile(omega_first, omega_last, n_sites)?;
        Self::new(frequencies, epsilon, eta, gamma, t_cold, t_hot)
    }

    pub fn n_sites(&self) -> usize {
        self.frequencies.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn omega(&self, site: usize) -> f64 {
        self.frequencies[site]
    }

    pub fn omega_first(&self) -> f64 {
        self.frequencies[0]
    }

    pub fn omega_last(&self) -> f64 {
        *self.frequencies.last().unwrap()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn t_cold(&self) -> f64 {
        self.t_cold
    }

    pub fn t_hot(&self) -> f64 {
        self.t_hot
    }

    /// Bath temperature seen by `site`, if a bath is attached there.
    pub fn bath_temperature(&self, site: usize) -> Option<f64> {
        if site == 0 {
            Some(self.t_cold)
        } else if site + 1 == self.n_sites() {
            Some(self.t_hot)
        } else {
            None
        }
    }

    pub fn occupations(&self) -> BathOccupations {
        BathOccupations {
            n_cold: bose_einstein(self.omega_first(), self.t_cold).expect("validated spec"),
            n_hot: bose_einstein(self.omega_last(), self.t_hot).expect("validated spec"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bose_einstein_closed_forms() {
        // e^{ω/T} = 2 exactly
        assert_relative_eq!(
            bose_einstein(1.0, 1.0 / std::f64::consts::LN_2).unwrap(),
            1.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            bose_einstein(1.0, 1.0).unwrap(),
            1.0 / (std::f64::consts::E - 1.0),
            max_relative = 1e-14
        );
        // T -> 0+: occupation underflows to exactly 0
        let n = bose_einstein(1.0, 1e-4).unwrap();
        assert!(n >= 0.0 && n < 1e-300);
        assert!(bose_einstein(1.0, 1e-320).unwrap() == 0.0);
    }

    #[test]
    fn bose_einstein_rejects_nonpositive_arguments() {
        assert!(bose_einstein(0.0, 1.0).is_err());
        assert!(bose_einstein(-1.0, 1.0).is_err());
        assert!(bose_einstein(1.0, 0.0).is_err());
        assert!(bose_einstein(1.0, -0.5).is_err());
    }

    #[test]
    fn bose_einstein_monotone_in_t_over_omega() {
        let mut prev = 0.0;
        for k in 1..200 {
            let t = 0.05 * k as f64;
            let n = bose_einstein(1.3, t).unwrap();
            assert!(n > prev, "occupation must grow with T");
            prev = n;
        }
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let w = 0.05 * k as f64;
            let n = bose_einstein(w, 0.7).unwrap();
            assert!(n < prev, "occupation must fall with ω");
            prev = n;
        }
    }

    #[test]
    fn linear_profile_examples() {
        assert_eq!(linear_profile(1.0, 2.0, 2).unwrap(), vec![1.0, 2.0]);
        assert_eq!(linear_profile(1.0, 2.0, 3).unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(linear_profile(2.0, 2.0, 5).unwrap(), vec![2.0; 5]);
        assert_eq!(linear_profile(1.0, 2.0, 1), Err(ModelError::TooFewSites(1)));
    }

    #[test]
    fn linear_profile_monotone() {
        for n in 2..20 {
            let p = linear_profile(0.3, 2.7, n).unwrap();
            assert!(p.windows(2).all(|w| w[1] >= w[0]));
            assert_relative_eq!(p[0], 0.3);
            assert_relative_eq!(p[n - 1], 2.7);
        }
    }

    #[test]
    fn chain_spec_validation() {
        assert!(ChainSpec::new(vec![1.0], 0.1, 0.0, 1.0, 0.5, 1.0).is_err());
        assert!(ChainSpec::new(vec![1.0, -1.0], 0.1, 0.0, 1.0, 0.5, 1.0).is_err());
        assert!(ChainSpec::new(vec![1.0, 1.0], -0.1, 0.0, 1.0, 0.5, 1.0).is_err());
        assert!(ChainSpec::new(vec![1.0, 1.0], 0.1, 0.0, 0.0, 0.5, 1.0).is_err());
        assert!(ChainSpec::new(vec![1.0, 1.0], 0.1, 0.0, 1.0, 0.0, 1.0).is_err());
        let s = ChainSpec::new(vec![0.5, 1.0], 0.1, 0.05, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(s.bath_temperature(0), Some(0.5));
        assert_eq!(s.bath_temperature(1), Some(1.0));
        let s3 = ChainSpec::with_linear_profile(3, 0.5, 1.0, 0.1, 0.0, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(s3.bath_temperature(1), None);
    }
}
