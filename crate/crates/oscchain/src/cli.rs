//! Batch front end: scenario configs in, CSV/JSON artifacts out.
//!
//! Config format: `key = value` lines with `#` comments; optional `[sweep]`,
//! `[fock]` and `[collision]` sections. All outputs are reported in units of
//! the hot-side frequency `ω_N`: every input frequency-like quantity
//! (frequencies, ε, η, γ, temperatures, and the collision τ grid's inverse)
//! is rescaled by `ω_N` before solving.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::collision::{self, CollisionError};
use crate::fock::{self, FockError};
use crate::gaussian::{self, GaussianError};
use crate::model::ChainSpec;
use crate::thermo::{self, ThermoError};

/// Command failure with its process exit code:
/// 2 config, 3 instability, 4 solver, 5 budget, 6 insufficient samples.
#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError {
        exit_code: 2,
        message: msg.into(),
    }
}

fn io_err(e: std::io::Error, path: &Path) -> CliError {
    CliError {
        exit_code: 2,
        message: format!("cannot access {}: {e}", path.display()),
    }
}

impl From<GaussianError> for CliError {
    fn from(e: GaussianError) -> Self {
        let exit_code = match e {
            GaussianError::NonHurwitz { .. } => 3,
            _ => 4,
        };
        CliError {
            exit_code,
            message: e.to_string(),
        }
    }
}

impl From<FockError> for CliError {
    fn from(e: FockError) -> Self {
        let exit_code = match e {
            FockError::DimensionBudget { .. } => 5,
            _ => 4,
        };
        CliError {
            exit_code,
            message: e.to_string(),
        }
    }
}

impl From<CollisionError> for CliError {
    fn from(e: CollisionError) -> Self {
        let exit_code = match e {
            CollisionError::DimensionBudget { .. } => 5,
            CollisionError::InsufficientSamples(_) => 6,
            CollisionError::Fock(FockError::DimensionBudget { .. }) => 5,
            _ => 4,
        };
        CliError {
            exit_code,
            message: e.to_string(),
        }
    }
}

impl From<ThermoError> for CliError {
    fn from(e: ThermoError) -> Self {
        CliError {
            exit_code: 4,
            message: e.to_string(),
        }
    }
}

// ---------------------------------------------------------------------------
// Config parsing.

type Section = BTreeMap<String, String>;

fn parse_sections(text: &str) -> Result<BTreeMap<String, Section>, CliError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current = String::new(); // root section
    sections.insert(String::new(), Section::new());
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = name.trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            config_err(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
        })?;
        sections
            .get_mut(&current)
            .unwrap()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

fn check_keys(section: &Section, name: &str, allowed: &[&str]) -> Result<(), CliError> {
    for key in section.keys() {
        if !allowed.contains(&key.as_str()) {
            let place = if name.is_empty() {
                "config".to_string()
            } else {
                format!("[{name}]")
            };
            return Err(config_err(format!("unknown key `{key}` in {place}")));
        }
    }
    Ok(())
}

fn get_f64(section: &Section, key: &str) -> Result<Option<f64>, CliError> {
    match section.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<f64>()
            .map(Some)
            .map_err(|_| config_err(format!("key `{key}`: invalid number `{v}`"))),
    }
}

fn need_f64(section: &Section, key: &str) -> Result<f64, CliError> {
    get_f64(section, key)?.ok_or_else(|| config_err(format!("missing required key `{key}`")))
}

fn get_usize(section: &Section, key: &str) -> Result<Option<usize>, CliError> {
    match section.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<usize>()
            .map(Some)
            .map_err(|_| config_err(format!("key `{key}`: invalid integer `{v}`"))),
    }
}

fn get_f64_list(section: &Section, key: &str) -> Result<Option<Vec<f64>>, CliError> {
    match section.get(key) {
        None => Ok(None),
        Some(v) => v
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| config_err(format!("key `{key}`: invalid number `{x}`")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some),
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct FockConfig {
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct CollisionConfig {
    pub g: Option<f64>,
    pub taus: Vec<f64>,
    pub dim: Option<usize>,
    pub strokes: usize,
}

/// Parsed scenario: a chain plus optional study blocks. Frequencies are kept
/// as given; `normalized_spec` rescales to ω_N units.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub frequencies: Vec<f64>,
    pub epsilon: f64,
    pub eta: f64,
    pub gamma: f64,
    pub t_cold: f64,
    pub t_hot: f64,
    pub sweep: Option<SweepConfig>,
    pub fock: Option<FockConfig>,
    pub collision: Option<CollisionConfig>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let sections = parse_sections(text)?;
        let root = sections.get("").unwrap();
        check_keys(
            root,
            "",
            &[
                "n_sites",
                "omega_first",
                "omega_last",
                "frequencies",
                "epsilon",
                "eta",
                "gamma",
                "t_cold",
                "t_hot",
            ],
        )?;
        for name in sections.keys() {
            if !name.is_empty() && !["sweep", "fock", "collision"].contains(&name.as_str()) {
                return Err(config_err(format!("unknown section `[{name}]`")));
            }
        }
        let frequencies = match get_f64_list(root, "frequencies")? {
            Some(f) => {
                if root.contains_key("omega_first") || root.contains_key("omega_last") {
                    return Err(config_err(
                        "give either `frequencies` or `omega_first`/`omega_last`, not both",
                    ));
                }
                if let Some(n) = get_usize(root, "n_sites")? {
                    if n != f.len() {
                        return Err(config_err(format!(
                            "key `n_sites`: {} does not match {} frequencies",
                            n,
                            f.len()
                        )));
                    }
                }
                f
            }
            None => {
                let n = get_usize(root, "n_sites")?.unwrap_or(2);
                let first = need_f64(root, "omega_first")?;
                let last = need_f64(root, "omega_last")?;
                crate::model::linear_profile(first, last, n)
                    .map_err(|e| config_err(format!("invalid frequency profile: {e}")))?
            }
        };
        let sweep = match sections.get("sweep") {
            None => None,
            Some(s) => {
                check_keys(s, "sweep", &["parameter", "lo", "hi", "steps"])?;
                let parameter = s
                    .get("parameter")
                    .map(String::as_str)
                    .unwrap_or("omega_first_ratio");
                if parameter != "omega_first_ratio" {
                    return Err(config_err(format!(
                        "key `parameter`: unsupported sweep parameter `{parameter}`"
                    )));
                }
                let lo = need_f64(s, "lo")?;
                let hi = need_f64(s, "hi")?;
                let steps = get_usize(s, "steps")?
                    .ok_or_else(|| config_err("missing required key `steps`"))?;
                if !(lo >= 0.0 && hi > lo) {
                    return Err(config_err("key `lo`/`hi`: need 0 <= lo < hi"));
                }
                if steps < 2 {
                    return Err(config_err("key `steps`: need at least 2"));
                }
                Some(SweepConfig { lo, hi, steps })
            }
        };
        let fock_cfg = match sections.get("fock") {
            None => None,
            Some(s) => {
                check_keys(s, "fock", &["dim"])?;
                let dim = get_usize(s, "dim")?
                    .ok_or_else(|| config_err("missing required key `dim`"))?;
                if dim < 2 {
                    return Err(config_err("key `dim`: need at least 2"));
                }
                Some(FockConfig { dim })
            }
        };
        let collision_cfg = match sections.get("collision") {
            None => None,
            Some(s) => {
                check_keys(s, "collision", &["g", "taus", "dim", "strokes"])?;
                let taus = get_f64_list(s, "taus")?
                    .ok_or_else(|| config_err("missing required key `taus`"))?;
                if taus.iter().any(|&t| t <= 0.0) {
                    return Err(config_err("key `taus`: all values must be positive"));
                }
                Some(CollisionConfig {
                    g: get_f64(s, "g")?,
                    taus,
                    dim: get_usize(s, "dim")?,
                    strokes: get_usize(s, "strokes")?.unwrap_or(1),
                })
            }
        };
        Ok(Self {
            frequencies,
            epsilon: get_f64(root, "epsilon")?.unwrap_or(0.0),
            eta: get_f64(root, "eta")?.unwrap_or(0.0),
            gamma: need_f64(root, "gamma")?,
            t_cold: need_f64(root, "t_cold")?,
            t_hot: need_f64(root, "t_hot")?,
            sweep,
            fock: fock_cfg,
            collision: collision_cfg,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(e, path))?;
        Self::parse(&text)
    }

    fn omega_last(&self) -> f64 {
        *self.frequencies.last().unwrap()
    }

    /// The chain in ω_N = 1 units.
    pub fn normalized_spec(&self) -> Result<ChainSpec, CliError> {
        let u = self.omega_last();
        if !(u.is_finite() && u > 0.0) {
            return Err(config_err("key `omega_last`: must be positive"));
        }
        ChainSpec::new(
            self.frequencies.iter().map(|w| w / u).collect(),
            self.epsilon / u,
            self.eta / u,
            self.gamma / u,
            self.t_cold / u,
            self.t_hot / u,
        )
        .map_err(|e| config_err(format!("invalid chain parameters: {e}")))
    }

    /// Chain with the first frequency replaced by `ratio·ω_N` (ω_N units).
    fn sweep_spec(&self, ratio: f64) -> Result<ChainSpec, CliError> {
        let u = self.omega_last();
        ChainSpec::with_linear_profile(
            self.frequencies.len(),
            ratio,
            1.0,
            self.epsilon / u,
            self.eta / u,
            self.gamma / u,
            self.t_cold / u,
            self.t_hot / u,
        )
        .map_err(|e| config_err(format!("invalid chain parameters at ratio {ratio}: {e}")))
    }
}

// ---------------------------------------------------------------------------
// Output helpers.

/// 17-significant-digit float, byte-stable across runs.
fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Artifacts produced by a command: primary payload plus optional extras
/// keyed by filename suffix.
#[derive(Debug)]
pub struct CommandOutput {
    pub payload: String,
    pub extras: Vec<(&'static str, String)>,
    pub meta: String,
}

fn meta_json(command: &str, detail: &[(&str, String)]) -> String {
    let map: BTreeMap<&str, &str> = std::iter::once(("command", command))
        .chain(detail.iter().map(|(k, v)| (*k, v.as_str())))
        .collect();
    serde_json::to_string_pretty(&map).unwrap()
}

/// Write the payload to `out` (or stdout) with the metadata sidecar
/// `<out>.meta.json` and extras as `<out>.<suffix>`.
pub fn emit(output: &CommandOutput, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        None => {
            print!("{}", output.payload);
            for (_, text) in &output.extras {
                print!("{text}");
            }
            Ok(())
        }
        Some(path) => {
            std::fs::write(path, &output.payload).map_err(|e| io_err(e, path))?;
            for (suffix, text) in &output.extras {
                let extra = path.with_file_name(format!(
                    "{}.{suffix}",
                    path.file_name().unwrap().to_string_lossy()
                ));
                std::fs::write(&extra, text).map_err(|e| io_err(e, &extra))?;
            }
            let meta = path.with_file_name(format!(
                "{}.meta.json",
                path.file_name().unwrap().to_string_lossy()
            ));
            std::fs::write(&meta, &output.meta).map_err(|e| io_err(e, &meta))?;
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Commands.

#[derive(Serialize)]
struct SteadyRecord {
    omega_first_over_omega_last: f64,
    q_first: f64,
    q_last: f64,
    w_ext: f64,
    entropy_rate: f64,
    regime: &'static str,
    figure_of_merit: Option<f64>,
    internal_current: Option<f64>,
    covariance: Vec<Vec<f64>>,
}

/// Single steady-state solve → JSON record (rates in ω_N units).
pub fn cmd_steady(config: &ScenarioConfig) -> Result<CommandOutput, CliError> {
    let spec = config.normalized_spec()?;
    let (report, v) = thermo::steady_report(&spec).map_err(|e| match e {
        thermo::SteadyError::Gaussian(g) => CliError::from(g),
        thermo::SteadyError::Thermo(t) => CliError::from(t),
    })?;
    let n = v.matrix().nrows();
    let record = SteadyRecord {
        omega_first_over_omega_last: spec.omega_first(),
        q_first: report.q_first,
        q_last: report.q_last,
        w_ext: report.w_ext,
        entropy_rate: report.entropy_rate,
        regime: report.regime.label(),
        figure_of_merit: report.figure_of_merit,
        internal_current: report.internal_current,
        covariance: (0..n)
            .map(|i| (0..n).map(|j| v.matrix()[(i, j)]).collect())
            .collect(),
    };
    let mut payload = serde_json::to_string_pretty(&record).unwrap();
    payload.push('\n');
    Ok(CommandOutput {
        payload,
        extras: Vec::new(),
        meta: meta_json("steady", &[("units", "omega_last".to_string())]),
    })
}

pub const SWEEP_HEADER: &str = "omega1_over_omega2,Q1,Q2,W,Pi,regime,fom";

/// Half-open sweep grid `(lo, hi]`: `lo + k·(hi−lo)/steps`, `k = 1..=steps`.
fn sweep_grid(sweep: &SweepConfig) -> Vec<f64> {
    (1..=sweep.steps)
        .map(|k| sweep.lo + k as f64 * (sweep.hi - sweep.lo) / sweep.steps as f64)
        .collect()
}

fn sweep_row(config: &ScenarioConfig, ratio: f64) -> Result<String, CliError> {
    let spec = config.sweep_spec(ratio)?;
    let dd = gaussian::build_drift_diffusion(&spec);
    let v = match gaussian::solve_steady(&dd) {
        Ok(v) => v,
        Err(GaussianError::NonHurwitz { .. }) => {
            return Ok(format!("{},nan,nan,nan,nan,unstable,", fmt_float(ratio)));
        }
        Err(e) => return Err(e.into()),
    };
    let moments = gaussian::mode_moments(&v, &spec);
    let rates = thermo::gaussian_rates(&spec, &moments);
    let pi = thermo::entropy_production_rate(&rates, &spec);
    let (regime, fom) = match thermo::classify(&rates, &spec) {
        Ok((r, f)) => (r.label(), f),
        Err(ThermoError::InconsistentSigns { .. }) => ("unclassified", None),
        Err(e) => return Err(e.into()),
    };
    Ok(format!(
        "{},{},{},{},{},{},{}",
        fmt_float(ratio),
        fmt_float(rates.q_first),
        fmt_float(rates.q_last),
        fmt_float(rates.w_ext),
        fmt_float(pi),
        regime,
        fom.map(fmt_float).unwrap_or_default()
    ))
}

/// ω_1/ω_N sweep → CSV, one row per grid point, deterministic order.
pub fn cmd_sweep(config: &ScenarioConfig) -> Result<CommandOutput, CliError> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| config_err("missing `[sweep]` section"))?;
    let grid = sweep_grid(sweep);
    let rows: Vec<Result<String, CliError>> = grid
        .par_iter()
        .map(|&ratio| sweep_row(config, ratio))
        .collect();
    let mut payload = String::from(SWEEP_HEADER);
    payload.push('\n');
    let mut count = 0usize;
    for row in rows {
        let _ = writeln!(payload, "{}", row?);
        count += 1;
    }
    Ok(CommandOutput {
        payload,
        extras: Vec::new(),
        meta: meta_json(
            "sweep",
            &[
                ("units", "omega_last".to_string()),
                ("rows", count.to_string()),
            ],
        ),
    })
}

#[derive(Serialize)]
struct OracleReport {
    dim: usize,
    max_abs_deviation_number: f64,
    max_abs_deviation_pair: f64,
    top_level_population: f64,
    low_confidence: bool,
}

/// Gaussian-vs-Fock cross-validation → JSON report.
pub fn cmd_oracle_compare(config: &ScenarioConfig) -> Result<CommandOutput, CliError> {
    let fock_cfg = config
        .fock
        .as_ref()
        .ok_or_else(|| config_err("missing `[fock]` section"))?;
    let spec = config.normalized_spec()?;
    let dd = gaussian::build_drift_diffusion(&spec);
    let v = gaussian::solve_steady(&dd)?;
    let reference = gaussian::mode_moments(&v, &spec);
    let model = fock::build_model(&spec, fock_cfg.dim)?;
    let ss = fock::steady_state(&model)?;
    let oracle = fock::moments_from_rho(&model, &ss.rho);
    let mut dev_number = 0.0f64;
    let mut dev_pair = 0.0f64;
    let n = spec.n_sites();
    for i in 0..n {
        for j in 0..n {
            dev_number = dev_number.max((reference.number[(i, j)] - oracle.number[(i, j)]).norm());
            dev_pair = dev_pair.max((reference.pair[(i, j)] - oracle.pair[(i, j)]).norm());
        }
    }
    let report = OracleReport {
        dim: fock_cfg.dim,
        max_abs_deviation_number: dev_number,
        max_abs_deviation_pair: dev_pair,
        top_level_population: ss.top_level_population,
        low_confidence: ss.low_confidence,
    };
    let mut payload = serde_json::to_string_pretty(&report).unwrap();
    payload.push('\n');
    Ok(CommandOutput {
        payload,
        extras: Vec::new(),
        meta: meta_json("oracle-compare", &[("units", "omega_last".to_string())]),
    })
}

pub const COLLISION_HEADER: &str = "tau,dQ1_rate,dQN_rate,dW_rate,Sigma";

/// Collision-model τ-convergence study → CSV of per-stroke rates plus an
/// extrapolation JSON sidecar.
pub fn cmd_collision(config: &ScenarioConfig) -> Result<CommandOutput, CliError> {
    let col = config
        .collision
        .as_ref()
        .ok_or_else(|| config_err("missing `[collision]` section"))?;
    if col.taus.len() < 3 {
        return Err(CollisionError::InsufficientSamples(col.taus.len()).into());
    }
    let dim = col
        .dim
        .or(config.fock.as_ref().map(|f| f.dim))
        .ok_or_else(|| config_err("missing required key `dim` in [collision] or [fock]"))?;
    let spec = config.normalized_spec()?;
    let g = col.g.map(|g| g / config.omega_last().sqrt());
    let g = g.unwrap_or_else(|| spec.gamma().sqrt());
    let report = collision::rate_extrapolation(&spec, g, dim, &col.taus)?;
    let mut payload = String::from(COLLISION_HEADER);
    payload.push('\n');
    for (k, &tau) in report.taus.iter().enumerate() {
        let _ = writeln!(
            payload,
            "{},{},{},{},{}",
            fmt_float(tau),
            fmt_float(report.q_first[k]),
            fmt_float(report.q_last[k]),
            fmt_float(report.w[k]),
            fmt_float(report.sigma[k])
        );
    }
    let mut extrapolation = serde_json::to_string_pretty(&report).unwrap();
    extrapolation.push('\n');
    Ok(CommandOutput {
        payload,
        extras: vec![("extrapolation.json", extrapolation)],
        meta: meta_json(
            "collision",
            &[
                ("units", "omega_last".to_string()),
                ("dim", dim.to_string()),
            ],
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "
        # two-oscillator chain
        omega_first = 0.8
        omega_last  = 2.0
        epsilon     = 0.4
        gamma       = 2.0
        t_cold      = 1.0
        t_hot       = 2.0
    ";

    #[test]
    fn parses_root_keys_and_defaults() {
        let cfg = ScenarioConfig::parse(BASE).unwrap();
        assert_eq!(cfg.frequencies, vec![0.8, 2.0]);
        assert_eq!(cfg.eta, 0.0);
        assert!(cfg.sweep.is_none());
        let spec = cfg.normalized_spec().unwrap();
        assert_eq!(spec.omega_last(), 1.0);
        assert_eq!(spec.omega_first(), 0.4);
        assert_eq!(spec.gamma(), 1.0);
        assert_eq!(spec.t_hot(), 1.0);
    }

    #[test]
    fn rejects_unknown_keys_naming_them() {
        let err = ScenarioConfig::parse("omega_firts = 1.0").unwrap_err();
        assert_eq!(err.exit_code, 2);
        assert!(err.message.contains("omega_firts"), "{}", err.message);
        let err = ScenarioConfig::parse(&format!("{BASE}\n[sweep]\nloo = 1")).unwrap_err();
        assert!(err.message.contains("loo"));
        let err = ScenarioConfig::parse(&format!("{BASE}\n[weird]\nx = 1")).unwrap_err();
        assert!(err.message.contains("weird"));
    }

    #[test]
    fn rejects_malformed_lines_and_values() {
        assert!(ScenarioConfig::parse("omega_first 1.0").is_err());
        assert!(ScenarioConfig::parse("gamma = fast").is_err());
        let err =
            ScenarioConfig::parse("frequencies = 1,2\nomega_first = 1\ngamma=1\nt_cold=1\nt_hot=1")
                .unwrap_err();
        assert!(err.message.contains("not both"));
    }

    #[test]
    fn explicit_frequency_list() {
        let cfg = ScenarioConfig::parse(
            "frequencies = 0.5, 0.75, 1.0\nepsilon = 0.1\ngamma = 1\nt_cold = 0.5\nt_hot = 1",
        )
        .unwrap();
        assert_eq!(cfg.frequencies.len(), 3);
        let spec = cfg.normalized_spec().unwrap();
        assert_eq!(spec.n_sites(), 3);
    }

    #[test]
    fn sweep_grid_lands_on_half_and_one() {
        let sweep = SweepConfig {
            lo: 0.0,
            hi: 2.0,
            steps: 200,
        };
        let grid = sweep_grid(&sweep);
        assert_eq!(grid.len(), 200);
        assert!(grid.iter().any(|&x| x == 0.5));
        assert!(grid.iter().any(|&x| x == 1.0));
        assert_eq!(*grid.last().unwrap(), 2.0);
        assert!(grid[0] > 0.0);
    }

    #[test]
    fn steady_json_has_regime_and_covariance() {
        let cfg = ScenarioConfig::parse(BASE).unwrap();
        let out = cmd_steady(&cfg).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.payload).unwrap();
        assert_eq!(v["regime"], "refrigerator");
        assert_eq!(v["covariance"].as_array().unwrap().len(), 4);
        // Otto COP: ω_1/(ω_2 − ω_1) with ω_1/ω_2 = 0.4.
        assert!((v["figure_of_merit"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-9);
        // ε = 0: nothing flows.
        let dead = ScenarioConfig::parse(&BASE.replace("0.4", "0.0")).unwrap();
        let out = cmd_steady(&dead).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.payload).unwrap();
        assert_eq!(v["regime"], "degenerate");
        assert!(v["q_first"].as_f64().unwrap().abs() < 1e-14);
    }

    #[test]
    fn sweep_csv_shape_and_determinism() {
        let cfg =
            ScenarioConfig::parse(&format!("{BASE}\n[sweep]\nlo = 0\nhi = 2\nsteps = 40")).unwrap();
        let a = cmd_sweep(&cfg).unwrap();
        let b = cmd_sweep(&cfg).unwrap();
        assert_eq!(a.payload, b.payload, "CSV must be byte-stable");
        let lines: Vec<&str> = a.payload.lines().collect();
        assert_eq!(lines[0], SWEEP_HEADER);
        assert_eq!(lines.len(), 41);
        // Every emitted row satisfies the first law.
        for line in &lines[1..] {
            let cols: Vec<&str> = line.split(',').collect();
            if cols[5] == "unstable" {
                continue;
            }
            let q1: f64 = cols[1].parse().unwrap();
            let q2: f64 = cols[2].parse().unwrap();
            let w: f64 = cols[3].parse().unwrap();
            assert!((q1 + q2 + w).abs() < 1e-10 * cfg.gamma);
        }
    }

    #[test]
    fn unstable_rows_are_marked_not_fatal() {
        // Strong η destabilizes large ω_1/ω_2 ratios.
        let text = "
            omega_first = 1.0
            omega_last  = 1.0
            epsilon     = 0.4
            eta         = 0.7
            gamma       = 0.1
            t_cold      = 0.5
            t_hot       = 1.0
            [sweep]
            lo = 0
            hi = 2
            steps = 20
        ";
        let cfg = ScenarioConfig::parse(text).unwrap();
        let out = cmd_sweep(&cfg).unwrap();
        assert!(out.payload.contains("unstable"));
        assert_eq!(out.payload.lines().count(), 21);
    }

    #[test]
    fn oracle_compare_reports_small_deviation() {
        let text = "
            omega_first = 0.9
            omega_last  = 1.0
            epsilon     = 0.2
            gamma       = 0.7
            t_cold      = 0.35
            t_hot       = 0.6
            [fock]
            dim = 10
        ";
        let cfg = ScenarioConfig::parse(text).unwrap();
        let out = cmd_oracle_compare(&cfg).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.payload).unwrap();
        assert!(v["max_abs_deviation_number"].as_f64().unwrap() < 1e-4);
        assert_eq!(v["low_confidence"], false);
    }

    #[test]
    fn collision_requires_enough_taus() {
        let text = format!("{BASE}\n[collision]\ntaus = 0.1, 0.05\ndim = 4");
        let cfg = ScenarioConfig::parse(&text).unwrap();
        let err = cmd_collision(&cfg).unwrap_err();
        assert_eq!(err.exit_code, 6);
    }

    #[test]
    fn float_format_is_17_significant_digits() {
        assert_eq!(fmt_float(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_float(f64::NAN), "nan");
        let v: f64 = fmt_float(1.0 / 3.0).parse().unwrap();
        assert_eq!(v, 1.0 / 3.0, "round-trips exactly");
    }
}
