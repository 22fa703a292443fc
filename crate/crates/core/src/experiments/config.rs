//! TOML experiment configuration.
//!
//! Every section is optional; omitted keys take the defaults listed on each
//! struct. Unknown keys are rejected. All values are validated before any
//! computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Whole configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed; `--seed` overrides it.
    pub seed: u64,
    pub fit: Option<FitConfig>,
    pub certify: Option<CertifyConfig>,
    pub lipschitz: Option<LipschitzConfig>,
    pub synthetic: Option<SyntheticConfig>,
    pub robot: Option<RobotConfig>,
    pub asymptotics: Option<AsymptoticsConfig>,
    pub plots: PlotConfig,
}

/// SE-ARD kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub signal_variance: f64,
    /// One entry per input dimension; a single entry is broadcast.
    pub lengthscales: Vec<f64>,
    /// Maximize the marginal likelihood starting from these values.
    pub optimize: bool,
    /// Optimizer starts (the first is the configured kernel).
    pub starts: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
            lengthscales: vec![1.0],
            optimize: true,
            starts: 8,
        }
    }
}

impl KernelConfig {
    /// Lengthscales expanded to `d` entries.
    pub fn lengthscales_for(&self, d: usize) -> Result<Vec<f64>> {
        match self.lengthscales.len() {
            1 => Ok(vec![self.lengthscales[0]; d]),
            n if n == d => Ok(self.lengthscales.clone()),
            n => Err(Error::Config(format!("kernel has {n} lengthscales, expected 1 or {d}"))),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        positive(&format!("{what}.kernel.signal_variance"), self.signal_variance)?;
        if self.lengthscales.is_empty() {
            return Err(Error::Config(format!("{what}.kernel.lengthscales must not be empty")));
        }
        for &l in &self.lengthscales {
            positive(&format!("{what}.kernel.lengthscales"), l)?;
        }
        if self.optimize && self.starts == 0 {
            return Err(Error::Config(format!("{what}.kernel.starts must be at least 1")));
        }
        Ok(())
    }
}

/// `fit`: hyperparameters from a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// CSV with columns `x_1..x_d, y`, relative to the config file.
    pub data: PathBuf,
    pub noise_variance: f64,
    /// Also optimize the noise variance.
    pub optimize_noise: bool,
    pub kernel: KernelConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data.csv"),
            noise_variance: 0.01,
            optimize_noise: false,
            kernel: KernelConfig::default(),
        }
    }
}

/// `certify`: uniform error bound for a dataset on a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub data: PathBuf,
    pub noise_variance: f64,
    pub kernel: KernelConfig,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub tau: f64,
    pub delta: f64,
    /// Known Lipschitz constant of the target; computed with probability
    /// `1 - delta_l` from the kernel when absent.
    pub f_lipschitz: Option<f64>,
    pub delta_l: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data.csv"),
            noise_variance: 0.01,
            kernel: KernelConfig::default(),
            domain_lower: vec![0.0],
            domain_upper: vec![1.0],
            tau: 1e-8,
            delta: 0.01,
            f_lipschitz: None,
            delta_l: 0.01,
        }
    }
}

/// `lipschitz`: probabilistic Lipschitz constant of GP samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LipschitzConfig {
    pub kernel: KernelConfig,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub delta_l: f64,
}

impl Default for LipschitzConfig {
    fn default() -> Self {
        Self {
            kernel: KernelConfig {
                optimize: false,
                ..KernelConfig::default()
            },
            domain_lower: vec![0.0],
            domain_upper: vec![1.0],
            delta_l: 0.01,
        }
    }
}

/// Synthetic one-degree-of-freedom tracking experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub training_lower: Vec<f64>,
    pub training_upper: Vec<f64>,
    pub training_counts: Vec<usize>,
    pub noise_variance: f64,
    pub kernel: KernelConfig,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub tau: f64,
    pub delta: f64,
    pub delta_l: f64,
    pub k_c: f64,
    pub lambda: f64,
    /// Reference `amplitude sin(t)`.
    pub amplitude: f64,
    pub initial_state: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    /// Points per axis of the grid on which the bound is checked.
    pub check_resolution: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            training_lower: vec![0.0, -3.0],
            training_upper: vec![3.0, 3.0],
            training_counts: vec![9, 9],
            noise_variance: 0.01,
            kernel: KernelConfig::default(),
            domain_lower: vec![-6.0, -4.0],
            domain_upper: vec![4.0, 4.0],
            tau: 1e-8,
            delta: 0.01,
            delta_l: 0.01,
            k_c: 2.0,
            lambda: 1.0,
            amplitude: 2.0,
            initial_state: vec![-4.0, 2.0],
            dt: 1e-3,
            t_end: 20.0,
            record_every: 10,
            check_resolution: 100,
        }
    }
}

/// Two-link arm tracking experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotConfig {
    /// Gravitational acceleration along `-z_2`; 0 disables gravity.
    pub gravity: f64,
    pub training_lower: Vec<f64>,
    pub training_upper: Vec<f64>,
    pub training_counts: Vec<usize>,
    pub noise_variance: f64,
    pub kernel: KernelConfig,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub tau: f64,
    /// Total failure probability, split over the two joints.
    pub delta: f64,
    pub k_c: f64,
    pub lambda: f64,
    /// Joint references `offset + amplitude sin(frequency t + phase)`.
    pub amplitude: Vec<f64>,
    pub frequency: Vec<f64>,
    pub phase: Vec<f64>,
    pub offset: Vec<f64>,
    /// `[q_1, q_1', q_2, q_2']`.
    pub initial_state: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl Default for RobotConfig {
    fn default() -> Self {
        let pi = std::f64::consts::PI;
        Self {
            gravity: 9.81,
            training_lower: vec![-1.0; 4],
            training_upper: vec![1.0; 4],
            training_counts: vec![3; 4],
            noise_variance: 0.01,
            kernel: KernelConfig::default(),
            domain_lower: vec![-pi; 4],
            domain_upper: vec![pi; 4],
            tau: 1e-8,
            delta: 0.01,
            k_c: 7.0,
            lambda: 1.0,
            amplitude: vec![0.5, 0.5],
            frequency: vec![1.0, 1.0],
            phase: vec![0.0, std::f64::consts::FRAC_PI_2],
            offset: vec![0.0, 0.0],
            initial_state: vec![0.3, 0.0, -0.3, 0.0],
            dt: 1e-3,
            t_end: 20.0,
            record_every: 10,
        }
    }
}

/// Test functions for the growing-data harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truth {
    /// `sin(3 x_1) + cos(2 x_2) ...`: `sum_i s_i(a_i x_i)` alternating sine
    /// and cosine with frequencies 3, 2, 3, 2, ...
    SinCos,
    /// Identically zero.
    Zero,
}

impl Truth {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Truth::Zero => 0.0,
            Truth::SinCos => x
                .iter()
                .enumerate()
                .map(|(i, &v)| if i % 2 == 0 { (3.0 * v).sin() } else { (2.0 * v).cos() })
                .sum(),
        }
    }

    /// `sup |f|` over any set.
    pub fn sup_abs(self, d: usize) -> f64 {
        match self {
            Truth::Zero => 0.0,
            Truth::SinCos => d as f64,
        }
    }

    /// Lipschitz constant over any set.
    pub fn lipschitz(self, d: usize) -> f64 {
        match self {
            Truth::Zero => 0.0,
            Truth::SinCos => (0..d).map(|i| if i % 2 == 0 { 9.0 } else { 4.0 }).sum::<f64>().sqrt(),
        }
    }
}

/// Growing-data harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymptoticsConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub schedule: Vec<usize>,
    pub delta: f64,
    pub noise_variance: f64,
    pub tau0: f64,
    pub truth: Truth,
    /// Bound on `sup |f|`; defaults to the exact value for `truth`.
    pub f_max: Option<f64>,
    /// Defaults to the exact value for `truth`.
    pub f_lipschitz: Option<f64>,
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub dense_cap: usize,
    pub eval_points_per_dim: usize,
    pub max_eval_points: usize,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        Self {
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
            schedule: vec![25, 100, 400, 1600],
            delta: 0.01,
            noise_variance: 0.01,
            tau0: 1.0,
            truth: Truth::SinCos,
            f_max: None,
            f_lipschitz: None,
            signal_variance: 1.0,
            lengthscales: vec![0.3],
            dense_cap: 4000,
            eval_points_per_dim: 400,
            max_eval_points: 100_000,
        }
    }
}

/// Plot settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotConfig {
    pub width: u32,
    pub height: u32,
    /// Cells per axis of heatmaps.
    pub heatmap_resolution: usize,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            width: 720,
            height: 480,
            heatmap_resolution: 80,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be non-negative and finite, got {v}")))
    }
}

fn probability(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn bounds(name: &str, lower: &[f64], upper: &[f64], d: Option<usize>) -> Result<()> {
    if lower.is_empty() || lower.len() != upper.len() {
        return Err(Error::Config(format!("{name}: lower and upper need the same non-zero length")));
    }
    if let Some(d) = d {
        if lower.len() != d {
            return Err(Error::Config(format!("{name}: expected {d} dimensions, got {}", lower.len())));
        }
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
        return Err(Error::Config(format!("{name}: need finite lower < upper in every dimension")));
    }
    Ok(())
}

fn counts(name: &str, c: &[usize], d: usize) -> Result<()> {
    if c.len() != d || c.iter().any(|&n| n == 0) {
        return Err(Error::Config(format!("{name}: need {d} counts, each at least 1")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical TOML of the effective configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of [`to_toml`](Self::to_toml), hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.fit {
            non_negative("fit.noise_variance", c.noise_variance)?;
            c.kernel.validate("fit")?;
        }
        if let Some(c) = &self.certify {
            non_negative("certify.noise_variance", c.noise_variance)?;
            c.kernel.validate("certify")?;
            bounds("certify.domain", &c.domain_lower, &c.domain_upper, None)?;
            positive("certify.tau", c.tau)?;
            probability("certify.delta", c.delta)?;
            probability("certify.delta_l", c.delta_l)?;
            if let Some(l) = c.f_lipschitz {
                non_negative("certify.f_lipschitz", l)?;
            }
        }
        if let Some(c) = &self.lipschitz {
            c.kernel.validate("lipschitz")?;
            bounds("lipschitz.domain", &c.domain_lower, &c.domain_upper, None)?;
            c.kernel.lengthscales_for(c.domain_lower.len())?;
            probability("lipschitz.delta_l", c.delta_l)?;
        }
        if let Some(c) = &self.synthetic {
            bounds("synthetic.training", &c.training_lower, &c.training_upper, Some(2))?;
            counts("synthetic.training_counts", &c.training_counts, 2)?;
            bounds("synthetic.domain", &c.domain_lower, &c.domain_upper, Some(2))?;
            positive("synthetic.noise_variance", c.noise_variance)?;
            c.kernel.validate("synthetic")?;
            c.kernel.lengthscales_for(2)?;
            positive("synthetic.tau", c.tau)?;
            probability("synthetic.delta", c.delta)?;
            probability("synthetic.delta_l", c.delta_l)?;
            positive("synthetic.k_c", c.k_c)?;
            positive("synthetic.lambda", c.lambda)?;
            non_negative("synthetic.amplitude", c.amplitude)?;
            if c.initial_state.len() != 2 {
                return Err(Error::Config("synthetic.initial_state needs 2 entries".into()));
            }
            positive("synthetic.dt", c.dt)?;
            positive("synthetic.t_end", c.t_end)?;
            if c.record_every == 0 || c.check_resolution < 2 {
                return Err(Error::Config("synthetic.record_every >= 1 and check_resolution >= 2".into()));
            }
        }
        if let Some(c) = &self.robot {
            non_negative("robot.gravity", c.gravity)?;
            bounds("robot.training", &c.training_lower, &c.training_upper, Some(4))?;
            counts("robot.training_counts", &c.training_counts, 4)?;
            bounds("robot.domain", &c.domain_lower, &c.domain_upper, Some(4))?;
            positive("robot.noise_variance", c.noise_variance)?;
            c.kernel.validate("robot")?;
            c.kernel.lengthscales_for(4)?;
            positive("robot.tau", c.tau)?;
            probability("robot.delta", c.delta)?;
            positive("robot.k_c", c.k_c)?;
            positive("robot.lambda", c.lambda)?;
            for (name, v) in [
                ("amplitude", &c.amplitude),
                ("frequency", &c.frequency),
                ("phase", &c.phase),
                ("offset", &c.offset),
            ] {
                if v.len() != 2 || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config(format!("robot.{name} needs 2 finite entries")));
                }
            }
            if c.initial_state.len() != 4 {
                return Err(Error::Config("robot.initial_state needs 4 entries".into()));
            }
            positive("robot.dt", c.dt)?;
            positive("robot.t_end", c.t_end)?;
            if c.record_every == 0 {
                return Err(Error::Config("robot.record_every must be at least 1".into()));
            }
        }
        if let Some(c) = &self.asymptotics {
            bounds("asymptotics", &c.lower, &c.upper, None)?;
            let d = c.lower.len();
            if c.schedule.is_empty() {
                return Err(Error::Config("asymptotics.schedule must not be empty".into()));
            }
            if c.schedule[0] == 0 || c.schedule.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("asymptotics.schedule must be strictly increasing and positive".into()));
            }
            probability("asymptotics.delta", c.delta)?;
            non_negative("asymptotics.noise_variance", c.noise_variance)?;
            positive("asymptotics.tau0", c.tau0)?;
            positive("asymptotics.signal_variance", c.signal_variance)?;
            if c.lengthscales.len() != 1 && c.lengthscales.len() != d {
                return Err(Error::Config(format!("asymptotics.lengthscales needs 1 or {d} entries")));
            }
            for &l in &c.lengthscales {
                positive("asymptotics.lengthscales", l)?;
            }
            if let Some(v) = c.f_max {
                non_negative("asymptotics.f_max", v)?;
            }
            if let Some(v) = c.f_lipschitz {
                non_negative("asymptotics.f_lipschitz", v)?;
            }
            if c.eval_points_per_dim == 0 || c.max_eval_points == 0 || c.dense_cap == 0 {
                return Err(Error::Config("asymptotics grid sizes and dense_cap must be positive".into()));
            }
        }
        let p = &self.plots;
        if p.width < 100 || p.height < 100 || p.heatmap_resolution < 2 {
            return Err(Error::Config("plots need width, height >= 100 and heatmap_resolution >= 2".into()));
        }
        Ok(())
    }

    /// Resolves a data path from the config relative to `base`.
    pub fn resolve(base: Option<&Path>, path: &Path) -> PathBuf {
        match base {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }
}
