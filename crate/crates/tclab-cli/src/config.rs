//! Experiment configuration: a TOML document that names one experiment and
//! carries the physical parameters, grids, sweeps, and output location.
//!
//! Unknown fields are rejected with a field-level message and the structure
//! round-trips (parse -> emit -> parse) to an identical value.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const EXPERIMENTS: [&str; 12] = [
    "pseudo-bound",
    "resolvent-audit",
    "sharpness",
    "evolve",
    "thm1-weights",
    "decomposition",
    "gp-check",
    "dyadic-check",
    "hardy",
    "counterexample-tc",
    "counterexample-heat",
    "convergence",
];

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of [`EXPERIMENTS`].
    pub experiment: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    pub phys: PhysConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dyadic: Option<DyadicConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysConfig {
    pub nu: f64,
    pub k: i32,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_end: Option<f64>,
    pub b_end: f64,
    pub n_interior: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaConfig {
    pub lo: f64,
    pub hi: f64,
    pub n_scan: usize,
}

/// Radial quadrature weights as power exponents (`None` means unit weight).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_out: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub center: f64,
    pub half_width: f64,
}

/// Separable source `bump((r - center)/half_width) * 1_{t <= t_off}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub center: f64,
    pub half_width: f64,
    pub t_off: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<i32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Optional exponent for the exploratory exponential-weight probe of
    /// the weighted-decay experiment (reported, never asserted).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp_c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyadicConfig {
    pub j_max: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub coef: f64,
    pub exponent: f64,
    /// Multiply the coefficient by the enhanced-dissipation rate of the
    /// physical parameters.
    #[serde(default)]
    pub scale_by_kappa: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_interior: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u32>,
    /// `line`, `half-line-dirichlet`, or `interval-dirichlet:<length>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v1: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v2: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<ProfileConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<ProfileConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<ProfileConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// `evolve`, `pseudo-bound`, or `sharpness`.
    pub target: String,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn emit(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            bail!(
                "field 'experiment': unknown experiment '{}' (see --list)",
                self.experiment
            );
        }
        if !(self.phys.nu > 0.0) || !self.phys.nu.is_finite() {
            bail!("field 'phys.nu': must be positive and finite");
        }
        if self.phys.k == 0 {
            bail!("field 'phys.k': must be nonzero");
        }
        if let Some(sweep) = &self.sweep {
            macro_rules! nonempty {
                ($opt:expr, $name:literal) => {
                    if let Some(v) = $opt {
                        if v.is_empty() {
                            bail!(concat!("field 'sweep.", $name, "': list must be nonempty"));
                        }
                    }
                };
            }
            nonempty!(&sweep.nu, "nu");
            nonempty!(&sweep.k, "k");
            nonempty!(&sweep.b, "b");
            nonempty!(&sweep.q, "q");
            nonempty!(&sweep.lambda, "lambda");
            if let Some(nus) = &sweep.nu {
                if nus.iter().any(|v| !(*v > 0.0)) {
                    bail!("field 'sweep.nu': entries must be positive");
                }
            }
        }
        if let Some(g) = &self.grid {
            if g.n_interior < 8 {
                bail!("field 'grid.n_interior': need at least 8 interior nodes");
            }
        }
        if let Some(l) = &self.lambda {
            if !(l.lo < l.hi) {
                bail!("field 'lambda': need lo < hi");
            }
            if l.n_scan < 16 {
                bail!("field 'lambda.n_scan': need at least 16 scan points");
            }
        }
        if self.experiment == "convergence" {
            match &self.convergence {
                None => bail!("field 'convergence': required for the convergence experiment"),
                Some(c) => {
                    if !["evolve", "pseudo-bound", "sharpness"].contains(&c.target.as_str()) {
                        bail!("field 'convergence.target': must be evolve, pseudo-bound, or sharpness");
                    }
                }
            }
        }
        if self.experiment == "dyadic-check" {
            if let Some(d) = &self.dyadic {
                if d.j_max < 4 {
                    bail!("field 'dyadic.j_max': need j_max >= 4");
                }
            }
        }
        Ok(())
    }

    /// Sweep lists, defaulting to singletons of the base parameters.
    pub fn nu_list(&self) -> Vec<f64> {
        self.sweep
            .as_ref()
            .and_then(|s| s.nu.clone())
            .unwrap_or_else(|| vec![self.phys.nu])
    }

    pub fn k_list(&self) -> Vec<i32> {
        self.sweep
            .as_ref()
            .and_then(|s| s.k.clone())
            .unwrap_or_else(|| vec![self.phys.k])
    }

    pub fn b_list(&self) -> Vec<f64> {
        self.sweep
            .as_ref()
            .and_then(|s| s.b.clone())
            .unwrap_or_else(|| vec![self.phys.b])
    }

    pub fn q_list(&self) -> Vec<u32> {
        self.sweep
            .as_ref()
            .and_then(|s| s.q.clone())
            .unwrap_or_else(|| vec![0, 1, 2])
    }

    pub fn lambda_list(&self) -> Vec<f64> {
        self.sweep
            .as_ref()
            .and_then(|s| s.lambda.clone())
            .unwrap_or_else(|| vec![-1.0, 0.0, 0.25, 0.5, 0.9, 1.0, 2.0])
    }

    pub fn trials(&self) -> usize {
        self.sweep.as_ref().and_then(|s| s.trials).unwrap_or(50)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
experiment = "pseudo-bound"
seed = 7

[phys]
nu = 1e-3
k = 1
b = 1.0

[grid]
b_end = 16.0
n_interior = 2047

[lambda]
lo = -0.5
hi = 1.5
n_scan = 25

[sweep]
nu = [1e-3, 1e-4, 1e-5]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.experiment, "pseudo-bound");
        assert_eq!(cfg.seed, 7);
        let emitted = cfg.emit().unwrap();
        let cfg2 = ExperimentConfig::parse(&emitted).unwrap();
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn rejects_empty_sweep_list() {
        let bad = SAMPLE.replace("nu = [1e-3, 1e-4, 1e-5]", "nu = []");
        let err = ExperimentConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("sweep.nu"), "message: {err}");
    }

    #[test]
    fn rejects_unknown_experiment_and_fields() {
        let bad = SAMPLE.replace("pseudo-bound", "bogus");
        let err = ExperimentConfig::parse(&bad).unwrap_err();
        assert!(format!("{err:#}").contains("experiment"));

        let bad = format!("{SAMPLE}\nnot_a_field = 3\n");
        assert!(ExperimentConfig::parse(&bad).is_err());
    }
}
