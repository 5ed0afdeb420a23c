//! Run configuration: one TOML file describing inputs, transforms, and
//! estimation settings. Paths are resolved relative to the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    #[serde(default)]
    pub transforms: Transforms,
    pub regression: Regression,
    #[serde(default)]
    pub benchmark: Benchmark,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Annual response series (the benchmark totals), CSV.
    pub annual_response: PathBuf,
    /// Annual regressor CSVs, in regression order.
    pub annual_regressors: Vec<PathBuf>,
    /// Quarterly versions of the same regressors, same order.
    pub quarterly_regressors: Vec<PathBuf>,
    /// Optional official quarterly series for splicing.
    pub official_quarterly: Option<PathBuf>,
    /// Quarterly scale series used to normalize the benchmarking stage.
    pub scale: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transforms {
    /// Per-regressor transform: "log" or "none". Defaults to all "none".
    #[serde(default)]
    pub regressors: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regression {
    /// Base year all index series are rebased to.
    pub base_year: i32,
    #[serde(default = "default_true")]
    pub include_trend: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Benchmark {
    pub include_u_in_benchmark_row: bool,
    pub fix_unit_measurement_variance: bool,
    /// Starting values for the variance hyperparameters and phi.
    pub psi0_level: f64,
    pub psi0_seasonal: f64,
    pub psi0_irregular: f64,
    pub psi0_measurement: f64,
    pub psi0_phi: f64,
    pub ljung_box_lags: usize,
}

impl Default for Benchmark {
    fn default() -> Self {
        Benchmark {
            include_u_in_benchmark_row: false,
            fix_unit_measurement_variance: false,
            psi0_level: 1e-3,
            psi0_seasonal: 1e-3,
            psi0_irregular: 1e-3,
            psi0_measurement: 1e-3,
            psi0_phi: 0.5,
            ljung_box_lags: 4,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Optimizer {
    pub max_iter: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub starts: usize,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer { max_iter: 500, tolerance: 1e-6, seed: 0, starts: 5 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: PathBuf::from("out") }
    }
}

fn default_true() -> bool {
    true
}

impl PipelineConfig {
    /// Loads and validates a config file; resolves input paths relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut cfg.inputs.annual_response);
        for p in &mut cfg.inputs.annual_regressors {
            resolve(p);
        }
        for p in &mut cfg.inputs.quarterly_regressors {
            resolve(p);
        }
        if let Some(p) = &mut cfg.inputs.official_quarterly {
            resolve(p);
        }
        resolve(&mut cfg.inputs.scale);
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.inputs.annual_regressors.is_empty() {
            bail!("at least one annual regressor is required");
        }
        if self.inputs.annual_regressors.len() != self.inputs.quarterly_regressors.len() {
            bail!(
                "{} annual regressors but {} quarterly ones; the lists must pair up",
                self.inputs.annual_regressors.len(),
                self.inputs.quarterly_regressors.len()
            );
        }
        if !self.transforms.regressors.is_empty()
            && self.transforms.regressors.len() != self.inputs.annual_regressors.len()
        {
            bail!(
                "transforms.regressors has {} entries for {} regressors",
                self.transforms.regressors.len(),
                self.inputs.annual_regressors.len()
            );
        }
        for t in &self.transforms.regressors {
            if t != "log" && t != "none" {
                bail!("unknown transform `{t}` (expected \"log\" or \"none\")");
            }
        }
        for p in std::iter::once(&self.inputs.annual_response)
            .chain(&self.inputs.annual_regressors)
            .chain(&self.inputs.quarterly_regressors)
            .chain(self.inputs.official_quarterly.iter())
            .chain(std::iter::once(&self.inputs.scale))
        {
            if !p.exists() {
                bail!("input file not found: {}", p.display());
            }
        }
        if !(self.benchmark.psi0_phi.abs() < 1.0) {
            bail!("psi0_phi must lie in (-1, 1)");
        }
        Ok(())
    }

    /// Transform tag for regressor `i` ("none" when the list is empty).
    pub fn transform_for(&self, i: usize) -> &str {
        self.transforms.regressors.get(i).map(String::as_str).unwrap_or("none")
    }
}
