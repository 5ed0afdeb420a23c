//! Benchmarking a quarterly series against annual totals with a 13-state
//! structural model.
//!
//! The state vector stacks the current value and three lags of a local
//! level μ, a stochastic dummy seasonal γ, and a white-noise irregular ε,
//! plus an AR(1) measurement error u:
//!
//! ```text
//! α = [μ_t, μ_{t−1}, μ_{t−2}, μ_{t−3},
//!      γ_t, γ_{t−1}, γ_{t−2}, γ_{t−3},
//!      ε_t, ε_{t−1}, ε_{t−2}, ε_{t−3}, u_t]
//! ```
//!
//! Every quarter observes `μ_t + γ_t + ε_t + u_t` (the "dirty" series);
//! every fourth quarter additionally observes the sum of the four quarters
//! of the year, tied to the annual benchmark. All observation rows are
//! noiseless (H = 0), so the smoothed states interpolate the benchmarks
//! exactly: the cleaned series is coherent with the annual totals by
//! construction.

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::{fit_statistics, standardized_residuals, FitStatistics};
use crate::error::{Error, Result};
use crate::series::{Frequency, Series};
use crate::ssm::{
    estimate_mle, kalman_filter, kalman_smoother, EstimateOptions, Hyperparameters, MleFit,
    ModelBuilder, ObsSpec, Param, StateSpaceModel,
};

/// State-vector positions of the current-quarter components.
const MU: usize = 0;
const GAMMA: usize = 4;
const EPS: usize = 8;
const U: usize = 12;
const STATE_DIM: usize = 13;

/// Specification of the benchmarking model for a fixed sample length.
#[derive(Debug, Clone)]
pub struct DqModelSpec {
    pub n_quarters: usize,
    /// AR(1) coefficient of the measurement error, in (−1, 1).
    pub phi: f64,
    /// Level disturbance variance σ²_ξ.
    pub level_var: f64,
    /// Seasonal disturbance variance σ²_ω.
    pub seasonal_var: f64,
    /// Irregular variance σ²_ε.
    pub irregular_var: f64,
    /// Stationary variance σ²_u of the measurement error; the AR(1)
    /// innovation variance is σ²_u(1 − φ²).
    pub measurement_var: f64,
    /// Reproduce the literal all-ones annual observation row (which adds
    /// u_t to the annual constraint). Default `false`: the annual row ties
    /// the benchmark to the sum of clean quarters only.
    pub include_u_in_benchmark_row: bool,
}

impl DqModelSpec {
    fn validate(&self) -> Result<()> {
        if self.n_quarters < 4 || self.n_quarters % 4 != 0 {
            return Err(Error::InvalidInput(format!(
                "benchmarking needs complete years: {} quarters",
                self.n_quarters
            )));
        }
        if !self.phi.is_finite() || self.phi.abs() >= 1.0 {
            return Err(Error::InvalidInput(format!("phi must lie in (-1, 1), got {}", self.phi)));
        }
        for (name, v) in [
            ("level", self.level_var),
            ("seasonal", self.seasonal_var),
            ("irregular", self.irregular_var),
            ("measurement", self.measurement_var),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!("{name} variance must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Builds the 13-state model with its two-row-every-fourth-quarter
/// observation schedule and H_t = 0 throughout.
pub fn build_dq_model(spec: &DqModelSpec) -> Result<StateSpaceModel> {
    spec.validate()?;
    let mut t = DMatrix::zeros(STATE_DIM, STATE_DIM);
    // level random walk and its lag shift register
    t[(MU, MU)] = 1.0;
    t[(MU + 1, MU)] = 1.0;
    t[(MU + 2, MU + 1)] = 1.0;
    t[(MU + 3, MU + 2)] = 1.0;
    // stochastic dummy seasonal: γ_{t+1} = −(γ_t + γ_{t−1} + γ_{t−2}) + ω
    t[(GAMMA, GAMMA)] = -1.0;
    t[(GAMMA, GAMMA + 1)] = -1.0;
    t[(GAMMA, GAMMA + 2)] = -1.0;
    t[(GAMMA + 1, GAMMA)] = 1.0;
    t[(GAMMA + 2, GAMMA + 1)] = 1.0;
    t[(GAMMA + 3, GAMMA + 2)] = 1.0;
    // irregular: ε_{t+1} is a fresh draw; lags shift
    t[(EPS + 1, EPS)] = 1.0;
    t[(EPS + 2, EPS + 1)] = 1.0;
    t[(EPS + 3, EPS + 2)] = 1.0;
    // AR(1) measurement error
    t[(U, U)] = spec.phi;

    let mut r = DMatrix::zeros(STATE_DIM, 4);
    r[(MU, 0)] = 1.0;
    r[(GAMMA, 1)] = 1.0;
    r[(EPS, 2)] = 1.0;
    r[(U, 3)] = 1.0;

    let mut q = DMatrix::zeros(4, 4);
    q[(0, 0)] = spec.level_var;
    q[(1, 1)] = spec.seasonal_var;
    q[(2, 2)] = spec.irregular_var;
    q[(3, 3)] = spec.measurement_var * (1.0 - spec.phi * spec.phi);

    let quarterly_row = {
        let mut z = DMatrix::zeros(1, STATE_DIM);
        z[(0, MU)] = 1.0;
        z[(0, GAMMA)] = 1.0;
        z[(0, EPS)] = 1.0;
        z[(0, U)] = 1.0;
        z
    };
    let obs = (1..=spec.n_quarters)
        .map(|t1| {
            if t1 % 4 == 0 {
                let mut z = DMatrix::zeros(2, STATE_DIM);
                z.row_mut(0).copy_from(&quarterly_row.row(0));
                for j in 0..STATE_DIM {
                    z[(1, j)] = 1.0;
                }
                if !spec.include_u_in_benchmark_row {
                    z[(1, U)] = 0.0;
                }
                ObsSpec::new(z, DMatrix::zeros(2, 2))
            } else {
                ObsSpec::new(quarterly_row.clone(), DMatrix::zeros(1, 1))
            }
        })
        .collect();

    let mut init_cov = DMatrix::zeros(STATE_DIM, STATE_DIM);
    for i in EPS..EPS + 4 {
        init_cov[(i, i)] = spec.irregular_var;
    }
    init_cov[(U, U)] = spec.measurement_var;

    let mut diffuse = vec![false; STATE_DIM];
    for d in diffuse.iter_mut().take(GAMMA + 4) {
        *d = true;
    }

    Ok(StateSpaceModel {
        transition: t,
        selection: r,
        state_cov: q,
        obs,
        init_mean: DVector::zeros(STATE_DIM),
        init_cov,
        diffuse,
    })
}

/// Hyperparameter template for the benchmarking model.
#[derive(Debug, Clone)]
pub struct DqTemplate {
    pub n_quarters: usize,
    pub include_u_in_benchmark_row: bool,
    /// Fixes σ²_u = 1 instead of estimating it.
    pub fix_unit_measurement_variance: bool,
}

impl DqTemplate {
    /// The hyperparameter vector this template expects, at the given
    /// starting values.
    pub fn psi(
        &self,
        level: f64,
        seasonal: f64,
        irregular: f64,
        measurement: f64,
        phi: f64,
    ) -> Hyperparameters {
        let mut params = vec![
            Param::log_variance("level_var", level),
            Param::log_variance("seasonal_var", seasonal),
            Param::log_variance("irregular_var", irregular),
        ];
        if !self.fix_unit_measurement_variance {
            params.push(Param::log_variance("measurement_var", measurement));
        }
        params.push(Param::fisher_z("phi", phi));
        Hyperparameters::new(params)
    }
}

impl ModelBuilder for DqTemplate {
    fn build(&self, psi: &Hyperparameters) -> Result<StateSpaceModel> {
        let need = |name: &str| {
            psi.get(name)
                .ok_or_else(|| Error::InvalidInput(format!("hyperparameter `{name}` missing")))
        };
        let spec = DqModelSpec {
            n_quarters: self.n_quarters,
            phi: need("phi")?,
            level_var: need("level_var")?,
            seasonal_var: need("seasonal_var")?,
            irregular_var: need("irregular_var")?,
            measurement_var: if self.fix_unit_measurement_variance {
                1.0
            } else {
                need("measurement_var")?
            },
            include_u_in_benchmark_row: self.include_u_in_benchmark_row,
        };
        build_dq_model(&spec)
    }
}

/// Element-wise division of the dirty series by a strictly positive scale
/// series sharing its span.
pub fn normalize(dirty: &Series, scale: &Series) -> Result<Series> {
    check_same_span(dirty, scale)?;
    let mut values = Vec::with_capacity(dirty.len());
    for ((p, d), (_, s)) in dirty.iter().zip(scale.iter()) {
        let s = s.ok_or_else(|| Error::MissingValue {
            period: p.to_string(),
            context: "scale series".into(),
        })?;
        if s <= 0.0 {
            return Err(Error::NonPositive {
                period: p.to_string(),
                value: s,
                context: "scale series for normalization".into(),
            });
        }
        values.push(d.map(|x| x / s));
    }
    Series::new(format!("{}_normalized", dirty.name()), dirty.start(), values)
}

/// Inverse of [`normalize`]: element-wise multiplication by the scale.
pub fn denormalize(normalized: &Series, scale: &Series) -> Result<Series> {
    check_same_span(normalized, scale)?;
    let mut values = Vec::with_capacity(normalized.len());
    for ((p, d), (_, s)) in normalized.iter().zip(scale.iter()) {
        let s = s.ok_or_else(|| Error::MissingValue {
            period: p.to_string(),
            context: "scale series".into(),
        })?;
        values.push(d.map(|x| x * s));
    }
    Series::new(normalized.name(), normalized.start(), values)
}

fn check_same_span(a: &Series, b: &Series) -> Result<()> {
    if a.frequency() != b.frequency() || a.start() != b.start() || a.len() != b.len() {
        return Err(Error::Alignment(format!(
            "`{}` and `{}` must share frequency and span",
            a.name(),
            b.name()
        )));
    }
    Ok(())
}

/// Normalizes the annual benchmarks consistently with a quarterly scale
/// series: each annual value is divided by the mean of its four
/// within-year scale values, so that "sum of four normalized quarters
/// equals the normalized benchmark" expresses the raw coherence
/// constraint whenever the scale is near-constant within the year (and
/// exactly when it is constant).
pub fn normalize_annual(annual: &Series, scale: &Series) -> Result<Series> {
    if annual.frequency() != Frequency::Annual || scale.frequency() != Frequency::Quarterly {
        return Err(Error::Frequency(
            "normalize_annual needs an annual series and a quarterly scale".into(),
        ));
    }
    if scale.start().quarter != Some(1)
        || scale.start().year != annual.start().year
        || scale.len() != annual.len() * 4
    {
        return Err(Error::Alignment(
            "scale series must cover exactly the benchmark years, starting at Q1".into(),
        ));
    }
    let scale_vals = scale.dense()?;
    let mut values = Vec::with_capacity(annual.len());
    for (y, (p, v)) in annual.iter().enumerate() {
        let denom: f64 = scale_vals[4 * y..4 * y + 4].iter().sum::<f64>() / 4.0;
        if denom <= 0.0 {
            return Err(Error::NonPositive {
                period: p.to_string(),
                value: denom,
                context: "within-year scale sum".into(),
            });
        }
        values.push(v.map(|x| x / denom));
    }
    Series::new(format!("{}_normalized", annual.name()), annual.start(), values)
}

/// Stacks the normalized dirty series and annual benchmarks into the
/// model's observation vectors: `[dirty_t]` off benchmark quarters,
/// `[dirty_t, annual_of_year]` every fourth quarter.
pub fn stack_observations(dirty_norm: &Series, annual_norm: &Series) -> Result<Vec<DVector<f64>>> {
    let n = dirty_norm.len();
    if n < 4 || n % 4 != 0 {
        return Err(Error::InvalidInput(format!(
            "benchmarking needs complete years, got {n} quarters"
        )));
    }
    if annual_norm.len() != n / 4 {
        return Err(Error::InvalidInput(format!(
            "{} annual benchmarks for {n} quarters; expected {}",
            annual_norm.len(),
            n / 4
        )));
    }
    let dirty = dirty_norm.dense()?;
    let annual = annual_norm.dense()?;
    Ok((0..n)
        .map(|i| {
            if (i + 1) % 4 == 0 {
                DVector::from_vec(vec![dirty[i], annual[i / 4]])
            } else {
                DVector::from_element(1, dirty[i])
            }
        })
        .collect())
}

/// Options for [`run_benchmarking`].
#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub include_u_in_benchmark_row: bool,
    pub fix_unit_measurement_variance: bool,
    pub estimate: EstimateOptions,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            include_u_in_benchmark_row: false,
            fix_unit_measurement_variance: false,
            estimate: EstimateOptions::default(),
        }
    }
}

/// Smoothed components of the benchmarking model, as series.
#[derive(Debug, Clone)]
pub struct Components {
    pub level: Series,
    pub seasonal: Series,
    pub irregular: Series,
    pub measurement_error: Series,
}

/// Fit summary of the benchmarking run.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub log_likelihood: f64,
    pub level_var: f64,
    pub seasonal_var: f64,
    pub irregular_var: f64,
    pub measurement_var: f64,
    pub phi: f64,
    pub mse: f64,
    pub pseudo_r2: f64,
    pub aic: f64,
    pub converged: bool,
    pub message: String,
}

impl FitReport {
    /// Text layout mirroring the estimated-model summary table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("Log-Likelihood               {:>14.4}\n", self.log_likelihood));
        out.push_str(&format!("Level Variance               {:>14.8}\n", self.level_var));
        out.push_str(&format!("Seasonality Variance         {:>14.8}\n", self.seasonal_var));
        out.push_str(&format!("Irregularity Variance        {:>14.8}\n", self.irregular_var));
        out.push_str(&format!("Measurement Error Variance   {:>14.8}\n", self.measurement_var));
        out.push_str(&format!("Measurement Error AR(1) phi  {:>14.6}\n", self.phi));
        out.push_str(&format!("MSE                          {:>14.8}\n", self.mse));
        out.push_str(&format!("Pseudo R2                    {:>14.6}\n", self.pseudo_r2));
        out.push_str(&format!("AIC                          {:>14.6}\n", self.aic));
        out.push_str(&format!(
            "Optimizer                    {}\n",
            if self.converged { "converged" } else { "NOT CONVERGED" }
        ));
        out
    }
}

/// Output of the full benchmarking pass.
#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    /// Clean series y* = y − u on the original scale.
    pub clean: Series,
    /// Clean series in normalized units.
    pub clean_normalized: Series,
    /// Normalized dirty input.
    pub dirty_normalized: Series,
    /// Normalized annual benchmarks used as observations.
    pub annual_normalized: Series,
    /// Smoothed components on the original scale.
    pub components: Components,
    /// Smoothed components in normalized units.
    pub components_normalized: Components,
    /// Scale series used for (de)normalization.
    pub scale: Series,
    pub fit: FitReport,
    pub standardized_residuals: Series,
    /// Estimated hyperparameters.
    pub psi: Hyperparameters,
    /// Estimate covariance (natural scale), when available.
    pub psi_covariance: Option<nalgebra::DMatrix<f64>>,
}

/// Normalizes, estimates the hyperparameters by maximum likelihood,
/// smooths, and denormalizes. The clean series is the smoothed μ + γ + ε;
/// the measurement error is the smoothed u.
pub fn run_benchmarking(
    dirty: &Series,
    annual: &Series,
    scale: &Series,
    psi0: &Hyperparameters,
    opts: &BenchmarkOptions,
) -> Result<BenchmarkResult> {
    if dirty.frequency() != Frequency::Quarterly {
        return Err(Error::Frequency("dirty series must be quarterly".into()));
    }
    if dirty.start().quarter != Some(1) {
        return Err(Error::InvalidInput("dirty series must start at Q1".into()));
    }
    let dirty_norm = normalize(dirty, scale)?;
    let annual_norm = normalize_annual(annual, scale)?;
    let obs = stack_observations(&dirty_norm, &annual_norm)?;

    let template = DqTemplate {
        n_quarters: dirty.len(),
        include_u_in_benchmark_row: opts.include_u_in_benchmark_row,
        fix_unit_measurement_variance: opts.fix_unit_measurement_variance,
    };
    let fit: MleFit = estimate_mle(&template, &obs, psi0, opts.estimate)?;

    let model = template.build(&fit.psi)?;
    let filter = kalman_filter(&model, &obs)?;
    let smooth = kalman_smoother(&model, &obs)?;

    let start = dirty.start();
    let component = |idx: usize, name: &str| -> Result<Series> {
        Series::from_values(name, start, smooth.smoothed_state.iter().map(|s| s[idx]).collect())
    };
    let level_n = component(MU, "level")?;
    let seasonal_n = component(GAMMA, "seasonal")?;
    let irregular_n = component(EPS, "irregular")?;
    let error_n = component(U, "measurement_error")?;
    let clean_norm = Series::from_values(
        "clean_normalized",
        start,
        smooth.smoothed_state.iter().map(|s| s[MU] + s[GAMMA] + s[EPS]).collect(),
    )?;

    let components_normalized = Components {
        level: level_n.clone(),
        seasonal: seasonal_n.clone(),
        irregular: irregular_n.clone(),
        measurement_error: error_n.clone(),
    };
    let components = Components {
        level: denormalize(&level_n, scale)?,
        seasonal: denormalize(&seasonal_n, scale)?,
        irregular: denormalize(&irregular_n, scale)?,
        measurement_error: denormalize(&error_n, scale)?,
    };
    let clean = denormalize(&clean_norm, scale)?.with_name("clean");

    let k_params = fit.psi.len() + model.n_diffuse();
    let stats: FitStatistics = fit_statistics(&filter, &obs, k_params);
    let residuals = standardized_residuals(&filter, start)?;

    let get = |name: &str, fixed: f64| fit.psi.get(name).unwrap_or(fixed);
    let report = FitReport {
        log_likelihood: fit.log_likelihood,
        level_var: get("level_var", f64::NAN),
        seasonal_var: get("seasonal_var", f64::NAN),
        irregular_var: get("irregular_var", f64::NAN),
        measurement_var: get("measurement_var", 1.0),
        phi: get("phi", f64::NAN),
        mse: stats.mse,
        pseudo_r2: stats.pseudo_r2,
        aic: stats.aic,
        converged: fit.converged,
        message: fit.message.clone(),
    };

    Ok(BenchmarkResult {
        clean,
        clean_normalized: clean_norm,
        dirty_normalized: dirty_norm,
        annual_normalized: annual_norm,
        components,
        components_normalized,
        scale: scale.clone(),
        fit: report,
        standardized_residuals: residuals,
        psi: fit.psi,
        psi_covariance: fit.covariance,
    })
}

/// Per-year coherence between the cleaned quarters and the annual
/// benchmark, in normalized units (where the model imposes the constraint).
#[derive(Debug, Clone)]
pub struct CoherenceRow {
    pub year: i32,
    pub clean_sum: f64,
    pub benchmark: f64,
    pub discrepancy: f64,
    pub relative: f64,
}

#[derive(Debug, Clone)]
pub struct CoherenceReport {
    pub rows: Vec<CoherenceRow>,
}

impl CoherenceReport {
    pub fn max_relative(&self) -> f64 {
        self.rows.iter().map(|r| r.relative.abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("year,clean_sum,benchmark,discrepancy,relative\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.year, r.clean_sum, r.benchmark, r.discrepancy, r.relative
            ));
        }
        out
    }
}

/// Compares year sums of the normalized clean series against the
/// benchmarks re-normalized from the given annual series.
pub fn annual_coherence_report(result: &BenchmarkResult, annual: &Series) -> Result<CoherenceReport> {
    let annual_norm = normalize_annual(annual, &result.scale)?;
    let clean = result.clean_normalized.dense()?;
    let bench = annual_norm.dense()?;
    if clean.len() != bench.len() * 4 {
        return Err(Error::InvalidInput(
            "clean series and annual benchmarks cover different years".into(),
        ));
    }
    let rows = bench
        .iter()
        .enumerate()
        .map(|(y, b)| {
            let s: f64 = clean[4 * y..4 * y + 4].iter().sum();
            let d = s - b;
            CoherenceRow {
                year: annual.start().year + y as i32,
                clean_sum: s,
                benchmark: *b,
                discrepancy: d,
                relative: if *b != 0.0 { d / b } else { d },
            }
        })
        .collect();
    Ok(CoherenceReport { rows })
}
