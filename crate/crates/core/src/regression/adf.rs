//! Augmented Dickey-Fuller unit-root test.
//!
//! The test regression is
//!
//! ```text
//! Δs_t = ρ s_{t−1} + Σ_{j=1..p} φ_j Δs_{t−j} + deterministic terms + e_t
//! ```
//!
//! and the reported statistic is the t ratio on ρ. Critical values come from
//! the MacKinnon (2010) response-surface approximations; for residual-based
//! cointegration tests an explicit critical-value override can be supplied.

use nalgebra::{DMatrix, DVector};

use super::ols::ols_core;
use crate::error::{Error, Result};
use crate::series::Series;

/// Deterministic terms included in the test regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deterministic {
    /// No deterministic terms.
    None,
    /// Constant only.
    Intercept,
    /// Constant and linear trend.
    Trend,
}

impl Deterministic {
    pub fn label(&self) -> &'static str {
        match self {
            Deterministic::None => "none",
            Deterministic::Intercept => "intercept",
            Deterministic::Trend => "trend",
        }
    }

    fn n_terms(&self) -> usize {
        match self {
            Deterministic::None => 0,
            Deterministic::Intercept => 1,
            Deterministic::Trend => 2,
        }
    }
}

/// Lag-order choice for the augmenting differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagChoice {
    Fixed(usize),
    /// AIC over 0..=⌊12(n/100)^¼⌋ on a common estimation sample.
    Automatic,
}

/// Critical values at the 1%, 5%, 10% levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalValues {
    pub one_pct: f64,
    pub five_pct: f64,
    pub ten_pct: f64,
}

/// Optional overrides for residual-based cointegration testing.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdfOptions {
    /// Replaces the MacKinnon critical values (e.g. with Engle-Granger
    /// residual critical values).
    pub critical_values_override: Option<CriticalValues>,
    /// Compare |statistic| against |critical value| instead of the standard
    /// signed comparison.
    pub magnitude_compare: bool,
}

/// Outcome of the ADF test.
#[derive(Debug, Clone)]
pub struct AdfResult {
    /// Signed t statistic on the lagged level.
    pub statistic: f64,
    pub deterministic: Deterministic,
    /// Number of augmenting lags used.
    pub lags: usize,
    /// Observations in the final test regression.
    pub n_obs: usize,
    pub critical_values: CriticalValues,
    /// Rejection of the unit-root null at 1%, 5%, 10%.
    pub reject_at_1pct: bool,
    pub reject_at_5pct: bool,
    pub reject_at_10pct: bool,
}

/// MacKinnon (2010) response surface: cv = b0 + b1/T + b2/T² + b3/T³.
fn mackinnon_cv(det: Deterministic, t: f64) -> CriticalValues {
    const NC: [[f64; 4]; 3] = [
        [-2.56574, -2.2358, -3.627, 0.0],
        [-1.94100, -0.2686, -3.365, 31.223],
        [-1.61682, 0.2656, -2.714, 25.364],
    ];
    const C: [[f64; 4]; 3] = [
        [-3.43035, -6.5393, -16.786, -79.433],
        [-2.86154, -2.8903, -4.234, -40.040],
        [-2.56677, -1.5384, -2.809, 0.0],
    ];
    const CT: [[f64; 4]; 3] = [
        [-3.95877, -9.0531, -28.428, -134.155],
        [-3.41049, -4.3904, -9.036, -45.374],
        [-3.12705, -2.5856, -3.925, -22.380],
    ];
    let table = match det {
        Deterministic::None => &NC,
        Deterministic::Intercept => &C,
        Deterministic::Trend => &CT,
    };
    let eval = |b: &[f64; 4]| b[0] + b[1] / t + b[2] / (t * t) + b[3] / (t * t * t);
    CriticalValues {
        one_pct: eval(&table[0]),
        five_pct: eval(&table[1]),
        ten_pct: eval(&table[2]),
    }
}

/// Schwert rule for the maximum lag considered by automatic selection.
fn schwert_max_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Runs the ADF test with default options.
pub fn adf_test(s: &Series, det: Deterministic, lags: LagChoice) -> Result<AdfResult> {
    adf_test_with(s, det, lags, AdfOptions::default())
}

/// Runs the ADF test with explicit options.
pub fn adf_test_with(
    s: &Series,
    det: Deterministic,
    lags: LagChoice,
    opts: AdfOptions,
) -> Result<AdfResult> {
    let values = s.dense()?;
    let n = values.len();
    let needed = match lags {
        LagChoice::Fixed(p) => p + 10,
        LagChoice::Automatic => 10,
    };
    if n < needed {
        return Err(Error::TooFewObservations { needed, got: n });
    }
    let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread == 0.0 {
        return Err(Error::InvalidInput("ADF test undefined for a constant series".into()));
    }

    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();

    let p = match lags {
        LagChoice::Fixed(p) => {
            if n < p + 10 {
                return Err(Error::TooFewObservations { needed: p + 10, got: n });
            }
            p
        }
        LagChoice::Automatic => select_lag_by_aic(&values, &diffs, det, n)?,
    };

    let (stat, n_obs) = adf_statistic(&values, &diffs, det, p, p)?;
    let critical_values = opts
        .critical_values_override
        .unwrap_or_else(|| mackinnon_cv(det, n_obs as f64));

    let rejects = |cv: f64| {
        if opts.magnitude_compare {
            stat.abs() > cv.abs()
        } else {
            stat < cv
        }
    };
    Ok(AdfResult {
        statistic: stat,
        deterministic: det,
        lags: p,
        n_obs,
        critical_values,
        reject_at_1pct: rejects(critical_values.one_pct),
        reject_at_5pct: rejects(critical_values.five_pct),
        reject_at_10pct: rejects(critical_values.ten_pct),
    })
}

/// AIC lag selection on the common sample trimmed at the Schwert bound.
fn select_lag_by_aic(
    values: &[f64],
    diffs: &[f64],
    det: Deterministic,
    n: usize,
) -> Result<usize> {
    let max_lag = schwert_max_lags(n).min(n.saturating_sub(det.n_terms() + 12));
    let mut best = (0usize, f64::INFINITY);
    for p in 0..=max_lag {
        let k = 1 + p + det.n_terms();
        let rows = n - 1 - max_lag;
        if rows < k + 2 {
            break;
        }
        let (_, _, loglik) = adf_regression(values, diffs, det, p, max_lag)?;
        let aic = -2.0 * loglik + 2.0 * k as f64;
        if aic < best.1 {
            best = (p, aic);
        }
    }
    Ok(best.0)
}

/// t statistic on the lagged level with `p` augmenting lags, trimming the
/// first `trim` difference observations.
fn adf_statistic(
    values: &[f64],
    diffs: &[f64],
    det: Deterministic,
    p: usize,
    trim: usize,
) -> Result<(f64, usize)> {
    let (stat, n_obs, _) = adf_regression(values, diffs, det, p, trim)?;
    Ok((stat, n_obs))
}

fn adf_regression(
    values: &[f64],
    diffs: &[f64],
    det: Deterministic,
    p: usize,
    trim: usize,
) -> Result<(f64, usize, f64)> {
    let n_diff = diffs.len();
    if trim >= n_diff {
        return Err(Error::TooFewObservations { needed: trim + 2, got: n_diff });
    }
    let rows = n_diff - trim;
    let k = 1 + p + det.n_terms();
    if rows < k + 2 {
        return Err(Error::TooFewObservations { needed: k + 2 + trim, got: n_diff });
    }

    let mut x = DMatrix::zeros(rows, k);
    let mut y = DVector::zeros(rows);
    for (r, i) in (trim..n_diff).enumerate() {
        y[r] = diffs[i];
        x[(r, 0)] = values[i]; // lagged level s_{t-1}
        for j in 1..=p {
            x[(r, j)] = diffs[i - j];
        }
        match det {
            Deterministic::None => {}
            Deterministic::Intercept => x[(r, 1 + p)] = 1.0,
            Deterministic::Trend => {
                x[(r, 1 + p)] = 1.0;
                x[(r, 2 + p)] = (r + 1) as f64;
            }
        }
    }
    let names: Vec<String> = (0..k).map(|j| format!("adf column {j}")).collect();
    let core = ols_core(&x, &y, &names)?;
    let stat = if core.std_errors[0] > 0.0 {
        core.beta[0] / core.std_errors[0]
    } else {
        f64::NAN
    };
    Ok((stat, rows, core.log_likelihood))
}

impl AdfResult {
    /// One text line per deterministic case, mirroring the usual report
    /// layout.
    pub fn render_line(&self) -> String {
        format!(
            "{:<10} statistic {:>9.4}  lags {:>2}  cv 1% {:>7.3} 5% {:>7.3} 10% {:>7.3}  reject@5% {}",
            self.deterministic.label(),
            self.statistic,
            self.lags,
            self.critical_values.one_pct,
            self.critical_values.five_pct,
            self.critical_values.ten_pct,
            if self.reject_at_5pct { "yes" } else { "no" }
        )
    }
}
