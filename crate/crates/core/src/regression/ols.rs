//! Ordinary least squares with the usual regression-table statistics.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::series::{Dataset, Series};

/// A fitted least-squares regression and its summary statistics.
///
/// There is no automatic intercept; callers choose the columns. When
/// `include_trend` is set a linear trend column `1, 2, 3, …` is prepended to
/// the regressors.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub residuals: Series,
    pub fitted: Series,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub se_of_regression: f64,
    pub sum_sq_resid: f64,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub durbin_watson: f64,
    pub mean_dep: f64,
    pub sd_dep: f64,
    pub n_obs: usize,
    pub include_trend: bool,
}

/// Coefficients and residuals of a bare least-squares solve, without the
/// reporting statistics. Used internally by the ADF regressions.
pub(crate) struct OlsCore {
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub std_errors: DVector<f64>,
    pub sum_sq_resid: f64,
    pub log_likelihood: f64,
}

/// Solves min ‖y − Xb‖² by QR, with standard errors from s²(X'X)⁻¹.
///
/// `names` is used only for the rank-deficiency error message.
pub(crate) fn ols_core(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsCore> {
    let n = x.nrows();
    let k = x.ncols();
    if n < k + 1 {
        return Err(Error::TooFewObservations { needed: k + 1, got: n });
    }
    check_full_rank(x, names)?;

    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qty = q.transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Singular("R factor of the design matrix".into()))?;

    let residuals = y - x * &beta;
    let sum_sq_resid = residuals.dot(&residuals);
    let sigma2 = sum_sq_resid / (n - k) as f64;

    // (X'X)^{-1} = R^{-1} R^{-T}
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Singular("R factor of the design matrix".into()))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let std_errors = DVector::from_iterator(k, (0..k).map(|i| (sigma2 * xtx_inv[(i, i)]).sqrt()));

    let nf = n as f64;
    let log_likelihood =
        -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + (sum_sq_resid / nf).ln() + 1.0);

    Ok(OlsCore { beta, residuals, std_errors, sum_sq_resid, log_likelihood })
}

/// Flags the first column that is (numerically) a linear combination of the
/// columns before it, via modified Gram-Schmidt residual norms.
fn check_full_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let k = x.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let col = x.column(j).into_owned();
        let scale = col.norm();
        if scale == 0.0 {
            return Err(Error::RankDeficient { column: column_name(names, j) });
        }
        let mut v = col.clone();
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        // second pass for numerical orthogonality
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        if v.norm() <= 1e-10 * scale {
            return Err(Error::RankDeficient { column: column_name(names, j) });
        }
        let vn = v.norm();
        basis.push(v / vn);
    }
    Ok(())
}

fn column_name(names: &[String], j: usize) -> String {
    names.get(j).cloned().unwrap_or_else(|| format!("column {j}"))
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub(crate) fn t_p_value(t: f64, df: f64) -> f64 {
    if df <= 0.0 || !t.is_finite() {
        return f64::NAN;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// First-order autocorrelation statistic Σ(eₜ − eₜ₋₁)² / Σeₜ².
pub fn durbin_watson(resid: &Series) -> Result<f64> {
    let e = resid.dense()?;
    if e.len() < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: e.len() });
    }
    let denom: f64 = e.iter().map(|x| x * x).sum();
    if denom == 0.0 {
        return Err(Error::InvalidInput(
            "Durbin-Watson undefined for all-zero residuals".into(),
        ));
    }
    let num: f64 = e.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(num / denom)
}

/// Fits the response on the dataset's regressors (plus an optional prepended
/// linear trend) and fills in the full regression report.
pub fn ols_fit(ds: &Dataset, include_trend: bool) -> Result<OlsFit> {
    let y_vals = ds.response.dense()?;
    let n = y_vals.len();
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    if include_trend {
        names.push("trend".into());
        cols.push((1..=n).map(|t| t as f64).collect());
    }
    for r in &ds.regressors {
        names.push(r.name().to_string());
        cols.push(r.dense()?);
    }
    let k = cols.len();
    if k == 0 {
        return Err(Error::InvalidInput("regression needs at least one regressor".into()));
    }

    let x = DMatrix::from_fn(n, k, |i, j| cols[j][i]);
    let y = DVector::from_vec(y_vals.clone());
    let core = ols_core(&x, &y, &names)?;

    let df = (n - k) as f64;
    let t_stats: Vec<f64> = core
        .beta
        .iter()
        .zip(core.std_errors.iter())
        .map(|(b, se)| if *se > 0.0 { b / se } else { f64::NAN })
        .collect();
    let p_values: Vec<f64> = t_stats.iter().map(|t| t_p_value(*t, df)).collect();

    let mean_dep = y_vals.iter().sum::<f64>() / n as f64;
    let tss: f64 = y_vals.iter().map(|v| (v - mean_dep).powi(2)).sum();
    let sd_dep = if n > 1 { (tss / (n - 1) as f64).sqrt() } else { 0.0 };
    let r_squared = if tss > 0.0 { 1.0 - core.sum_sq_resid / tss } else { 1.0 };
    let adj_r_squared = if n > k {
        1.0 - (1.0 - r_squared) * (n - 1) as f64 / (n - k) as f64
    } else {
        f64::NAN
    };

    let nf = n as f64;
    let kf = k as f64;
    // Per-observation information criteria, consistent with the
    // log-likelihood definition above: aic = (-2 logL + 2k)/n.
    let aic = (-2.0 * core.log_likelihood + 2.0 * kf) / nf;
    let bic = (-2.0 * core.log_likelihood + kf * nf.ln()) / nf;

    let residuals = Series::from_values(
        "residuals",
        ds.response.start(),
        core.residuals.iter().copied().collect(),
    )?;
    let fitted = Series::from_values(
        "fitted",
        ds.response.start(),
        y_vals
            .iter()
            .zip(core.residuals.iter())
            .map(|(y, e)| y - e)
            .collect(),
    )?;
    let dw = durbin_watson(&residuals).unwrap_or(f64::NAN);

    Ok(OlsFit {
        names,
        coefficients: core.beta.iter().copied().collect(),
        std_errors: core.std_errors.iter().copied().collect(),
        t_stats,
        p_values,
        residuals,
        fitted,
        r_squared,
        adj_r_squared,
        se_of_regression: (core.sum_sq_resid / df).sqrt(),
        sum_sq_resid: core.sum_sq_resid,
        log_likelihood: core.log_likelihood,
        aic,
        bic,
        durbin_watson: dw,
        mean_dep,
        sd_dep,
        n_obs: n,
        include_trend,
    })
}

impl OlsFit {
    /// Structured text report with the coefficient table and fit statistics.
    pub fn render_report(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>12} {:>12} {:>10} {:>8}\n",
            "Variable", "Coef.", "Std. Error", "t-Stat.", "prob."
        ));
        for i in 0..self.names.len() {
            out.push_str(&format!(
                "{:<12} {:>12.6} {:>12.6} {:>10.4} {:>8.4}\n",
                self.names[i],
                self.coefficients[i],
                self.std_errors[i],
                self.t_stats[i],
                self.p_values[i]
            ));
        }
        out.push_str(&format!(
            "R-squared      {:>12.6}   Mean dep. var {:>12.6}\n",
            self.r_squared, self.mean_dep
        ));
        out.push_str(&format!(
            "Adj. R-squared {:>12.6}   S.D. dep. var {:>12.6}\n",
            self.adj_r_squared, self.sd_dep
        ));
        out.push_str(&format!(
            "S.E. of reg.   {:>12.6}   AIC           {:>12.6}\n",
            self.se_of_regression, self.aic
        ));
        out.push_str(&format!(
            "Sum sq. resid  {:>12.6}   BIC           {:>12.6}\n",
            self.sum_sq_resid, self.bic
        ));
        out.push_str(&format!(
            "Log likelihood {:>12.6}   DW            {:>12.6}\n",
            self.log_likelihood, self.durbin_watson
        ));
        out.push_str(&format!("Observations   {:>12}\n", self.n_obs));
        out
    }
}
