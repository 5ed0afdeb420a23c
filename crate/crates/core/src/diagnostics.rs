//! Standardized-residual diagnostics and state-space fit statistics.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::regression::{adf_test, AdfResult, Deterministic, LagChoice};
use crate::series::{PeriodIndex, Series};
use crate::ssm::FilterOutput;

/// A statistic with its p-value.
#[derive(Debug, Clone, Copy)]
pub struct TestStat {
    pub statistic: f64,
    pub p_value: f64,
}

/// Ljung-Box portmanteau test result.
#[derive(Debug, Clone, Copy)]
pub struct LjungBox {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
    pub dof: usize,
}

/// Two-block variance-ratio heteroscedasticity test result.
#[derive(Debug, Clone, Copy)]
pub struct HetF {
    pub statistic: f64,
    pub p_value: f64,
    pub block_size: usize,
}

/// Fit statistics of a filtered model.
#[derive(Debug, Clone, Copy)]
pub struct FitStatistics {
    /// Mean squared one-step innovation of the first observation row over
    /// fully initialized periods.
    pub mse: f64,
    /// 1 − Σv² / Σ(Δy − mean Δy)², the difference-form R².
    pub pseudo_r2: f64,
    /// (−2 logL + 2k)/n over the likelihood-bearing periods.
    pub aic: f64,
}

/// One-step prediction residuals scaled to unit variance,
/// e_t = v_t / √F_t for the first observation row of each fully
/// initialized period. Initialized periods with no observation become
/// missing entries, so the length is always n − diffuse_periods.
pub fn standardized_residuals(filter: &FilterOutput, start: PeriodIndex) -> Result<Series> {
    let mut values = Vec::new();
    let mut first_period: Option<PeriodIndex> = None;
    for (t, init) in filter.initialized.iter().enumerate() {
        if !init {
            continue;
        }
        if first_period.is_none() {
            first_period = Some(start.offset(t));
        }
        let v = &filter.innovations[t];
        if v.len() == 0 {
            values.push(None);
            continue;
        }
        let f = filter.innovation_cov[t][(0, 0)];
        if f <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "innovation variance {f} at period {t} is not positive"
            )));
        }
        values.push(Some(v[0] / f.sqrt()));
    }
    let first = first_period.unwrap_or(start);
    Series::new("standardized_residuals", first, values)
}

/// Ljung-Box Q over the given number of autocorrelation lags, with degrees
/// of freedom equal to `lags`.
pub fn ljung_box(e: &Series, lags: usize) -> Result<LjungBox> {
    ljung_box_with(e, lags, 0)
}

/// Ljung-Box with the degrees of freedom reduced by the number of
/// estimated parameters.
pub fn ljung_box_with(e: &Series, lags: usize, fitted_params: usize) -> Result<LjungBox> {
    let x = e.dense()?;
    let n = x.len();
    if lags < 1 || n <= lags {
        return Err(Error::InvalidInput(format!(
            "Ljung-Box needs 1 <= lags < n, got lags {lags}, n {n}"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if c0 == 0.0 {
        return Err(Error::InvalidInput(
            "autocorrelation undefined for a constant series".into(),
        ));
    }
    let nf = n as f64;
    let mut q = 0.0;
    for k in 1..=lags {
        let ck: f64 = (k..n).map(|t| (x[t] - mean) * (x[t - k] - mean)).sum();
        let rho = ck / c0;
        q += rho * rho / (nf - k as f64);
    }
    q *= nf * (nf + 2.0);

    let dof = lags.saturating_sub(fitted_params).max(1);
    let dist = ChiSquared::new(dof as f64).expect("valid chi-squared");
    Ok(LjungBox { statistic: q, p_value: 1.0 - dist.cdf(q), lags, dof })
}

/// Sample autocorrelations of a series, lags 1..=max_lag (plot data).
pub fn autocorrelations(e: &Series, max_lag: usize) -> Result<Vec<f64>> {
    let x = e.dense()?;
    let n = x.len();
    if n < 2 || max_lag >= n {
        return Err(Error::TooFewObservations { needed: max_lag + 1, got: n });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if c0 == 0.0 {
        return Err(Error::InvalidInput(
            "autocorrelation undefined for a constant series".into(),
        ));
    }
    Ok((1..=max_lag)
        .map(|k| (k..n).map(|t| (x[t] - mean) * (x[t - k] - mean)).sum::<f64>() / c0)
        .collect())
}

/// Jarque-Bera normality test from moment-based skewness and kurtosis.
pub fn jarque_bera(e: &Series) -> Result<TestStat> {
    let x = e.dense()?;
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: n });
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    if m2 == 0.0 {
        return Err(Error::InvalidInput("Jarque-Bera undefined for zero variance".into()));
    }
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let jb = nf / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    let dist = ChiSquared::new(2.0).expect("valid chi-squared");
    Ok(TestStat { statistic: jb, p_value: 1.0 - dist.cdf(jb) })
}

/// Two-block variance-ratio test H(h) = Σ_{last h} e² / Σ_{first h} e² with
/// h = ⌊block_fraction·n⌋ and a two-sided p-value from F(h, h).
pub fn het_f_test(e: &Series, block_fraction: f64) -> Result<HetF> {
    let x = e.dense()?;
    let n = x.len();
    if n < 6 {
        return Err(Error::TooFewObservations { needed: 6, got: n });
    }
    if !(0.0..=0.5).contains(&block_fraction) || block_fraction <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "block fraction must lie in (0, 0.5], got {block_fraction}"
        )));
    }
    let h = ((block_fraction * n as f64).floor() as usize).max(1);
    let first: f64 = x[..h].iter().map(|v| v * v).sum();
    let last: f64 = x[n - h..].iter().map(|v| v * v).sum();
    if first == 0.0 {
        return Err(Error::InvalidInput("zero denominator in variance-ratio test".into()));
    }
    let stat = last / first;
    let dist = FisherSnedecor::new(h as f64, h as f64).expect("valid F");
    let cdf = dist.cdf(stat);
    let p = (2.0 * cdf.min(1.0 - cdf)).min(1.0);
    Ok(HetF { statistic: stat, p_value: p, block_size: h })
}

/// Default block fraction for [`het_f_test`].
pub const HET_F_DEFAULT_FRACTION: f64 = 1.0 / 3.0;

/// Fit statistics from a filter pass. `k_params` counts estimated
/// hyperparameters plus diffuse states.
pub fn fit_statistics(
    filter: &FilterOutput,
    obs: &[nalgebra::DVector<f64>],
    k_params: usize,
) -> FitStatistics {
    let mut sum_v2 = 0.0;
    let mut n_innov = 0usize;
    let mut n_eff = 0usize;
    for (t, init) in filter.initialized.iter().enumerate() {
        if !init {
            continue;
        }
        n_eff += 1;
        if filter.innovations[t].len() > 0 {
            let v = filter.innovations[t][0];
            sum_v2 += v * v;
            n_innov += 1;
        }
    }
    let mse = if n_innov > 0 { sum_v2 / n_innov as f64 } else { 0.0 };

    // First-row observation series over all periods with data.
    let y: Vec<f64> = obs.iter().filter(|v| v.len() > 0).map(|v| v[0]).collect();
    let pseudo_r2 = if y.len() > 2 {
        let diffs: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
        let dm = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let denom: f64 = diffs.iter().map(|d| (d - dm).powi(2)).sum();
        if denom > 0.0 {
            1.0 - sum_v2 / denom
        } else if sum_v2 == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        f64::NAN
    };

    let aic = if n_eff > 0 {
        (-2.0 * filter.log_likelihood + 2.0 * k_params as f64) / n_eff as f64
    } else {
        f64::NAN
    };

    FitStatistics { mse, pseudo_r2, aic }
}

/// Pairs of (theoretical normal quantile, ordered residual) for QQ plot
/// data, using the (i − 0.5)/n plotting positions.
pub fn qq_pairs(e: &Series) -> Result<Vec<(f64, f64)>> {
    use statrs::distribution::{ContinuousCDF as _, Normal};
    let mut x = e.dense()?;
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    Ok(x.iter()
        .enumerate()
        .map(|(i, v)| (normal.inverse_cdf((i as f64 + 0.5) / n as f64), *v))
        .collect())
}

/// Equal-width histogram: (left edge, right edge, count) per bin.
pub fn histogram(e: &Series, bins: usize) -> Result<Vec<(f64, f64, usize)>> {
    let x = e.dense()?;
    if x.is_empty() || bins == 0 {
        return Err(Error::InvalidInput("histogram needs data and at least one bin".into()));
    }
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = ((max - min) / bins as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; bins];
    for v in &x {
        let idx = (((v - min) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (min + i as f64 * width, min + (i + 1) as f64 * width, c))
        .collect())
}

/// The full residual diagnostics block: Ljung-Box, Jarque-Bera, the ADF
/// test under all three deterministic cases, the two-block variance ratio,
/// and Durbin-Watson.
#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    pub ljung_box: LjungBox,
    pub jarque_bera: TestStat,
    pub adf: Vec<AdfResult>,
    pub het_f: HetF,
    pub durbin_watson: f64,
}

/// Runs the standard battery on a residual series.
pub fn residual_diagnostics(e: &Series, lb_lags: usize) -> Result<DiagnosticsReport> {
    let adf = [Deterministic::Trend, Deterministic::Intercept, Deterministic::None]
        .iter()
        .map(|det| adf_test(e, *det, LagChoice::Automatic))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsReport {
        ljung_box: ljung_box(e, lb_lags)?,
        jarque_bera: jarque_bera(e)?,
        adf,
        het_f: het_f_test(e, HET_F_DEFAULT_FRACTION)?,
        durbin_watson: crate::regression::durbin_watson(e)?,
    })
}

impl DiagnosticsReport {
    /// Text layout mirroring the statistic/p-value table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Ljung-Box Test                {:>10.4}  ({:.4})  [lags {}, dof {}]\n",
            self.ljung_box.statistic, self.ljung_box.p_value, self.ljung_box.lags, self.ljung_box.dof
        ));
        out.push_str(&format!(
            "Jarque-Bera Test              {:>10.4}  ({:.3e})\n",
            self.jarque_bera.statistic, self.jarque_bera.p_value
        ));
        for res in &self.adf {
            out.push_str(&format!(
                "Dickey-Fuller Test ({:<9}) {:>10.4}  [5% cv {:.3}]\n",
                res.deterministic.label(),
                res.statistic,
                res.critical_values.five_pct
            ));
        }
        out.push_str(&format!(
            "F Test of Heteroscedasticity  {:>10.5}  ({:.4})  [block {}]\n",
            self.het_f.statistic, self.het_f.p_value, self.het_f.block_size
        ));
        out.push_str(&format!("Durbin-Watson                 {:>10.4}\n", self.durbin_watson));
        out
    }
}
