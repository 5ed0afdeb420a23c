//! Stage one: static cointegrating regression on annual data, residual
//! unit-root testing, and quarterly interpolation of the fitted relation.

mod adf;
mod ols;

pub use adf::{
    adf_test, adf_test_with, AdfOptions, AdfResult, CriticalValues, Deterministic, LagChoice,
};
pub use ols::{durbin_watson, ols_fit, OlsFit};

use crate::error::{Error, Result};
use crate::series::{Frequency, Series};

/// Applies the annual regression coefficients to quarterly indicator series,
/// producing the first-pass ("dirty") quarterly series.
///
/// The quarterly regressors must match the annual regression's regressors in
/// order and transform. When the fit includes a trend, the trend column is
/// generated at quarterly resolution as `annual_trend_of_year + (q - 1)/4`,
/// anchored on the annual regression's first year.
pub fn interpolate_quarterly(fit: &OlsFit, quarterly_regressors: &[Series]) -> Result<Series> {
    let expected = fit.names.len() - usize::from(fit.include_trend);
    if quarterly_regressors.len() != expected {
        return Err(Error::InvalidInput(format!(
            "regressor count mismatch: regression has {expected}, got {}",
            quarterly_regressors.len()
        )));
    }
    let first = quarterly_regressors.first().ok_or_else(|| {
        Error::InvalidInput("interpolation needs at least one quarterly regressor".into())
    })?;
    if first.frequency() != Frequency::Quarterly {
        return Err(Error::Frequency("interpolation regressors must be quarterly".into()));
    }
    for r in quarterly_regressors {
        if r.start() != first.start() || r.len() != first.len() {
            return Err(Error::Alignment(format!(
                "quarterly regressor `{}` not aligned with `{}`",
                r.name(),
                first.name()
            )));
        }
    }
    let dense: Vec<Vec<f64>> = quarterly_regressors
        .iter()
        .map(|s| s.dense())
        .collect::<Result<_>>()?;

    let annual_start_year = fit.residuals.start().year;
    let mut values = Vec::with_capacity(first.len());
    for i in 0..first.len() {
        let period = first.period_at(i);
        let mut acc = 0.0;
        let mut coef_iter = fit.coefficients.iter();
        if fit.include_trend {
            let trend = (period.year - annual_start_year + 1) as f64
                + (period.quarter.unwrap_or(1) as f64 - 1.0) / 4.0;
            acc += coef_iter.next().unwrap() * trend;
        }
        for col in &dense {
            acc += coef_iter.next().unwrap() * col[i];
        }
        values.push(acc);
    }
    Series::from_values("dirty", first.start(), values)
}

/// Splices an official series onto the estimated one: where the official
/// series exists the output equals it; earlier quarters take the estimated
/// values rescaled by the ratio of means over the first overlap year.
pub fn link_series(estimated: &Series, official: &Series) -> Result<Series> {
    if estimated.frequency() != Frequency::Quarterly || official.frequency() != Frequency::Quarterly
    {
        return Err(Error::Frequency("link_series needs quarterly series".into()));
    }
    let overlap_start = estimated.start().max(official.start());
    let overlap_end = estimated.end().min(official.end());
    let overlap_len = match estimated.index_of(overlap_end) {
        Some(j) => match estimated.index_of(overlap_start) {
            Some(i) if j >= i => j - i + 1,
            _ => 0,
        },
        None => 0,
    };
    if overlap_len < 4 {
        return Err(Error::Alignment(format!(
            "need at least 4 overlapping quarters, got {overlap_len}"
        )));
    }

    let first_year_end = overlap_start.offset(3);
    let est_window = estimated.slice(overlap_start, first_year_end)?.dense()?;
    let off_window = official.slice(overlap_start, first_year_end)?.dense()?;
    let est_mean = est_window.iter().sum::<f64>() / 4.0;
    let off_mean = off_window.iter().sum::<f64>() / 4.0;
    if est_mean == 0.0 {
        return Err(Error::InvalidInput(
            "estimated series averages zero over the first overlap year".into(),
        ));
    }
    let ratio = off_mean / est_mean;

    let values = estimated
        .iter()
        .map(|(p, v)| match official.index_of(p).and_then(|j| official.values()[j]) {
            Some(officially) => Some(officially),
            None => v.map(|x| x * ratio),
        })
        .collect();
    Series::new("linked", estimated.start(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Dataset, PeriodIndex};
    use approx::assert_relative_eq;

    fn quarterly(name: &str, year: i32, vals: Vec<f64>) -> Series {
        Series::from_values(name, PeriodIndex::quarterly(year, 1).unwrap(), vals).unwrap()
    }

    fn annual(name: &str, year: i32, vals: Vec<f64>) -> Series {
        Series::from_values(name, PeriodIndex::annual(year), vals).unwrap()
    }

    #[test]
    fn interpolation_is_the_linear_combination() {
        let ds = Dataset::new(
            annual("y", 2000, vec![2.0, 4.0, 6.0]),
            vec![annual("x", 2000, vec![1.0, 2.0, 3.0])],
        )
        .unwrap();
        let fit = ols_fit(&ds, false).unwrap();
        let q = interpolate_quarterly(&fit, &[quarterly("x", 2000, vec![1.0, 2.0])]).unwrap();
        let got = q.dense().unwrap();
        assert_relative_eq!(got[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(got[1], 4.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_coefficients_give_zero_series() {
        let ds = Dataset::new(
            annual("y", 2000, vec![0.0, 0.0, 0.0]),
            vec![annual("x", 2000, vec![1.0, 2.0, 3.0])],
        )
        .unwrap();
        let fit = ols_fit(&ds, false).unwrap();
        let q = interpolate_quarterly(&fit, &[quarterly("x", 2000, vec![5.0, 7.0])]).unwrap();
        for v in q.dense().unwrap() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn regressor_count_mismatch_is_an_error() {
        let ds = Dataset::new(
            annual("y", 2000, vec![2.0, 4.0, 6.0]),
            vec![annual("x", 2000, vec![1.0, 2.0, 3.0])],
        )
        .unwrap();
        let fit = ols_fit(&ds, false).unwrap();
        assert!(interpolate_quarterly(&fit, &[]).is_err());
    }

    #[test]
    fn annual_mean_of_interpolation_reproduces_fitted_values_on_step_constants() {
        // With step-constant quarterly regressors (each year's annual value
        // repeated four times) and no trend, the annual mean of the
        // interpolated series equals the annual fitted values.
        let x_annual = vec![1.0, 3.0, 2.0, 5.0];
        let y_annual = vec![2.1, 6.2, 3.9, 10.1];
        let ds = Dataset::new(
            annual("y", 2000, y_annual),
            vec![annual("x", 2000, x_annual.clone())],
        )
        .unwrap();
        let fit = ols_fit(&ds, false).unwrap();

        let x_q: Vec<f64> = x_annual.iter().flat_map(|v| std::iter::repeat(*v).take(4)).collect();
        let q = interpolate_quarterly(&fit, &[quarterly("x", 2000, x_q)]).unwrap();
        let agg = crate::series::aggregate_to_annual(&q, crate::series::AggregateMethod::Mean)
            .unwrap()
            .dense()
            .unwrap();
        let fitted = fit.fitted.dense().unwrap();
        for (a, f) in agg.iter().zip(fitted.iter()) {
            assert_relative_eq!(a, f, max_relative = 1e-10);
        }
    }

    #[test]
    fn trend_interpolates_within_year() {
        // Pure-trend fit: y = 2 * trend annually; quarterly trend advances in
        // quarter steps of 1/4.
        let ds = Dataset::new(
            annual("y", 2000, vec![2.0, 4.0, 6.0, 8.0]),
            vec![annual("ones", 2000, vec![1.0, 1.0, 1.0, 1.0])],
        )
        .unwrap();
        let fit = ols_fit(&ds, true).unwrap();
        assert_relative_eq!(fit.coefficients[0], 2.0, epsilon = 1e-9);
        let ones_q = quarterly("ones", 2000, vec![1.0; 8]);
        let q = interpolate_quarterly(&fit, &[ones_q]).unwrap();
        let got = q.dense().unwrap();
        // year 2000 trend = 1 + (q-1)/4
        assert_relative_eq!(got[0], 2.0 * 1.0 + fit.coefficients[1], epsilon = 1e-9);
        assert_relative_eq!(got[1] - got[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(got[4] - got[3], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn link_identity_when_official_matches() {
        let est = quarterly("est", 2000, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let official =
            Series::from_values("off", PeriodIndex::quarterly(2001, 1).unwrap(), vec![5.0, 6.0, 7.0, 8.0])
                .unwrap();
        let linked = link_series(&est, &official).unwrap();
        assert_eq!(linked.dense().unwrap(), est.dense().unwrap());
    }

    #[test]
    fn link_rescales_pre_official_segment() {
        let est = quarterly("est", 2000, vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0]);
        let official = Series::from_values(
            "off",
            PeriodIndex::quarterly(2001, 1).unwrap(),
            vec![5.0, 6.0, 7.0, 8.0],
        )
        .unwrap();
        let linked = link_series(&est, &official).unwrap();
        let got = linked.dense().unwrap();
        // estimated = 2 x official on the overlap, so the early segment halves
        assert_eq!(&got[4..], &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(&got[..4], &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn interpolation_linear_in_coefficients() {
        // doubling the response doubles the coefficients, hence the
        // interpolated series
        let x_a = annual("x", 2000, vec![1.0, 2.0, 3.0, 5.0]);
        let y1 = annual("y", 2000, vec![2.1, 3.9, 6.2, 9.8]);
        let y2 = y1.map(|v| 2.0 * v).unwrap();
        let fit1 = ols_fit(&Dataset::new(y1, vec![x_a.clone()]).unwrap(), false).unwrap();
        let fit2 = ols_fit(&Dataset::new(y2, vec![x_a]).unwrap(), false).unwrap();
        let xq = quarterly("x", 2000, vec![1.5, 2.5, 3.5]);
        let a = interpolate_quarterly(&fit1, &[xq.clone()]).unwrap().dense().unwrap();
        let b = interpolate_quarterly(&fit2, &[xq]).unwrap().dense().unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert_relative_eq!(2.0 * u, *v, max_relative = 1e-10);
        }
    }

    #[test]
    fn link_requires_overlap() {
        let est = quarterly("est", 2000, vec![1.0; 4]);
        let official =
            Series::from_values("off", PeriodIndex::quarterly(2002, 1).unwrap(), vec![1.0; 4])
                .unwrap();
        assert!(link_series(&est, &official).is_err());
    }
}
