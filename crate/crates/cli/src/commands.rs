//! Pipeline stages: cointegration, quarterly interpolation, benchmarking.
//!
//! Every command recomputes its prerequisites in memory (the stages are
//! pure and cheap next to estimation), so artifacts on disk are plain
//! outputs, never inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use disagg::benchmark::{
    annual_coherence_report, run_benchmarking, BenchmarkOptions, BenchmarkResult,
};
use disagg::diagnostics::{autocorrelations, histogram, qq_pairs, residual_diagnostics};
use disagg::regression::{adf_test, interpolate_quarterly, link_series, ols_fit, Deterministic,
    LagChoice, OlsFit};
use disagg::series::{
    align, log_transform, read_csv_file, rebase_index, write_csv_file, Dataset,
    Frequency, PeriodIndex, Series,
};
use disagg::ssm::EstimateOptions;

use crate::config::PipelineConfig;

/// Outcome of a command that may finish with warnings (exit code 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    Warnings,
}

impl RunStatus {
    pub fn exit_code(self) -> u8 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Warnings => 2,
        }
    }
}

/// All input series, rebased to the configured base year with the
/// configured transforms applied.
pub struct Prepared {
    pub annual: Dataset,
    pub quarterly_regressors: Vec<Series>,
    pub official: Option<Series>,
    pub scale: Series,
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let base_year = cfg.regression.base_year;
    let load = |path: &Path, freq: Frequency| -> Result<Series> {
        read_csv_file(path, freq).with_context(|| format!("reading {}", path.display()))
    };
    let prep = |s: &Series, transform: &str| -> Result<Series> {
        let rebased = rebase_index(s, base_year)
            .with_context(|| format!("rebasing `{}` to {base_year}", s.name()))?;
        Ok(match transform {
            "log" => log_transform(&rebased)
                .with_context(|| format!("log transform of `{}`", s.name()))?,
            _ => rebased,
        })
    };

    let response = prep(&load(&cfg.inputs.annual_response, Frequency::Annual)?, "none")?;
    let mut annual_regs = Vec::new();
    for (i, path) in cfg.inputs.annual_regressors.iter().enumerate() {
        annual_regs.push(prep(&load(path, Frequency::Annual)?, cfg.transform_for(i))?);
    }
    let mut all = vec![response];
    all.extend(annual_regs);
    let annual = align(&all).context("aligning the annual series")?;

    let mut quarterly = Vec::new();
    for (i, path) in cfg.inputs.quarterly_regressors.iter().enumerate() {
        quarterly.push(prep(&load(path, Frequency::Quarterly)?, cfg.transform_for(i))?);
    }
    let qds = align(&quarterly).context("aligning the quarterly regressors")?;
    let mut quarterly_regressors = vec![qds.response];
    quarterly_regressors.extend(qds.regressors);

    let official = match &cfg.inputs.official_quarterly {
        Some(p) => Some(load(p, Frequency::Quarterly)?),
        None => None,
    };
    let scale = prep(&load(&cfg.inputs.scale, Frequency::Quarterly)?, "none")?;

    Ok(Prepared { annual, quarterly_regressors, official, scale })
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_series(dir: &Path, name: &str, s: &Series) -> Result<()> {
    write_csv_file(&dir.join(name), s).with_context(|| format!("writing {name}"))?;
    Ok(())
}

/// Stage one: cointegrating regression plus residual unit-root tests.
pub fn cmd_cointegrate(cfg: &PipelineConfig, out: &Path) -> Result<RunStatus> {
    fs::create_dir_all(out)?;
    let prepared = prepare(cfg)?;
    let fit = fit_regression(cfg, &prepared)?;

    write_text(out, "regression_report.txt", &fit.render_report())?;
    write_series(out, "residuals_annual.csv", &fit.residuals)?;

    let mut adf_text = String::from("Unit-root tests on the cointegration residuals\n");
    for det in [Deterministic::Trend, Deterministic::Intercept, Deterministic::None] {
        let res = adf_test(&fit.residuals, det, LagChoice::Automatic)
            .context("ADF test on the residuals")?;
        writeln!(adf_text, "{}", res.render_line()).unwrap();
    }
    write_text(out, "adf_report.txt", &adf_text)?;
    Ok(RunStatus::Success)
}

fn fit_regression(cfg: &PipelineConfig, prepared: &Prepared) -> Result<OlsFit> {
    ols_fit(&prepared.annual, cfg.regression.include_trend).context("cointegrating regression")
}

/// Stage two: interpolate the fitted relation with the quarterly
/// regressors; splice the official series when configured.
pub fn cmd_interpolate(cfg: &PipelineConfig, out: &Path) -> Result<RunStatus> {
    fs::create_dir_all(out)?;
    let prepared = prepare(cfg)?;
    let (dirty, raw) = interpolate(cfg, &prepared)?;
    write_series(out, "dirty.csv", &raw)?;
    if prepared.official.is_some() {
        write_series(out, "linked.csv", &dirty)?;
    }
    Ok(RunStatus::Success)
}

/// Returns (series used downstream, raw interpolated series). When an
/// official series is configured the downstream series is the linked one.
fn interpolate(cfg: &PipelineConfig, prepared: &Prepared) -> Result<(Series, Series)> {
    let fit = fit_regression(cfg, prepared)?;
    let raw = interpolate_quarterly(&fit, &prepared.quarterly_regressors)
        .context("quarterly interpolation")?;
    let dirty = match &prepared.official {
        Some(official) => {
            link_series(&raw, official).context("linking the official series")?
        }
        None => raw.clone(),
    };
    Ok((dirty, raw))
}

/// Stage three: state-space benchmarking of the dirty series.
pub fn cmd_benchmark(cfg: &PipelineConfig, out: &Path, seed: u64) -> Result<RunStatus> {
    fs::create_dir_all(out)?;
    let prepared = prepare(cfg)?;
    let (dirty, _) = interpolate(cfg, &prepared)?;
    let (result, annual_b) = benchmark(cfg, &prepared, &dirty, seed)?;
    write_benchmark_artifacts(cfg, out, &prepared, &dirty, &result, &annual_b)?;
    Ok(if result.fit.converged { RunStatus::Success } else { RunStatus::Warnings })
}

/// Trims the dirty series, benchmarks, and scale to their common complete
/// years and runs the benchmarking stage.
fn benchmark(
    cfg: &PipelineConfig,
    prepared: &Prepared,
    dirty: &Series,
    seed: u64,
) -> Result<(BenchmarkResult, Series)> {
    // complete years covered by the dirty series
    let d_start = dirty.start();
    let mut first_year = d_start.year;
    if d_start.quarter != Some(1) {
        first_year += 1;
    }
    let d_end = dirty.end();
    let mut last_year = d_end.year;
    if d_end.quarter != Some(4) {
        last_year -= 1;
    }
    let annual = &prepared.annual.response;
    let first_year = first_year.max(annual.start().year);
    let last_year = last_year.min(annual.end().year);
    if last_year < first_year {
        bail!("no complete years shared by the dirty series and the annual benchmarks");
    }
    let q1 = PeriodIndex::quarterly(first_year, 1).unwrap();
    let q4 = PeriodIndex::quarterly(last_year, 4).unwrap();
    let mut dirty_b = dirty.slice(q1, q4).context("trimming the dirty series to complete years")?;
    let annual_b = annual
        .slice(PeriodIndex::annual(first_year), PeriodIndex::annual(last_year))
        .context("trimming the annual benchmarks")?;
    let scale_b = prepared
        .scale
        .slice(q1, q4)
        .context("the scale series must cover the benchmarked span")?;

    // Without an official series there is nothing anchoring the level of
    // the interpolated series to the benchmarks, so align it once by the
    // overall ratio (the same role the official-series splice plays).
    if prepared.official.is_none() {
        let dirty_sum: f64 = dirty_b.dense()?.iter().sum();
        let annual_sum: f64 = annual_b.dense()?.iter().sum();
        if dirty_sum != 0.0 && annual_sum != 0.0 {
            let ratio = annual_sum / dirty_sum;
            dirty_b = dirty_b.map(|v| v * ratio)?;
        }
    }

    let opts = BenchmarkOptions {
        include_u_in_benchmark_row: cfg.benchmark.include_u_in_benchmark_row,
        fix_unit_measurement_variance: cfg.benchmark.fix_unit_measurement_variance,
        estimate: EstimateOptions {
            max_iter: cfg.optimizer.max_iter,
            grad_tol: cfg.optimizer.tolerance,
            n_starts: cfg.optimizer.starts,
            seed,
            ..Default::default()
        },
    };
    let template = disagg::benchmark::DqTemplate {
        n_quarters: dirty_b.len(),
        include_u_in_benchmark_row: opts.include_u_in_benchmark_row,
        fix_unit_measurement_variance: opts.fix_unit_measurement_variance,
    };
    let psi0 = template.psi(
        cfg.benchmark.psi0_level,
        cfg.benchmark.psi0_seasonal,
        cfg.benchmark.psi0_irregular,
        cfg.benchmark.psi0_measurement,
        cfg.benchmark.psi0_phi,
    );
    let result = run_benchmarking(&dirty_b, &annual_b, &scale_b, &psi0, &opts)
        .context("benchmarking stage")?;
    Ok((result, annual_b))
}

fn write_benchmark_artifacts(
    cfg: &PipelineConfig,
    out: &Path,
    prepared: &Prepared,
    dirty: &Series,
    result: &BenchmarkResult,
    annual_b: &Series,
) -> Result<()> {
    write_series(out, "clean.csv", &result.clean)?;

    // components, one row per period
    let mut comp = String::from("period,level,seasonal,irregular,measurement_error\n");
    let c = &result.components;
    let level = c.level.dense()?;
    let seasonal = c.seasonal.dense()?;
    let irregular = c.irregular.dense()?;
    let error = c.measurement_error.dense()?;
    for i in 0..level.len() {
        writeln!(
            comp,
            "{},{},{},{},{}",
            c.level.period_at(i),
            level[i],
            seasonal[i],
            irregular[i],
            error[i]
        )
        .unwrap();
    }
    write_text(out, "components.csv", &comp)?;

    write_text(out, "fit_report.txt", &result.fit.render())?;

    // residual diagnostics and plot data
    let resid = &result.standardized_residuals;
    let diag = residual_diagnostics(resid, cfg.benchmark.ljung_box_lags)
        .context("residual diagnostics")?;
    write_text(out, "diagnostics_report.txt", &diag.render())?;
    write_series(out, "standardized_residuals.csv", resid)?;

    let max_lag = 20.min(resid.len().saturating_sub(2));
    let acf = autocorrelations(resid, max_lag)?;
    let mut acf_csv = String::from("lag,acf\n");
    for (k, v) in acf.iter().enumerate() {
        writeln!(acf_csv, "{},{}", k + 1, v).unwrap();
    }
    write_text(out, "residual_acf.csv", &acf_csv)?;

    let mut hist_csv = String::from("bin_left,bin_right,count\n");
    for (l, r, n) in histogram(resid, 20)? {
        writeln!(hist_csv, "{l},{r},{n}").unwrap();
    }
    write_text(out, "residual_hist.csv", &hist_csv)?;

    let mut qq_csv = String::from("theoretical,sample\n");
    for (t, s) in qq_pairs(resid)? {
        writeln!(qq_csv, "{t},{s}").unwrap();
    }
    write_text(out, "residual_qq.csv", &qq_csv)?;

    // dirty vs clean vs official
    let clean = &result.clean;
    let mut cmp_csv = String::from("period,dirty,clean,official\n");
    for (p, c_val) in clean.iter() {
        let d_val = dirty.index_of(p).and_then(|i| dirty.values()[i]);
        let o_val = prepared
            .official
            .as_ref()
            .and_then(|o| o.index_of(p))
            .and_then(|i| prepared.official.as_ref().unwrap().values()[i]);
        writeln!(
            cmp_csv,
            "{},{},{},{}",
            p,
            d_val.map(|v| v.to_string()).unwrap_or_default(),
            c_val.map(|v| v.to_string()).unwrap_or_default(),
            o_val.map(|v| v.to_string()).unwrap_or_default()
        )
        .unwrap();
    }
    write_text(out, "comparison.csv", &cmp_csv)?;

    let coherence = annual_coherence_report(result, annual_b)?;
    write_text(out, "coherence.csv", &coherence.to_csv())?;

    // estimated hyperparameters, for reproducibility
    write_text(out, "hyperparameters.txt", &result.psi.render_spec())?;
    Ok(())
}

/// All three stages in sequence.
pub fn cmd_pipeline(cfg: &PipelineConfig, out: &Path, seed: u64) -> Result<RunStatus> {
    fs::create_dir_all(out)?;
    let prepared = prepare(cfg)?;

    let fit = fit_regression(cfg, &prepared)?;
    write_text(out, "regression_report.txt", &fit.render_report())?;
    write_series(out, "residuals_annual.csv", &fit.residuals)?;
    let mut adf_text = String::from("Unit-root tests on the cointegration residuals\n");
    for det in [Deterministic::Trend, Deterministic::Intercept, Deterministic::None] {
        let res = adf_test(&fit.residuals, det, LagChoice::Automatic)?;
        writeln!(adf_text, "{}", res.render_line()).unwrap();
    }
    write_text(out, "adf_report.txt", &adf_text)?;

    let (dirty, raw) = interpolate(cfg, &prepared)?;
    write_series(out, "dirty.csv", &raw)?;
    if prepared.official.is_some() {
        write_series(out, "linked.csv", &dirty)?;
    }

    let (result, annual_b) = benchmark(cfg, &prepared, &dirty, seed)?;
    write_benchmark_artifacts(cfg, out, &prepared, &dirty, &result, &annual_b)?;
    Ok(if result.fit.converged { RunStatus::Success } else { RunStatus::Warnings })
}

/// Seed precedence: command line over config.
pub fn cfg_seed(cfg: &PipelineConfig, cli_seed: Option<u64>) -> u64 {
    cli_seed.unwrap_or(cfg.optimizer.seed)
}
