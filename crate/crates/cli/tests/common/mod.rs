//! Synthetic input fixtures for the CLI tests.
//!
//! The generated world mirrors the intended data layout: a positive
//! quarterly target series driven by two integrated indicators plus trend,
//! annual values that are exact year-sums of the target, an official
//! quarterly index covering a suffix of the span whose year-sums equal the
//! rebased annual benchmarks, and a positive quarterly scale series.

use std::fs;
use std::path::{Path, PathBuf};

use disagg::series::{serialize_csv, PeriodIndex, Series};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Fixture {
    pub config_path: PathBuf,
    /// The underlying series the pipeline is trying to recover; not every
    /// test consumes them.
    #[allow(dead_code)]
    pub truth_quarterly: Series,
    #[allow(dead_code)]
    pub official: Series,
}

pub struct FixtureSpec {
    pub seed: u64,
    pub n_years: usize,
    pub start_year: i32,
    /// Years after the start at which the official series begins.
    pub official_offset: usize,
    /// Years after the start used as the index base.
    pub base_offset: usize,
    pub with_official: bool,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 1,
            n_years: 28,
            start_year: 1965,
            official_offset: 16,
            base_offset: 20,
            with_official: true,
        }
    }
}

pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Fixture {
    let n = spec.n_years * 4;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = |sd: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * sd
    };

    // Two integrated indicators, a small stationary disequilibrium error,
    // and a fixed seasonal pattern.
    let mut w1 = vec![0.0f64; n];
    let mut w2 = vec![0.0f64; n];
    let mut err = vec![0.0f64; n];
    for t in 1..n {
        w1[t] = w1[t - 1] + draw(0.015);
        w2[t] = w2[t - 1] + draw(0.015);
        err[t] = 0.5 * err[t - 1] + draw(0.008);
    }
    let season = [0.018, -0.007, -0.015, 0.004];

    let q1 = PeriodIndex::quarterly(spec.start_year, 1).unwrap();
    let mut truth = Vec::with_capacity(n);
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut x0 = Vec::with_capacity(n);
    let mut scale = Vec::with_capacity(n);
    for t in 0..n {
        let g = 100.0
            * (5.0 + 1.0 * w1[t] - 0.5 * w2[t] + 0.002 * t as f64 + err[t] + season[t % 4]);
        truth.push(g);
        x1.push(w1[t].exp());
        x2.push(w2[t].exp());
        // constant indicator; rebasing turns it into an exact intercept
        x0.push(7.0);
        scale.push((0.3 * w1[t]).exp() * 2.0);
    }
    let truth_q = Series::from_values("truth", q1, truth).unwrap();

    // Annual series: year-sums of the target, year-sums of the indicators.
    let year_sum = |v: &[f64]| -> Vec<f64> {
        v.chunks_exact(4).map(|c| c.iter().sum()).collect()
    };
    let annual_start = PeriodIndex::annual(spec.start_year);
    let annual_gdp = year_sum(truth_q.dense().unwrap().as_slice());
    let x1_a = year_sum(&x1);
    let x2_a = year_sum(&x2);
    let x0_a = year_sum(&x0);

    // Official index: target divided by the base-year annual total, so its
    // year-sums equal the rebased annual response exactly.
    let base_total = annual_gdp[spec.base_offset];
    let official_start_year = spec.start_year + spec.official_offset as i32;
    let official_vals: Vec<f64> = truth_q
        .dense()
        .unwrap()
        .iter()
        .skip(spec.official_offset * 4)
        .map(|g| g / base_total)
        .collect();
    let official = Series::from_values(
        "official",
        PeriodIndex::quarterly(official_start_year, 1).unwrap(),
        official_vals,
    )
    .unwrap();

    let write = |name: &str, s: &Series| -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, serialize_csv(s)).unwrap();
        path
    };
    write("gdp_annual.csv", &Series::from_values("gdp", annual_start, annual_gdp).unwrap());
    write("x0_annual.csv", &Series::from_values("x0", annual_start, x0_a).unwrap());
    write("x1_annual.csv", &Series::from_values("x1", annual_start, x1_a).unwrap());
    write("x2_annual.csv", &Series::from_values("x2", annual_start, x2_a).unwrap());
    write("x0_quarterly.csv", &Series::from_values("x0", q1, x0).unwrap());
    write("x1_quarterly.csv", &Series::from_values("x1", q1, x1).unwrap());
    write("x2_quarterly.csv", &Series::from_values("x2", q1, x2).unwrap());
    write("scale_quarterly.csv", &Series::from_values("scale", q1, scale).unwrap());
    if spec.with_official {
        write("official_quarterly.csv", &official);
    }

    let official_line = if spec.with_official {
        "official_quarterly = \"official_quarterly.csv\"\n"
    } else {
        ""
    };
    let config = format!(
        r#"[inputs]
annual_response = "gdp_annual.csv"
annual_regressors = ["x0_annual.csv", "x1_annual.csv", "x2_annual.csv"]
quarterly_regressors = ["x0_quarterly.csv", "x1_quarterly.csv", "x2_quarterly.csv"]
{official_line}scale = "scale_quarterly.csv"

[transforms]
regressors = ["none", "log", "log"]

[regression]
base_year = {base_year}
include_trend = true

[benchmark]
psi0_level = 1e-4
psi0_seasonal = 1e-4
psi0_irregular = 1e-4
psi0_measurement = 1e-4
psi0_phi = 0.3

[optimizer]
seed = 11
starts = 3

[output]
dir = "out"
"#,
        base_year = spec.start_year + spec.base_offset as i32,
    );
    let config_path = dir.join("run.toml");
    fs::write(&config_path, config).unwrap();

    Fixture { config_path, truth_quarterly: truth_q, official }
}
