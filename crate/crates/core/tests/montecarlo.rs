//! Monte Carlo calibration checks for statistics whose sampling behavior
//! is the contract: frequencies and moments under known data-generating
//! processes, with seeded replication streams.

use disagg::diagnostics::{jarque_bera, standardized_residuals};
use disagg::par;
use disagg::regression::durbin_watson;
use disagg::series::{PeriodIndex, Series};
use disagg::ssm::{kalman_filter, simulate, ObsSpec, StateSpaceModel};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_series(seed: u64, n: usize) -> Series {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Series::from_values("e", PeriodIndex::annual(0), vals).unwrap()
}

#[test]
fn durbin_watson_concentrates_near_two_for_white_noise() {
    let reps = 300;
    let inside: usize = par::map_indexed(reps, |rep| {
        let dw = durbin_watson(&gaussian_series(10_000 + rep as u64, 500)).unwrap();
        usize::from((1.7..=2.3).contains(&dw))
    })
    .into_iter()
    .sum();
    assert!(inside * 100 >= reps * 99, "only {inside}/{reps} inside [1.7, 2.3]");
}

#[test]
fn jarque_bera_size_near_nominal_for_gaussian_data() {
    let reps = 400;
    let rejections: usize = par::map_indexed(reps, |rep| {
        let jb = jarque_bera(&gaussian_series(20_000 + rep as u64, 2000)).unwrap();
        usize::from(jb.p_value < 0.05)
    })
    .into_iter()
    .sum();
    let rate = rejections as f64 / reps as f64;
    // JB converges to its asymptotic size from above; accept a band around 5%
    assert!((0.02..=0.09).contains(&rate), "rejection rate {rate}");
}

fn local_level(n: usize, q: f64, h: f64) -> StateSpaceModel {
    StateSpaceModel {
        transition: DMatrix::identity(1, 1),
        selection: DMatrix::identity(1, 1),
        state_cov: DMatrix::from_element(1, 1, q),
        obs: (0..n)
            .map(|_| {
                ObsSpec::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, h))
            })
            .collect(),
        init_mean: DVector::zeros(1),
        init_cov: DMatrix::zeros(1, 1),
        diffuse: vec![true],
    }
}

#[test]
fn standardized_residuals_have_unit_variance_under_the_true_model() {
    let n = 500;
    let model = local_level(n, 0.5, 1.0);
    let reps = 100;
    let calibrated: usize = par::map_indexed(reps, |rep| {
        let sim = simulate(&model, 30_000 + rep as u64).unwrap();
        let filter = kalman_filter(&model, &sim.observations).unwrap();
        let e = standardized_residuals(&filter, PeriodIndex::quarterly(1900, 1).unwrap())
            .unwrap()
            .dense()
            .unwrap();
        assert_eq!(e.len(), n - filter.diffuse_periods);
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let var = e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / e.len() as f64;
        usize::from((0.85..=1.15).contains(&var))
    })
    .into_iter()
    .sum();
    assert!(calibrated * 100 >= reps * 95, "only {calibrated}/{reps} calibrated");
}

#[test]
fn zero_innovation_model_gives_zero_residuals() {
    // Noiseless constant level observed exactly: innovations vanish after
    // the diffuse period.
    let mut model = local_level(10, 0.0, 0.0);
    model.diffuse = vec![true];
    let obs: Vec<DVector<f64>> = (0..10).map(|_| DVector::from_element(1, 3.25)).collect();
    let filter = kalman_filter(&model, &obs).unwrap();
    for t in 1..10 {
        assert!(filter.innovations[t][0].abs() < 1e-12);
    }
}
