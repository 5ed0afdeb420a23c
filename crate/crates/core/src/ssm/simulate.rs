//! Draws observation and state paths from a model.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::StateSpaceModel;
use crate::error::Result;

/// Diffuse initial states are drawn from N(a_1, 1e4); this keeps simulation
/// well defined while staying wide relative to any stationary component.
const DIFFUSE_SIM_VAR: f64 = 1e4;

/// One simulated path of the model.
#[derive(Debug, Clone)]
pub struct Simulation {
    /// Observations following the model's per-period schedule.
    pub observations: Vec<DVector<f64>>,
    /// True states, one per period.
    pub states: Vec<DVector<f64>>,
}

/// Simulates the model for its full schedule length. Deterministic given
/// `seed`.
pub fn simulate(model: &StateSpaceModel, seed: u64) -> Result<Simulation> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = model.state_dim();
    let n = model.n_periods();
    let r = model.selection.ncols();

    // Initial state: exact covariance on the non-diffuse block, wide
    // Gaussian on the diffuse entries.
    let mut init_cov = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if model.diffuse[i] || model.diffuse[j] {
                init_cov[(i, j)] = if i == j && model.diffuse[i] { DIFFUSE_SIM_VAR } else { 0.0 };
            } else {
                init_cov[(i, j)] = model.init_cov[(i, j)];
            }
        }
    }
    let init_root = psd_root(&init_cov);
    let q_root = psd_root(&model.state_cov);

    let mut state = &model.init_mean + &init_root * standard_normal_vec(m, &mut rng);
    let mut observations = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);

    for t in 0..n {
        states.push(state.clone());
        let ob = &model.obs[t];
        let p = ob.p();
        let mut y = &ob.z * &state;
        if p > 0 {
            let h_root = psd_root(&ob.h);
            y += h_root * standard_normal_vec(p, &mut rng);
        }
        observations.push(y);

        let eta = &q_root * standard_normal_vec(r, &mut rng);
        state = &model.transition * state + &model.selection * eta;
    }
    Ok(Simulation { observations, states })
}

/// Symmetric square root of a PSD matrix via its eigendecomposition;
/// tolerates exact zeros (degenerate directions draw no noise).
fn psd_root(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let k = cov.nrows();
    if k == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = cov.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for i in 0..k {
        let s = eig.eigenvalues[i].max(0.0).sqrt();
        scaled.column_mut(i).scale_mut(s);
    }
    scaled * eig.eigenvectors.transpose()
}

fn standard_normal_vec(k: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(rng)))
}
