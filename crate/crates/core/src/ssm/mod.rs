//! Linear Gaussian state-space engine.
//!
//! The model is
//!
//! ```text
//! y_t     = Z_t α_t + ε_t,   ε_t ~ N(0, H_t)
//! α_{t+1} = T α_t + R η_t,   η_t ~ N(0, Q)
//! α_1     ~ N(a_1, P_1)
//! ```
//!
//! with a per-period observation block (`Z_t`, `H_t`) whose row count `p_t`
//! may vary and may be zero (a fully missing period). The state matrices
//! `T`, `R`, `Q` are time-invariant. Initial state components flagged
//! diffuse are handled by exact diffuse initialization; a large-variance
//! fallback is available behind [`DiffuseMode::BigKappa`].

mod brute;
mod filter;
mod mle;
mod simulate;
mod smoother;

pub use brute::{brute_force_loglik, brute_force_posterior, Posterior};
pub use filter::{kalman_filter, kalman_filter_with, DiffuseMode, FilterOptions, FilterOutput};
pub use mle::{
    estimate_mle, loglikelihood, try_loglikelihood, EstimateOptions, Hyperparameters, MleFit,
    ModelBuilder, Param, Transform,
};
pub use simulate::{simulate, Simulation};
pub use smoother::{kalman_smoother, kalman_smoother_with, SmootherOutput};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Observation block for one period: `p_t × m` design and `p_t × p_t` noise
/// covariance. `p_t = 0` marks a missing period.
#[derive(Debug, Clone)]
pub struct ObsSpec {
    pub z: DMatrix<f64>,
    pub h: DMatrix<f64>,
}

impl ObsSpec {
    pub fn new(z: DMatrix<f64>, h: DMatrix<f64>) -> Self {
        ObsSpec { z, h }
    }

    /// A fully missing period for a model with `m` states.
    pub fn missing(m: usize) -> Self {
        ObsSpec { z: DMatrix::zeros(0, m), h: DMatrix::zeros(0, 0) }
    }

    pub fn p(&self) -> usize {
        self.z.nrows()
    }
}

/// Time-invariant system matrices plus the per-period observation schedule.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    /// Transition matrix `T`, m × m.
    pub transition: DMatrix<f64>,
    /// Selection matrix `R`, m × r: a column subset of the identity.
    pub selection: DMatrix<f64>,
    /// Disturbance covariance `Q`, r × r.
    pub state_cov: DMatrix<f64>,
    /// Per-period observation blocks; the length sets the sample size.
    pub obs: Vec<ObsSpec>,
    /// Initial mean `a_1`.
    pub init_mean: DVector<f64>,
    /// Initial covariance `P_1` of the non-diffuse states. Rows/columns of
    /// diffuse states are ignored.
    pub init_cov: DMatrix<f64>,
    /// Marks state components with diffuse initialization.
    pub diffuse: Vec<bool>,
}

impl StateSpaceModel {
    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.obs.len()
    }

    pub fn n_diffuse(&self) -> usize {
        self.diffuse.iter().filter(|d| **d).count()
    }

    /// Checks dimensions, symmetry/positive semi-definiteness of the
    /// covariance blocks, and the selection-matrix structure of `R`.
    pub fn validate(&self) -> Result<()> {
        let m = self.state_dim();
        if m == 0 {
            return Err(Error::InvalidModel("state dimension must be at least 1".into()));
        }
        if self.transition.ncols() != m {
            return Err(Error::InvalidModel("transition matrix must be square".into()));
        }
        let r = self.selection.ncols();
        if self.selection.nrows() != m {
            return Err(Error::InvalidModel(format!(
                "selection matrix must have {m} rows, got {}",
                self.selection.nrows()
            )));
        }
        if self.state_cov.nrows() != r || self.state_cov.ncols() != r {
            return Err(Error::InvalidModel(format!(
                "state covariance must be {r} x {r}"
            )));
        }
        if self.init_mean.len() != m || self.init_cov.nrows() != m || self.init_cov.ncols() != m {
            return Err(Error::InvalidModel(
                "initial moments must match the state dimension".into(),
            ));
        }
        if self.diffuse.len() != m {
            return Err(Error::InvalidModel("diffuse mask must match the state dimension".into()));
        }

        // R must be a column subset of the identity: one unit entry per
        // column, at distinct rows.
        let mut used_rows = vec![false; m];
        for j in 0..r {
            let mut unit_row = None;
            for i in 0..m {
                let v = self.selection[(i, j)];
                if v == 1.0 {
                    if unit_row.is_some() {
                        return Err(Error::InvalidModel(format!(
                            "selection column {j} has more than one unit entry"
                        )));
                    }
                    unit_row = Some(i);
                } else if v != 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "selection column {j} has a non-0/1 entry"
                    )));
                }
            }
            let i = unit_row.ok_or_else(|| {
                Error::InvalidModel(format!("selection column {j} has no unit entry"))
            })?;
            if used_rows[i] {
                return Err(Error::InvalidModel(format!("selection columns share row {i}")));
            }
            used_rows[i] = true;
        }

        check_psd(&self.state_cov, "state covariance Q")?;
        check_psd_masked(&self.init_cov, &self.diffuse, "initial covariance P1")?;
        for (t, ob) in self.obs.iter().enumerate() {
            if ob.z.ncols() != m {
                return Err(Error::InvalidModel(format!(
                    "Z at period {t} must have {m} columns"
                )));
            }
            let p = ob.p();
            if ob.h.nrows() != p || ob.h.ncols() != p {
                return Err(Error::InvalidModel(format!("H at period {t} must be {p} x {p}")));
            }
            check_psd(&ob.h, &format!("observation covariance H at period {t}"))?;
        }
        for x in self
            .transition
            .iter()
            .chain(self.init_mean.iter())
            .chain(self.state_cov.iter())
        {
            if !x.is_finite() {
                return Err(Error::NonFinite("state-space system matrix entry".into()));
            }
        }
        Ok(())
    }

    /// Structured text rendering of the model: dimensions, matrices in
    /// row-major order, and the observation schedule.
    pub fn render_spec(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("state_dim = {}\n", self.state_dim()));
        out.push_str(&format!("n_disturbances = {}\n", self.selection.ncols()));
        out.push_str(&format!("n_periods = {}\n", self.n_periods()));
        out.push_str(&format!("transition = {}\n", row_major(&self.transition)));
        out.push_str(&format!("selection = {}\n", row_major(&self.selection)));
        out.push_str(&format!("state_cov = {}\n", row_major(&self.state_cov)));
        out.push_str(&format!(
            "init_mean = [{}]\n",
            self.init_mean.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
        ));
        out.push_str(&format!("init_cov = {}\n", row_major(&self.init_cov)));
        out.push_str(&format!(
            "diffuse = [{}]\n",
            self.diffuse
                .iter()
                .map(|d| if *d { "1" } else { "0" })
                .collect::<Vec<_>>()
                .join(", ")
        ));
        for (t, ob) in self.obs.iter().enumerate() {
            out.push_str(&format!("z[{t}] = {}\n", row_major(&ob.z)));
            out.push_str(&format!("h[{t}] = {}\n", row_major(&ob.h)));
        }
        out
    }
}

fn row_major(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| {
            let cells: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Symmetry plus eigenvalue check; tolerates roundoff of 1e-8 · scale.
fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let n = m.nrows();
    if n == 0 {
        return Ok(());
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-8 * scale {
                return Err(Error::InvalidModel(format!("{what} is not symmetric")));
            }
        }
    }
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-8 * scale {
        return Err(Error::InvalidModel(format!(
            "{what} is not positive semi-definite (min eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

fn check_psd_masked(m: &DMatrix<f64>, diffuse: &[bool], what: &str) -> Result<()> {
    let keep: Vec<usize> = (0..m.nrows()).filter(|i| !diffuse[*i]).collect();
    if keep.is_empty() {
        return Ok(());
    }
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
    check_psd(&sub, what)
}

/// Symmetrizes a covariance matrix in place and clips tiny negative
/// diagonal entries left by roundoff.
pub(crate) fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = avg;
            p[(j, i)] = avg;
        }
        if p[(i, i)] < 0.0 && p[(i, i)] > -1e-8 {
            p[(i, i)] = 0.0;
        }
    }
}

#[cfg(test)]
pub(crate) fn local_level_model(n: usize, q: f64, h: f64, diffuse: bool) -> StateSpaceModel {
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
        init_cov: DMatrix::from_element(1, 1, if diffuse { 0.0 } else { 1.0 }),
        diffuse: vec![diffuse],
    }
}
