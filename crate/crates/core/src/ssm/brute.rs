//! Dense joint-Gaussian reference implementation.
//!
//! Builds the exact joint distribution of all states and observations
//! implied by the model and conditions on the observed values. It shares no
//! code with the filter/smoother recursions, which makes it the oracle the
//! recursive implementations are tested against. Feasible only for small
//! problems (`n·m ≤ 200`).
//!
//! Diffuse states are approximated with a large but finite prior variance
//! (1e8), so comparisons on diffuse models carry an O(1/1e8) approximation
//! error; non-diffuse comparisons are exact to numerical precision.

use nalgebra::{DMatrix, DVector};

use super::StateSpaceModel;
use crate::error::{Error, Result};

const DIFFUSE_APPROX_VAR: f64 = 1e8;
const MAX_JOINT_DIM: usize = 200;

/// Per-period posterior state moments from the dense joint.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: Vec<DVector<f64>>,
    pub cov: Vec<DMatrix<f64>>,
}

struct Joint {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    c: DMatrix<f64>,
    h: DMatrix<f64>,
    y: DVector<f64>,
}

fn build_joint(model: &StateSpaceModel, obs: &[DVector<f64>]) -> Result<Joint> {
    model.validate()?;
    let m = model.state_dim();
    let n = model.n_periods();
    if n * m > MAX_JOINT_DIM {
        return Err(Error::InvalidInput(format!(
            "joint dimension {} exceeds the brute-force cap {MAX_JOINT_DIM}",
            n * m
        )));
    }
    if obs.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} observation vectors, got {}",
            obs.len()
        )));
    }

    let nm = n * m;
    let t_mat = &model.transition;
    let rqr = &model.selection * &model.state_cov * model.selection.transpose();

    // State means.
    let mut mu = DVector::zeros(nm);
    let mut cur = model.init_mean.clone();
    for t in 0..n {
        mu.rows_mut(t * m, m).copy_from(&cur);
        cur = t_mat * cur;
    }

    // State covariance, block by block.
    let mut sigma = DMatrix::zeros(nm, nm);
    let mut p1 = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if model.diffuse[i] || model.diffuse[j] {
                p1[(i, j)] = if i == j { DIFFUSE_APPROX_VAR } else { 0.0 };
            } else {
                p1[(i, j)] = model.init_cov[(i, j)];
            }
        }
    }
    sigma.view_mut((0, 0), (m, m)).copy_from(&p1);
    for t in 1..n {
        // diagonal block
        let prev = sigma.view(((t - 1) * m, (t - 1) * m), (m, m)).into_owned();
        let diag = t_mat * prev * t_mat.transpose() + &rqr;
        sigma.view_mut((t * m, t * m), (m, m)).copy_from(&diag);
        // off-diagonal blocks Σ_{t,s} = T Σ_{t-1,s} for s < t
        for s in 0..t {
            let upper = sigma.view(((t - 1) * m, s * m), (m, m)).into_owned();
            let block = t_mat * upper;
            sigma.view_mut((t * m, s * m), (m, m)).copy_from(&block);
            sigma.view_mut((s * m, t * m), (m, m)).copy_from(&block.transpose());
        }
    }

    // Stacked observation map.
    let total_p: usize = model.obs.iter().map(|o| o.p()).sum();
    let mut c = DMatrix::zeros(total_p, nm);
    let mut h = DMatrix::zeros(total_p, total_p);
    let mut y = DVector::zeros(total_p);
    let mut row = 0;
    for t in 0..n {
        let ob = &model.obs[t];
        let p = ob.p();
        if obs[t].len() != p {
            return Err(Error::InvalidInput(format!(
                "observation at period {t} has length {}, schedule says {p}",
                obs[t].len()
            )));
        }
        if p > 0 {
            c.view_mut((row, t * m), (p, m)).copy_from(&ob.z);
            h.view_mut((row, row), (p, p)).copy_from(&ob.h);
            y.rows_mut(row, p).copy_from(&obs[t]);
            row += p;
        }
    }

    Ok(Joint { mu, sigma, c, h, y })
}

/// Exact posterior state moments given the observations, by conditioning
/// the dense joint Gaussian.
pub fn brute_force_posterior(model: &StateSpaceModel, obs: &[DVector<f64>]) -> Result<Posterior> {
    let m = model.state_dim();
    let n = model.n_periods();
    let joint = build_joint(model, obs)?;

    if joint.y.is_empty() {
        // nothing observed: the posterior is the prior
        let mut mean = Vec::with_capacity(n);
        let mut cov = Vec::with_capacity(n);
        for t in 0..n {
            mean.push(joint.mu.rows(t * m, m).into_owned());
            cov.push(joint.sigma.view((t * m, t * m), (m, m)).into_owned());
        }
        return Ok(Posterior { mean, cov });
    }

    let sigma_y = &joint.c * &joint.sigma * joint.c.transpose() + &joint.h;
    let sigma_ay = &joint.sigma * joint.c.transpose();
    let resid = &joint.y - &joint.c * &joint.mu;

    // Condition via the eigendecomposition so exactly-degenerate
    // observation combinations (H = 0 redundancies) are tolerated as long
    // as the data are consistent with them.
    let eig = sigma_y.symmetric_eigen();
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-12 * lam_max.max(1.0);
    let p_obs = eig.eigenvalues.len();
    let ut_resid = eig.eigenvectors.transpose() * &resid;
    let mut inv_diag = DVector::zeros(p_obs);
    for i in 0..p_obs {
        let lam = eig.eigenvalues[i];
        if lam > tol {
            inv_diag[i] = 1.0 / lam;
        } else if ut_resid[i].abs() > 1e-6 * lam_max.max(1.0).sqrt() {
            return Err(Error::Singular(format!(
                "joint observation covariance is singular and inconsistent with the data \
                 (eigenvalue {lam:.3e}, residual {:.3e})",
                ut_resid[i]
            )));
        }
    }

    // Σ_yy⁺ applied through the eigenbasis.
    let gain = &sigma_ay * &eig.eigenvectors;
    let weighted = DVector::from_iterator(p_obs, (0..p_obs).map(|i| inv_diag[i] * ut_resid[i]));
    let post_mean = &joint.mu + &gain * weighted;
    let mut scaled = gain.clone();
    for i in 0..p_obs {
        scaled.column_mut(i).scale_mut(inv_diag[i]);
    }
    let post_cov = &joint.sigma - scaled * gain.transpose();

    let mut mean = Vec::with_capacity(n);
    let mut cov = Vec::with_capacity(n);
    for t in 0..n {
        mean.push(post_mean.rows(t * m, m).into_owned());
        cov.push(post_cov.view((t * m, t * m), (m, m)).into_owned());
    }
    Ok(Posterior { mean, cov })
}

/// Log-density of the stacked observation vector under the dense joint.
/// Defined only for models whose observation covariance is nonsingular
/// (in particular, no diffuse states and H_t ≻ 0 or enough state noise).
pub fn brute_force_loglik(model: &StateSpaceModel, obs: &[DVector<f64>]) -> Result<f64> {
    let joint = build_joint(model, obs)?;
    let sigma_y = &joint.c * &joint.sigma * joint.c.transpose() + &joint.h;
    let resid = &joint.y - &joint.c * &joint.mu;
    let p = sigma_y.nrows();
    if p == 0 {
        return Ok(0.0);
    }
    let chol = sigma_y
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("joint observation covariance".into()))?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let solved = chol.solve(&resid);
    let quad = resid.dot(&solved);
    Ok(-0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad))
}
