//! Kalman filter with exact diffuse initialization.
//!
//! Observation vectors are processed element by element (the univariate
//! treatment), which handles time-varying observation dimension, missing
//! periods, and the diffuse initial phase without matrix inversion. The sum
//! of the scalar innovation log-densities equals the multivariate
//! prediction-error decomposition Σ −½(p_t log 2π + log|F_t| + v_t′F_t⁻¹v_t).
//!
//! Periods at which part of the state is still diffuse are excluded from
//! the log-likelihood; `diffuse_periods` reports how many were dropped.

use nalgebra::{DMatrix, DVector};

use super::{symmetrize, ObsSpec, StateSpaceModel};
use crate::error::{Error, Result};

/// Treating the tiniest `F_∞` as zero separates resolved diffuse directions
/// from live ones.
const DIFFUSE_TOL: f64 = 1e-9;
/// Below this, a scalar innovation variance counts as zero.
const F_MIN: f64 = 1e-13;
/// Condition-number cap for an observation block.
const COND_MAX: f64 = 1e12;

/// How diffuse initial states are treated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffuseMode {
    /// Exact diffuse initialization (default).
    Exact,
    /// Approximate: diffuse states get the given prior variance and the
    /// standard filter runs from period one, all periods entering the
    /// likelihood.
    BigKappa(f64),
}

impl Default for DiffuseMode {
    fn default() -> Self {
        DiffuseMode::Exact
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FilterOptions {
    pub diffuse_mode: DiffuseMode,
}

/// Per-period output of the filter pass.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// One-step-ahead state mean a_t = E[α_t | y_{1..t-1}].
    pub predicted_state: Vec<DVector<f64>>,
    /// Finite part of the one-step-ahead covariance.
    pub predicted_cov: Vec<DMatrix<f64>>,
    /// Filtered state mean E[α_t | y_{1..t}].
    pub filtered_state: Vec<DVector<f64>>,
    /// Finite part of the filtered covariance.
    pub filtered_cov: Vec<DMatrix<f64>>,
    /// Innovation v_t = y_t − Z_t a_t (length p_t).
    pub innovations: Vec<DVector<f64>>,
    /// Innovation covariance F_t = Z_t P_t Z_t′ + H_t (finite part).
    pub innovation_cov: Vec<DMatrix<f64>>,
    /// True once the diffuse phase has finished before the period starts.
    pub initialized: Vec<bool>,
    /// Prediction-error-decomposition log-likelihood over fully
    /// initialized periods.
    pub log_likelihood: f64,
    /// Number of periods excluded while the state was partially diffuse.
    pub diffuse_periods: usize,
}

impl FilterOutput {
    /// CSV export, one row per period: innovation and innovation variance
    /// of the first observation row, filtered state means, and the
    /// initialization flag.
    pub fn to_csv(&self) -> String {
        let m = self.filtered_state.first().map(|s| s.len()).unwrap_or(0);
        let mut out = String::from("t,initialized,innovation,innovation_var");
        for j in 0..m {
            out.push_str(&format!(",filtered_{j}"));
        }
        out.push('\n');
        for t in 0..self.filtered_state.len() {
            let (v, f) = if self.innovations[t].len() > 0 {
                (
                    self.innovations[t][0].to_string(),
                    self.innovation_cov[t][(0, 0)].to_string(),
                )
            } else {
                (String::new(), String::new())
            };
            out.push_str(&format!(
                "{t},{},{v},{f}",
                u8::from(self.initialized[t])
            ));
            for j in 0..m {
                out.push_str(&format!(",{}", self.filtered_state[t][j]));
            }
            out.push('\n');
        }
        out
    }
}

/// Element-level record kept for the smoother backward pass.
#[derive(Debug, Clone)]
pub(super) enum ElementStep {
    /// F_∞ > 0: the element resolves a diffuse direction.
    Diffuse {
        z: DVector<f64>,
        v: f64,
        f_star: f64,
        f_inf: f64,
        k_star: DVector<f64>,
        k_inf: DVector<f64>,
    },
    /// Standard update with finite variance.
    Regular { z: DVector<f64>, v: f64, f: f64, k: DVector<f64> },
    /// Element carried no information (zero variance, zero innovation).
    Skip,
}

#[derive(Debug, Clone)]
pub(super) struct PeriodRecord {
    pub a_pred: DVector<f64>,
    pub p_star_pred: DMatrix<f64>,
    pub p_inf_pred: Option<DMatrix<f64>>,
    pub steps: Vec<ElementStep>,
}

pub(super) struct FilterInternals {
    pub periods: Vec<PeriodRecord>,
    pub output: FilterOutput,
}

/// Runs the filter with default options.
pub fn kalman_filter(model: &StateSpaceModel, obs: &[DVector<f64>]) -> Result<FilterOutput> {
    kalman_filter_with(model, obs, FilterOptions::default())
}

/// Runs the filter with explicit options.
pub fn kalman_filter_with(
    model: &StateSpaceModel,
    obs: &[DVector<f64>],
    opts: FilterOptions,
) -> Result<FilterOutput> {
    Ok(run_filter(model, obs, opts, true)?.output)
}

/// Log-likelihood without storing per-period output; the hot path for
/// maximum-likelihood estimation.
pub(super) fn filter_loglik(
    model: &StateSpaceModel,
    obs: &[DVector<f64>],
    opts: FilterOptions,
) -> Result<f64> {
    Ok(run_filter(model, obs, opts, false)?.output.log_likelihood)
}

pub(super) fn run_filter(
    model: &StateSpaceModel,
    obs: &[DVector<f64>],
    opts: FilterOptions,
    store: bool,
) -> Result<FilterInternals> {
    model.validate()?;
    let m = model.state_dim();
    let n = model.n_periods();
    if obs.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} observation vectors, got {}",
            obs.len()
        )));
    }
    for (t, (y, ob)) in obs.iter().zip(model.obs.iter()).enumerate() {
        if y.len() != ob.p() {
            return Err(Error::InvalidInput(format!(
                "observation at period {t} has length {}, schedule says {}",
                y.len(),
                ob.p()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("observation at period {t}")));
        }
    }

    let rqr = &model.selection * &model.state_cov * model.selection.transpose();

    let mut a = model.init_mean.clone();
    let mut p_star = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if !model.diffuse[i] && !model.diffuse[j] {
                p_star[(i, j)] = model.init_cov[(i, j)];
            }
        }
    }
    symmetrize(&mut p_star);

    let mut p_inf: Option<DMatrix<f64>> = match opts.diffuse_mode {
        DiffuseMode::Exact => {
            if model.n_diffuse() > 0 {
                let mut pi = DMatrix::zeros(m, m);
                for i in 0..m {
                    if model.diffuse[i] {
                        pi[(i, i)] = 1.0;
                    }
                }
                Some(pi)
            } else {
                None
            }
        }
        DiffuseMode::BigKappa(kappa) => {
            for i in 0..m {
                if model.diffuse[i] {
                    p_star[(i, i)] = kappa;
                }
            }
            None
        }
    };

    let mut out = FilterOutput {
        predicted_state: Vec::new(),
        predicted_cov: Vec::new(),
        filtered_state: Vec::new(),
        filtered_cov: Vec::new(),
        innovations: Vec::new(),
        innovation_cov: Vec::new(),
        initialized: Vec::new(),
        log_likelihood: 0.0,
        diffuse_periods: 0,
    };
    let mut records: Vec<PeriodRecord> = Vec::new();
    const LN_2PI: f64 = 1.8378770664093453;

    for t in 0..n {
        let ob = &model.obs[t];
        let p = ob.p();
        let initialized = p_inf.is_none();
        if !initialized {
            out.diffuse_periods += 1;
        }

        let (z_rows, h_diag, y_t) = transform_block(ob, &obs[t], t)?;

        if store {
            out.predicted_state.push(a.clone());
            out.predicted_cov.push(p_star.clone());
            out.initialized.push(initialized);
            // Multivariate innovation and its finite-part covariance at the
            // period start, in original coordinates.
            let v = &obs[t] - &ob.z * &a;
            let f = &ob.z * &p_star * ob.z.transpose() + &ob.h;
            if initialized {
                check_condition(&f, &v, t)?;
            }
            out.innovations.push(v);
            out.innovation_cov.push(f);
        }

        let mut steps = if store { Vec::with_capacity(p) } else { Vec::new() };
        let record_base = if store {
            Some((a.clone(), p_star.clone(), p_inf.clone()))
        } else {
            None
        };

        for i in 0..p {
            let z = &z_rows[i];
            let h = h_diag[i];
            let v = y_t[i] - z.dot(&a);
            let k_star = &p_star * z;
            let f_star = z.dot(&k_star) + h;

            let f_inf = match &p_inf {
                Some(pi) => {
                    let k_inf = pi * z;
                    let f_inf = z.dot(&k_inf);
                    if f_inf > DIFFUSE_TOL {
                        // Exact diffuse update.
                        a += &k_inf * (v / f_inf);
                        let p_new = &p_star
                            + (&k_inf * k_inf.transpose()) * (f_star / (f_inf * f_inf))
                            - (&k_star * k_inf.transpose() + &k_inf * k_star.transpose())
                                / f_inf;
                        p_star = p_new;
                        symmetrize(&mut p_star);
                        let pi_new = pi - (&k_inf * k_inf.transpose()) / f_inf;
                        let mut pi_new = pi_new;
                        symmetrize(&mut pi_new);
                        p_inf = Some(pi_new);
                        if store {
                            steps.push(ElementStep::Diffuse {
                                z: z.clone(),
                                v,
                                f_star,
                                f_inf,
                                k_star,
                                k_inf,
                            });
                        }
                        continue;
                    }
                    f_inf
                }
                None => 0.0,
            };
            let _ = f_inf;

            if f_star > F_MIN {
                a += &k_star * (v / f_star);
                p_star -= (&k_star * k_star.transpose()) / f_star;
                symmetrize(&mut p_star);
                if initialized {
                    out.log_likelihood -= 0.5 * (LN_2PI + f_star.ln() + v * v / f_star);
                }
                if store {
                    steps.push(ElementStep::Regular { z: z.clone(), v, f: f_star, k: k_star });
                }
            } else if v.abs() <= 1e-6 {
                // Degenerate but consistent element: no information.
                if store {
                    steps.push(ElementStep::Skip);
                }
            } else {
                return Err(Error::Filter {
                    t,
                    msg: format!(
                        "innovation variance ~0 but innovation {v:.3e} nonzero (singular F)"
                    ),
                });
            }
        }

        if store {
            let (a_pred, p_star_pred, p_inf_pred) = record_base.unwrap();
            records.push(PeriodRecord { a_pred, p_star_pred, p_inf_pred, steps });
            out.filtered_state.push(a.clone());
            out.filtered_cov.push(p_star.clone());
        }

        // Transition to t+1.
        a = &model.transition * a;
        p_star = &model.transition * &p_star * model.transition.transpose() + &rqr;
        symmetrize(&mut p_star);
        if let Some(pi) = &p_inf {
            let mut next = &model.transition * pi * model.transition.transpose();
            symmetrize(&mut next);
            let maxabs = next.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            p_inf = if maxabs < DIFFUSE_TOL { None } else { Some(next) };
        }
    }

    if !out.log_likelihood.is_finite() {
        return Err(Error::NonFinite("filter log-likelihood".into()));
    }
    Ok(FilterInternals { periods: records, output: out })
}

/// Rotates an observation block so its noise covariance is diagonal.
/// Returns the rows of the (possibly rotated) design, the noise variances,
/// and the rotated observation vector.
fn transform_block(
    ob: &ObsSpec,
    y: &DVector<f64>,
    t: usize,
) -> Result<(Vec<DVector<f64>>, Vec<f64>, DVector<f64>)> {
    let p = ob.p();
    if p == 0 {
        return Ok((Vec::new(), Vec::new(), DVector::zeros(0)));
    }
    let max_diag = (0..p).map(|i| ob.h[(i, i)].abs()).fold(0.0f64, f64::max);
    let mut diagonal = true;
    'outer: for i in 0..p {
        for j in 0..p {
            if i != j && ob.h[(i, j)].abs() > 1e-12 * max_diag.max(1.0) {
                diagonal = false;
                break 'outer;
            }
        }
    }
    if diagonal {
        let rows = (0..p).map(|i| ob.z.row(i).transpose()).collect();
        let h = (0..p).map(|i| ob.h[(i, i)].max(0.0)).collect();
        return Ok((rows, h, y.clone()));
    }
    // Orthogonal rotation by the eigenvectors of H: y* = U'y, Z* = U'Z,
    // H* = diag(eigenvalues). An orthogonal transform leaves the joint
    // density unchanged.
    let eig = ob.h.clone().symmetric_eigen();
    let u = &eig.eigenvectors;
    let z_star = u.transpose() * &ob.z;
    let y_star = u.transpose() * y;
    let mut h_star = Vec::with_capacity(p);
    for i in 0..p {
        let lambda = eig.eigenvalues[i];
        if lambda < -1e-8 * max_diag.max(1.0) {
            return Err(Error::Filter {
                t,
                msg: "observation covariance H_t has a negative eigenvalue".into(),
            });
        }
        h_star.push(lambda.max(0.0));
    }
    let rows = (0..p).map(|i| z_star.row(i).transpose()).collect();
    Ok((rows, h_star, y_star))
}

/// Rejects observation blocks whose innovation covariance is numerically
/// singular (condition number above [`COND_MAX`]) while carrying a
/// conflicting signal in a near-null direction. Degenerate-but-consistent
/// blocks pass through; the element-wise updates handle them without
/// inverting F_t.
fn check_condition(f: &DMatrix<f64>, v: &DVector<f64>, t: usize) -> Result<()> {
    let p = f.nrows();
    if p < 2 {
        return Ok(());
    }
    let eig = f.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0 && max / min.max(F_MIN) > COND_MAX) {
        return Ok(());
    }
    for i in 0..p {
        if eig.eigenvalues[i] <= max / COND_MAX {
            let proj = eig.eigenvectors.column(i).dot(v);
            if proj.abs() > 1e-6 * (1.0 + max.sqrt()) {
                return Err(Error::Filter {
                    t,
                    msg: format!(
                        "innovation covariance condition number {:.3e} exceeds 1e12 with a \
                         conflicting innovation {:.3e} in the degenerate direction",
                        max / min.max(F_MIN),
                        proj
                    ),
                });
            }
        }
    }
    Ok(())
}
