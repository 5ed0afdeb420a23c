//! Maximum-likelihood estimation of state-space hyperparameters.
//!
//! Parameters are optimized in an unconstrained space: variances in logs,
//! autoregressive coefficients through the inverse hyperbolic tangent.
//! Likelihoods come from the Kalman filter; gradients are central finite
//! differences (evaluated in parallel when the `parallel` feature is on);
//! the search is BFGS with backtracking line search, restarted from a few
//! perturbed initial points.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::filter::{filter_loglik, FilterOptions};
use super::StateSpaceModel;
use crate::error::{Error, Result};
use crate::par;

/// Mapping between a parameter's natural scale and the unconstrained
/// optimization scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// Strictly positive parameter optimized as its logarithm.
    LogVariance,
    /// Parameter in (−1, 1) optimized as atanh (Fisher z).
    FisherZ,
    Unconstrained,
}

impl Transform {
    pub fn to_unconstrained(&self, natural: f64) -> f64 {
        match self {
            Transform::LogVariance => natural.ln(),
            Transform::FisherZ => natural.atanh(),
            Transform::Unconstrained => natural,
        }
    }

    /// Unconstrained-to-natural map, with the argument clamped to a range
    /// that keeps the natural value finite and the model well posed even
    /// when a line search overshoots.
    pub fn to_natural(&self, u: f64) -> f64 {
        match self {
            Transform::LogVariance => u.clamp(-400.0, 120.0).exp(),
            Transform::FisherZ => u.clamp(-18.0, 18.0).tanh(),
            Transform::Unconstrained => u,
        }
    }

    /// dθ/du at the given natural value, for delta-method covariances.
    fn jacobian(&self, natural: f64) -> f64 {
        match self {
            Transform::LogVariance => natural,
            Transform::FisherZ => 1.0 - natural * natural,
            Transform::Unconstrained => 1.0,
        }
    }
}

/// A named hyperparameter with its natural-scale value.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: f64,
    pub transform: Transform,
}

impl Param {
    pub fn log_variance(name: impl Into<String>, value: f64) -> Self {
        Param { name: name.into(), value, transform: Transform::LogVariance }
    }

    pub fn fisher_z(name: impl Into<String>, value: f64) -> Self {
        Param { name: name.into(), value, transform: Transform::FisherZ }
    }

    pub fn unconstrained(name: impl Into<String>, value: f64) -> Self {
        Param { name: name.into(), value, transform: Transform::Unconstrained }
    }
}

/// Ordered set of named hyperparameters.
#[derive(Debug, Clone)]
pub struct Hyperparameters {
    params: Vec<Param>,
}

impl Hyperparameters {
    pub fn new(params: Vec<Param>) -> Self {
        Hyperparameters { params }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    /// Checks each value is valid under its transform.
    pub fn validate(&self) -> Result<()> {
        for p in &self.params {
            if !p.value.is_finite() {
                return Err(Error::InvalidInput(format!("parameter `{}` is not finite", p.name)));
            }
            match p.transform {
                Transform::LogVariance if p.value <= 0.0 => {
                    return Err(Error::InvalidInput(format!(
                        "parameter `{}` must be positive, got {}",
                        p.name, p.value
                    )));
                }
                Transform::FisherZ if p.value.abs() >= 1.0 => {
                    return Err(Error::InvalidInput(format!(
                        "parameter `{}` must lie in (-1, 1), got {}",
                        p.name, p.value
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_unconstrained(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.params.len(),
            self.params.iter().map(|p| p.transform.to_unconstrained(p.value)),
        )
    }

    /// Same names and transforms, values taken from the unconstrained
    /// vector.
    pub fn with_unconstrained(&self, u: &DVector<f64>) -> Hyperparameters {
        let params = self
            .params
            .iter()
            .zip(u.iter())
            .map(|(p, ui)| Param {
                name: p.name.clone(),
                value: p.transform.to_natural(*ui),
                transform: p.transform,
            })
            .collect();
        Hyperparameters { params }
    }

    /// Structured text rendering: one `name = value (transform)` line each.
    pub fn render_spec(&self) -> String {
        let mut out = String::new();
        for p in &self.params {
            let tag = match p.transform {
                Transform::LogVariance => "log-variance",
                Transform::FisherZ => "fisher-z",
                Transform::Unconstrained => "unconstrained",
            };
            out.push_str(&format!("{} = {} ({tag})\n", p.name, p.value));
        }
        out
    }
}

/// Instantiates system matrices from a hyperparameter vector.
pub trait ModelBuilder: Sync {
    fn build(&self, psi: &Hyperparameters) -> Result<StateSpaceModel>;

    /// Filter options used when evaluating the likelihood.
    fn filter_options(&self) -> FilterOptions {
        FilterOptions::default()
    }
}

/// Filter log-likelihood at `psi`; failures surface as an error.
pub fn try_loglikelihood<B: ModelBuilder>(
    builder: &B,
    psi: &Hyperparameters,
    obs: &[DVector<f64>],
) -> Result<f64> {
    psi.validate()?;
    let model = builder.build(psi)?;
    filter_loglik(&model, obs, builder.filter_options())
}

/// Filter log-likelihood at `psi`; failures are reported as −∞ so
/// optimizers can treat them as rejected points.
pub fn loglikelihood<B: ModelBuilder>(
    builder: &B,
    psi: &Hyperparameters,
    obs: &[DVector<f64>],
) -> f64 {
    try_loglikelihood(builder, psi, obs).unwrap_or(f64::NEG_INFINITY)
}

/// Settings for [`estimate_mle`].
#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub max_iter: usize,
    /// Convergence when the gradient ∞-norm drops below this.
    pub grad_tol: f64,
    /// Convergence when the relative likelihood change drops below this.
    pub rel_tol: f64,
    /// Total starts: the supplied point plus `n_starts − 1` perturbations.
    pub n_starts: usize,
    /// Standard deviation of the start perturbations (unconstrained scale).
    pub perturb_sd: f64,
    pub seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            max_iter: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            n_starts: 5,
            perturb_sd: 0.75,
            seed: 0,
        }
    }
}

/// Result of the maximum-likelihood search.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub psi: Hyperparameters,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_evals: usize,
    /// ∞-norm of the finite-difference gradient at the optimum
    /// (unconstrained scale).
    pub grad_inf_norm: f64,
    /// Delta-method covariance of the natural-scale estimates from the
    /// inverse negative Hessian, when that Hessian is negative definite.
    pub covariance: Option<DMatrix<f64>>,
    /// Index of the start that produced the best likelihood.
    pub best_start: usize,
    pub message: String,
}

/// Central finite-difference gradient of the log-likelihood in the
/// unconstrained space, with step 1e-5·max(1, |u_i|).
pub(crate) fn fd_gradient<B: ModelBuilder>(
    builder: &B,
    template: &Hyperparameters,
    u: &DVector<f64>,
    obs: &[DVector<f64>],
) -> DVector<f64> {
    let k = u.len();
    let evals = par::map_indexed(2 * k, |idx| {
        let i = idx / 2;
        let sign = if idx % 2 == 0 { 1.0 } else { -1.0 };
        let h = 1e-5 * u[i].abs().max(1.0);
        let mut up = u.clone();
        up[i] += sign * h;
        (loglikelihood(builder, &template.with_unconstrained(&up), obs), h)
    });
    DVector::from_iterator(
        k,
        (0..k).map(|i| {
            let (fp, h) = evals[2 * i];
            let (fm, _) = evals[2 * i + 1];
            match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                _ => 0.0,
            }
        }),
    )
}

struct StartResult {
    u: DVector<f64>,
    value: f64,
    converged: bool,
    iterations: usize,
    n_evals: usize,
    grad_inf_norm: f64,
}

/// BFGS maximization of the log-likelihood from one start.
fn optimize_one<B: ModelBuilder>(
    builder: &B,
    template: &Hyperparameters,
    u0: DVector<f64>,
    obs: &[DVector<f64>],
    opts: &EstimateOptions,
) -> StartResult {
    let k = u0.len();
    let n_evals = std::cell::Cell::new(0usize);
    let eval = |u: &DVector<f64>| -> f64 {
        n_evals.set(n_evals.get() + 1);
        loglikelihood(builder, &template.with_unconstrained(u), obs)
    };

    let mut u = u0;
    let mut f = eval(&u);
    if !f.is_finite() {
        return StartResult {
            u,
            value: f64::NEG_INFINITY,
            converged: false,
            iterations: 0,
            n_evals: n_evals.get(),
            grad_inf_norm: f64::INFINITY,
        };
    }
    let mut grad = fd_gradient(builder, template, &u, obs);
    n_evals.set(n_evals.get() + 2 * k);
    let mut h_inv = DMatrix::<f64>::identity(k, k);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        if grad.amax() < opts.grad_tol {
            converged = true;
            break;
        }

        let mut dir = &h_inv * &grad; // ascent direction
        if dir.dot(&grad) <= 0.0 {
            h_inv = DMatrix::identity(k, k);
            dir = grad.clone();
        }
        // Cap the trial step so a large early gradient cannot fling the
        // search onto a flat far-away plateau (log-variance space: one
        // iteration moves each coordinate by at most 2).
        const MAX_STEP: f64 = 2.0;
        let dir_max = dir.amax();
        if dir_max > MAX_STEP {
            dir *= MAX_STEP / dir_max;
        }

        // Backtracking line search on the ascent condition.
        let slope = grad.dot(&dir);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &u + &dir * alpha;
            let fc = eval(&cand);
            if fc.is_finite() && fc >= f + 1e-4 * alpha * slope {
                accepted = Some((cand, fc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((u_new, f_new)) = accepted else {
            // No improving step along this direction; treat the current
            // point as converged if the gradient is already small-ish.
            converged = grad.amax() < opts.grad_tol.max(1e-4);
            break;
        };

        let grad_new = fd_gradient(builder, template, &u_new, obs);
        n_evals.set(n_evals.get() + 2 * k);
        let s = &u_new - &u;
        let y = &grad_new - &grad;
        let rel_change = (f_new - f).abs() / f.abs().max(1.0);

        u = u_new;
        f = f_new;
        grad = grad_new;

        if rel_change < opts.rel_tol {
            converged = true;
            break;
        }

        // Inverse-Hessian update for a maximization: same algebra as the
        // minimization form with (s, y) so long as s'y < 0 there; here we
        // keep H_inv as an approximation of the inverse *negative* Hessian,
        // which stays positive definite when s'y... use the curvature of
        // the negative objective: sy = s'(−y).
        let sy = -s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(k, k);
            let left = &eye - (&s * y.transpose()) * (-rho);
            let h_new = &left * &h_inv * left.transpose() + (&s * s.transpose()) * rho;
            h_inv = h_new;
        }
    }

    StartResult { u, value: f, converged, iterations, n_evals: n_evals.get(), grad_inf_norm: grad.amax() }
}

/// Quasi-Newton maximization with multistart: the supplied point plus
/// perturbed copies, best kept.
pub fn estimate_mle<B: ModelBuilder>(
    builder: &B,
    obs: &[DVector<f64>],
    psi0: &Hyperparameters,
    opts: EstimateOptions,
) -> Result<MleFit> {
    psi0.validate()?;
    if obs.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    if psi0.is_empty() {
        return Err(Error::InvalidInput("no hyperparameters to estimate".into()));
    }
    let f0 = loglikelihood(builder, psi0, obs);
    if !f0.is_finite() {
        return Err(Error::InvalidInput(
            "log-likelihood is -infinity at the starting hyperparameters".into(),
        ));
    }

    let k = psi0.len();
    let u0 = psi0.to_unconstrained();
    let starts: Vec<DVector<f64>> = (0..opts.n_starts.max(1))
        .map(|s| {
            if s == 0 {
                u0.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(s as u64));
                let noise = DVector::from_iterator(
                    k,
                    (0..k).map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * opts.perturb_sd
                    }),
                );
                &u0 + noise
            }
        })
        .collect();

    let results = par::map_indexed(starts.len(), |s| {
        optimize_one(builder, psi0, starts[s].clone(), obs, &opts)
    });

    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.value > results[best].value {
            best = i;
        }
    }
    let total_evals: usize = results.iter().map(|r| r.n_evals).sum();
    let chosen = &results[best];
    if !chosen.value.is_finite() {
        return Err(Error::InvalidInput("every optimization start failed".into()));
    }
    let psi = psi0.with_unconstrained(&chosen.u);
    let covariance = estimate_covariance(builder, psi0, &chosen.u, obs);

    let message = if chosen.converged {
        format!("converged after {} iterations (start {best})", chosen.iterations)
    } else {
        format!(
            "not converged after {} iterations (start {best}); best point returned",
            chosen.iterations
        )
    };

    Ok(MleFit {
        psi,
        log_likelihood: chosen.value,
        converged: chosen.converged,
        iterations: chosen.iterations,
        n_evals: total_evals,
        grad_inf_norm: chosen.grad_inf_norm,
        covariance,
        best_start: best,
        message,
    })
}

/// Natural-scale covariance from the finite-difference Hessian of the
/// log-likelihood, when the negative Hessian admits a Cholesky factor.
fn estimate_covariance<B: ModelBuilder>(
    builder: &B,
    template: &Hyperparameters,
    u: &DVector<f64>,
    obs: &[DVector<f64>],
) -> Option<DMatrix<f64>> {
    let k = u.len();
    let f = |du: &DVector<f64>| loglikelihood(builder, &template.with_unconstrained(du), obs);
    let h = |i: usize| 5e-4 * u[i].abs().max(1.0);
    let f0 = f(u);
    if !f0.is_finite() {
        return None;
    }
    let mut hess = DMatrix::zeros(k, k);
    for i in 0..k {
        let hi = h(i);
        let mut up = u.clone();
        up[i] += hi;
        let mut dn = u.clone();
        dn[i] -= hi;
        let (fp, fm) = (f(&up), f(&dn));
        if !fp.is_finite() || !fm.is_finite() {
            return None;
        }
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in (i + 1)..k {
            let hj = h(j);
            let mut pp = u.clone();
            pp[i] += hi;
            pp[j] += hj;
            let mut pm = u.clone();
            pm[i] += hi;
            pm[j] -= hj;
            let mut mp = u.clone();
            mp[i] -= hi;
            mp[j] += hj;
            let mut mm = u.clone();
            mm[i] -= hi;
            mm[j] -= hj;
            let (fpp, fpm, fmp, fmm) = (f(&pp), f(&pm), f(&mp), f(&mm));
            if ![fpp, fpm, fmp, fmm].iter().all(|v| v.is_finite()) {
                return None;
            }
            let val = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            hess[(i, j)] = val;
            hess[(j, i)] = val;
        }
    }
    let neg = -hess;
    let chol = neg.cholesky()?;
    let cov_u = chol.inverse();
    // Delta method to the natural scale.
    let psi = template.with_unconstrained(u);
    let jac: Vec<f64> =
        psi.params().iter().map(|p| p.transform.jacobian(p.value)).collect();
    let mut cov = cov_u;
    for i in 0..k {
        for j in 0..k {
            cov[(i, j)] *= jac[i] * jac[j];
        }
    }
    Some(cov)
}
