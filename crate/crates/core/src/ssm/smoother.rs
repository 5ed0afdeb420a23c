//! Fixed-interval state smoother, including the exact diffuse backward
//! recursions for the initialization phase.
//!
//! During the diffuse phase the backward pass carries a second weight
//! vector r¹ and two extra curvature matrices N¹, N² alongside the standard
//! (r⁰, N⁰); the smoothed moments combine the finite and diffuse parts of
//! the predicted covariance:
//!
//! ```text
//! α̂_t = a_t + P*_t r⁰ + P∞_t r¹
//! V_t  = P*_t − P*_t N⁰ P*_t − (P∞_t N¹ P*_t)′ − P∞_t N¹ P*_t − P∞_t N² P∞_t
//! ```

use nalgebra::{DMatrix, DVector};

use super::filter::{run_filter, ElementStep, FilterOptions};
use super::{symmetrize, StateSpaceModel};
use crate::error::Result;

/// Smoothed state moments, one entry per period.
#[derive(Debug, Clone)]
pub struct SmootherOutput {
    pub smoothed_state: Vec<DVector<f64>>,
    pub smoothed_cov: Vec<DMatrix<f64>>,
}

impl SmootherOutput {
    /// CSV export: one row per period with the smoothed mean and the
    /// diagonal of the smoothed covariance.
    pub fn to_csv(&self) -> String {
        let m = self.smoothed_state.first().map(|s| s.len()).unwrap_or(0);
        let mut out = String::from("t");
        for j in 0..m {
            out.push_str(&format!(",state_{j}"));
        }
        for j in 0..m {
            out.push_str(&format!(",var_{j}"));
        }
        out.push('\n');
        for (t, (s, v)) in self.smoothed_state.iter().zip(&self.smoothed_cov).enumerate() {
            out.push_str(&t.to_string());
            for j in 0..m {
                out.push_str(&format!(",{}", s[j]));
            }
            for j in 0..m {
                out.push_str(&format!(",{}", v[(j, j)]));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs filter and smoother with default options.
pub fn kalman_smoother(model: &StateSpaceModel, obs: &[DVector<f64>]) -> Result<SmootherOutput> {
    kalman_smoother_with(model, obs, FilterOptions::default())
}

/// Runs filter and smoother with explicit options.
pub fn kalman_smoother_with(
    model: &StateSpaceModel,
    obs: &[DVector<f64>],
    opts: FilterOptions,
) -> Result<SmootherOutput> {
    let internals = run_filter(model, obs, opts, true)?;
    let n = model.n_periods();
    let m = model.state_dim();
    let t_mat = &model.transition;

    let mut smoothed_state = vec![DVector::zeros(m); n];
    let mut smoothed_cov = vec![DMatrix::zeros(m, m); n];

    let mut r0 = DVector::zeros(m);
    let mut r1 = DVector::zeros(m);
    let mut n0 = DMatrix::zeros(m, m);
    let mut n1 = DMatrix::zeros(m, m);
    let mut n2 = DMatrix::zeros(m, m);
    let eye = DMatrix::<f64>::identity(m, m);

    for t in (0..n).rev() {
        let rec = &internals.periods[t];
        for step in rec.steps.iter().rev() {
            match step {
                ElementStep::Regular { z, v, f, k } => {
                    // L = I − k z′ / f
                    let l = &eye - (k * z.transpose()) / *f;
                    r0 = z * (*v / *f) + l.transpose() * &r0;
                    n0 = (z * z.transpose()) / *f + l.transpose() * &n0 * &l;
                    if rec.p_inf_pred.is_some() {
                        r1 = l.transpose() * &r1;
                        n1 = l.transpose() * &n1 * &l;
                        n2 = l.transpose() * &n2 * &l;
                    }
                }
                ElementStep::Diffuse { z, v, f_star, f_inf, k_star, k_inf } => {
                    let l_inf = &eye - (k_inf * z.transpose()) / *f_inf;
                    let l1_vec = k_inf * (*f_star / (*f_inf * *f_inf)) - k_star / *f_inf;
                    let l1 = &l1_vec * z.transpose();
                    let zz = z * z.transpose();

                    let n2_new = -&zz * (*f_star / (*f_inf * *f_inf))
                        + l_inf.transpose() * &n2 * &l_inf
                        + l_inf.transpose() * &n1 * &l1
                        + l1.transpose() * &n1 * &l_inf
                        + l1.transpose() * &n0 * &l1;
                    let n1_new = &zz / *f_inf
                        + l_inf.transpose() * &n1 * &l_inf
                        + l1.transpose() * &n0 * &l_inf
                        + l_inf.transpose() * &n0 * &l1;
                    let n0_new = l_inf.transpose() * &n0 * &l_inf;
                    n2 = n2_new;
                    n1 = n1_new;
                    n0 = n0_new;

                    let r1_new = z * (*v / *f_inf) + l_inf.transpose() * &r1
                        + l1.transpose() * &r0;
                    r0 = l_inf.transpose() * &r0;
                    r1 = r1_new;
                }
                ElementStep::Skip => {}
            }
        }

        let p_star = &rec.p_star_pred;
        match &rec.p_inf_pred {
            None => {
                smoothed_state[t] = &rec.a_pred + p_star * &r0;
                let mut v = p_star - p_star * &n0 * p_star;
                symmetrize(&mut v);
                smoothed_cov[t] = v;
            }
            Some(p_inf) => {
                smoothed_state[t] = &rec.a_pred + p_star * &r0 + p_inf * &r1;
                let cross = p_inf * &n1 * p_star;
                let mut v = p_star
                    - p_star * &n0 * p_star
                    - cross.transpose()
                    - &cross
                    - p_inf * &n2 * p_inf;
                symmetrize(&mut v);
                smoothed_cov[t] = v;
            }
        }

        if t > 0 {
            r0 = t_mat.transpose() * &r0;
            r1 = t_mat.transpose() * &r1;
            n0 = t_mat.transpose() * &n0 * t_mat;
            n1 = t_mat.transpose() * &n1 * t_mat;
            n2 = t_mat.transpose() * &n2 * t_mat;
        }
    }

    Ok(SmootherOutput { smoothed_state, smoothed_cov })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::filter::kalman_filter;
    use crate::ssm::local_level_model;
    use approx::assert_relative_eq;

    #[test]
    fn single_period_smoothed_equals_filtered() {
        let model = local_level_model(1, 0.4, 1.0, false);
        let obs = vec![DVector::from_element(1, 2.0)];
        let f = kalman_filter(&model, &obs).unwrap();
        let s = kalman_smoother(&model, &obs).unwrap();
        assert_relative_eq!(s.smoothed_state[0][0], f.filtered_state[0][0], max_relative = 1e-12);
        assert_relative_eq!(
            s.smoothed_cov[0][(0, 0)],
            f.filtered_cov[0][(0, 0)],
            max_relative = 1e-12
        );
    }

    #[test]
    fn last_period_smoothed_equals_filtered() {
        let model = local_level_model(8, 0.7, 0.9, false);
        let obs: Vec<DVector<f64>> = [1.0, 1.4, 0.8, 1.1, 1.6, 1.2, 0.9, 1.3]
            .iter()
            .map(|v| DVector::from_element(1, *v))
            .collect();
        let f = kalman_filter(&model, &obs).unwrap();
        let s = kalman_smoother(&model, &obs).unwrap();
        assert_relative_eq!(s.smoothed_state[7][0], f.filtered_state[7][0], max_relative = 1e-10);
        assert_relative_eq!(
            s.smoothed_cov[7][(0, 0)],
            f.filtered_cov[7][(0, 0)],
            max_relative = 1e-10
        );
    }

    #[test]
    fn degenerate_dynamics_give_constant_smoothed_level() {
        // Q=0 and a diffuse level: the smoothed level is the same for all t.
        let model = local_level_model(6, 0.0, 1.0, true);
        let obs: Vec<DVector<f64>> = [2.0, 2.4, 1.8, 2.2, 2.1, 1.9]
            .iter()
            .map(|v| DVector::from_element(1, *v))
            .collect();
        let s = kalman_smoother(&model, &obs).unwrap();
        let mean = obs.iter().map(|v| v[0]).sum::<f64>() / 6.0;
        for t in 0..6 {
            assert_relative_eq!(s.smoothed_state[t][0], mean, max_relative = 1e-10);
        }
    }

    #[test]
    fn csv_export_has_one_row_per_period() {
        let model = local_level_model(3, 0.5, 1.0, false);
        let obs: Vec<DVector<f64>> =
            [1.0, 2.0, 3.0].iter().map(|v| DVector::from_element(1, *v)).collect();
        let s = kalman_smoother(&model, &obs).unwrap();
        let csv = s.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("t,state_0,var_0"));
        let f = crate::ssm::filter::kalman_filter(&model, &obs).unwrap();
        let fcsv = f.to_csv();
        assert_eq!(fcsv.lines().count(), 4);
        assert!(fcsv.contains("innovation"));
    }

    #[test]
    fn smoothing_never_increases_marginal_variance_when_initialized() {
        let model = local_level_model(10, 0.5, 1.0, false);
        let obs: Vec<DVector<f64>> =
            (0..10).map(|t| DVector::from_element(1, (t as f64).sin())).collect();
        let f = kalman_filter(&model, &obs).unwrap();
        let s = kalman_smoother(&model, &obs).unwrap();
        for t in 0..10 {
            assert!(
                s.smoothed_cov[t][(0, 0)] <= f.filtered_cov[t][(0, 0)] + 1e-10,
                "period {t}"
            );
        }
    }
}
