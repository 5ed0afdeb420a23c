//! Cross-validation of the filter/smoother recursions against the dense
//! joint-Gaussian reference implementation, plus engine-level invariants.

use disagg::ssm::{
    brute_force_loglik, brute_force_posterior, kalman_filter, kalman_filter_with,
    kalman_smoother, simulate, DiffuseMode, FilterOptions, ObsSpec, StateSpaceModel,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random small model; `diffuse_states` > 0 flags that many leading states
/// as diffuse.
fn random_model(rng: &mut ChaCha8Rng, diffuse_states: usize) -> StateSpaceModel {
    let m = rng.gen_range(1..=4).max(diffuse_states);
    let n = rng.gen_range(diffuse_states.max(1) + 1..=8);
    let r = rng.gen_range(1..=m);

    let mut t = DMatrix::from_fn(m, m, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        0.5 * z
    });
    // keep dynamics from exploding over 8 periods
    let norm = t.norm();
    if norm > 1.0 {
        t /= norm;
    }

    let mut rows: Vec<usize> = (0..m).collect();
    for i in (1..rows.len()).rev() {
        let j = rng.gen_range(0..=i);
        rows.swap(i, j);
    }
    let mut sel = DMatrix::zeros(m, r);
    for (j, row) in rows.iter().take(r).enumerate() {
        sel[(*row, j)] = 1.0;
    }

    let a = DMatrix::from_fn(r, r, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        0.6 * z
    });
    let q = &a * a.transpose() + DMatrix::identity(r, r) * 0.05;

    let b = DMatrix::from_fn(m, m, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        0.6 * z
    });
    let p1 = &b * b.transpose() + DMatrix::identity(m, m) * 0.05;

    let obs = (0..n)
        .map(|_| {
            let p = rng.gen_range(0..=2usize);
            if p == 0 {
                ObsSpec::missing(m)
            } else {
                let z = DMatrix::from_fn(p, m, |_, _| StandardNormal.sample(rng));
                let h = if rng.gen_bool(0.5) {
                    // diagonal H
                    DMatrix::from_fn(p, p, |i, j| {
                        if i == j {
                            0.2 + rng.gen_range(0.0..1.0)
                        } else {
                            0.0
                        }
                    })
                } else {
                    let c = DMatrix::from_fn(p, p, |_, _| {
                        let z: f64 = StandardNormal.sample(rng);
                        0.5 * z
                    });
                    &c * c.transpose() + DMatrix::identity(p, p) * 0.2
                };
                ObsSpec::new(z, h)
            }
        })
        .collect();

    let mut diffuse = vec![false; m];
    for d in diffuse.iter_mut().take(diffuse_states) {
        *d = true;
    }

    StateSpaceModel {
        transition: t,
        selection: sel,
        state_cov: q,
        obs,
        init_mean: DVector::from_fn(m, |_, _| StandardNormal.sample(rng)),
        init_cov: p1,
        diffuse,
    }
}

#[test]
fn smoother_matches_brute_force_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..40 {
        let model = random_model(&mut rng, 0);
        let sim = simulate(&model, 10_000 + case).unwrap();
        let smooth = kalman_smoother(&model, &sim.observations).unwrap();
        let post = brute_force_posterior(&model, &sim.observations).unwrap();
        for t in 0..model.n_periods() {
            let dm = (&smooth.smoothed_state[t] - &post.mean[t]).amax();
            let dc = (&smooth.smoothed_cov[t] - &post.cov[t]).amax();
            assert!(dm < 1e-8, "case {case}, period {t}: mean deviation {dm}");
            assert!(dc < 1e-8, "case {case}, period {t}: cov deviation {dc}");
        }
    }
}

#[test]
fn filter_loglik_matches_joint_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..40 {
        let model = random_model(&mut rng, 0);
        let sim = simulate(&model, 20_000 + case).unwrap();
        let filter = kalman_filter(&model, &sim.observations).unwrap();
        let reference = brute_force_loglik(&model, &sim.observations).unwrap();
        assert!(
            (filter.log_likelihood - reference).abs() < 1e-6,
            "case {case}: filter {} vs joint {reference}",
            filter.log_likelihood
        );
    }
}

/// Exact flat-prior reference for diffuse models: diffuse initial
/// components are handled as GLS regression coefficients δ with a flat
/// prior. With α_1 = a_1 + S δ + w_1, stacking states α = μ₀ + A δ + noise
/// and observations y = C α + ε gives
///
///   δ̂ = G W′V⁻¹ e,  G = (W′V⁻¹W)⁻¹,  W = C·A,  e = y − C μ₀,
///   E[α|y]   = μ₀ + A δ̂ + Σ₀C′V⁻¹(e − W δ̂)
///   Cov[α|y] = Σ₀ − Σ₀C′V⁻¹CΣ₀ + (A − Σ₀C′V⁻¹W) G (A − Σ₀C′V⁻¹W)′
///
/// Everything stays at O(1) scale, so this is accurate where big-kappa
/// conditioning is not. Requires H_t ≻ 0 and observable diffuse directions.
fn exact_diffuse_reference(
    model: &StateSpaceModel,
    obs: &[DVector<f64>],
) -> Option<(Vec<DVector<f64>>, Vec<DMatrix<f64>>)> {
    let m = model.state_dim();
    let n = model.n_periods();
    let nm = n * m;
    let t_mat = &model.transition;
    let rqr = &model.selection * &model.state_cov * model.selection.transpose();
    let d_idx: Vec<usize> = (0..m).filter(|i| model.diffuse[*i]).collect();
    let d = d_idx.len();

    // Non-diffuse joint moments.
    let mut mu0 = DVector::zeros(nm);
    let mut cur = model.init_mean.clone();
    for t in 0..n {
        mu0.rows_mut(t * m, m).copy_from(&cur);
        cur = t_mat * cur;
    }
    let mut sigma0 = DMatrix::zeros(nm, nm);
    let mut p1 = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if !model.diffuse[i] && !model.diffuse[j] {
                p1[(i, j)] = model.init_cov[(i, j)];
            }
        }
    }
    sigma0.view_mut((0, 0), (m, m)).copy_from(&p1);
    for t in 1..n {
        let prev = sigma0.view(((t - 1) * m, (t - 1) * m), (m, m)).into_owned();
        let diag = t_mat * prev * t_mat.transpose() + &rqr;
        sigma0.view_mut((t * m, t * m), (m, m)).copy_from(&diag);
        for s in 0..t {
            let upper = sigma0.view(((t - 1) * m, s * m), (m, m)).into_owned();
            let block = t_mat * upper;
            sigma0.view_mut((t * m, s * m), (m, m)).copy_from(&block);
            sigma0.view_mut((s * m, t * m), (m, m)).copy_from(&block.transpose());
        }
    }

    // A: sensitivity of each stacked state to δ.
    let mut a_stack = DMatrix::zeros(nm, d);
    let mut sens = DMatrix::zeros(m, d);
    for (j, di) in d_idx.iter().enumerate() {
        sens[(*di, j)] = 1.0;
    }
    for t in 0..n {
        a_stack.view_mut((t * m, 0), (m, d)).copy_from(&sens);
        sens = t_mat * sens;
    }

    // Stacked observations.
    let total_p: usize = model.obs.iter().map(|o| o.p()).sum();
    if total_p == 0 {
        return None;
    }
    let mut c = DMatrix::zeros(total_p, nm);
    let mut h = DMatrix::zeros(total_p, total_p);
    let mut y = DVector::zeros(total_p);
    let mut row = 0;
    for t in 0..n {
        let ob = &model.obs[t];
        let p = ob.p();
        if p > 0 {
            c.view_mut((row, t * m), (p, m)).copy_from(&ob.z);
            h.view_mut((row, row), (p, p)).copy_from(&ob.h);
            y.rows_mut(row, p).copy_from(&obs[t]);
            row += p;
        }
    }

    let v = &c * &sigma0 * c.transpose() + &h;
    let v_chol = v.cholesky()?;
    let e = &y - &c * &mu0;
    let w = &c * &a_stack;

    let vinv_e = v_chol.solve(&e);
    let vinv_w = v_chol.solve(&w);
    let g_inv = w.transpose() * &vinv_w;
    let g = g_inv.cholesky()?.inverse();
    let delta = &g * (w.transpose() * &vinv_e);

    let sc = &sigma0 * c.transpose(); // nm × P
    let mean = &mu0 + &a_stack * &delta + &sc * v_chol.solve(&(&e - &w * &delta));
    let corr = &a_stack - &sc * &vinv_w; // nm × d
    let cov = &sigma0 - &sc * v_chol.solve(&(&c * &sigma0)) + &corr * &g * corr.transpose();

    let mut means = Vec::with_capacity(n);
    let mut covs = Vec::with_capacity(n);
    for t in 0..n {
        means.push(mean.rows(t * m, m).into_owned());
        covs.push(cov.view((t * m, t * m), (m, m)).into_owned());
    }
    Some((means, covs))
}

#[test]
fn exact_diffuse_smoother_matches_flat_prior_gls() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for case in 0..25 {
        let d = rng.gen_range(1..=2usize);
        let model = random_model(&mut rng, d);
        let sim = simulate(&model, 30_000 + case).unwrap();
        let Some((means, covs)) = exact_diffuse_reference(&model, &sim.observations) else {
            continue; // diffuse direction unobservable in this draw
        };
        // A huge posterior variance flags a barely-observable diffuse
        // direction; both routes then amplify roundoff by that scale, so
        // normalize deviations by the global posterior magnitude.
        let global = covs
            .iter()
            .map(|c| c.amax())
            .chain(means.iter().map(|m| m.amax()))
            .fold(1.0f64, f64::max);
        let smooth = kalman_smoother(&model, &sim.observations).unwrap();
        for t in 0..model.n_periods() {
            let dm = (&smooth.smoothed_state[t] - &means[t]).amax();
            assert!(dm < 1e-8 * global, "case {case}, period {t}: mean deviation {dm}");
            let dc = (&smooth.smoothed_cov[t] - &covs[t]).amax();
            assert!(dc < 1e-8 * global, "case {case}, period {t}: cov deviation {dc}");
        }
    }
}

#[test]
fn exact_diffuse_filter_means_match_big_kappa() {
    // Big-kappa covariances at diffuse periods are cancellation-limited,
    // but the filtered/smoothed means are stable; check those.
    let opts = FilterOptions { diffuse_mode: DiffuseMode::BigKappa(1e8) };
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    for case in 0..15 {
        let d = rng.gen_range(1..=2usize);
        let model = random_model(&mut rng, d);
        let sim = simulate(&model, 31_000 + case).unwrap();
        let exact = kalman_filter(&model, &sim.observations).unwrap();
        let kappa = kalman_filter_with(&model, &sim.observations, opts).unwrap();
        for t in 0..model.n_periods() {
            // kappa = 1e8 truncation error is O(scale²/kappa); diffuse
            // draws have sd 100, so expect ~1e-4 absolute agreement.
            let scale = 1.0 + exact.filtered_state[t].amax();
            let dm = (&exact.filtered_state[t] - &kappa.filtered_state[t]).amax();
            assert!(dm < 2e-3 * scale, "case {case}, period {t}: mean deviation {dm}");
        }
    }
}

#[test]
fn loglik_invariant_under_row_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    for case in 0..20 {
        let model = random_model(&mut rng, 0);
        let sim = simulate(&model, 40_000 + case).unwrap();
        let base = kalman_filter(&model, &sim.observations).unwrap().log_likelihood;

        // reverse the rows of every observation block
        let mut permuted = model.clone();
        let mut obs2 = sim.observations.clone();
        for (ob, y) in permuted.obs.iter_mut().zip(obs2.iter_mut()) {
            let p = ob.p();
            if p < 2 {
                continue;
            }
            let perm: Vec<usize> = (0..p).rev().collect();
            let z = DMatrix::from_fn(p, ob.z.ncols(), |i, j| ob.z[(perm[i], j)]);
            let h = DMatrix::from_fn(p, p, |i, j| ob.h[(perm[i], perm[j])]);
            let yy = DVector::from_fn(p, |i, _| y[perm[i]]);
            *ob = ObsSpec::new(z, h);
            *y = yy;
        }
        let permuted_ll = kalman_filter(&permuted, &obs2).unwrap().log_likelihood;
        assert!(
            (base - permuted_ll).abs() < 1e-9 * (1.0 + base.abs()),
            "case {case}: {base} vs {permuted_ll}"
        );
    }
}

#[test]
fn filter_covariances_stay_symmetric_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for case in 0..20 {
        let d = rng.gen_range(0..=2usize);
        let model = random_model(&mut rng, d);
        let sim = simulate(&model, 50_000 + case).unwrap();
        let out = kalman_filter(&model, &sim.observations).unwrap();
        for t in 0..model.n_periods() {
            for p in [&out.predicted_cov[t], &out.filtered_cov[t]] {
                let sym = (p - p.transpose()).amax();
                assert!(sym < 1e-10, "case {case} period {t}: asymmetry {sym}");
                let eig = p.clone().symmetric_eigen();
                let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(min >= -1e-8, "case {case} period {t}: min eigenvalue {min}");
            }
        }
    }
}

#[test]
fn zero_observation_noise_interpolates_exactly() {
    // With H_t = 0 the smoothed states reproduce the observations.
    let mut rng = ChaCha8Rng::seed_from_u64(919);
    for case in 0..15 {
        let mut model = random_model(&mut rng, 0);
        for ob in &mut model.obs {
            let p = ob.p();
            ob.h = DMatrix::zeros(p, p);
        }
        let sim = simulate(&model, 60_000 + case).unwrap();
        let smooth = kalman_smoother(&model, &sim.observations).unwrap();
        for t in 0..model.n_periods() {
            let ob = &model.obs[t];
            if ob.p() == 0 {
                continue;
            }
            let recon = &ob.z * &smooth.smoothed_state[t];
            let err = (&recon - &sim.observations[t]).amax();
            let scale = 1.0 + sim.observations[t].amax();
            assert!(err < 1e-8 * scale, "case {case} period {t}: reconstruction error {err}");
        }
    }
}

#[test]
fn smoothed_variance_not_above_filtered_when_initialized() {
    let mut rng = ChaCha8Rng::seed_from_u64(121);
    for case in 0..20 {
        let model = random_model(&mut rng, 0);
        let sim = simulate(&model, 70_000 + case).unwrap();
        let f = kalman_filter(&model, &sim.observations).unwrap();
        let s = kalman_smoother(&model, &sim.observations).unwrap();
        for t in 0..model.n_periods() {
            for i in 0..model.state_dim() {
                assert!(
                    s.smoothed_cov[t][(i, i)] <= f.filtered_cov[t][(i, i)] + 1e-10,
                    "case {case} period {t} state {i}"
                );
            }
        }
    }
}
