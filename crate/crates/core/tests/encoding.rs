// SPDX-License-Identifier: MIT OR Apache-2.0

use compscore::encoding::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn gauss(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let d = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

fn closed_form_hrf(t: f64) -> f64 {
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    t.powi(5) * (-t).exp() / fact(5) - t.powi(15) * (-t).exp() / fact(15) / 6.0
}

#[test]
fn hrf_peaks_at_five_seconds_on_the_fine_grid() {
    let grid: Vec<f64> = (0..640).map(|i| i as f64 / 20.0).collect();
    let imax = (0..grid.len()).max_by(|&a, &b| hrf(grid[a]).total_cmp(&hrf(grid[b]))).unwrap();
    assert_eq!(grid[imax], 5.0);
    for &t in &grid {
        assert!((hrf(t) - closed_form_hrf(t)).abs() < 1e-14, "t = {t}");
    }
}

#[test]
fn hrf_crosses_zero_once_after_the_peak() {
    // g(t;6,1) = g(t;16,1)/6  <=>  t^10 = 6 * 15! / 5!
    let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
    let root = (6.0 * fact(15) / fact(5)).powf(0.1);
    assert!(root > 12.0 && root < 12.1, "{root}");
    assert!(hrf(root - 0.01) > 0.0 && hrf(root + 0.01) < 0.0);
    for i in 1..400 {
        let t = root + i as f64 * 0.05;
        if t < 32.0 {
            assert!(hrf(t) < 0.0, "t = {t}");
        }
    }
}

fn events(times: &[f64], amps: &[f64]) -> EventSeries {
    EventSeries::new(vec!["x".into()], times.to_vec(), amps.iter().map(|a| vec![*a]).collect()).unwrap()
}

#[test]
fn convolution_is_linear() {
    let opts = ConvolutionOptions::default();
    let a = convolve_events(&events(&[3.05], &[1.7]), 2.0, 80.0, &opts).unwrap();
    let b = convolve_events(&events(&[11.4], &[-0.6]), 2.0, 80.0, &opts).unwrap();
    let ab = convolve_events(&events(&[3.05, 11.4], &[1.7, -0.6]), 2.0, 80.0, &opts).unwrap();
    assert!((ab - (a + b)).amax() < 1e-9);
}

proptest! {
    #[test]
    fn fine_grid_convolution_is_shift_invariant(
        amps in prop::collection::vec(-3.0f64..3.0, 1..8),
        positions in prop::collection::vec(0usize..400, 8),
        shift in 0usize..200,
    ) {
        let kernel = HrfParams::default().sample(0.05);
        let mut x = vec![0.0; 1200];
        for (a, p) in amps.iter().zip(&positions) {
            x[*p] += a;
        }
        let mut shifted = vec![0.0; 1200];
        shifted[shift..].copy_from_slice(&x[..1200 - shift]);
        let y = convolve_fine(&x, &kernel);
        let ys = convolve_fine(&shifted, &kernel);
        for i in shift..1200 {
            prop_assert!((ys[i] - y[i - shift]).abs() < 1e-9);
        }
    }

    #[test]
    fn design_columns_are_standardized(seed in any::<u64>(), n_events in 3usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut times: Vec<f64> = (0..n_events).map(|_| rng.random_range(0.0..150.0)).collect();
        times.sort_by(f64::total_cmp);
        let values = (0..n_events).map(|_| vec![rng.random_range(-2.0..2.0), 1.0]).collect();
        let e = EventSeries::new(vec!["a".into(), "rate".into()], times, values).unwrap();
        let d = convolve_to_design(&e, 2.0, 160.0, &ConvolutionOptions::default()).unwrap();
        let n = d.n_rows() as f64;
        for c in 0..2 {
            let col = d.matrix.column(c);
            prop_assert!(col.mean().abs() < 1e-6);
            prop_assert!(((col.norm_squared() / n).sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn normalization_round_trips(r in 0.0f64..1.0, c in 0.002f64..1.0) {
        let back = normalize_r2(r * c, Some(c), DEFAULT_EPSILON).unwrap();
        prop_assert!((back - r).abs() < 1e-12);
    }

    #[test]
    fn in_sample_r2_does_not_grow_with_alpha(seed in any::<u64>()) {
        let (x, y) = collinear_problem(seed, 60);
        let solver = RidgeSolver::new(&x, Some(2)).unwrap();
        let r2: Vec<f64> = log_grid(-3.0, 6.0, 25).iter().map(|&a| solver.fit_alpha(&y, a).r2).collect();
        for w in r2.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }
}

/// Two nearly collinear predictors plus intercept; only the first drives y.
fn collinear_problem(seed: u64, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gauss(&mut rng, n, 1.0);
    let jitter = gauss(&mut rng, n, 0.05);
    let noise = gauss(&mut rng, n, 1.0);
    let x = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => a[r],
        1 => a[r] + jitter[r],
        _ => 1.0,
    });
    let y = DVector::from_fn(n, |r, _| 0.5 * a[r] + noise[r] + 0.3);
    (x, y)
}

/// Ridge coefficients from the penalized normal equations, intercept unpenalized.
fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> DVector<f64> {
    let mut pen = DMatrix::identity(x.ncols(), x.ncols()) * alpha;
    pen[(x.ncols() - 1, x.ncols() - 1)] = 0.0;
    (x.transpose() * x + pen).try_inverse().unwrap() * x.transpose() * y
}

#[test]
fn gcv_matches_the_explicit_hat_matrix() {
    let (x, y) = collinear_problem(3, 50);
    let solver = RidgeSolver::new(&x, Some(2)).unwrap();
    let n = 50.0;
    for alpha in [0.01, 0.3, 4.0, 70.0] {
        let mut pen = DMatrix::identity(3, 3) * alpha;
        pen[(2, 2)] = 0.0;
        let hat = &x * (x.transpose() * &x + pen).try_inverse().unwrap() * x.transpose();
        let rss = (&y - &hat * &y).norm_squared();
        let oracle = n * rss / (n - hat.trace()).powi(2);
        let got = solver.gcv_error(&y, alpha);
        assert!((got - oracle).abs() < 1e-9 * oracle, "alpha {alpha}: {got} vs {oracle}");
        let beta = solver.fit_alpha(&y, alpha).beta;
        assert!((beta - normal_equations(&x, &y, alpha)).amax() < 1e-9);
    }
}

fn kfold_oracle(x: &DMatrix<f64>, y: &DVector<f64>, alphas: &[f64], k: usize) -> f64 {
    let n = x.nrows();
    let mut best = (f64::INFINITY, alphas[0]);
    for &alpha in alphas {
        let mut sse = 0.0;
        for f in 0..k {
            let (lo, hi) = (f * n / k, (f + 1) * n / k);
            let train: Vec<usize> = (0..lo).chain(hi..n).collect();
            let test: Vec<usize> = (lo..hi).collect();
            let beta = normal_equations(&x.select_rows(&train), &y.select_rows(&train), alpha);
            sse += (y.select_rows(&test) - x.select_rows(&test) * beta).norm_squared();
        }
        if sse < best.0 {
            best = (sse, alpha);
        }
    }
    best.1
}

fn heldout_sse(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    (y - x * beta).norm_squared()
}

/// Eight noisy copies of one latent signal plus intercept; y follows the latent.
fn many_collinear(seed: u64, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = gauss(&mut rng, n, 1.0);
    let jitter = gauss(&mut rng, n * 8, 0.3);
    let noise = gauss(&mut rng, n, 1.0);
    let x = DMatrix::from_fn(n, 9, |r, c| if c == 8 { 1.0 } else { latent[r] + jitter[r * 8 + c] });
    let y = DVector::from_fn(n, |r, _| 0.5 * latent[r] + noise[r]);
    (x, y)
}

#[test]
fn cross_validated_alpha_beats_ols_on_collinear_data() {
    let alphas = default_alphas();
    let names: Vec<String> = (0..9).map(|i| format!("c{i}")).collect();
    let (mut sse_gcv, mut sse_ols, mut wins) = (0.0, 0.0, 0);
    for seed in 0..20 {
        let (x, y) = many_collinear(100 + seed, 200);
        let train: Vec<usize> = (0..100).collect();
        let test: Vec<usize> = (100..200).collect();
        let (xt, yt) = (x.select_rows(&train), y.select_rows(&train));
        let (xh, yh) = (x.select_rows(&test), y.select_rows(&test));

        let kfold = RidgeSolver::new(&xt, Some(8)).unwrap().with_kfold(5).unwrap().fit(&yt, &alphas).unwrap();
        assert_eq!(kfold.alpha, kfold_oracle(&xt, &yt, &alphas, 5), "seed {seed}");

        let gcv = heldout_sse(&xh, &yh, &fit_ridge(&xt, Some(8), &yt, &alphas).unwrap().beta);
        let ols = heldout_sse(&xh, &yh, &fit_ols(&xt, &names, &yt).unwrap().beta);
        sse_gcv += gcv;
        sse_ols += ols;
        wins += usize::from(gcv < ols);
    }
    println!("held-out SSE: GCV {sse_gcv:.2}, OLS {sse_ols:.2}; GCV better on {wins}/20 splits");
    assert!(sse_gcv < sse_ols);
}

#[test]
fn ols_coefficients_lie_within_three_standard_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 120;
    let sigma = 0.8;
    let a = gauss(&mut rng, n, 1.0);
    let b = gauss(&mut rng, n, 1.0);
    let e = gauss(&mut rng, n, sigma);
    let x = DMatrix::from_fn(n, 3, |r, c| [a[r], b[r], 1.0][c]);
    let truth = DVector::from_vec(vec![1.2, -0.7, 0.4]);
    let y = &x * &truth + DVector::from_vec(e);
    let names: Vec<String> = ["a", "b", "intercept"].iter().map(|s| s.to_string()).collect();
    let fit = fit_ols(&x, &names, &y).unwrap();
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let oracle = &xtx_inv * x.transpose() * &y;
    assert!((&fit.beta - &oracle).amax() < 1e-10);
    for j in 0..3 {
        let se = sigma * xtx_inv[(j, j)].sqrt();
        assert!((fit.beta[j] - truth[j]).abs() < 3.0 * se, "beta {j}");
    }
}

#[test]
fn orthogonal_response_explains_nothing() {
    let n = 40;
    let x = DMatrix::from_fn(n, 2, |r, c| if c == 0 { if r % 2 == 0 { 1.0 } else { -1.0 } } else { 1.0 });
    // zero mean and orthogonal to the alternating column
    let y = DVector::from_fn(n, |r, _| [1.0, 1.0, -1.0, -1.0][r % 4]);
    let names: Vec<String> = ["alt", "intercept"].iter().map(|s| s.to_string()).collect();
    assert!(fit_ols(&x, &names, &y).unwrap().r2.abs() < 1e-12);
}

#[test]
fn pca_recovers_planted_axes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = 10;
    let mut u1 = DVector::from_vec(gauss(&mut rng, d, 1.0));
    u1.normalize_mut();
    let mut u2 = DVector::from_vec(gauss(&mut rng, d, 1.0));
    u2 -= &u1 * u1.dot(&u2);
    u2.normalize_mut();
    let n = 200;
    let s1 = gauss(&mut rng, n, 3.0);
    let s2 = gauss(&mut rng, n, 1.0);
    let data = DMatrix::from_fn(n, d, |r, c| s1[r] * u1[c] + s2[r] * u2[c] + 2.0);

    let (_, pca) = pca_reduce(&data, 2).unwrap();
    // oracle: eigenvectors of the sample covariance
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    for (k, truth) in [&u1, &u2].into_iter().enumerate() {
        let axis = pca.components.row(k).transpose();
        assert!(axis.dot(truth).abs() >= 0.999, "axis {k}");
        assert!(axis.dot(&eig.eigenvectors.column(order[k])).abs() > 1.0 - 1e-9);
        assert!((pca.explained_variance[k] - eig.eigenvalues[order[k]]).abs() < 1e-9 * eig.eigenvalues[order[0]]);
    }
    let (scores, pca) = pca_reduce(&data, 2).unwrap();
    assert!((pca.inverse_transform(&scores) - &data).amax() < 1e-9);
    let gram = &pca.components * pca.components.transpose();
    assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-8);
}

fn noise_subjects(seed: u64, n_subjects: usize, n_trs: usize, n_vertices: usize) -> Vec<BoldMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_subjects)
        .map(|s| {
            let v = gauss(&mut rng, n_trs * n_vertices, 1.0);
            BoldMatrix::new(format!("sub-{s:02}"), 2.0, DMatrix::from_vec(n_trs, n_vertices, v)).unwrap().zscore()
        })
        .collect()
}

#[test]
fn white_noise_ceiling_follows_the_subject_count() {
    // With the subject included in the mean, corr(y_s, mean) is 1/sqrt(n) in
    // expectation, so the literal ceiling sits near 1/n = 0.1 for 10 subjects.
    let bolds = noise_subjects(21, 10, 200, 100);
    let vertices: Vec<usize> = (0..100).collect();
    let literal: Vec<f64> = isc_ceiling(&bolds, &vertices, false).unwrap().into_iter().map(Option::unwrap).collect();
    let loo: Vec<f64> = isc_ceiling(&bolds, &vertices, true).unwrap().into_iter().map(Option::unwrap).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m_lit, m_loo) = (mean(&literal), mean(&loo));
    let mut sorted = literal.clone();
    sorted.sort_by(f64::total_cmp);
    println!(
        "literal ceiling: mean {m_lit:.4}, 5% {:.4}, 95% {:.4}; leave-one-out mean {m_loo:.4}",
        sorted[5], sorted[94]
    );
    assert!((m_lit - 0.1).abs() < 0.015, "{m_lit}");
    assert!(m_loo < 0.02, "{m_loo}");
}

fn planted_dataset(seed: u64, n_subjects: usize, noise: f64) -> (EventSeries, Vec<BoldMatrix>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_trs = 150;
    let mut t = 2.0;
    let mut times = vec![];
    let mut values = vec![];
    while t < 290.0 {
        times.push(t);
        values.push(vec![1.0, rng.random_range(-1.0..1.0), rng.random_range(0.0..3.0)]);
        t += rng.random_range(0.3..1.2);
    }
    let events = EventSeries::new(vec!["rate".into(), "a".into(), "b".into()], times, values).unwrap();
    let design = design_for_scans(&events, 2.0, n_trs, &ConvolutionOptions::default()).unwrap();
    let n_vertices = 12;
    let beta = DMatrix::from_fn(4, n_vertices, |r, _| if r == 3 { 0.0 } else { rng.random_range(-1.0..1.0) });
    let signal = &design.matrix * &beta;
    let bolds = (0..n_subjects)
        .map(|s| {
            let e = DMatrix::from_vec(n_trs, n_vertices, gauss(&mut rng, n_trs * n_vertices, noise));
            BoldMatrix::new(format!("sub-{s:02}"), 2.0, &signal + e).unwrap()
        })
        .collect();
    (events, bolds, beta)
}

#[test]
fn noiseless_identical_subjects_normalize_to_one() {
    let (events, bolds, _) = planted_dataset(2, 3, 0.0);
    let same: Vec<BoldMatrix> = bolds
        .iter()
        .map(|b| BoldMatrix::new(b.subject.clone(), 2.0, bolds[0].data.clone()).unwrap())
        .collect();
    let opts = EncodingOptions { method: Method::Ols, ..Default::default() };
    let results = run_encoding(&events, &same, &(0..12).collect::<Vec<_>>(), &opts).unwrap();
    for r in &results {
        for v in &r.vertices {
            assert_eq!(v.r2_isc, Some(1.0));
            assert!((v.r2_norm.unwrap() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn encoding_recovers_planted_coefficients() {
    let (events, bolds, beta) = planted_dataset(9, 5, 0.5);
    let mask: Vec<usize> = (0..12).collect();
    for method in [Method::Ols, Method::Ridge] {
        let opts = EncodingOptions { method, ..Default::default() };
        let results = run_encoding(&events, &bolds, &mask, &opts).unwrap();
        assert_eq!(results.len(), 5);
        let mut est = vec![];
        let mut truth = vec![];
        for v in 0..12 {
            for p in 0..3 {
                est.push(results.iter().map(|r| r.vertices[v].beta[p]).sum::<f64>() / 5.0);
                truth.push(beta[(p, v)]);
            }
        }
        let r = pearson(&est, &truth);
        assert!(r >= 0.9, "{method:?}: r = {r}");
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn single_vertex_mask_and_output_rows() {
    let (events, bolds, _) = planted_dataset(4, 2, 0.5);
    let results = run_encoding(&events, &bolds, &[7], &EncodingOptions::default()).unwrap();
    assert_eq!(results[0].vertices.len(), 1);
    assert_eq!(results[0].vertices[0].vertex, 7);
    let mut buf = Vec::new();
    results[0].write_betas_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("vertex,predictor,beta,alpha,r2,r2_isc,r2_norm"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn held_out_r2_is_below_in_sample() {
    let (events, bolds, _) = planted_dataset(6, 3, 1.0);
    let mask: Vec<usize> = (0..12).collect();
    let ins = run_encoding(&events, &bolds, &mask, &EncodingOptions::default()).unwrap();
    let held = run_encoding(&events, &bolds, &mask, &EncodingOptions { r2_mode: R2Mode::HeldOut, ..Default::default() })
        .unwrap();
    let mean = |rs: &[EncodingResult]| {
        rs.iter().flat_map(|r| r.vertices.iter().map(|v| v.r2)).sum::<f64>() / (rs.len() * 12) as f64
    };
    assert!(mean(&held) < mean(&ins));
}

#[test]
fn duplicated_predictor_fails_ols_with_names() {
    let e = EventSeries::new(
        vec!["a".into(), "a_copy".into()],
        vec![1.0, 5.0, 9.0, 30.0],
        vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![0.5, 0.5], vec![1.0, 1.0]],
    )
    .unwrap();
    let bolds = noise_subjects(1, 2, 40, 3);
    let opts = EncodingOptions { method: Method::Ols, ..Default::default() };
    match run_encoding(&e, &bolds, &[0], &opts).unwrap_err() {
        EncodingError::RankDeficient { columns, .. } => assert_eq!(columns, ["a", "a_copy"]),
        err => panic!("{err}"),
    }
}

#[test]
fn timing_longer_than_recording_is_rejected() {
    let e = events(&[1.0, 100.0], &[1.0, 2.0]);
    let bolds = noise_subjects(1, 2, 40, 3);
    let err = run_encoding(&e, &bolds, &[0], &EncodingOptions::default()).unwrap_err();
    assert!(matches!(err, EncodingError::DurationMismatch { .. }), "{err}");
    // within one TR of the end is accepted
    let e = events(&[1.0, 81.5], &[1.0, 2.0]);
    assert!(run_encoding(&e, &bolds, &[0], &EncodingOptions::default()).is_ok());
}

#[test]
fn mismatched_tr_is_rejected() {
    let mut bolds = noise_subjects(1, 2, 40, 3);
    bolds[1].tr = 1.5;
    let err = run_encoding(&events(&[1.0], &[1.0]), &bolds, &[0], &EncodingOptions::default()).unwrap_err();
    assert!(matches!(err, EncodingError::ShapeMismatch(_)));
}
