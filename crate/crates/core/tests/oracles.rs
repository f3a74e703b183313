use nalgebra::{DMatrix, DVector};
use sparsevecm_core::bootstrap::{bootstrap_jirf, resample_series, replicate_rng, BootstrapSpec};
use sparsevecm_core::jirf::{compute_jirf, jirf_for_fit, to_vma, ShockScenario};
use sparsevecm_core::simulate::{self, panel_from_values};
use sparsevecm_core::stattests::{adf_test, engle_granger, fisher_combine, Deterministic};
use sparsevecm_core::varnet::fit_var_at;
use sparsevecm_core::vecm::effective_rank;
use sparsevecm_core::{ElasticNetConfig, SeriesId, VarFit};

fn ids(m: usize) -> Vec<SeriesId> {
    (0..m).map(|j| SeriesId::new("c", format!("r{j}"))).collect()
}

/// Response of the zero-intercept difference equation to a unit impulse in
/// column `j` at time 0.
fn propagate(phis: &[DMatrix<f64>], j: usize, horizon: usize) -> Vec<DVector<f64>> {
    let m = phis[0].nrows();
    let mut path: Vec<DVector<f64>> = Vec::new();
    for h in 0..=horizon {
        let mut y = if h == 0 { DVector::from_fn(m, |i, _| f64::from(u8::from(i == j))) } else { DVector::zeros(m) };
        for (k, phi) in phis.iter().enumerate() {
            if h > k {
                y += phi * &path[h - k - 1];
            }
        }
        path.push(y);
    }
    path
}

#[test]
fn vma_matches_impulse_propagation() {
    let mut rng = simulate::rng(3);
    for _ in 0..10 {
        let phis = simulate::random_stable_var(&mut rng, 3, 2, 0.9);
        let vma = to_vma(&phis, 20).unwrap();
        assert_eq!(vma.matrices[0], DMatrix::identity(3, 3));
        for j in 0..3 {
            for (h, y) in propagate(&phis, j, 20).iter().enumerate() {
                assert!((vma.matrices[h].column(j) - y).amax() < 1e-10);
            }
        }
    }
}

#[test]
fn geometric_decay_of_half_identity() {
    let phi = DMatrix::identity(3, 3) * 0.5;
    let vma = to_vma(&[phi], 10).unwrap();
    let sc = ShockScenario::user(&ids(3), &[0], &[1.0], 10).unwrap();
    let r = compute_jirf(&vma, &DMatrix::identity(3, 3), &ids(3), &sc).unwrap();
    for h in 0..=10 {
        let expect = 0.5f64.powi(h as i32);
        assert!((r.responses[(h, 0)] - expect).abs() < 1e-15);
        assert_eq!(r.responses[(h, 1)], 0.0);
    }
}

#[test]
fn worked_two_by_two_example() {
    let sigma = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 9.0]);
    let sc = ShockScenario::user(&ids(2), &[0], &[2.0], 0).unwrap();
    let r = compute_jirf(&to_vma(&[DMatrix::zeros(2, 2)], 0).unwrap(), &sigma, &ids(2), &sc).unwrap();
    assert_eq!(r.responses.row(0).iter().cloned().collect::<Vec<_>>(), vec![2.0, 0.5]);
}

#[test]
fn stable_responses_decay() {
    let mut rng = simulate::rng(9);
    let phis = simulate::random_stable_var(&mut rng, 4, 2, 0.8);
    let vma = to_vma(&phis, 200).unwrap();
    let sc = ShockScenario::user(&ids(4), &[0, 1, 2, 3], &[1.0, 1.0, 1.0, 1.0], 200).unwrap();
    let r = compute_jirf(&vma, &DMatrix::identity(4, 4), &ids(4), &sc).unwrap();
    let norm = |h: usize| r.responses.row(h).amax();
    let c = (0..=200).map(|h| norm(h) / 0.85f64.powi(h as i32)).fold(0.0, f64::max);
    assert!(c.is_finite());
    assert!(norm(200) < 1e-10);
    for h in 100..=200 {
        assert!(norm(h) <= c * 0.85f64.powi(h as i32));
    }
}

#[test]
fn erank_constructed_spectra() {
    let mut rng = simulate::rng(4);
    for r in [1usize, 2, 5, 9] {
        let m = 10;
        let q1 = simulate::normal_matrix(&mut rng, m, m).qr().q();
        let q2 = simulate::normal_matrix(&mut rng, m, m).qr().q();
        let d = DVector::from_fn(m, |i, _| if i < r { 1.0 } else { 1e-6 });
        let a = &q1 * DMatrix::from_diagonal(&d) * &q2;
        let e = effective_rank(&a).unwrap().erank;
        assert!((e - r as f64).abs() < 0.1, "r = {r}: {e}");
    }
}

fn small_var1(seed: u64, t: usize) -> (sparsevecm_core::PricePanel, DMatrix<f64>) {
    let phi = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.0, 0.4, 0.1, 0.1, 0.0, 0.3]);
    let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.3, 0.9, 0.0, 0.2, 0.1, 0.8]);
    let mut rng = simulate::rng(seed);
    let values = simulate::simulate_var(&mut rng, &DVector::zeros(3), &[phi.clone()], &l, t, 100);
    (panel_from_values(values), phi)
}

#[test]
fn resampling_contracts() {
    let (panel, _) = small_var1(1, 120);
    let fit = fit_var_at(&panel, 1, 0.0, 0.5, &ElasticNetConfig::default()).unwrap();
    let a = resample_series(&fit, &panel, &mut replicate_rng(5, 0)).unwrap();
    let b = resample_series(&fit, &panel, &mut replicate_rng(5, 0)).unwrap();
    let c = resample_series(&fit, &panel, &mut replicate_rng(6, 0)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.values, c.values);
    assert_eq!(a.values.row(0), panel.values.row(0));
    let mut centered = fit.residuals.clone();
    for j in 0..3 {
        let mu = centered.column(j).mean();
        centered.column_mut(j).add_scalar_mut(-mu);
        assert!(centered.column(j).sum().abs() < 1e-10);
    }
}

#[test]
fn noiseless_skeleton_gives_zero_width_bands() {
    let theta = 0.3f64;
    let rot = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
    let mut values = DMatrix::zeros(80, 2);
    values[(0, 0)] = 1.0;
    for t in 1..80 {
        let next = &rot * values.row(t - 1).transpose();
        values.set_row(t, &next.transpose());
    }
    let panel = panel_from_values(values);
    let config = ElasticNetConfig::default();
    let mut fit = fit_var_at(&panel, 1, 0.5, 0.0, &config).unwrap();
    fit.residuals.fill(0.0);
    let sc = ShockScenario::user(&fit.series, &[0], &[0.1], 8).unwrap();
    let spec = BootstrapSpec { replicates: 20, seed: 1, keep_draws: true, ..Default::default() };
    let dist = bootstrap_jirf(&fit, &panel, &sc, &spec, &config).unwrap();
    assert!(dist.draws.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(dist.lower, dist.upper);
    // the one synthetic panel is the fit's skeleton; its refit is the centre
    let skeleton = resample_series(&fit, &panel, &mut replicate_rng(0, 0)).unwrap();
    let point = jirf_for_fit(&fit_var_at(&skeleton, 1, 0.5, 0.0, &config).unwrap(), &sc).unwrap();
    assert!((&dist.mean - &point.responses).amax() < 1e-12);
    assert_eq!(dist.lower, point.responses);
}

#[test]
fn bootstrap_is_reproducible_and_converges() {
    let (panel, _) = small_var1(2, 200);
    let config = ElasticNetConfig::default();
    let fit = fit_var_at(&panel, 1, 1.0, 0.5, &config).unwrap();
    let sc = ShockScenario::user(&fit.series, &[0, 1, 2], &[0.5, 0.5, 0.5], 6).unwrap();
    let small = BootstrapSpec { replicates: 200, seed: 11, ..Default::default() };
    let a = bootstrap_jirf(&fit, &panel, &sc, &small, &config).unwrap();
    let b = bootstrap_jirf(&fit, &panel, &sc, &small, &config).unwrap();
    assert_eq!(a, b);
    let large = BootstrapSpec { replicates: 2000, seed: 12, ..Default::default() };
    let c = bootstrap_jirf(&fit, &panel, &sc, &large, &config).unwrap();
    for h in 0..=6 {
        for j in 0..3 {
            let se = (a.std_error[(h, j)].powi(2) + c.std_error[(h, j)].powi(2)).sqrt();
            assert!((a.mean[(h, j)] - c.mean[(h, j)]).abs() <= 5.0 * se + 1e-12);
        }
    }
}

#[test]
fn fisher_identity() {
    let p = [0.2, 0.5, 0.01, 0.9];
    let (stat, df, _) = fisher_combine(&p);
    let direct: f64 = -2.0 * p.iter().map(|v: &f64| v.ln()).sum::<f64>();
    assert!((stat - direct).abs() < 1e-12);
    assert_eq!(df, 8);
    let (stat, _, pv) = fisher_combine(&[0.05, 0.05]);
    assert!((stat - 11.982929094215963).abs() < 1e-3);
    assert!((pv - 0.0175).abs() < 1e-3);
}

#[test]
fn adf_separates_random_walks_from_noise() {
    let mut walk_kept = 0;
    let mut noise_rejected = 0;
    for seed in 0..40u64 {
        let mut rng = simulate::rng(seed);
        let e: Vec<f64> = (0..250).map(|_| simulate::standard_normal(&mut rng)).collect();
        let walk: Vec<f64> = e.iter().scan(0.0, |s, v| { *s += v; Some(*s) }).collect();
        walk_kept += usize::from(adf_test(&walk, Deterministic::Constant, 8).unwrap().p_value > 0.05);
        noise_rejected += usize::from(adf_test(&e, Deterministic::Constant, 8).unwrap().p_value < 0.05);
    }
    assert!(walk_kept >= 34, "{walk_kept}");
    assert!(noise_rejected >= 36, "{noise_rejected}");
}

#[test]
fn engle_granger_finds_common_trend() {
    let mut found = 0;
    for seed in 0..30u64 {
        let mut rng = simulate::rng(1000 + seed);
        let mut x = 0.0;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for _ in 0..250 {
            x += simulate::standard_normal(&mut rng);
            xs.push(x);
            ys.push(0.5 + 1.2 * x + 0.5 * simulate::standard_normal(&mut rng));
        }
        found += usize::from(engle_granger(&ys, &xs, 8).unwrap().1 < 0.05);
    }
    assert!(found >= 27, "{found}");
}

#[test]
fn residual_std_scenario_uses_fit_covariance() {
    let (panel, _) = small_var1(3, 150);
    let fit: VarFit = fit_var_at(&panel, 1, 0.0, 0.5, &ElasticNetConfig::default()).unwrap();
    let labels = vec![panel.series[1].label()];
    let sc = sparsevecm_core::build_shock(&panel, Some(&fit), &labels, sparsevecm_core::ShockSource::ResidualStd, 3)
        .unwrap();
    assert!((sc.magnitudes[0] - fit.residual_cov[(1, 1)].sqrt()).abs() < 1e-15);
    let r = jirf_for_fit(&fit, &sc).unwrap();
    assert!((r.responses[(0, 1)] - sc.magnitudes[0]).abs() < 1e-14);
}
