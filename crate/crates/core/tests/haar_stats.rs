//! Haar sampling, empirical CDFs, bootstrap bands and analytic fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinmet::grape::OptimizerConfig;
use spinmet::haar::fit::{sin_power_integral, wallis, FitData};
use spinmet::haar::{
    bootstrap_cdf, estimate_cdf, estimate_from_met_indices, fit_expansion, fit_hi, hi_cdf, ks_critical, ks_statistic,
    sample_pairs, select_expansion, squared_overlap_cdf, BootstrapConfig, CampaignConfig, CdfEstimate, StatePairSample,
};
use spinmet::DeviceParams;
use statrs::function::beta::beta;

/// Adaptive Simpson quadrature.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
}

fn quadrature_hi(t: f64, v: f64, d: usize) -> f64 {
    let n = (2 * d - 3) as i32;
    let y = (0.5 * v * t).min(std::f64::consts::FRAC_PI_2);
    if y <= 0.0 {
        return 0.0;
    }
    2.0 / beta((d - 1) as f64, 0.5) * simpson(&|x: f64| x.sin().powi(n), 0.0, y, 1e-15)
}

/// Inverse-transform draw from a CDF that is continuous on `[0, t_max]`.
fn draw(cdf: &dyn Fn(f64) -> f64, t_max: f64, u: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, t_max);
    for _ in 0..80 {
        let m = 0.5 * (lo + hi);
        if cdf(m) < u {
            lo = m;
        } else {
            hi = m;
        }
    }
    hi
}

fn synthetic(cdf: &dyn Fn(f64) -> f64, t_max: f64, grid: &[f64], n: usize, seed: u64, n_qubits: usize) -> CdfEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let met: Vec<usize> = (0..n)
        .map(|_| {
            let t = draw(cdf, t_max, rng.random::<f64>());
            grid.iter().position(|&g| g >= t).unwrap_or(grid.len())
        })
        .collect();
    let est = estimate_from_met_indices(n_qubits, grid.to_vec(), 1e-7, &met);
    bootstrap_cdf(&est, &BootstrapConfig { n_resamples: 4000, seed, ..Default::default() }).unwrap()
}

#[test]
fn sampled_states_are_normalized_and_reproducible() {
    let a = sample_pairs(2, 50, 3).unwrap();
    for (x, y) in &a.pairs {
        for s in [x, y] {
            let n: f64 = s.amplitudes().iter().map(|z| z.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
    assert_eq!(a, sample_pairs(2, 50, 3).unwrap());
    assert_ne!(a, sample_pairs(2, 50, 4).unwrap());
}

#[test]
fn single_qubit_squared_overlaps_are_uniform() {
    let s = sample_pairs(1, 1024, 2024).unwrap();
    let d = ks_statistic(&s.overlaps(), |x| x.clamp(0.0, 1.0));
    assert!(d < ks_critical(1024, 0.01), "{d}");
    // the general law coincides with the uniform one at d = 2
    assert!((squared_overlap_cdf(0.3, 2) - 0.3).abs() < 1e-15);
}

#[test]
fn two_qubit_mean_squared_overlap_is_a_quarter() {
    let ov = sample_pairs(2, 4096, 9).unwrap().overlaps();
    let n = ov.len() as f64;
    let mean = ov.iter().sum::<f64>() / n;
    let var = ov.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - 0.25).abs() < 3.0 * (var / n).sqrt(), "{mean}");
    let d = ks_statistic(&ov, |x| squared_overlap_cdf(x, 4));
    assert!(d < ks_critical(4096, 0.01));
}

#[test]
fn ks_table_matches_the_approximation() {
    for n in [64, 1024] {
        for a in [0.01, 0.05] {
            let c = (-0.5 * (0.5f64 * a).ln()).sqrt();
            let r = (n as f64).sqrt();
            assert!((ks_critical(n, a) - c / (r + 0.12 + 0.11 / r)).abs() < 2e-4);
        }
    }
}

#[test]
fn identical_start_and_target_pass_everywhere() {
    let s = sample_pairs(1, 4, 1).unwrap();
    let same = StatePairSample { pairs: s.pairs.iter().map(|(a, _)| (a.clone(), a.clone())).collect(), ..s };
    let cfg = CampaignConfig { t_grid: vec![0.0, 20.0], n_segments: 4, ..Default::default() };
    let est = estimate_cdf(&same, &DeviceParams::table_one(1), &cfg, &OptimizerConfig::default()).unwrap();
    assert_eq!(est.cdf, vec![1.0, 1.0]);
    assert_eq!(est.max_met(), Some(0.0));
}

#[test]
fn zero_duration_fails_for_generic_pairs() {
    let s = sample_pairs(1, 16, 5).unwrap();
    let cfg = CampaignConfig { t_grid: vec![0.0], n_segments: 4, ..Default::default() };
    let est = estimate_cdf(&s, &DeviceParams::table_one(1), &cfg, &OptimizerConfig::default()).unwrap();
    let expected = s.overlaps().iter().filter(|&&o| 1.0 - o < 1e-7).count() as f64 / 16.0;
    assert_eq!(est.cdf[0], expected);
    assert_eq!(expected, 0.0);
}

#[test]
fn short_campaign_cdf_is_monotone_and_repaired() {
    let s = sample_pairs(1, 6, 8).unwrap();
    let grid: Vec<f64> = (0..=5).map(|i| 50.0 * i as f64).collect();
    let cfg = CampaignConfig { t_grid: grid, n_segments: 10, stop_after_failures: Some(2), ..Default::default() };
    let grape = OptimizerConfig { n_random_restarts: 2, seed: 3, ..Default::default() };
    let est = estimate_cdf(&s, &DeviceParams::table_one(1), &cfg, &grape).unwrap();
    assert!(est.cdf.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(*est.cdf.last().unwrap(), 1.0);
    for p in &est.pairs {
        let r = p.repaired();
        assert!(r.windows(2).all(|w| w[1] >= w[0]));
        let (lo, hi) = p.met_bracket;
        assert!(hi.is_some());
        if let Some(lo) = lo {
            assert!(lo < hi.unwrap());
        }
    }
    // skipped durations are never optimized
    for p in &est.pairs {
        for (st, inf) in p.status.iter().zip(&p.infidelity) {
            assert_eq!(*st == spinmet::haar::PointStatus::Skipped, inf.is_none());
        }
    }
}

#[test]
fn bootstrap_defaults_follow_the_protocol() {
    let b = BootstrapConfig::default();
    assert_eq!(b.n_resamples, 100_000);
    assert_eq!(b.confidence, 0.9999);
}

#[test]
fn identical_records_give_zero_width_bands_at_the_floor() {
    let est = estimate_from_met_indices(1, vec![0.0, 1.0, 2.0], 1e-7, &[1; 32]);
    let b = bootstrap_cdf(&est, &BootstrapConfig { n_resamples: 500, ..Default::default() }).unwrap();
    let bs = b.bootstrap.unwrap();
    assert!(bs.variance.iter().all(|&v| v == 1.0 / (32.0 * 32.0)));
    assert_eq!(bs.lower, bs.upper);
}

#[test]
fn bootstrap_spread_matches_the_binomial_oracle() {
    let met: Vec<usize> = (0..1024).map(|i| if i < 512 { 0 } else { 1 }).collect();
    let est = estimate_from_met_indices(1, vec![1.0, 2.0], 1e-7, &met);
    let cfg = BootstrapConfig { n_resamples: 10_000, confidence: 0.9999, seed: 17 };
    let b = bootstrap_cdf(&est, &cfg).unwrap();
    let sd = b.bootstrap.as_ref().unwrap().variance[0].sqrt();
    let oracle = (0.25f64 / 1024.0).sqrt();
    assert!((sd / oracle - 1.0).abs() < 0.15, "{sd} vs {oracle}");
    assert_eq!(b, bootstrap_cdf(&est, &cfg).unwrap());
}

#[test]
fn hi_cdf_matches_quadrature_and_closed_forms() {
    let v = 0.1;
    for d in [2, 4, 8, 16] {
        let mut last = 0.0;
        for i in 0..1000 {
            let t = std::f64::consts::PI / v * i as f64 / 999.0;
            let p = hi_cdf(t, v, d);
            assert!((p - quadrature_hi(t, v, d)).abs() < 1e-10, "d = {d}, t = {t}");
            assert!(p >= last, "d = {d}, t = {t}: {p} < {last}");
            last = p;
        }
        assert_eq!(hi_cdf(0.0, v, d), 0.0);
        assert!((hi_cdf(std::f64::consts::PI / v, v, d) - 1.0).abs() < 1e-15);
        // normalization agrees with the beta function
        assert!((2.0 * wallis(2 * d - 3) - beta((d - 1) as f64, 0.5)).abs() < 1e-12);
    }
    for i in 0..100 {
        let t = 0.3 * i as f64;
        let e = (hi_cdf(t, v, 2) - (1.0 - (0.5 * v * t).cos())).abs();
        assert!(e < 1e-15, "{t}: {e}");
    }
    assert_eq!(hi_cdf(-1.0, v, 4), 0.0);
    assert_eq!(hi_cdf(1e6, v, 4), 1.0);
    assert!(sin_power_integral(7, 0.0).abs() < 1e-300);
}

fn hi_grid(v: f64) -> Vec<f64> {
    (0..=40).map(|i| std::f64::consts::PI / v * 1.05 * i as f64 / 40.0).collect()
}

#[test]
fn hi_fit_recovers_the_speed_from_noisy_samples() {
    let v = 0.1;
    let grid = hi_grid(v);
    let est = synthetic(&|t| hi_cdf(t, v, 4), std::f64::consts::PI / v, &grid, 1024, 12, 2);
    let data = est.fit_data().unwrap();
    let fit = fit_hi(&data, 4).unwrap();
    assert!((fit.v / v - 1.0).abs() < 0.02, "{}", fit.v);
    // standardized residuals have mean zero at the 1% level
    let r = fit.standardized_residuals(&data);
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 2.576 * sd / n.sqrt(), "{mean} {sd}");
}

#[test]
fn noiseless_hi_data_fit_exactly() {
    let v = 0.05;
    let t = hi_grid(v);
    let p: Vec<f64> = t.iter().map(|&t| hi_cdf(t, v, 2)).collect();
    let data = FitData { variance: vec![1e-6; t.len()], t, p };
    let fit = fit_hi(&data, 2).unwrap();
    assert!(fit.chi2 < 1e-12, "{}", fit.chi2);
    assert!((fit.v - v).abs() < 1e-8);
}

#[test]
fn wrong_dimension_fits_badly_but_still_returns() {
    let v = 0.1;
    let grid = hi_grid(v);
    let est = synthetic(&|t| hi_cdf(t, v, 4), std::f64::consts::PI / v, &grid, 1024, 4, 2);
    let data = est.fit_data().unwrap();
    let good = fit_hi(&data, 4).unwrap();
    let bad = fit_hi(&data, 2).unwrap();
    assert!(bad.chi2_per_dof > 10.0 * good.chi2_per_dof.max(1.0), "{} vs {}", bad.chi2_per_dof, good.chi2_per_dof);
}

#[test]
fn expansion_improves_on_anisotropic_mixtures_and_selection_follows_the_rule() {
    let (v1, v2) = (0.1, 0.06);
    let mix = move |t: f64| 0.5 * hi_cdf(t, v1, 2) + 0.5 * hi_cdf(t, v2, 2);
    let grid: Vec<f64> = (0..=40).map(|i| std::f64::consts::PI / v2 * 1.05 * i as f64 / 40.0).collect();
    let est = synthetic(&mix, std::f64::consts::PI / v2, &grid, 1024, 21, 1);
    let data = est.fit_data().unwrap();
    let hi = fit_hi(&data, 2).unwrap();
    let sel = select_expansion(&data, 2, 15).unwrap();
    assert!(sel.chosen.chi2_per_dof < hi.chi2_per_dof, "{} vs {}", sel.chosen.chi2_per_dof, hi.chi2_per_dof);
    // the trace obeys the stopping rule
    let tr = &sel.trace;
    for w in tr.windows(2).take(tr.len().saturating_sub(2)) {
        assert!(w[0].chi2_per_dof >= 1.0 && w[1].chi2_per_dof < w[0].chi2_per_dof);
    }
    let last = tr.last().unwrap();
    match sel.stop {
        spinmet::haar::fit::SelectionStop::BelowUnity => assert!(last.chi2_per_dof < 1.0),
        spinmet::haar::fit::SelectionStop::StoppedDecreasing => {
            assert!(last.chi2_per_dof >= tr[tr.len() - 2].chi2_per_dof);
            assert_eq!(sel.chosen.coefficients.len(), tr[tr.len() - 2].n_terms);
        }
        spinmet::haar::fit::SelectionStop::Exhausted => assert_eq!(last.l, 15),
    }
    // constraints of the chosen fit
    let c = &sel.chosen.coefficients;
    let norm: f64 = c.iter().map(|&(n, c)| c * wallis(n)).sum();
    assert!((norm - 1.0).abs() < 1e-10);
    if c.len() > 1 {
        assert!(c.iter().map(|&(_, c)| c).sum::<f64>().abs() < 1e-10);
    }
}

#[test]
fn fits_reject_degenerate_and_underdetermined_data() {
    let t = vec![0.0, 1.0, 2.0];
    let flat = FitData { t: t.clone(), p: vec![1.0; 3], variance: vec![1e-4; 3] };
    assert!(matches!(fit_hi(&flat, 2), Err(spinmet::Error::DegenerateData(_))));
    let few = FitData { t, p: vec![0.0, 0.5, 1.0], variance: vec![1e-4; 3] };
    assert!(matches!(fit_expansion(&few, 2, 6), Err(spinmet::Error::Underdetermined { .. })));
}

#[test]
fn isotropic_model_bounds_the_leading_term_alone() {
    // with the corrections removed the expansion is the HI model at ṽ
    let v = 0.08;
    for i in 0..50 {
        let t = i as f64;
        let lead = sin_power_integral(5, 0.5 * v * t) / wallis(5);
        assert!(hi_cdf(t, v, 4) >= lead - 1e-15);
    }
}
