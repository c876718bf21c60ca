use fput::basis::Sector;
use fput::classical::SosGrid;
use fput::husimi::{FieldKind, HusimiField, LOG_FLOOR};
use fput::stats::*;
use fput::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, StandardNormal};

fn grid(nx: usize, ny: usize) -> SosGrid {
    SosGrid { bounds: (-1.0, 1.0, -1.0, 1.0), nx, ny, values: vec![None; nx * ny] }
}

fn field(values: Vec<Option<f64>>, nx: usize, ny: usize) -> HusimiField {
    let mut g = grid(nx, ny);
    g.values = values;
    HusimiField { kind: FieldKind::Qsos, energy: 0.14, hbar: 0.01, grid: g, normalization: 1.0, log_floor: LOG_FLOOR }
}

fn cmap(labels: Vec<i8>, nx: usize, ny: usize) -> ChaosMap {
    ChaosMap::new(&grid(nx, ny), labels).unwrap()
}

#[test]
fn overlap_index_definition() {
    let f = field(vec![Some(1.0), Some(2.0), Some(0.0), None], 2, 2);
    assert_eq!(overlap_index(&f, &cmap(vec![1, 1, -1, 0], 2, 2)).unwrap(), 1.0);
    assert_eq!(overlap_index(&f, &cmap(vec![-1, -1, 1, 0], 2, 2)).unwrap(), -1.0);
    let g = field(vec![Some(1.5), Some(1.5), Some(7.0), None], 2, 2);
    assert_eq!(overlap_index(&g, &cmap(vec![1, -1, 0, 1], 2, 2)).unwrap(), 0.0);
    // empty and unclassified cells are excluded from both sums
    let h = field(vec![Some(1.0), Some(3.0), None, Some(100.0)], 2, 2);
    assert!((overlap_index(&h, &cmap(vec![1, -1, 1, 0], 2, 2)).unwrap() - (-0.5)).abs() < 1e-15);
}

#[test]
fn mismatched_grids_are_rejected() {
    let f = field(vec![Some(1.0); 4], 2, 2);
    let m = cmap(vec![1; 6], 3, 2);
    assert!(matches!(overlap_index(&f, &m), Err(Error::GridMismatch(_))));
    assert!(matches!(elm(&f, &m, 1.0), Err(Error::GridMismatch(_))));
    assert!(ChaosMap::new(&grid(2, 2), vec![1; 3]).is_err());
    assert!(ChaosMap::new(&grid(1, 1), vec![2]).is_err());
}

#[test]
fn elm_extremes() {
    let n = 50;
    let labels: Vec<i8> = (0..n).map(|k| if k % 5 == 0 { -1 } else { 1 }).collect();
    let n_c = labels.iter().filter(|&&l| l == 1).count() as f64;
    let m = cmap(labels.clone(), n, 1);
    let uniform = field((0..n).map(|k| Some(if k % 5 == 0 { 9.0 } else { 0.3 })).collect(), n, 1);
    let single = field((0..n).map(|k| Some(if k == 1 { 2.0 } else if k % 5 == 0 { 5.0 } else { 0.0 })).collect(), n, 1);
    for alpha in [0.5, 1.0, 2.0, 3.0, f64::INFINITY] {
        assert!((elm(&uniform, &m, alpha).unwrap() - 1.0).abs() < 1e-14, "alpha {alpha}");
        assert!((elm(&single, &m, alpha).unwrap() - 1.0 / n_c).abs() < 1e-15, "alpha {alpha}");
    }
    assert!(elm(&uniform, &cmap(vec![-1; n], n, 1), 1.0).is_err());
    assert!(elm(&uniform, &m, 0.0).is_err());
}

#[test]
fn random_state_bounds() {
    assert!((random_state_bound(2.0).unwrap() - 0.5).abs() < 1e-14);
    let l1 = random_state_bound(1.0).unwrap();
    assert!((l1 - (EULER_GAMMA - 1.0).exp()).abs() < 1e-15);
    assert!((l1 - 0.655_219).abs() < 1e-6);
    // continuous through alpha = 1 and decreasing
    for d in [1e-6, 1e-9] {
        assert!((random_state_bound(1.0 + d).unwrap() - l1).abs() < 1e-5);
        assert!((random_state_bound(1.0 - d).unwrap() - l1).abs() < 1e-5);
    }
    let mut prev = random_state_bound(0.1).unwrap();
    for k in 2..60 {
        let l = random_state_bound(0.1 * k as f64).unwrap();
        assert!(l < prev);
        prev = l;
    }
    assert!(random_state_bound(0.0).is_err());
}

#[test]
fn exponential_weights_reach_the_random_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q: Vec<f64> = (0..200_000).map(|_| Exp1.sample(&mut rng)).collect();
    for alpha in [1.0, 2.0, 3.0] {
        let l = elm_of_weights(&q, alpha).unwrap();
        assert!((l - random_state_bound(alpha).unwrap()).abs() < 0.01, "alpha {alpha}: {l}");
    }
}

#[test]
fn random_unit_vectors_are_normalized_and_reproducible() {
    let a = random_unit_vector(500, 7);
    assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(a, random_unit_vector(500, 7));
    assert_ne!(a, random_unit_vector(500, 8));
}

#[test]
fn mixed_fraction_and_classification() {
    let ms = [-1.0, -0.5, 0.0, 0.3, 0.8, 1.0];
    assert_eq!(mixed_fraction(&ms, (-1.0, 1.0)).unwrap(), 1.0);
    assert_eq!(mixed_fraction(&ms, WINDOW_LOWER).unwrap(), 2.0 / 6.0);
    assert_eq!(mixed_fraction(&ms, WINDOW_WIDE).unwrap(), 4.0 / 6.0);
    assert!(mixed_fraction(&[], WINDOW_WIDE).is_err());

    let stats: Vec<StateStats> = ms
        .iter()
        .map(|&m| StateStats { energy: 0.1, m, elm: vec![(1.0, 0.5), (2.0, 0.4)], sector: Sector::Singlet, hbar: 0.01 })
        .collect();
    assert_eq!(classify_chaotic(&stats, -1.0).len(), stats.len());
    assert_eq!(classify_chaotic(&stats, DEFAULT_M_CHAOTIC).len(), 2);
    let regular: Vec<StateStats> = stats.iter().map(|s| StateStats { m: -0.95, ..s.clone() }).collect();
    assert!(classify_chaotic(&regular, DEFAULT_M_CHAOTIC).is_empty());
    assert!(stats[0].is_renyi_monotone(0.0));
    assert_eq!(stats[0].elm_at(2.0), Some(0.4));
}

#[test]
fn state_stats_combines_m_and_elm() {
    let f = field(vec![Some(1.0), Some(1.0), Some(2.0), None], 2, 2);
    let m = cmap(vec![1, 1, -1, 0], 2, 2);
    let s = state_stats(&f, &m, &[2.0, 1.0], Sector::DoubletB).unwrap();
    assert!((s.m - 0.0).abs() < 1e-15);
    assert_eq!(s.elm, vec![(1.0, 1.0), (2.0, 1.0)]);
    assert_eq!(s.sector, Sector::DoubletB);
}

#[test]
fn power_law_recovers_exact_exponent() {
    let hbars = [1e-3, 8e-4, 6e-4, 5e-4, 4e-4];
    let chi: Vec<f64> = hbars.iter().map(|h: &f64| 3.0 * h.powf(0.5)).collect();
    let fit = fit_power_law(&hbars, &chi).unwrap();
    assert!((fit.xi - 0.5).abs() < 1e-12);
    assert!((fit.prefactor - 3.0).abs() < 1e-10);
    assert_eq!(fit.excluded, 0);
    let series = MixedFractionSeries { hbars: hbars.to_vec(), chi, window: WINDOW_LOWER, energy: 0.14, delta_e: 0.01 };
    assert!((series.fit().unwrap().xi - 0.5).abs() < 1e-12);
}

#[test]
fn power_law_with_noise_is_within_three_standard_errors() {
    let hbars = [4e-3, 3e-3, 2e-3, 1.5e-3, 1e-3, 5e-4];
    let mut inside = 0;
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chi: Vec<f64> = hbars
            .iter()
            .map(|h: &f64| {
                let z: f64 = StandardNormal.sample(&mut rng);
                h.powf(0.42) * (1.0 + 0.05 * z)
            })
            .collect();
        let fit = fit_power_law(&hbars, &chi).unwrap();
        if (fit.xi - 0.42).abs() <= 3.0 * fit.std_err {
            inside += 1;
        }
    }
    // 3 s.e. of a t-distribution with 4 degrees of freedom covers about 96%
    assert!(inside >= 180, "{inside}/200");
}

#[test]
fn power_law_excludes_zero_points_and_needs_three() {
    let fit = fit_power_law(&[1e-3, 2e-3, 3e-3, 4e-3], &[0.0, 0.1, 0.2, 0.3]).unwrap();
    assert_eq!((fit.excluded, fit.n_used), (1, 3));
    assert!(fit_power_law(&[1e-3, 2e-3, 3e-3], &[0.0, 0.1, 0.2]).is_err());
    assert!(fit_power_law(&[1e-3, 2e-3], &[0.1, 0.2]).is_err());
}

fn beta_samples(a: f64, b: f64, l0: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Beta::new(a, b).unwrap();
    (0..n).map(|_| l0 * d.sample(&mut rng)).collect()
}

#[test]
fn beta_fit_recovers_known_parameters() {
    // the sampling spread of beta_b at n = 1200 is about 15%, so recovery
    // is judged on the median of replicate draws
    let fits: Vec<BetaFit> = (0..12).map(|seed| fit_beta(&beta_samples(12.6, 3.55, 0.72, 1200, seed)).unwrap()).collect();
    let median = |f: &dyn Fn(&BetaFit) -> f64| {
        let mut v: Vec<f64> = fits.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        0.5 * (v[5] + v[6])
    };
    let (ma, mb) = (median(&|f| f.beta_a), median(&|f| f.beta_b));
    assert!((ma - 11.6).abs() < 0.1 * 11.6, "median beta_a {ma}");
    assert!((mb - 2.55).abs() < 0.1 * 2.55, "median beta_b {mb}");
    let close = fits.iter().filter(|f| (f.beta_a - 11.6).abs() < 1.16 && (f.beta_b - 2.55).abs() < 0.255).count();
    assert!(close >= 6, "{close}/12 draws within 10%");
    assert!(fits.iter().all(|f| f.ks < 0.04));
    let s = beta_samples(12.6, 3.55, 0.72, 1200, 11);
    let fit = fits[11].clone();
    assert!(fit.l0 >= s.iter().cloned().fold(0.0, f64::max));
    assert_eq!(fit.n_samples, 1200);

    // variance identity against the sample variance
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = s.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let se = ((m4 - var * var) / n).sqrt();
    assert!((fit.variance() - var).abs() < 2.0 * se, "{} vs {var} +- {se}", fit.variance());
    assert!((fit.mean() - mean).abs() < 3.0 * (var / n).sqrt());
    // density integrates to one
    let m = 20000;
    let h = fit.l0 / m as f64;
    let total: f64 = (0..m).map(|k| fit.pdf((k as f64 + 0.5) * h)).sum::<f64>() * h;
    assert!((total - 1.0).abs() < 1e-6);
    assert!((fit.cdf(fit.l0) - 1.0).abs() < 1e-15);
}

#[test]
fn beta_fit_handles_samples_clustered_at_the_edge() {
    let s = beta_samples(400.0, 3.0, 0.7, 1200, 12);
    let fit = fit_beta(&s).unwrap();
    assert!(fit.beta_a > 100.0, "{fit:?}");
    assert!(fit.ks < 0.04, "{fit:?}");
}

#[test]
fn beta_fit_error_shrinks_with_sample_size() {
    let rms = |n: usize| {
        let errs: Vec<f64> = (0..8)
            .map(|r| {
                let fit = fit_beta(&beta_samples(12.6, 3.55, 0.72, n, 100 + r)).unwrap();
                (fit.mean() - 0.72 * 12.6 / 16.15).powi(2) + (fit.variance().sqrt() - 0.72 * (12.6f64 * 3.55 / (16.15f64.powi(2) * 17.15)).sqrt()).powi(2)
            })
            .collect();
        (errs.iter().sum::<f64>() / errs.len() as f64).sqrt()
    };
    let (e1, e2, e3) = (rms(300), rms(1200), rms(4800));
    assert!(e1 > e2 && e2 > e3, "{e1} {e2} {e3}");
    // n^{-1/2}: a factor 4 per 16x samples, within sampling noise
    let ratio = e1 / e3;
    assert!(ratio > 2.0 && ratio < 8.0, "{ratio}");
}

#[test]
fn beta_fit_rejects_bad_input() {
    assert!(fit_beta(&[0.5; 100]).is_err());
    assert!(fit_beta(&beta_samples(2.0, 2.0, 1.0, 20, 1)).is_err());
    let mut s = beta_samples(2.0, 2.0, 1.0, 100, 1);
    s[3] = -0.1;
    assert!(fit_beta(&s).is_err());
}

#[test]
fn histogram_binning() {
    let h = histogram(&[-1.0, -0.99, 0.0, 0.999, 1.0, 1.5], -1.0, 1.0, 4).unwrap();
    assert_eq!(h, vec![2, 0, 1, 2]);
    let m = m_histogram(&[-1.0, 1.0, 0.0]);
    assert_eq!(m.len(), M_BINS);
    assert_eq!(m.iter().sum::<usize>(), 3);
    assert!(histogram(&[0.0], 1.0, 1.0, 3).is_err());
    assert!(histogram(&[0.0], 0.0, 1.0, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overlap_index_is_scale_invariant_and_bounded(seed in 0u64..10_000, scale in 1e-6..1e6f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 30;
        let vals: Vec<Option<f64>> = (0..n).map(|_| if rng.gen_bool(0.8) { Some(rng.gen_range(0.0..1.0)) } else { None }).collect();
        let labels: Vec<i8> = (0..n).map(|_| rng.gen_range(-1..=1)).collect();
        let m = cmap(labels, n, 1);
        let a = overlap_index(&field(vals.clone(), n, 1), &m);
        let b = overlap_index(&field(vals.iter().map(|v| v.map(|x| x * scale)).collect(), n, 1), &m);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((-1.0..=1.0).contains(&a));
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn elm_is_bounded_monotone_and_permutation_invariant(seed in 0u64..10_000, scale in 1e-6..1e6f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 40;
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0f64).powi(3)).collect();
        let mut prev = f64::INFINITY;
        for alpha in [0.5, 1.0, 2.0, 3.0, 10.0, f64::INFINITY] {
            let l = elm_of_weights(&q, alpha).unwrap();
            prop_assert!(l >= 1.0 / n as f64 && l <= 1.0);
            prop_assert!(l <= prev * (1.0 + 1e-12));
            prev = l;
            let mut p: Vec<f64> = q.iter().map(|x| x * scale).collect();
            p.reverse();
            p.swap(0, n / 2);
            prop_assert!((elm_of_weights(&p, alpha).unwrap() - l).abs() < 1e-12 * l);
        }
    }
}
