use fput::classical::*;
use fput::model::Potential;
use proptest::prelude::*;
use std::f64::consts::PI;

fn henon() -> Potential {
    Potential::new(1.0, 0.0)
}

fn opts() -> IntegratorOptions {
    IntegratorOptions::default()
}

fn max_rel_drift(traj: &Trajectory, e0: f64) -> f64 {
    let pot = traj.potential;
    traj.points.iter().map(|p| (p.energy(&pot) - e0).abs() / e0).fold(0.0, f64::max)
}

#[test]
fn harmonic_orbits_are_exact_circles() {
    let pot = Potential::new(0.0, 0.0);
    let s = PhasePoint::new(0.1, -0.2, 0.3, 0.05);
    let e0 = s.energy(&pot);
    let traj = integrate(&pot, s, 1000.0, false, &opts()).unwrap();
    assert_eq!(*traj.times.last().unwrap(), 1000.0);
    let mut worst: f64 = 0.0;
    for (t, p) in traj.times.iter().zip(&traj.points) {
        let (c, sn) = (t.cos(), t.sin());
        let exact = [s.q1 * c + s.p1 * sn, s.q2 * c + s.p2 * sn, s.p1 * c - s.q1 * sn, s.p2 * c - s.q2 * sn];
        for (a, b) in p.to_array().iter().zip(exact) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst < 1e-10, "deviation from the exact circle {worst}");
    let d = max_rel_drift(&traj, e0);
    assert!(d < 1e-12, "energy drift {d}");
}

#[test]
fn chaotic_orbit_is_bounded_and_conserves_energy() {
    let pot = henon();
    let s = PhasePoint::on_section(0.14, &pot, -0.2, 0.0).unwrap();
    let traj = integrate(&pot, s, 1000.0, false, &opts()).unwrap();
    let rmax = traj.points.iter().map(|p| p.q1.hypot(p.q2)).fold(0.0, f64::max);
    assert!(rmax < 1.0, "orbit left the well: r = {rmax}");
    let d = max_rel_drift(&traj, 0.14);
    assert!(d < 1e-10, "energy drift {d}");
}

#[test]
fn energy_drift_with_variational_equations() {
    let pot = Potential::new(1.0, 1.0 / 16.0);
    for (e, q2) in [(0.05, 0.1), (0.16, -0.2), (1.0 / 3.0, -0.3)] {
        let s = PhasePoint::on_section(e, &pot, q2, 0.0).unwrap();
        let traj = integrate(&pot, s, 1000.0, true, &opts()).unwrap();
        let d = max_rel_drift(&traj, e);
        assert!(d < 1e-10, "E = {e}: energy drift {d}");
        for dev in &traj.deviations {
            for v in dev {
                let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-14);
            }
        }
        assert!(traj.log_norms.iter().all(|x| x.is_finite()));
    }
}

#[test]
fn time_reversal_returns_to_start() {
    let pot = henon();
    for (e, q2) in [(0.05, 0.1), (0.14, -0.2)] {
        let s = PhasePoint::on_section(e, &pot, q2, 0.01).unwrap();
        // momentum flip
        let fwd = integrate(&pot, s, 100.0, false, &opts()).unwrap().last();
        let flipped = PhasePoint::new(fwd.q1, fwd.q2, -fwd.p1, -fwd.p2);
        let back = integrate(&pot, flipped, 100.0, false, &opts()).unwrap().last();
        let err = [back.q1 - s.q1, back.q2 - s.q2, -back.p1 - s.p1, -back.p2 - s.p2].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(err < 1e-8, "E = {e}: momentum-flip error {err}");
        // negative time
        let back = integrate(&pot, fwd, -100.0, false, &opts()).unwrap();
        assert_eq!(*back.times.last().unwrap(), -100.0);
        let b = back.last();
        let err = [b.q1 - s.q1, b.q2 - s.q2, b.p1 - s.p1, b.p2 - s.p2].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(err < 1e-8, "E = {e}: backward error {err}");
    }
}

#[test]
fn harmonic_section_repeats() {
    let pot = Potential::new(0.0, 0.0);
    let s = PhasePoint::on_section(0.1, &pot, 0.2, -0.1).unwrap();
    let traj = integrate(&pot, s, 1000.0, false, &opts()).unwrap();
    let pts = sos_section(&traj).unwrap();
    // period 2 pi, first point is the start
    assert_eq!(pts.len(), (1000.0 / (2.0 * PI)) as usize + 1);
    for (q2, p2) in &pts {
        assert!((q2 - 0.2).abs() < 1e-10 && (p2 + 0.1).abs() < 1e-10, "({q2}, {p2})");
    }
}

#[test]
fn section_points_lie_on_the_plane_and_shell() {
    let pot = henon();
    for (e, q2) in [(0.16, -0.2), (0.05, 0.1)] {
        let s = PhasePoint::on_section(e, &pot, q2, 0.0).unwrap();
        let traj = integrate(&pot, s, 1000.0, false, &opts()).unwrap();
        let pts = section_crossings(&traj).unwrap();
        assert!(pts.len() > 50);
        for p in pts {
            assert!(p.q1.abs() < 1e-12);
            assert!(p.p1 > 0.0);
            assert!((p.energy(&pot) - e).abs() < 1e-9);
        }
    }
}

#[test]
fn polished_crossing_matches_time_domain_crossing() {
    let pot = henon();
    let s = PhasePoint::on_section(0.12, &pot, 0.05, 0.1).unwrap();
    let traj = integrate(&pot, s, 60.0, false, &opts()).unwrap();
    let pts = section_crossings(&traj).unwrap();
    assert!(pts.len() > 2);
    // bisect q1(t) = 0 with fresh integrations around the second crossing
    let k = traj.points.windows(2).position(|w| w[0].q1 < 0.0 && w[1].q1 >= 0.0 && w[0].p1 > 0.0).unwrap();
    let (mut lo, mut hi) = (traj.times[k], traj.times[k + 1]);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if integrate(&pot, s, mid, false, &opts()).unwrap().last().q1 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = integrate(&pot, s, hi, false, &opts()).unwrap().last();
    assert!((p.q2 - pts[1].q2).abs() < 1e-10 && (p.p2 - pts[1].p2).abs() < 1e-10);
}

#[test]
fn regular_orbit_crossing_rate_is_steady() {
    let pot = henon();
    let s = PhasePoint::on_section(0.05, &pot, 0.1, 0.05).unwrap();
    let n1 = sos_section(&integrate(&pot, s, 1000.0, false, &opts()).unwrap()).unwrap().len() as i64;
    let n2 = sos_section(&integrate(&pot, s, 2000.0, false, &opts()).unwrap()).unwrap().len() as i64;
    // 1 for the start point counted in both
    assert!((n2 - 1 - 2 * (n1 - 1)).abs() <= 1, "{n1} vs {n2}");
}

#[test]
fn escape_above_the_saddle_is_reported() {
    let pot = henon();
    let s = PhasePoint::on_section(0.3, &pot, 0.5, 0.0).unwrap();
    let err = integrate(&pot, s, 1000.0, false, &opts()).unwrap_err();
    assert!(err.to_string().contains("escaped"), "{err}");
    assert!(sali(&pot, s, 1000.0, &opts()).is_err());
}

#[test]
fn sali_separates_regular_and_chaotic_orbits() {
    let pot = henon();
    let reg = sali(&pot, PhasePoint::on_section(0.05, &pot, 0.1, 0.05).unwrap(), 1000.0, &opts()).unwrap();
    assert!(reg.final_value > 1e-4, "regular SALI {}", reg.final_value);
    assert_eq!(reg.final_time, 1000.0);
    assert!(!reg.stopped_early);
    let ch = sali(&pot, PhasePoint::on_section(0.14, &pot, -0.2, 0.0).unwrap(), 1000.0, &opts()).unwrap();
    assert!(ch.final_value < 1e-8, "chaotic SALI {}", ch.final_value);
    assert!(ch.is_chaotic(SALI_THRESHOLD));
    assert!(!reg.is_chaotic(SALI_THRESHOLD));
    // logarithmic sampling
    assert!(reg.times.windows(2).all(|w| w[1] > w[0]));
    assert!(reg.times.len() > 30 && reg.times.len() < 60);
}

#[test]
fn identical_deviation_vectors_give_zero_sali() {
    let pot = henon();
    let s = PhasePoint::on_section(0.1, &pot, 0.0, 0.0).unwrap();
    let v = [0.3, -0.1, 0.2, 0.5];
    let out = sali_with(&pot, s, v, v, 100.0, &opts()).unwrap();
    assert!(out.values.iter().all(|&x| x == 0.0));
    let anti = sali_with(&pot, s, v, v.map(|x| -2.0 * x), 100.0, &opts()).unwrap();
    assert!(anti.values.iter().all(|&x| x == 0.0));
}

#[test]
fn near_integrable_map_is_fully_regular() {
    let pot = henon();
    let m = sali_map(0.01, &pot, &SosGridSpec::square(16), 1000.0, SALI_THRESHOLD, &opts()).unwrap();
    assert_eq!(m.eta_c, 0.0);
    assert!(m.grid.allowed_count() > 100);
}

#[test]
fn sali_map_flags_forbidden_cells() {
    let pot = henon();
    let e = 0.1;
    let m = sali_map(e, &pot, &SosGridSpec::square(12), 50.0, SALI_THRESHOLD, &opts()).unwrap();
    let (q0, q1, p0, p1) = m.grid.bounds;
    assert!((p1 - (2.0 * e).sqrt()).abs() < 1e-15 && (p0 + p1).abs() < 1e-15);
    // section edges are roots of V(0, q2) = E
    assert!((pot.v(0.0, q0) - e).abs() < 1e-12 && (pot.v(0.0, q1) - e).abs() < 1e-12);
    let mask = m.grid.allowed_mask(e, &pot);
    for k in 0..mask.len() {
        assert_eq!(mask[k], m.grid.values[k].is_some());
        assert_eq!(mask[k], m.chaotic[k] != 0);
    }
    // corners lie outside the allowed region
    assert!(!mask[0] && !mask[mask.len() - 1]);
    let chaotic = m.chaotic.iter().filter(|&&c| c == 1).count();
    assert_eq!(m.eta_c, chaotic as f64 / m.grid.allowed_count() as f64);
}

#[test]
fn harmonic_section_bounds_are_the_circle() {
    let pot = Potential::new(0.0, 0.0);
    let (a, b, c, d) = sos_bounds(0.08, &pot).unwrap();
    for (x, y) in [(a, -0.4), (b, 0.4), (c, -0.4), (d, 0.4)] {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
    assert!(sos_bounds(0.2, &henon()).is_err());
}

#[test]
fn zero_variance_ensemble_needs_no_transport() {
    let pot = Potential::new(0.0, 0.0);
    let spec = EnsembleSpec { n_ics: 16, q2_range: (-0.2, -0.2), horizon: 200.0, ..Default::default() };
    let r = transport_time(0.1, &pot, &spec, 0.02, &opts()).unwrap();
    assert_eq!(r.t_t, 0.0);
    assert!(r.sigma_series.iter().all(|&s| s == 0.0));
}

#[test]
fn harmonic_ensemble_variance_matches_closed_form() {
    let pot = Potential::new(0.0, 0.0);
    let e = 0.1;
    let spec = EnsembleSpec { n_ics: 200, horizon: 200.0, ..Default::default() };
    let s = momentum_variance_series(e, &pot, &spec, &opts()).unwrap();
    let (a, b) = spec.q2_range;
    let q2: Vec<f64> = (0..spec.n_ics).map(|i| a + (i as f64 + 0.5) * (b - a) / spec.n_ics as f64).collect();
    let p1: Vec<f64> = q2.iter().map(|q| (2.0 * e - q * q).sqrt()).collect();
    let var = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
    };
    let (vp, vq) = (var(&p1), var(&q2));
    for (t, sig) in s.times.iter().zip(&s.sigma) {
        let exact = t.cos().powi(2) * vp + t.sin().powi(2) * vq;
        assert!((sig - exact).abs() < 1e-12, "t = {t}: {sig} vs {exact}");
    }
    // the oscillation never damps, so no transport time exists
    let err = analyze_transport(&s, 30.0, 0.02).unwrap_err();
    assert!(err.to_string().contains("horizon too short"));
}

#[test]
fn ensemble_outside_the_section_is_rejected() {
    let spec = EnsembleSpec { n_ics: 10, horizon: 10.0, ..Default::default() };
    assert!(momentum_variance_series(0.01, &henon(), &spec, &opts()).is_err());
}

fn relaxing_series(t0: f64, amp: f64, horizon: f64) -> TransportSeries {
    let times: Vec<f64> = (0..=(horizon / 0.5) as usize).map(|k| k as f64 * 0.5).collect();
    let sigma = times.iter().map(|&t| 1.0 + amp * (-t / t0).exp() * (0.7 * t).cos()).collect();
    TransportSeries { times, sigma }
}

#[test]
fn fluctuation_threshold_on_a_damped_series() {
    let s = relaxing_series(50.0, 0.5, 1000.0);
    let r = analyze_transport(&s, 30.0, 0.02).unwrap();
    // mu ~ amp^2 e^{-2t/t0} / 2 relative to its peak near the start:
    // 0.02 is reached after t0 ln(50) / 2 ~ 98 beyond the first window centre
    assert!(r.t_t > 80.0 && r.t_t < 140.0, "t_T = {}", r.t_t);
    assert!((r.sat_value - 1.0).abs() < 1e-6);
    assert_eq!(r.threshold_used, 0.02);
    assert_eq!(r.mu_series.len(), r.mu_times.len());
    let r1 = analyze_transport(&s, 30.0, 0.01).unwrap();
    assert!(r1.t_t >= r.t_t);
}

#[test]
fn unsettled_series_reports_a_short_horizon() {
    let times: Vec<f64> = (0..2000).map(|k| k as f64 * 0.5).collect();
    let sigma = times.iter().map(|&t| 1.0 + 0.1 * (0.3 * t).sin() * (1.0 + t / 100.0)).collect();
    let err = analyze_transport(&TransportSeries { times, sigma }, 30.0, 0.02).unwrap_err();
    assert!(err.to_string().contains("horizon too short"));
}

#[test]
fn eps_estimator_on_a_damped_series() {
    let s = relaxing_series(50.0, 0.5, 1000.0);
    let t = transport_time_eps(&s, 1e-3).unwrap();
    // 0.5 e^{-t/50} = 1e-3 at t = 50 ln 500
    let expect = 50.0 * 500f64.ln();
    assert!(t <= expect + 0.5 && t > expect - 10.0, "{t} vs {expect}");
}

#[test]
fn alpha_ratio_scales_inversely_with_hbar() {
    let pot = henon();
    let a1 = alpha_ratio(0.16, &pot, 1e-3, 100.0).unwrap();
    let a2 = alpha_ratio(0.16, &pot, 5e-4, 100.0).unwrap();
    assert_eq!(a2, 2.0 * a1);
    let f = fput::spectral::scaled_dos(0.16, &pot).unwrap();
    assert_eq!(a1, f / (1e-3 * 100.0));
    assert!(alpha_ratio(0.16, &pot, 1e-3, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_conserved_on_random_orbits(e in 0.01f64..0.16, u in 0.05f64..0.95, v in -0.9f64..0.9) {
        let pot = henon();
        let (q0, q1, _, _) = sos_bounds(e, &pot).unwrap();
        let q2 = q0 + u * (q1 - q0);
        let pmax = (2.0 * (e - pot.v(0.0, q2))).sqrt();
        let s = PhasePoint::on_section(e, &pot, q2, v * pmax).unwrap();
        let traj = integrate(&pot, s, 200.0, false, &opts()).unwrap();
        prop_assert!(max_rel_drift(&traj, e) < 1e-10);
        for p in section_crossings(&traj).unwrap() {
            prop_assert!(p.q1.abs() < 1e-12);
            prop_assert!((p.energy(&pot) - e).abs() < 1e-9);
        }
    }

    #[test]
    fn sali_stays_in_range(e in 0.02f64..0.16, u in 0.1f64..0.9) {
        let pot = henon();
        let (q0, q1, _, _) = sos_bounds(e, &pot).unwrap();
        let s = PhasePoint::on_section(e, &pot, q0 + u * (q1 - q0), 0.0).unwrap();
        let out = sali(&pot, s, 100.0, &opts()).unwrap();
        for v in out.values {
            prop_assert!((0.0..=2f64.sqrt() + 1e-12).contains(&v));
        }
    }

    #[test]
    fn tighter_threshold_never_settles_earlier(t0 in 10.0f64..200.0, amp in 0.01f64..1.0) {
        let s = relaxing_series(t0, amp, 2000.0);
        let a = analyze_transport(&s, 30.0, 0.02).unwrap();
        let b = analyze_transport(&s, 30.0, 0.01).unwrap();
        prop_assert!(a.t_t >= 0.0);
        prop_assert!(b.t_t >= a.t_t);
    }
}
