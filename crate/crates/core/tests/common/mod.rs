//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use fput::basis::{assemble_hamiltonian, enumerate_sector, ModelParams, Sector, SectorBasis};
use fput::classical::SosGrid;
use fput::husimi::CoherentPoint;
use fput::spectral::{eig_dense, EigenWindow};
use fput::wigner::CartesianState;
use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type C = Complex64;

/// Dense complex square matrix, row-major.
#[derive(Clone, Debug)]
pub struct Dense {
    pub n: usize,
    pub a: Vec<C>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Dense { n, a: vec![C::new(0.0, 0.0); n * n] }
    }
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = C::new(1.0, 0.0);
        }
        m
    }
    pub fn at(&self, i: usize, j: usize) -> C {
        self.a[i * self.n + j]
    }
    pub fn set(&mut self, i: usize, j: usize, v: C) {
        self.a[i * self.n + j] = v;
    }
    pub fn mul(&self, o: &Dense) -> Dense {
        let n = self.n;
        let mut r = Dense::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let x = self.a[i * n + k];
                if x == C::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    r.a[i * n + j] += x * o.a[k * n + j];
                }
            }
        }
        r
    }
    pub fn add(&self, o: &Dense, s: C) -> Dense {
        let mut r = self.clone();
        for (x, y) in r.a.iter_mut().zip(&o.a) {
            *x += s * y;
        }
        r
    }
    pub fn adjoint(&self) -> Dense {
        let n = self.n;
        let mut r = Dense::zeros(n);
        for i in 0..n {
            for j in 0..n {
                r.a[j * n + i] = self.a[i * n + j].conj();
            }
        }
        r
    }
    pub fn scale(&self, s: C) -> Dense {
        Dense { n: self.n, a: self.a.iter().map(|x| x * s).collect() }
    }
}

/// Two-mode Fock space with total occupation `<= max_total`, states `(k1, k2)`.
pub struct TwoModeFock {
    pub states: Vec<(usize, usize)>,
    pub max_total: usize,
}

impl TwoModeFock {
    pub fn new(max_total: usize) -> Self {
        let mut states = Vec::new();
        for t in 0..=max_total {
            for k1 in 0..=t {
                states.push((k1, t - k1));
            }
        }
        TwoModeFock { states, max_total }
    }
    pub fn dim(&self) -> usize {
        self.states.len()
    }
    pub fn index(&self, k1: usize, k2: usize) -> Option<usize> {
        if k1 + k2 > self.max_total {
            return None;
        }
        self.states.iter().position(|&s| s == (k1, k2))
    }
    /// Lowering operator of mode 0 or 1.
    pub fn lower(&self, mode: usize) -> Dense {
        let mut m = Dense::zeros(self.dim());
        for (j, &(k1, k2)) in self.states.iter().enumerate() {
            let (k, tgt) = if mode == 0 {
                (k1, if k1 > 0 { self.index(k1 - 1, k2) } else { None })
            } else {
                (k2, if k2 > 0 { self.index(k1, k2 - 1) } else { None })
            };
            if let Some(i) = tgt {
                m.set(i, j, C::new((k as f64).sqrt(), 0.0));
            }
        }
        m
    }
}

/// Circular-basis Hamiltonian built directly from rotated ladder operators
/// on the `(n+, n-)` Fock space.
pub fn ladder_hamiltonian(alpha: f64, lambda: f64, hbar: f64, max_total: usize) -> (TwoModeFock, Dense) {
    let f = TwoModeFock::new(max_total);
    let ap = f.lower(0);
    let am = f.lower(1);
    let sh = C::new(hbar.sqrt(), 0.0);
    let qp = am.add(&ap.adjoint(), C::new(1.0, 0.0)).scale(sh);
    let qm = qp.adjoint();
    let qp3 = qp.mul(&qp).mul(&qp);
    let qm3 = qm.mul(&qm).mul(&qm);
    let r2 = qp.mul(&qm);
    let r4 = r2.mul(&r2);
    let mut h = Dense::zeros(f.dim());
    for (i, &(a, b)) in f.states.iter().enumerate() {
        h.set(i, i, C::new(hbar * ((a + b) as f64 + 1.0), 0.0));
    }
    let cubic = qp3.add(&qm3, C::new(-1.0, 0.0)).scale(C::new(0.0, -alpha / 6.0));
    let h = h.add(&cubic, C::new(1.0, 0.0)).add(&r4, C::new(lambda, 0.0));
    (f, h)
}

/// Cartesian-basis Hamiltonian `hbar(n1+n2+1) + alpha(q1^2 q2 - q2^3/3) + lambda(q1^2+q2^2)^2`
/// on the `(n1, n2)` Fock space.
pub fn cartesian_hamiltonian(alpha: f64, lambda: f64, hbar: f64, max_total: usize) -> (TwoModeFock, Dense) {
    let f = TwoModeFock::new(max_total);
    let s = C::new((hbar / 2.0).sqrt(), 0.0);
    let a1 = f.lower(0);
    let a2 = f.lower(1);
    let q1 = a1.add(&a1.adjoint(), C::new(1.0, 0.0)).scale(s);
    let q2 = a2.add(&a2.adjoint(), C::new(1.0, 0.0)).scale(s);
    let q1s = q1.mul(&q1);
    let q2s = q2.mul(&q2);
    let cubic = q1s.mul(&q2).add(&q2s.mul(&q2), C::new(-1.0 / 3.0, 0.0));
    let r2 = q1s.add(&q2s, C::new(1.0, 0.0));
    let r4 = r2.mul(&r2);
    let mut h = Dense::zeros(f.dim());
    for (i, &(a, b)) in f.states.iter().enumerate() {
        h.set(i, i, C::new(hbar * ((a + b) as f64 + 1.0), 0.0));
    }
    let h = h.add(&cubic, C::new(alpha, 0.0)).add(&r4, C::new(lambda, 0.0));
    (f, h)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn fact(n: i64) -> BigInt {
    (1..=n).fold(BigInt::one(), |a, k| a * BigInt::from(k))
}

/// Exact `d^j_{m,m'}(pi/2)` from Wigner's sum, rows `m`, columns `m'`.
pub fn exact_d(two_j: i64, two_m: i64, two_mp: i64) -> f64 {
    let (jm, jmm) = ((two_j + two_m) / 2, (two_j - two_m) / 2);
    let (jp, jpm) = ((two_j + two_mp) / 2, (two_j - two_mp) / 2);
    let dm = (two_m - two_mp) / 2; // m - m'
    let mut sum = BigRational::zero();
    for s in 0..=two_j {
        let a = jp - s;
        let b = dm + s;
        let c = jmm - s;
        if a < 0 || b < 0 || c < 0 {
            continue;
        }
        let den = fact(a) * fact(s) * fact(b) * fact(c);
        let term = BigRational::new(BigInt::one(), den);
        if (dm + s).rem_euclid(2) == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    let f = fact(jm) * fact(jmm) * fact(jp) * fact(jpm);
    let sq = BigRational::from_integer(f) * &sum * &sum / BigRational::from_integer(BigInt::from(2).pow(two_j as u32));
    let mag = sq.to_f64().unwrap().sqrt();
    if sum.is_negative() { -mag } else { mag }
}

pub fn exact_block(two_j: u32) -> Vec<f64> {
    let n = two_j as i64 + 1;
    let mut out = Vec::new();
    for i in 0..n {
        for k in 0..n {
            out.push(exact_d(two_j as i64, two_j as i64 - 2 * i, two_j as i64 - 2 * k));
        }
    }
    out
}

/// Matrix elements of a ladder-built operator between circular states.
pub fn oracle_element(f: &TwoModeFock, h: &Dense, to: (i64, i64), from: (i64, i64)) -> C {
    let idx = |(n, l): (i64, i64)| f.index(((n + l) / 2) as usize, ((n - l) / 2) as usize).unwrap();
    h.at(idx(to), idx(from))
}

pub fn compare_with_oracle(alpha: f64, lambda: f64, hbar: f64, n: u32, sector: Sector) -> f64 {
    let p = ModelParams::new(alpha, lambda, hbar, n, sector).unwrap();
    let b = enumerate_sector(&p);
    let h = assemble_hamiltonian(&p, &b).unwrap();
    let (f, oracle) = ladder_hamiltonian(alpha, lambda, hbar, n as usize + 4);
    let mut worst: f64 = 0.0;
    for i in 0..b.dim() {
        for j in 0..b.dim() {
            let raw = oracle_element(&f, &oracle, b.states[i], b.states[j]);
            let gauged = b.gauge[i].conj() * raw * b.gauge[j];
            worst = worst.max((gauged - C::new(h.get(i, j), 0.0)).norm());
        }
    }
    worst
}

pub fn eigenstates(alpha: f64, lambda: f64, hbar: f64, n: u32, sector: Sector) -> (ModelParams, SectorBasis, EigenWindow) {
    let p = ModelParams::new(alpha, lambda, hbar, n, sector).unwrap();
    let b = enumerate_sector(&p);
    let h = assemble_hamiltonian(&p, &b).unwrap();
    (p, b, eig_dense(&h).unwrap())
}

pub fn nearest(w: &EigenWindow, e: f64) -> usize {
    (0..w.len()).min_by(|&a, &b| (w.energies[a] - e).abs().total_cmp(&(w.energies[b] - e).abs())).unwrap()
}

pub fn random_unit(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

pub fn unit(basis: &SectorBasis, n: i64, l: i64) -> Vec<f64> {
    let mut v = vec![0.0; basis.dim()];
    v[basis.index(n, l).unwrap()] = 1.0;
    v
}

/// `<alpha|n>` for `n = 0..=n_max` from the plain product recurrence.
pub fn fock_overlaps(alpha: C, n_max: usize) -> Vec<C> {
    let mut out = vec![C::new((-0.5 * alpha.norm_sqr()).exp(), 0.0)];
    for n in 0..n_max {
        let next = out[n] * alpha.conj() / ((n + 1) as f64).sqrt();
        out.push(next);
    }
    out
}

/// Husimi function from Cartesian amplitudes, `|sum B <alpha1|n1><alpha2|n2>|^2`.
pub fn cartesian_husimi(cart: &CartesianState, pt: CoherentPoint, hbar: f64) -> f64 {
    let n = cart.cutoff();
    let o1 = fock_overlaps(pt.alpha1(hbar), n);
    let o2 = fock_overlaps(pt.alpha2(hbar), n);
    let mut acc = C::new(0.0, 0.0);
    for n1 in 0..=n {
        for n2 in 0..=n - n1 {
            acc += cart.get(n1, n2) * o1[n1] * o2[n2];
        }
    }
    acc.norm_sqr()
}

pub fn one_cell(x: f64, y: f64) -> SosGrid {
    let h = 1e-6;
    SosGrid { bounds: (x - h, x + h, y - h, y + h), nx: 1, ny: 1, values: vec![None] }
}

pub fn gaussian(x: f64, w: f64) -> f64 {
    (-0.5 * (x / w).powi(2)).exp() / (w * (2.0 * PI).sqrt())
}

/// `int dx dy delta_w(h(x, y) - e) f(x, y)` in polar coordinates, for a
/// shell that every ray from the origin crosses once.
pub fn polar_delta(f: &(dyn Fn(f64, f64) -> f64 + Sync), h: &(dyn Fn(f64, f64) -> f64 + Sync), e: f64, w: f64, rho_max: f64) -> f64 {
    let n_phi = 256;
    let n_coarse = 600;
    let sub = 8;
    let dr = rho_max / n_coarse as f64;
    let total: f64 = (0..n_phi)
        .into_par_iter()
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / n_phi as f64;
            let (c, s) = (phi.cos(), phi.sin());
            let g = |r: f64| h(r * c, r * s) - e;
            let mut acc = 0.0;
            for i in 0..n_coarse {
                let (r0, r1) = (i as f64 * dr, (i + 1) as f64 * dr);
                let (g0, g1) = (g(r0), g(r1));
                if g0.abs().min(g1.abs()) > 12.0 * w && g0.signum() == g1.signum() {
                    continue;
                }
                let hh = dr / sub as f64;
                for k in 0..=sub {
                    let r = r0 + k as f64 * hh;
                    let wk = if k == 0 || k == sub { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                    acc += wk * hh / 3.0 * r * gaussian(g(r), w) * f(r * c, r * s);
                }
            }
            acc
        })
        .sum();
    total * 2.0 * PI / n_phi as f64
}

/// Zero-width limit of the broadened delta integral by Richardson extrapolation.
pub fn delta_limit(f: &(dyn Fn(f64, f64) -> f64 + Sync), h: &(dyn Fn(f64, f64) -> f64 + Sync), e: f64, w: f64, rho_max: f64) -> f64 {
    let i1 = polar_delta(f, h, e, w, rho_max);
    let i2 = polar_delta(f, h, e, w / 2.0, rho_max);
    let i3 = polar_delta(f, h, e, w / 4.0, rho_max);
    let r1 = (4.0 * i2 - i1) / 3.0;
    let r2 = (4.0 * i3 - i2) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
