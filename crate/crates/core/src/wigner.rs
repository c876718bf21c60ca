//! Wigner d-matrix at `theta = pi/2` and the circular-to-Cartesian unitary.
//!
//! Half-integer `j` and `m` are stored doubled (`two_j = 2j`). Rows and
//! columns of a block are indexed by descending `m`: index `i = j - m`.
//!
//! With `n = 2j`, `l = 2m`, a circular state expands as
//! `|n,l> = sum_{m'} O^j_{m,m'} |n1 = j+m', n2 = j-m'>`, where
//! `O^j_{m,m'} = i^{m'-j} d^j_{m,m'}(pi/2)`. The column index of a block is
//! therefore `n2`, and the row index is `n-`.

use num_complex::Complex64;

use crate::basis::SectorBasis;
use crate::error::{Error, Result};

/// Real `(2j+1) x (2j+1)` block `d^j_{m,m'}(pi/2)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerBlock {
    pub two_j: u32,
    pub matrix: Vec<f64>,
}

impl WignerBlock {
    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    /// Doubled `m` of row/column index `i`.
    pub fn two_m(&self, i: usize) -> i64 {
        self.two_j as i64 - 2 * i as i64
    }

    pub fn index_of(&self, two_m: i64) -> usize {
        ((self.two_j as i64 - two_m) / 2) as usize
    }

    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.matrix[i * self.dim() + k]
    }

    /// `d^j_{m,m'}` by doubled indices.
    pub fn get(&self, two_m: i64, two_mp: i64) -> f64 {
        self.at(self.index_of(two_m), self.index_of(two_mp))
    }

    /// `max |d d^T - I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for k in 0..n {
                let s: f64 = (0..n).map(|c| self.at(i, c) * self.at(k, c)).sum();
                let e = if i == k { 1.0 } else { 0.0 };
                worst = worst.max((s - e).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &WignerBlock) -> f64 {
        assert_eq!(self.two_j, other.two_j);
        self.matrix.iter().zip(&other.matrix).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Which algorithm produces the d-matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Route {
    #[default]
    Jacobi,
    Expm,
}

/// Orthonormal Jacobi polynomial `p_s^{(a,b)}(0)`, normalized against the
/// weight `(1-x)^a (1+x)^b` on `[-1, 1]`, multiplied by `sqrt(scale)`.
fn orthonormal_jacobi_at_zero(s: usize, a: usize, b: usize, scale: f64) -> f64 {
    let (af, bf) = (a as f64, b as f64);
    let ab = af + bf;
    // 1/h0 = (a+b+1)/2 * C(a+b, a) / 2^(a+b), formed as a running product
    let mut inv_h0 = 0.5 * (ab + 1.0) * scale;
    for k in 1..=a {
        inv_h0 *= (b + k) as f64 / (2 * k) as f64;
    }
    inv_h0 *= 0.5f64.powi(b as i32);
    let mut p_prev = 0.0;
    let mut p = inv_h0.sqrt();
    let off = |n: usize| -> f64 {
        // a_n for n >= 1
        let nf = n as f64;
        let t = 2.0 * nf + ab;
        (4.0 * nf * (nf + af) * (nf + bf) * (nf + ab) / (t * t * (t + 1.0) * (t - 1.0))).sqrt()
    };
    let diag = |n: usize| -> f64 {
        if n == 0 {
            (bf - af) / (ab + 2.0)
        } else {
            let t = 2.0 * n as f64 + ab;
            (bf * bf - af * af) / (t * (t + 2.0))
        }
    };
    let mut a_n = 0.0;
    for n in 0..s {
        let a_next = off(n + 1);
        let next = (-diag(n) * p - a_n * p_prev) / a_next;
        p_prev = p;
        p = next;
        a_n = a_next;
    }
    p
}

/// `d^j(pi/2)` through the Jacobi-polynomial representation
/// `d = xi sqrt(2/(2j+1)) p_s^{(mu,nu)}(0)` with orthonormal `p`.
pub fn wigner_d_jacobi(two_j: u32) -> WignerBlock {
    let n = two_j as usize + 1;
    let scale = 2.0 / (two_j as f64 + 1.0);
    let mut matrix = vec![0.0; n * n];
    for i in 0..n {
        let tm = two_j as i64 - 2 * i as i64;
        for k in 0..n {
            let tmp = two_j as i64 - 2 * k as i64;
            let mu = ((tm - tmp).abs() / 2) as usize;
            let nu = ((tm + tmp).abs() / 2) as usize;
            let s = (two_j as usize - mu - nu) / 2;
            let xi = if tmp >= tm || ((tm - tmp) / 2) % 2 == 0 { 1.0 } else { -1.0 };
            matrix[i * n + k] = xi * orthonormal_jacobi_at_zero(s, mu, nu, scale);
        }
    }
    WignerBlock { two_j, matrix }
}

/// Bessel functions `J_0..J_kmax` at `x > 0` by Miller's backward recurrence.
fn bessel_j_sequence(kmax: usize, x: f64) -> Vec<f64> {
    let start = kmax + 40 + (x.ceil() as usize);
    let mut out = vec![0.0; kmax + 1];
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-300; // J_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        // `cur` now holds J_{k-1}
        let km1 = k - 1;
        if km1 <= kmax {
            out[km1] = cur;
        }
        if km1 % 2 == 0 {
            norm += if km1 == 0 { cur } else { 2.0 * cur };
        }
        if cur.abs() > 1e250 {
            let s = 1e-250;
            cur *= s;
            next *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// `exp(-i theta J_y)` in the `|j m>` basis by a Chebyshev-Bessel expansion
/// in complex arithmetic. Returns `(real part, max |imag part|)`.
fn expm_rotation(two_j: u32, theta: f64) -> (Vec<f64>, f64) {
    let n = two_j as usize + 1;
    if two_j == 0 {
        return (vec![1.0], 0.0);
    }
    let j = two_j as f64 / 2.0;
    // X = J_y / j: X[i-1][i] = -i c_i / (2j), X[i][i-1] = +i c_i / (2j),
    // c_i = sqrt((j - m_i)(j + m_i + 1)) for the state of index i.
    let c: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                return 0.0;
            }
            let m = j - i as f64;
            ((j - m) * (j + m + 1.0)).sqrt() / (2.0 * j)
        })
        .collect();
    let apply_x = |w: &[Complex64], out: &mut [Complex64]| {
        // out = X w, with w and out row-major n x n
        for r in 0..n {
            for col in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                if r + 1 < n {
                    acc += Complex64::new(0.0, -c[r + 1]) * w[(r + 1) * n + col];
                }
                if r > 0 {
                    acc += Complex64::new(0.0, c[r]) * w[(r - 1) * n + col];
                }
                out[r * n + col] = acc;
            }
        }
    };
    let tau = theta * j;
    let kmax = (tau + 12.0 * tau.cbrt() + 40.0).ceil() as usize;
    let bj = bessel_j_sequence(kmax, tau);
    let zero = Complex64::new(0.0, 0.0);
    let mut w_prev = vec![zero; n * n];
    for i in 0..n {
        w_prev[i * n + i] = Complex64::new(1.0, 0.0);
    }
    let mut w = vec![zero; n * n];
    apply_x(&w_prev, &mut w);
    let mut acc: Vec<Complex64> = w_prev.iter().map(|x| x * bj[0]).collect();
    let mut phase = Complex64::new(0.0, -1.0); // (-i)^k
    for (a, x) in acc.iter_mut().zip(&w) {
        *a += x * (phase * 2.0 * bj[1]);
    }
    let mut tmp = vec![zero; n * n];
    for &bk in bj.iter().skip(2) {
        apply_x(&w, &mut tmp);
        for ((t, wp), _) in tmp.iter_mut().zip(&w_prev).zip(0..) {
            *t = *t * 2.0 - wp;
        }
        std::mem::swap(&mut w_prev, &mut w);
        std::mem::swap(&mut w, &mut tmp);
        phase *= Complex64::new(0.0, -1.0);
        let coef = phase * 2.0 * bk;
        for (a, x) in acc.iter_mut().zip(&w) {
            *a += x * coef;
        }
    }
    let imag = acc.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    (acc.iter().map(|z| z.re).collect(), imag)
}

/// Largest imaginary residue tolerated by the exponential route.
pub const EXPM_IMAG_TOL: f64 = 1e-9;

/// `d^j(pi/2) = exp(-i pi J_y / 2)` by polynomial expansion of the matrix
/// exponential of the tridiagonal generator.
pub fn wigner_d_expm(two_j: u32) -> Result<WignerBlock> {
    let (matrix, imag) = expm_rotation(two_j, std::f64::consts::FRAC_PI_2);
    if imag > EXPM_IMAG_TOL {
        return Err(Error::Numerical(format!(
            "imaginary residue {imag:e} in exponential d-matrix for 2j = {two_j}"
        )));
    }
    Ok(WignerBlock { two_j, matrix })
}

pub fn wigner_d(two_j: u32, route: Route) -> Result<WignerBlock> {
    match route {
        Route::Jacobi => Ok(wigner_d_jacobi(two_j)),
        Route::Expm => wigner_d_expm(two_j),
    }
}

/// `i^k` for integer `k`.
pub fn i_pow(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Coefficients `O^j_{m,m'}` for one `n = 2j` shell.
#[derive(Clone, Debug)]
pub struct CircularToCartesian {
    pub two_j: u32,
    /// Row `n-` (descending `m`), column `n2` (descending `m'`).
    pub coefficients: Vec<Complex64>,
}

impl CircularToCartesian {
    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.coefficients[row * self.dim() + col]
    }

    /// Map circular amplitudes (indexed by `n-`) to Cartesian amplitudes
    /// (indexed by `n2`).
    pub fn to_cartesian(&self, circ: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        assert_eq!(circ.len(), n);
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (r, &c) in circ.iter().enumerate() {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (k, o) in out.iter_mut().enumerate() {
                *o += c * self.coefficients[r * n + k];
            }
        }
        out
    }

    /// Inverse map through the conjugate transpose.
    pub fn to_circular(&self, cart: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        assert_eq!(cart.len(), n);
        (0..n)
            .map(|r| (0..n).map(|k| self.coefficients[r * n + k].conj() * cart[k]).sum())
            .collect()
    }
}

pub fn circular_to_cartesian(two_j: u32, route: Route) -> Result<CircularToCartesian> {
    let d = wigner_d(two_j, route)?;
    Ok(circular_from_block(&d))
}

pub fn circular_from_block(d: &WignerBlock) -> CircularToCartesian {
    let n = d.dim();
    let mut coefficients = Vec::with_capacity(n * n);
    for r in 0..n {
        for k in 0..n {
            // phase i^{m'-j} = i^{-n2}
            coefficients.push(i_pow(-(k as i64)) * d.at(r, k));
        }
    }
    CircularToCartesian { two_j: d.two_j, coefficients }
}

/// Cartesian amplitudes `B_{n1 n2}` of a state, grouped by shell `n`:
/// `shells[n][n2]` with `n1 = n - n2`.
#[derive(Clone, Debug)]
pub struct CartesianState {
    pub shells: Vec<Vec<Complex64>>,
}

impl CartesianState {
    pub fn cutoff(&self) -> usize {
        self.shells.len() - 1
    }

    pub fn get(&self, n1: usize, n2: usize) -> Complex64 {
        self.shells.get(n1 + n2).map_or(Complex64::new(0.0, 0.0), |s| s[n2])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.shells.iter().flatten().map(|z| z.norm_sqr()).sum()
    }
}

/// Transform gauged real coefficients on `basis` to the Cartesian basis.
pub fn cartesian_coefficients(basis: &SectorBasis, coeffs: &[f64], route: Route) -> Result<CartesianState> {
    assert_eq!(coeffs.len(), basis.dim());
    let cutoff = basis.cutoff_n as usize;
    let mut circ: Vec<Vec<Complex64>> = (0..=cutoff).map(|n| vec![Complex64::new(0.0, 0.0); n + 1]).collect();
    for (i, &(n, l)) in basis.states.iter().enumerate() {
        let nm = ((n - l) / 2) as usize;
        circ[n as usize][nm] = basis.gauge[i] * coeffs[i];
    }
    let mut shells = Vec::with_capacity(cutoff + 1);
    for (n, c) in circ.iter().enumerate() {
        if c.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
            shells.push(vec![Complex64::new(0.0, 0.0); n + 1]);
            continue;
        }
        let o = circular_to_cartesian(n as u32, route)?;
        shells.push(o.to_cartesian(c));
    }
    Ok(CartesianState { shells })
}
