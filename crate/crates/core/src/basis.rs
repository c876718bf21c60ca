//! Circular two-mode basis `|n, l>` and sparse Hamiltonian assembly.
//!
//! States are labelled by the total quantum number `n = n+ + n-` and the
//! angular momentum `l = n+ - n-`. The C3v symmetry splits the basis into
//! three decoupled sectors according to `l mod 3`.
//!
//! Phase convention: the cubic coupling has purely imaginary elements in the
//! raw circular basis. We work in the gauged basis `|n,l>' = e^{i pi l/6} |n,l>`
//! in which every matrix element is real. Raw coefficients are recovered as
//! `C_{nl} = e^{i pi l/6} C'_{nl}` (see [`SectorBasis::gauge`]).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest accepted cutoff. Radicands of the coupling coefficients grow like
/// `n^3`; beyond this bound they lose integer exactness in an f64 mantissa.
pub const MAX_CUTOFF: u32 = 100_000;

/// C3v symmetry sector, selected by `l mod 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sector {
    Singlet,
    DoubletB,
    DoubletC,
}

impl Sector {
    pub fn residue(self) -> i64 {
        match self {
            Sector::Singlet => 0,
            Sector::DoubletB => 1,
            Sector::DoubletC => 2,
        }
    }

    pub fn of_l(l: i64) -> Sector {
        match l.rem_euclid(3) {
            0 => Sector::Singlet,
            1 => Sector::DoubletB,
            _ => Sector::DoubletC,
        }
    }

    pub fn contains(self, l: i64) -> bool {
        l.rem_euclid(3) == self.residue()
    }

    pub fn name(self) -> &'static str {
        match self {
            Sector::Singlet => "singlet",
            Sector::DoubletB => "doublet-b",
            Sector::DoubletC => "doublet-c",
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "singlet" | "a" => Ok(Sector::Singlet),
            "doublet-b" | "doubletb" | "b" => Ok(Sector::DoubletB),
            "doublet-c" | "doubletc" | "c" => Ok(Sector::DoubletC),
            other => Err(Error::InvalidParams(format!("unknown sector '{other}'"))),
        }
    }
}

/// Physical parameters plus truncation and sector selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    /// Quartic coupling `lambda = 3 beta / (4 alpha^2)`.
    pub lambda: f64,
    pub hbar: f64,
    pub cutoff_n: u32,
    pub sector: Sector,
}

impl ModelParams {
    pub fn new(alpha: f64, lambda: f64, hbar: f64, cutoff_n: u32, sector: Sector) -> Result<Self> {
        let p = ModelParams { alpha, lambda, hbar, cutoff_n, sector };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::InvalidParams(format!("hbar must be positive, got {}", self.hbar)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParams(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !self.alpha.is_finite() {
            return Err(Error::InvalidParams("alpha must be finite".into()));
        }
        if self.cutoff_n > MAX_CUTOFF {
            return Err(Error::InvalidParams(format!(
                "cutoff {} exceeds supported maximum {MAX_CUTOFF}",
                self.cutoff_n
            )));
        }
        Ok(())
    }
}

/// `e^{i pi l / 6}`, the per-state gauge phase.
pub fn gauge_phase(l: i64) -> Complex64 {
    let k = l.rem_euclid(12) as f64;
    Complex64::from_polar(1.0, std::f64::consts::PI * k / 6.0)
}

/// Enumerated basis states of one sector (or of the full space).
#[derive(Clone, Debug)]
pub struct SectorBasis {
    /// `(n, l)` pairs in lexicographic order.
    pub states: Vec<(i64, i64)>,
    pub index_of: HashMap<(i64, i64), usize>,
    /// `None` for the unsplit basis.
    pub sector: Option<Sector>,
    pub cutoff_n: u32,
    /// Gauge phases `e^{i pi l/6}` per state.
    pub gauge: Vec<Complex64>,
}

impl SectorBasis {
    fn build(cutoff_n: u32, sector: Option<Sector>) -> Self {
        let mut states = Vec::new();
        for n in 0..=cutoff_n as i64 {
            let mut l = -n;
            while l <= n {
                if sector.map_or(true, |s| s.contains(l)) {
                    states.push((n, l));
                }
                l += 2;
            }
        }
        let index_of = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let gauge = states.iter().map(|&(_, l)| gauge_phase(l)).collect();
        SectorBasis { states, index_of, sector, cutoff_n, gauge }
    }

    /// All states with `n <= cutoff` regardless of sector.
    pub fn full(cutoff_n: u32) -> Self {
        Self::build(cutoff_n, None)
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index(&self, n: i64, l: i64) -> Option<usize> {
        self.index_of.get(&(n, l)).copied()
    }

    /// `(n+, n-)` of state `i`.
    pub fn occupations(&self, i: usize) -> (usize, usize) {
        let (n, l) = self.states[i];
        (((n + l) / 2) as usize, ((n - l) / 2) as usize)
    }
}

pub fn enumerate_sector(params: &ModelParams) -> SectorBasis {
    SectorBasis::build(params.cutoff_n, Some(params.sector))
}

fn is_valid(n: i64, l: i64) -> bool {
    n >= 0 && l.abs() <= n && (n - l) % 2 == 0
}

fn radicand_sqrt(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "negative radicand {x}");
    x.max(0.0).sqrt()
}

/// Cubic coefficient `k_m^+(n, l)` for the `Delta l = +3` branch.
fn k_cubic_plus(m: i64, n: i64, l: i64) -> f64 {
    let (n, l) = (n as f64, l as f64);
    match m {
        3 => radicand_sqrt((n + l + 2.0) * (n + l + 4.0) * (n + l + 6.0) / 8.0),
        1 => 3.0 * radicand_sqrt((n - l) * (n + l + 2.0) * (n + l + 4.0) / 8.0),
        -1 => 3.0 * radicand_sqrt((n - l) * (n - l - 2.0) * (n + l + 2.0) / 8.0),
        -3 => radicand_sqrt((n - l) * (n - l - 2.0) * (n - l - 4.0) / 8.0),
        _ => unreachable!("cubic index {m}"),
    }
}

/// Coefficients of `(q+^3 - q-^3)` acting on `|n, l>` without the `hbar^{3/2}`
/// factor: entries `(dn, dl, k)` with `dl = +3` from `q+^3` and `dl = -3` from
/// `q-^3`. The `dl = -3` branch uses `k_m^-(n,l) = k_m^+(n,-l)`.
pub fn cubic_elements(n: i64, l: i64) -> Vec<(i64, i64, f64)> {
    assert!(is_valid(n, l), "invalid state ({n}, {l})");
    let mut out = Vec::with_capacity(8);
    for m in [3, 1, -1, -3] {
        if is_valid(n + m, l + 3) {
            let k = k_cubic_plus(m, n, l);
            if k != 0.0 {
                out.push((m, 3, k));
            }
        }
        if is_valid(n + m, l - 3) {
            let k = k_cubic_plus(m, n, -l);
            if k != 0.0 {
                out.push((m, -3, k));
            }
        }
    }
    out
}

/// Coefficients of `(q+ q-)^2` acting on `|n, l>` without the `hbar^2`
/// factor: entries `(dn, k)` with `dl = 0`.
pub fn quartic_elements(n: i64, l: i64) -> Vec<(i64, f64)> {
    assert!(is_valid(n, l), "invalid state ({n}, {l})");
    let nf = n as f64;
    let l2 = (l * l) as f64;
    let mut out = Vec::with_capacity(5);
    out.push((0, 1.5 * nf * nf - 0.5 * l2 + 3.0 * nf + 2.0));
    let s = |m: f64| radicand_sqrt(m * m - l2);
    if is_valid(n + 2, l) {
        out.push((2, (nf + 2.0) * s(nf + 2.0)));
    }
    if is_valid(n + 4, l) {
        out.push((4, 0.25 * s(nf + 2.0) * s(nf + 4.0)));
    }
    if is_valid(n - 2, l) {
        let k = nf * s(nf);
        if k != 0.0 {
            out.push((-2, k));
        }
    }
    if is_valid(n - 4, l) {
        let k = 0.25 * s(nf) * s(nf - 2.0);
        if k != 0.0 {
            out.push((-4, k));
        }
    }
    out
}

/// Real symmetric sparse matrix in compressed-row form. Both triangles are
/// stored, so every row holds its complete set of nonzeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseHamiltonian {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseHamiltonian {
    /// Build from coordinate triplets, summing duplicates.
    pub fn from_triplets(dim: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols: Vec<usize> = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) out of range {dim}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseHamiltonian { dim, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    /// All stored `(row, col, value)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// `y = H x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim * self.dim];
        for (i, j, v) in self.entries() {
            d[i * self.dim + j] = v;
        }
        d
    }

    /// Gershgorin bounds on the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.dim {
            let mut d = 0.0;
            let mut off = 0.0;
            for (j, v) in self.row(i) {
                if j == i {
                    d = v;
                } else {
                    off += v.abs();
                }
            }
            lo = lo.min(d - off);
            hi = hi.max(d + off);
        }
        (lo, hi)
    }
}

/// Upper-triangle entries (`dn >= 0`) of row `(n, l)` in the gauged basis.
fn upper_row(params: &ModelParams, n: i64, l: i64) -> Vec<(i64, i64, f64)> {
    let h = params.hbar;
    let cubic_scale = -params.alpha * h.powf(1.5) / 6.0;
    let quartic_scale = params.lambda * h * h;
    let mut out = Vec::with_capacity(8);
    let mut diag = h * (n as f64 + 1.0);
    if params.lambda != 0.0 {
        for (dn, k) in quartic_elements(n, l) {
            if dn == 0 {
                diag += quartic_scale * k;
            } else if dn > 0 {
                out.push((dn, 0, quartic_scale * k));
            }
        }
    }
    out.push((0, 0, diag));
    if params.alpha != 0.0 {
        for (dn, dl, k) in cubic_elements(n, l) {
            if dn > 0 {
                out.push((dn, dl, cubic_scale * k));
            }
        }
    }
    out
}

/// Assemble `H = hbar (n+1) - i alpha (q+^3 - q-^3)/6 + lambda (q+ q-)^2`
/// on `basis` in the real gauge. The matrix is built from its upper triangle
/// and mirrored, so it is exactly symmetric.
pub fn assemble_hamiltonian(params: &ModelParams, basis: &SectorBasis) -> Result<SparseHamiltonian> {
    params.validate()?;
    if basis.cutoff_n != params.cutoff_n {
        return Err(Error::InvalidParams(format!(
            "basis cutoff {} differs from params cutoff {}",
            basis.cutoff_n, params.cutoff_n
        )));
    }
    if let Some(s) = basis.sector {
        if s != params.sector {
            return Err(Error::InvalidParams("basis sector differs from params sector".into()));
        }
    }
    let upper: Vec<(usize, usize, f64)> = basis
        .states
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, &(n, l))| {
            upper_row(params, n, l)
                .into_iter()
                .filter_map(move |(dn, dl, v)| {
                    basis.index(n + dn, l + dl).map(|j| (i, j, v))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut trip = Vec::with_capacity(2 * upper.len());
    for &(i, j, v) in &upper {
        trip.push((i, j, v));
        if i != j {
            trip.push((j, i, v));
        }
    }
    Ok(SparseHamiltonian::from_triplets(basis.dim(), trip))
}
