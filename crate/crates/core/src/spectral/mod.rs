//! Diagonalization of sector Hamiltonians and the semiclassical density of
//! states.
//!
//! Small problems go through a dense symmetric eigensolver. Interior windows
//! of large problems use shift-invert Lanczos on a banded `L D L^T`
//! factorization; the number of eigenvalues in the window is fixed up front
//! from the factorization inertia at both edges, so a window is either
//! returned complete or reported as an error.

mod banded;
pub mod dos;
mod lanczos;

use faer::{Mat, Side};

pub use banded::{identity_ordering, ordering_by_key, reverse_cuthill_mckee, BandLdlt, Ordering};
pub use dos::{
    dos_curve, dos_numeric, dos_thomas_fermi_alpha, heisenberg_time, integrated_dos, scaled_dos,
    scaled_dos_alpha, scaled_dos_numeric, DosCurve, PER_SECTOR_FACTOR,
};

use crate::basis::{ModelParams, SectorBasis, SparseHamiltonian};
use crate::error::{Error, Result};
use lanczos::{shift_invert_lanczos, LanczosConfig};

/// Default dimension bound for `eig_dense`.
pub const DENSE_MAX_DIM: usize = 20_000;

/// Eigenpairs inside an energy window.
#[derive(Clone, Debug)]
pub struct EigenWindow {
    /// Ascending.
    pub energies: Vec<f64>,
    /// One real coefficient vector (gauged basis) per energy.
    pub coefficients: Vec<Vec<f64>>,
    pub window: (f64, f64),
    pub params: Option<ModelParams>,
    pub residual_norms: Vec<f64>,
}

impl EigenWindow {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn with_params(mut self, params: ModelParams) -> Self {
        self.params = Some(params);
        self
    }

    /// Keep only the states with energy in `[lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> EigenWindow {
        let keep: Vec<usize> = (0..self.len()).filter(|&k| self.energies[k] >= lo && self.energies[k] <= hi).collect();
        EigenWindow {
            energies: keep.iter().map(|&k| self.energies[k]).collect(),
            coefficients: keep.iter().map(|&k| self.coefficients[k].clone()).collect(),
            window: (lo, hi),
            params: self.params,
            residual_norms: keep.iter().map(|&k| self.residual_norms[k]).collect(),
        }
    }
}

/// Make the largest-magnitude component positive so output is deterministic.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best.abs() * (1.0 + 1e-12) {
            best = x;
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn residual_norm(h: &SparseHamiltonian, v: &[f64], e: f64, work: &mut [f64]) -> f64 {
    h.matvec(v, work);
    work.iter().zip(v).map(|(hv, x)| (hv - e * x).powi(2)).sum::<f64>().sqrt()
}

fn dense_matrix(h: &SparseHamiltonian, max_dim: usize) -> Result<Mat<f64>> {
    if h.dim > max_dim {
        return Err(Error::InvalidParams(format!(
            "dimension {} exceeds the dense solver bound {max_dim}",
            h.dim
        )));
    }
    let mut m = Mat::<f64>::zeros(h.dim, h.dim);
    for (i, j, v) in h.entries() {
        m[(i, j)] = v;
    }
    Ok(m)
}

/// All eigenvalues, ascending, without vectors.
pub fn eigenvalues_dense(h: &SparseHamiltonian, max_dim: usize) -> Result<Vec<f64>> {
    if h.dim == 0 {
        return Ok(vec![]);
    }
    let m = dense_matrix(h, max_dim)?;
    let mut vals = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("dense eigensolver failed: {e:?}")))?;
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Full spectrum with the default dimension bound.
pub fn eig_dense(h: &SparseHamiltonian) -> Result<EigenWindow> {
    eig_dense_bounded(h, DENSE_MAX_DIM)
}

pub fn eig_dense_bounded(h: &SparseHamiltonian, max_dim: usize) -> Result<EigenWindow> {
    let n = h.dim;
    if n == 0 {
        return Ok(EigenWindow { energies: vec![], coefficients: vec![], window: (0.0, 0.0), params: None, residual_norms: vec![] });
    }
    let m = dense_matrix(h, max_dim)?;
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("dense eigensolver failed: {e:?}")))?;
    let s = e.S().column_vector();
    let u = e.U();
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|c| {
            let mut v: Vec<f64> = (0..n).map(|r| u[(r, c)]).collect();
            fix_sign(&mut v);
            (s[c], v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut work = vec![0.0; n];
    let residual_norms = pairs.iter().map(|(e, v)| residual_norm(h, v, *e, &mut work)).collect();
    let window = (pairs[0].0, pairs[n - 1].0);
    let (energies, coefficients) = pairs.into_iter().unzip();
    Ok(EigenWindow { energies, coefficients, window, params: None, residual_norms })
}

/// How wide a window to extract around the centre energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WindowSpec {
    /// Full width `delta E`; the window is `[E - dE/2, E + dE/2]`.
    Width(f64),
    /// The `k` eigenvalues closest to the centre.
    Count(usize),
}

/// Tuning knobs of the iterative window solver.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Relative residual tolerance `||Hv - Ev|| <= tol * ||H||`.
    pub tol: f64,
    /// Fill-reducing ordering; chosen automatically when absent.
    pub ordering: Option<Ordering>,
    /// Eigenpairs requested from a single shift; larger windows are split.
    pub max_per_shift: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-9, ordering: None, max_per_shift: 150, seed: 0x5eed }
    }
}

/// Ordering by `(l, n)` of the basis states, which keeps couplings between
/// neighbouring angular-momentum blocks close to the diagonal.
pub fn angular_ordering(h: &SparseHamiltonian, basis: &SectorBasis) -> Ordering {
    ordering_by_key(h, |i| {
        let (n, l) = basis.states[i];
        (l, n)
    })
}

/// The smallest-bandwidth candidate among RCM and the natural ordering.
pub fn best_ordering(h: &SparseHamiltonian, basis: Option<&SectorBasis>) -> Ordering {
    let mut cands = vec![reverse_cuthill_mckee(h), identity_ordering(h)];
    if let Some(b) = basis {
        cands.push(angular_ordering(h, b));
    }
    cands.into_iter().min_by_key(|o| o.bandwidth).expect("nonempty")
}

/// Number of eigenvalues of `H` below `x`.
pub fn count_below(h: &SparseHamiltonian, ord: &Ordering, x: f64) -> Result<usize> {
    Ok(BandLdlt::factor_robust(h, ord, x)?.inertia_below())
}

fn norm_estimate(h: &SparseHamiltonian) -> f64 {
    let (lo, hi) = h.spectral_bounds();
    lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
}

/// Eigenpairs with `a <= E < b` for a window whose count is already known.
fn solve_subwindow(
    h: &SparseHamiltonian,
    ord: &Ordering,
    a: f64,
    b: f64,
    need: usize,
    seed: u64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    if need == 0 {
        return Ok(vec![]);
    }
    let sigma0 = 0.5 * (a + b);
    let fac = BandLdlt::factor_robust(h, ord, sigma0)?;
    let sigma = fac.sigma;
    let dim = h.dim;
    let mut work = Vec::with_capacity(dim);
    let op = |x: &[f64], y: &mut [f64]| {
        y.copy_from_slice(x);
        fac.solve_in_place(y, &mut work);
    };
    let upper = 1.0 / (b - sigma);
    let lower = -1.0 / (sigma - a);
    let wanted = |t: f64| t > upper || t <= lower;
    let cfg = LanczosConfig {
        max_basis: (2 * need + 40).max(60),
        tol: 1e-12,
        max_restarts: 400,
        seed,
    };
    let ritz = shift_invert_lanczos(dim, need, op, wanted, &cfg)?;
    let mut out = Vec::with_capacity(need);
    let mut hv = vec![0.0; dim];
    for c in 0..ritz.theta.len() {
        let mut v = ritz.vectors[c * dim..(c + 1) * dim].to_vec();
        let nv = banded::dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        h.matvec(&v, &mut hv);
        let e = banded::dot(&v, &hv);
        fix_sign(&mut v);
        out.push((e, v));
    }
    Ok(out)
}

/// All eigenpairs in a window around `center`, certified complete by
/// inertia counts at the window edges.
pub fn eig_window(h: &SparseHamiltonian, center: f64, spec: WindowSpec, opts: &SolverOptions) -> Result<EigenWindow> {
    let (lo, hi) = h.spectral_bounds();
    if !(center >= lo && center <= hi) {
        return Err(Error::Domain(format!("centre {center} outside the spectral range [{lo}, {hi}]")));
    }
    let ord = match &opts.ordering {
        Some(o) => o.clone(),
        None => best_ordering(h, None),
    };
    let hnorm = norm_estimate(h);
    let (a, b, keep) = match spec {
        WindowSpec::Width(w) => {
            if !(w >= 0.0) {
                return Err(Error::InvalidParams(format!("window width must be >= 0, got {w}")));
            }
            (center - 0.5 * w, center + 0.5 * w, None)
        }
        WindowSpec::Count(k) => {
            let (a, b) = bracket_count(h, &ord, center, k, hi - lo)?;
            (a, b, Some(k))
        }
    };
    let na = count_below(h, &ord, a)?;
    let nb = count_below(h, &ord, b)?;
    let need = nb.saturating_sub(na);
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(need);
    if need > 0 {
        let pieces = need.div_ceil(opts.max_per_shift.max(1));
        let edges: Vec<f64> = (0..=pieces).map(|i| a + (b - a) * i as f64 / pieces as f64).collect();
        let mut counts = vec![na];
        for &x in &edges[1..pieces] {
            counts.push(count_below(h, &ord, x)?);
        }
        counts.push(nb);
        for i in 0..pieces {
            let sub_need = counts[i + 1].saturating_sub(counts[i]);
            let seed = opts.seed.wrapping_add(i as u64);
            pairs.extend(solve_subwindow(h, &ord, edges[i], edges[i + 1], sub_need, seed)?);
        }
    }
    if pairs.len() != need {
        return Err(Error::Numerical(format!("window not converged: found {} of {need} eigenpairs", pairs.len())));
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    if let Some(k) = keep {
        pairs.sort_by(|x, y| (x.0 - center).abs().total_cmp(&(y.0 - center).abs()));
        pairs.truncate(k);
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    }
    let mut work = vec![0.0; h.dim];
    let residual_norms: Vec<f64> = pairs.iter().map(|(e, v)| residual_norm(h, v, *e, &mut work)).collect();
    if let Some(worst) = residual_norms.iter().cloned().fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r)))) {
        if worst > opts.tol * hnorm {
            return Err(Error::Numerical(format!(
                "window not converged: residual {worst:e} above tolerance {:e}",
                opts.tol * hnorm
            )));
        }
    }
    let window = match keep {
        Some(_) if !pairs.is_empty() => (pairs[0].0, pairs[pairs.len() - 1].0),
        _ => (a, b),
    };
    let (energies, coefficients) = pairs.into_iter().unzip();
    Ok(EigenWindow { energies, coefficients, window, params: None, residual_norms })
}

/// Smallest symmetric window around `center` holding at least `k` levels.
fn bracket_count(h: &SparseHamiltonian, ord: &Ordering, center: f64, k: usize, span: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Ok((center, center));
    }
    if k > h.dim {
        return Err(Error::InvalidParams(format!("requested {k} levels from a {}-dimensional space", h.dim)));
    }
    let count = |d: f64| -> Result<usize> {
        Ok(count_below(h, ord, center + d)?.saturating_sub(count_below(h, ord, center - d)?))
    };
    let mut d_hi = span * k as f64 / h.dim as f64;
    let mut d_lo = 0.0;
    while count(d_hi)? < k {
        d_lo = d_hi;
        d_hi *= 2.0;
        if d_hi > 4.0 * span {
            return Err(Error::Numerical("could not bracket the requested number of levels".into()));
        }
    }
    // shrink while the excess is large; a few extra levels are trimmed later
    for _ in 0..40 {
        let mid = 0.5 * (d_lo + d_hi);
        let c = count(mid)?;
        if c >= k {
            d_hi = mid;
            if c <= k + k / 20 + 1 {
                break;
            }
        } else {
            d_lo = mid;
        }
    }
    Ok((center - d_hi, center + d_hi))
}
