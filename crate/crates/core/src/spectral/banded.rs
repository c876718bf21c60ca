//! Banded symmetric `L D L^T` factorization of `H - sigma I` with inertia.
//!
//! No pivoting is performed; a pivot below `PIVOT_TOL * ||H||` is reported so
//! the caller can move the shift slightly.

use std::collections::VecDeque;

use crate::basis::SparseHamiltonian;
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-13;

/// Symmetric permutation that shrinks the bandwidth.
#[derive(Clone, Debug)]
pub struct Ordering {
    /// `perm[new] = old`.
    pub perm: Vec<usize>,
    /// `inv[old] = new`.
    pub inv: Vec<usize>,
    pub bandwidth: usize,
}

fn bandwidth_of(h: &SparseHamiltonian, inv: &[usize]) -> usize {
    let mut bw = 0;
    for (i, j, _) in h.entries() {
        bw = bw.max(inv[i].abs_diff(inv[j]));
    }
    bw
}

fn ordering_from_perm(h: &SparseHamiltonian, perm: Vec<usize>) -> Ordering {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let bandwidth = bandwidth_of(h, &inv);
    Ordering { perm, inv, bandwidth }
}

/// Reverse Cuthill-McKee ordering started from a minimum-degree node of each
/// connected component.
pub fn reverse_cuthill_mckee(h: &SparseHamiltonian) -> Ordering {
    let n = h.dim;
    let deg: Vec<usize> = (0..n).map(|i| h.row_ptr[i + 1] - h.row_ptr[i]).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (deg[i], i));
    for &start in &by_degree {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = h.row(v).map(|(j, _)| j).filter(|&j| !seen[j]).collect();
            nb.sort_by_key(|&j| (deg[j], j));
            for j in nb {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    ordering_from_perm(h, order)
}

/// Ordering by a caller-supplied key (for instance `(l, n)` of each state).
pub fn ordering_by_key<K: Ord>(h: &SparseHamiltonian, key: impl Fn(usize) -> K) -> Ordering {
    let mut perm: Vec<usize> = (0..h.dim).collect();
    perm.sort_by_key(|&i| key(i));
    ordering_from_perm(h, perm)
}

pub fn identity_ordering(h: &SparseHamiltonian) -> Ordering {
    ordering_from_perm(h, (0..h.dim).collect())
}

/// `L D L^T` of `P (H - sigma) P^T` in band storage.
#[derive(Clone, Debug)]
pub struct BandLdlt {
    pub n: usize,
    pub bw: usize,
    pub sigma: f64,
    /// Row `i` holds `L[i][i-bw .. i]` in `l[i*bw .. (i+1)*bw]`, left-padded.
    l: Vec<f64>,
    pub d: Vec<f64>,
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl BandLdlt {
    /// Factor `H - sigma I` under `ord`.
    pub fn factor(h: &SparseHamiltonian, ord: &Ordering, sigma: f64) -> Result<Self> {
        let n = h.dim;
        let bw = ord.bandwidth.max(1);
        let (lo, hi) = h.spectral_bounds();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        // Lower band of the permuted matrix, same layout as `l`.
        let mut a = vec![0.0; n * bw];
        let mut diag = vec![0.0; n];
        for (i, j, v) in h.entries() {
            let (pi, pj) = (ord.inv[i], ord.inv[j]);
            if pi == pj {
                diag[pi] = v - sigma;
            } else if pj < pi {
                a[pi * bw + (bw - (pi - pj))] = v;
            }
        }
        let mut l = a;
        let mut d = vec![0.0; n];
        let mut t = vec![0.0; bw];
        for i in 0..n {
            let first = i.saturating_sub(bw);
            let width = i - first;
            // Row i: t_j = L_ij d_j = a_ij - sum_{k<j} t_k L_jk
            let row_off = i * bw + (bw - width);
            for jj in 0..width {
                let j = first + jj;
                let jfirst = j.saturating_sub(bw).max(first);
                let mut s = l[row_off + jj];
                // k ranges over [jfirst, j)
                let kcount = j - jfirst;
                if kcount > 0 {
                    let trow = &t[(jfirst - first)..(j - first)];
                    let lrow_start = j * bw + (bw - (j - jfirst));
                    let lrow = &l[lrow_start..lrow_start + kcount];
                    s -= dot(trow, lrow);
                }
                t[jj] = s;
            }
            let mut di = diag[i];
            for jj in 0..width {
                let j = first + jj;
                let lij = t[jj] / d[j];
                di -= t[jj] * lij;
                l[row_off + jj] = lij;
            }
            if !(di.abs() > PIVOT_TOL * scale) {
                return Err(Error::Numerical(format!(
                    "tiny pivot {di:e} at row {i} for shift {sigma}"
                )));
            }
            d[i] = di;
        }
        Ok(BandLdlt { n, bw, sigma, l, d, perm: ord.perm.clone(), inv: ord.inv.clone() })
    }

    /// Factor, nudging the shift away from an eigenvalue when a pivot is tiny.
    pub fn factor_robust(h: &SparseHamiltonian, ord: &Ordering, sigma: f64) -> Result<Self> {
        let (lo, hi) = h.spectral_bounds();
        let scale = (hi - lo).abs().max(1e-300);
        let mut s = sigma;
        let mut last = None;
        for k in 0..8 {
            match Self::factor(h, ord, s) {
                Ok(f) => return Ok(f),
                Err(e) => last = Some(e),
            }
            let step = scale * 1e-11 * (1 << k) as f64;
            s = if k % 2 == 0 { sigma + step } else { sigma - step };
        }
        Err(last.unwrap())
    }

    /// Number of eigenvalues of `H` strictly below the shift.
    pub fn inertia_below(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    /// Solve `(H - sigma) x = b` in place (original ordering).
    pub fn solve_in_place(&self, b: &mut [f64], work: &mut Vec<f64>) {
        let n = self.n;
        let bw = self.bw;
        work.clear();
        work.extend(self.perm.iter().map(|&old| b[old]));
        let y = work.as_mut_slice();
        for i in 0..n {
            let first = i.saturating_sub(bw);
            let width = i - first;
            if width > 0 {
                let off = i * bw + (bw - width);
                y[i] -= dot(&self.l[off..off + width], &y[first..i]);
            }
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let first = i.saturating_sub(bw);
            let width = i - first;
            if width > 0 {
                let xi = y[i];
                let off = i * bw + (bw - width);
                for (yk, lk) in y[first..i].iter_mut().zip(&self.l[off..off + width]) {
                    *yk -= lk * xi;
                }
            }
        }
        for (old, &new) in self.inv.iter().enumerate() {
            b[old] = y[new];
        }
    }
}

/// Dot product with several accumulators so the compiler can vectorize.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = 0.0;
    for k in chunks * 8..n {
        s += a[k] * b[k];
    }
    s + acc.iter().sum::<f64>()
}
