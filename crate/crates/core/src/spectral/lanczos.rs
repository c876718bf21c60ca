//! Shift-invert Lanczos with full reorthogonalization, thick restart and
//! locking.
//!
//! The Krylov basis is kept orthonormal against itself and against all
//! locked vectors. The projected matrix is stored densely, so after a thick
//! restart the arrowhead coupling of kept Ritz vectors to the next basis
//! vector appears automatically from the orthogonalization coefficients.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Result of a Lanczos run: eigenvalues of the transformed operator with
/// their vectors.
pub(crate) struct RitzSet {
    pub theta: Vec<f64>,
    /// Column-major, `dim x theta.len()`.
    pub vectors: Vec<f64>,
}

pub(crate) struct LanczosConfig {
    pub max_basis: usize,
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

fn dense_sym_eig(t: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = Mat::<f64>::from_fn(k, k, |i, j| 0.5 * (t[i * k + j] + t[j * k + i]));
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("projected eigensolve failed: {e:?}")))?;
    let s = e.S().column_vector();
    let vals: Vec<f64> = (0..k).map(|i| s[i]).collect();
    let u = e.U();
    let mut vecs = vec![0.0; k * k];
    for c in 0..k {
        for r in 0..k {
            vecs[c * k + r] = u[(r, c)];
        }
    }
    Ok((vals, vecs))
}

/// `h = B^T w` for the first `k` columns of column-major `b`.
fn project(b: &[f64], dim: usize, k: usize, w: &[f64], h: &mut [f64]) {
    if k == 0 {
        return;
    }
    let bm = MatRef::from_column_major_slice(&b[..dim * k], dim, k);
    let wm = MatRef::from_column_major_slice(w, dim, 1);
    let hm = faer::MatMut::from_column_major_slice_mut(&mut h[..k], k, 1);
    matmul(hm, Accum::Replace, bm.transpose(), wm, 1.0, Par::Seq);
}

/// `w -= B h` for the first `k` columns.
fn subtract(b: &[f64], dim: usize, k: usize, h: &[f64], w: &mut [f64]) {
    if k == 0 {
        return;
    }
    let bm = MatRef::from_column_major_slice(&b[..dim * k], dim, k);
    let hm = MatRef::from_column_major_slice(&h[..k], k, 1);
    let wm = faer::MatMut::from_column_major_slice_mut(w, dim, 1);
    matmul(wm, Accum::Add, bm, hm, -1.0, Par::Seq);
}

fn norm(v: &[f64]) -> f64 {
    super::banded::dot(v, v).sqrt()
}

/// Orthogonalize `w` against `locked` and the first `k` basis columns, twice.
/// Returns the accumulated basis coefficients.
fn orthogonalize(locked: &[f64], nlocked: usize, basis: &[f64], k: usize, dim: usize, w: &mut [f64]) -> Vec<f64> {
    let mut h = vec![0.0; k];
    let mut tmp = vec![0.0; k.max(nlocked)];
    for _ in 0..2 {
        project(locked, dim, nlocked, w, &mut tmp);
        subtract(locked, dim, nlocked, &tmp, w);
        project(basis, dim, k, w, &mut tmp);
        subtract(basis, dim, k, &tmp, w);
        for i in 0..k {
            h[i] += tmp[i];
        }
    }
    h
}

/// Find the eigenpairs of the symmetric operator `op` that satisfy `wanted`,
/// expecting exactly `need` of them. `op` maps `x` to `y`.
pub(crate) fn shift_invert_lanczos(
    dim: usize,
    need: usize,
    mut op: impl FnMut(&[f64], &mut [f64]),
    wanted: impl Fn(f64) -> bool,
    cfg: &LanczosConfig,
) -> Result<RitzSet> {
    let mut locked: Vec<f64> = Vec::new();
    let mut locked_theta: Vec<f64> = Vec::new();
    if need == 0 || dim == 0 {
        return Ok(RitzSet { theta: vec![], vectors: vec![] });
    }
    let m = cfg.max_basis.min(dim).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut basis = vec![0.0; dim * (m + 1)];
    let mut t = vec![0.0; m * m];
    let mut w = vec![0.0; dim];
    let mut rounds = 0;
    while locked_theta.len() < need {
        rounds += 1;
        if rounds > need + 4 || locked_theta.len() >= dim {
            break;
        }
        let nlocked = locked_theta.len();
        // fresh random start orthogonal to the locked space
        for x in w.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        orthogonalize(&locked, nlocked, &basis, 0, dim, &mut w);
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        for (b, x) in basis[..dim].iter_mut().zip(&w) {
            *b = x / nw;
        }
        t.iter_mut().for_each(|x| *x = 0.0);
        let mut k = 0; // basis columns with a computed projection column
        let mut found_this_round = false;
        for _restart in 0..cfg.max_restarts {
            // expand to m columns
            let mut breakdown = false;
            while k < m {
                op(&basis[k * dim..(k + 1) * dim], &mut w);
                let h = orthogonalize(&locked, nlocked, &basis, k + 1, dim, &mut w);
                for i in 0..=k {
                    t[i * m + k] = h[i];
                    t[k * m + i] = h[i];
                }
                let beta = norm(&w);
                if k + 1 < m {
                    t[(k + 1) * m + k] = beta;
                    t[k * m + k + 1] = beta;
                }
                let scale = h[k].abs().max(1e-300);
                if beta <= 1e-14 * scale {
                    breakdown = true;
                    k += 1;
                    break;
                }
                let col = &mut basis[(k + 1) * dim..(k + 2) * dim];
                for (b, x) in col.iter_mut().zip(&w) {
                    *b = x / beta;
                }
                k += 1;
            }
            // residual coupling to the next vector
            let beta = if breakdown { 0.0 } else { norm(&w) };
            let tk: Vec<f64> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| t[i * m + j]).collect();
            let (vals, vecs) = dense_sym_eig(&tk, k)?;
            let max_abs = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            // converged wanted Ritz values
            let conv: Vec<bool> = (0..k)
                .map(|c| (beta * vecs[c * k + k - 1]).abs() <= cfg.tol * vals[c].abs().max(max_abs * 1e-3))
                .collect();
            let wanted_idx: Vec<usize> = (0..k).filter(|&c| wanted(vals[c])).collect();
            let remaining = need - nlocked;
            let all_wanted_conv = wanted_idx.iter().all(|&c| conv[c]);
            // Ritz values converge from the outside in; once the unwanted
            // values closest to the window on both sides have converged, any
            // missing wanted eigenvalue is a degenerate copy invisible to this
            // start vector.
            let edge_conv = {
                let pos = (0..k).filter(|&c| !wanted(vals[c]) && vals[c] > 0.0).max_by(|&a, &b| vals[a].total_cmp(&vals[b]));
                let neg = (0..k).filter(|&c| !wanted(vals[c]) && vals[c] < 0.0).min_by(|&a, &b| vals[a].total_cmp(&vals[b]));
                pos.map_or(true, |c| conv[c]) && neg.map_or(true, |c| conv[c])
            };
            let done = breakdown || (all_wanted_conv && (wanted_idx.len() >= remaining || edge_conv));
            if done {
                let mut take: Vec<usize> = wanted_idx.clone();
                take.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()));
                take.truncate(remaining);
                for &c in &take {
                    let mut v = vec![0.0; dim];
                    let coeffs = &vecs[c * k..(c + 1) * k];
                    let bm = MatRef::from_column_major_slice(&basis[..dim * k], dim, k);
                    let cm = MatRef::from_column_major_slice(coeffs, k, 1);
                    let vm = faer::MatMut::from_column_major_slice_mut(&mut v, dim, 1);
                    matmul(vm, Accum::Replace, bm, cm, 1.0, Par::Seq);
                    locked.extend_from_slice(&v);
                    locked_theta.push(vals[c]);
                }
                found_this_round = !take.is_empty();
                break;
            }
            // thick restart: keep wanted plus the largest-|theta| others
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| {
                let wa = wanted(vals[a]);
                let wb = wanted(vals[b]);
                wb.cmp(&wa).then(vals[b].abs().total_cmp(&vals[a].abs()))
            });
            if wanted_idx.len() + 8 > m {
                return Err(Error::Numerical("Lanczos basis too small for the requested window".into()));
            }
            let keep = (wanted_idx.len() + (m - wanted_idx.len()) / 3).clamp(1, m - 1).min(k);
            let kept: Vec<usize> = order[..keep].to_vec();
            let mut newb = vec![0.0; dim * keep];
            {
                let bm = MatRef::from_column_major_slice(&basis[..dim * k], dim, k);
                let mut sel = vec![0.0; k * keep];
                for (c, &src) in kept.iter().enumerate() {
                    sel[c * k..(c + 1) * k].copy_from_slice(&vecs[src * k..(src + 1) * k]);
                }
                let sm = MatRef::from_column_major_slice(&sel, k, keep);
                let nm = faer::MatMut::from_column_major_slice_mut(&mut newb, dim, keep);
                matmul(nm, Accum::Replace, bm, sm, 1.0, Par::Seq);
            }
            let next: Vec<f64> = basis[k * dim..(k + 1) * dim].to_vec();
            basis[..dim * keep].copy_from_slice(&newb);
            basis[keep * dim..(keep + 1) * dim].copy_from_slice(&next);
            t.iter_mut().for_each(|x| *x = 0.0);
            for (c, &src) in kept.iter().enumerate() {
                t[c * m + c] = vals[src];
                let coupling = beta * vecs[src * k + k - 1];
                t[c * m + keep] = coupling;
                t[keep * m + c] = coupling;
            }
            k = keep;
        }
        if !found_this_round {
            break;
        }
    }
    if locked_theta.len() < need {
        return Err(Error::Numerical(format!(
            "window not converged: found {} of {} eigenpairs",
            locked_theta.len(),
            need
        )));
    }
    Ok(RitzSet { theta: locked_theta, vectors: locked })
}
