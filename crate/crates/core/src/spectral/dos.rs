//! Semiclassical (Thomas-Fermi) density of states.
//!
//! `g(E) = Area{V < E} / (2 pi hbar^2)` for the full spectrum; each symmetry
//! sector carries one third of it. The scaled DOS `f = 2 pi hbar^2 g` equals
//! the allowed configuration-space area and does not depend on `hbar`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::basis::ModelParams;
use crate::error::{Error, Result};
use crate::model::{Potential, WELL_SEARCH_LIMIT};
use crate::quad::integrate_adaptive;

/// Fraction of the full-spectrum DOS carried by one sector.
pub const PER_SECTOR_FACTOR: f64 = 1.0 / 3.0;

/// Boundary radius of the alpha-model well along a direction with
/// `s = sin(3 phi)`: smallest positive root of `r^2/2 + alpha s r^3/3 = E`.
pub fn well_radius_alpha(e: f64, alpha: f64, s: f64) -> f64 {
    let a = alpha * s;
    if a == 0.0 {
        return (2.0 * e).sqrt();
    }
    let x = 12.0 * e * alpha * alpha * s * s;
    let delta = 2.0 * (0.5 * x).sqrt().min(1.0).asin();
    let c = 0.5 * 3f64.sqrt() * (delta / 3.0).sin();
    let q = (delta / 6.0).sin().powi(2);
    if a > 0.0 {
        (c - q) / a
    } else {
        (c + q) / a.abs()
    }
}

fn check_alpha_domain(e: f64, alpha: f64) -> Result<()> {
    if !(e > 0.0) {
        return Err(Error::Domain(format!("energy must be positive, got {e}")));
    }
    if alpha != 0.0 && e > 1.0 / (6.0 * alpha * alpha) * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "energy {e} above the saddle energy {}",
            1.0 / (6.0 * alpha * alpha)
        )));
    }
    Ok(())
}

/// `f(E) = (3/2) int_0^{2pi/3} r(phi)^2 dphi` for the pure cubic model.
pub fn scaled_dos_alpha(e: f64, alpha: f64) -> Result<f64> {
    check_alpha_domain(e, alpha)?;
    let r2 = |phi: f64| well_radius_alpha(e, alpha, (3.0 * phi).sin()).powi(2);
    let cuts = [0.0, PI / 6.0, PI / 3.0, PI / 2.0, 2.0 * PI / 3.0];
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += integrate_adaptive(r2, w[0], w[1], 1e-12).0;
    }
    Ok(1.5 * total)
}

/// Thomas-Fermi `g(E)` of the pure cubic model from the analytic radii.
pub fn dos_thomas_fermi_alpha(e: f64, alpha: f64, hbar: f64) -> Result<f64> {
    Ok(scaled_dos_alpha(e, alpha)? / (2.0 * PI * hbar * hbar))
}

/// Area of `{V < e} intersect cell`, refined where the boundary crosses.
fn cell_area<F: Fn(f64, f64) -> bool>(ins: &F, x0: f64, y0: f64, h: f64, corners: [bool; 4], depth: u32) -> f64 {
    let inside = corners.iter().filter(|&&b| b).count();
    if inside == 4 {
        return h * h;
    }
    if inside == 0 {
        return 0.0;
    }
    if depth == 0 {
        let xc = x0 + 0.5 * h;
        let yc = y0 + 0.5 * h;
        let centre = ins(xc, yc) as usize as f64;
        return h * h * (inside as f64 + 2.0 * centre) / 6.0;
    }
    let hh = 0.5 * h;
    // 3x3 node lattice of the four children
    let mut n = [[false; 3]; 3];
    n[0][0] = corners[0];
    n[0][2] = corners[1];
    n[2][0] = corners[2];
    n[2][2] = corners[3];
    for (iy, row) in n.iter_mut().enumerate() {
        for (ix, cell) in row.iter_mut().enumerate() {
            if ix == 1 || iy == 1 {
                *cell = ins(x0 + ix as f64 * hh, y0 + iy as f64 * hh);
            }
        }
    }
    let mut a = 0.0;
    for cy in 0..2 {
        for cx in 0..2 {
            let c = [n[cy][cx], n[cy][cx + 1], n[cy + 1][cx], n[cy + 1][cx + 1]];
            a += cell_area(ins, x0 + cx as f64 * hh, y0 + cy as f64 * hh, hh, c, depth - 1);
        }
    }
    a
}

/// Number of grid cells per side of the flood-fill lattice.
const FILL_GRID: usize = 1024;
/// Refinement levels applied to boundary cells.
const REFINE_LEVELS: u32 = 6;

/// Area of the connected component of `{V < e}` that contains the origin.
///
/// The domain is the disk of radius `R` slightly larger than the
/// outermost first boundary crossing along rays from the origin; this keeps
/// regions beyond a saddle out of the count. The component is found by a
/// 4-connected flood fill on a uniform lattice and its area is integrated
/// with hierarchical refinement of the boundary cells.
pub fn scaled_dos_numeric(e: f64, pot: &Potential) -> Result<f64> {
    if !(e > 0.0) {
        return Err(Error::Domain(format!("energy must be positive, got {e}")));
    }
    if pot.is_open(e) {
        return Err(Error::Domain(format!("energy {e} above the saddle: allowed region is unbounded")));
    }
    let r_limit = WELL_SEARCH_LIMIT * (2.0 * e).sqrt().max(1.0);
    let rays = 2048;
    let mut rmax: f64 = 0.0;
    for k in 0..rays {
        let phi = 2.0 * PI * k as f64 / rays as f64;
        let r = pot.well_radius(e, phi, r_limit)
            .ok_or_else(|| Error::Domain(format!("no bounded well at energy {e}")))?;
        rmax = rmax.max(r);
    }
    let big_r = 1.02 * rmax;
    let g = FILL_GRID;
    let h = 2.0 * big_r / g as f64;
    let node = |i: usize| -big_r + i as f64 * h;
    let ins = |x: f64, y: f64| x * x + y * y < big_r * big_r && pot.v(x, y) < e;
    let inside: Vec<bool> = (0..(g + 1) * (g + 1))
        .into_par_iter()
        .map(|k| {
            let (iy, ix) = (k / (g + 1), k % (g + 1));
            ins(node(ix), node(iy))
        })
        .collect();
    let at = |ix: usize, iy: usize| inside[iy * (g + 1) + ix];
    let corners = |cx: usize, cy: usize| [at(cx, cy), at(cx + 1, cy), at(cx, cy + 1), at(cx + 1, cy + 1)];
    let touches = |cx: usize, cy: usize| corners(cx, cy).iter().any(|&b| b);
    // flood fill from the cell containing the origin
    let mut mark = vec![false; g * g];
    let c0 = g / 2;
    let mut stack = Vec::new();
    for (cx, cy) in [(c0, c0), (c0 - 1, c0), (c0, c0 - 1), (c0 - 1, c0 - 1)] {
        if touches(cx, cy) && !mark[cy * g + cx] {
            mark[cy * g + cx] = true;
            stack.push((cx, cy));
        }
    }
    while let Some((cx, cy)) = stack.pop() {
        let mut nb = Vec::with_capacity(4);
        if cx > 0 {
            nb.push((cx - 1, cy));
        }
        if cx + 1 < g {
            nb.push((cx + 1, cy));
        }
        if cy > 0 {
            nb.push((cx, cy - 1));
        }
        if cy + 1 < g {
            nb.push((cx, cy + 1));
        }
        for (nx, ny) in nb {
            if !mark[ny * g + nx] && touches(nx, ny) {
                mark[ny * g + nx] = true;
                stack.push((nx, ny));
            }
        }
    }
    let area: f64 = (0..g * g)
        .into_par_iter()
        .filter(|&k| mark[k])
        .map(|k| {
            let (cy, cx) = (k / g, k % g);
            cell_area(&ins, node(cx), node(cy), h, corners(cx, cy), REFINE_LEVELS)
        })
        .sum();
    Ok(area)
}

/// `g(E)` from the numerically integrated allowed area.
pub fn dos_numeric(e: f64, params: &ModelParams) -> Result<f64> {
    let pot = Potential::new(params.alpha, params.lambda);
    Ok(scaled_dos_numeric(e, &pot)? / (2.0 * PI * params.hbar * params.hbar))
}

/// Scaled DOS using the analytic route when it applies.
pub fn scaled_dos(e: f64, pot: &Potential) -> Result<f64> {
    if pot.lambda == 0.0 {
        if pot.alpha == 0.0 {
            if !(e > 0.0) {
                return Err(Error::Domain(format!("energy must be positive, got {e}")));
            }
            return Ok(2.0 * PI * e);
        }
        scaled_dos_alpha(e, pot.alpha)
    } else {
        scaled_dos_numeric(e, pot)
    }
}

/// DOS sampled on an energy grid.
#[derive(Clone, Debug)]
pub struct DosCurve {
    pub energies: Vec<f64>,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
    pub per_sector_factor: f64,
}

pub fn dos_curve(energies: &[f64], pot: &Potential, hbar: f64) -> Result<DosCurve> {
    let f: Vec<f64> = energies.par_iter().map(|&e| scaled_dos(e, pot)).collect::<Result<_>>()?;
    let g = f.iter().map(|x| x / (2.0 * PI * hbar * hbar)).collect();
    Ok(DosCurve { energies: energies.to_vec(), g, f, per_sector_factor: PER_SECTOR_FACTOR })
}

/// Semiclassical level count `int_{e_lo}^{e_hi} g dE`, full spectrum.
pub fn integrated_dos(e_lo: f64, e_hi: f64, pot: &Potential, hbar: f64) -> Result<f64> {
    let err = std::cell::Cell::new(None);
    let (v, _) = integrate_adaptive(
        |e| match scaled_dos(e, pot) {
            Ok(f) => f,
            Err(x) => {
                err.set(Some(x));
                0.0
            }
        },
        e_lo,
        e_hi,
        1e-9,
    );
    if let Some(x) = err.into_inner() {
        return Err(x);
    }
    Ok(v / (2.0 * PI * hbar * hbar))
}

/// Heisenberg time `t_H = 2 pi hbar g(E)`; `per_sector` divides by three.
pub fn heisenberg_time(e: f64, params: &ModelParams, per_sector: bool) -> Result<f64> {
    let f = scaled_dos(e, &Potential::new(params.alpha, params.lambda))?;
    let t = f / params.hbar;
    Ok(if per_sector { t * PER_SECTOR_FACTOR } else { t })
}
