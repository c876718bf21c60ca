//! Husimi functions of eigenstates: the quantum surface of section, the
//! projections onto the phase space of the second mode and onto
//! configuration space, and the configuration-space wavefunction.
//!
//! Coherent-state overlaps are evaluated in the log domain. For each mode
//! the weights `|alpha|^k / sqrt(k!)` are rescaled by their maximum and only
//! the window of `k` within `WINDOW_LOG_CUT` of it is kept, so no factorial
//! or power is ever formed directly.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::basis::{ModelParams, SectorBasis};
use crate::classical::{p1_on_section, SosGrid};
use crate::error::{Error, Result};
use crate::model::{Potential, WELL_SEARCH_LIMIT};
use crate::wigner::CartesianState;

/// Fields below this value are clamped when drawn on a log scale.
pub const LOG_FLOOR: f64 = 1e-11;
/// Default number of Chebyshev-Gauss nodes for the shell projections.
pub const DEFAULT_NODES: usize = 64;
/// Per-mode weights this many e-folds below the mode maximum are dropped.
const WINDOW_LOG_CUT: f64 = 40.0;
/// Largest cutoff for which the reduced density matrix is formed.
pub const MAX_REDUCED_CUTOFF: usize = 8192;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `ln n!` from the log-gamma function.
pub fn ln_factorial(n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

fn ln_factorials(n_max: usize) -> Vec<f64> {
    (0..=n_max).map(ln_factorial).collect()
}

/// Phase-space point of both modes in canonical coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentPoint {
    pub q1: f64,
    pub p1: f64,
    pub q2: f64,
    pub p2: f64,
}

impl CoherentPoint {
    pub fn new(q1: f64, p1: f64, q2: f64, p2: f64) -> Self {
        CoherentPoint { q1, p1, q2, p2 }
    }

    /// `alpha_1 = (q1 + i p1) / sqrt(2 hbar)`.
    pub fn alpha1(&self, hbar: f64) -> Complex64 {
        Complex64::new(self.q1, self.p1) / (2.0 * hbar).sqrt()
    }

    pub fn alpha2(&self, hbar: f64) -> Complex64 {
        Complex64::new(self.q2, self.p2) / (2.0 * hbar).sqrt()
    }

    /// Rotated labels `(alpha_+, alpha_-)` with `alpha_pm = (alpha_1 -+ i alpha_2) / sqrt 2`.
    pub fn rotated(&self, hbar: f64) -> (Complex64, Complex64) {
        let (a1, a2) = (self.alpha1(hbar), self.alpha2(hbar));
        let ia2 = Complex64::i() * a2;
        ((a1 - ia2) * FRAC_1_SQRT_2, (a1 + ia2) * FRAC_1_SQRT_2)
    }
}

fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// `(ln |<alpha|n>|, arg <alpha|n>)` with
/// `<alpha|n> = e^{-|alpha|^2/2} conj(alpha)^n / sqrt(n!)`.
pub fn log_overlap(n: usize, alpha: Complex64) -> (f64, f64) {
    let r2 = alpha.norm_sqr();
    if n == 0 {
        return (-0.5 * r2, 0.0);
    }
    let r = alpha.norm();
    if r == 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    (-0.5 * r2 + n as f64 * r.ln() - 0.5 * ln_factorial(n), wrap_phase(-(n as f64) * alpha.arg()))
}

/// Windowed, rescaled weights `|z|^k / sqrt(k!) e^{i k phase}` of one mode.
#[derive(Clone, Debug, Default)]
struct ModeWeights {
    lo: usize,
    hi: usize,
    /// `ln max_k |z|^k / sqrt(k!)` over `0..=k_max`.
    log_max: f64,
    w: Vec<Complex64>,
}

impl ModeWeights {
    fn fill(&mut self, r: f64, phase: f64, k_max: usize, lf: &[f64]) {
        let lr = r.ln();
        let lw = |k: usize| if k == 0 { 0.0 } else { k as f64 * lr - 0.5 * lf[k] };
        // the weights are log-concave in k with their peak at floor(r^2)
        let peak = if r == 0.0 { 0 } else { ((r * r).floor() as usize).min(k_max) };
        let top = lw(peak);
        let mut lo = peak;
        while lo > 0 && lw(lo - 1) - top > -WINDOW_LOG_CUT {
            lo -= 1;
        }
        let mut hi = peak;
        while hi < k_max && lw(hi + 1) - top > -WINDOW_LOG_CUT {
            hi += 1;
        }
        self.lo = lo;
        self.hi = hi;
        self.log_max = top;
        self.w.clear();
        for k in lo..=hi {
            self.w.push(Complex64::from_polar((lw(k) - top).exp(), k as f64 * phase));
        }
    }

    fn get(&self, k: usize) -> Complex64 {
        self.w[k - self.lo]
    }
}

/// Reusable buffers for amplitude evaluation.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    plus: ModeWeights,
    minus: ModeWeights,
}

/// Eigenstate coefficients laid out by occupations `(n+, n-)` for fast
/// coherent-state sums. Coefficients are the real gauged ones; the gauge
/// phase `e^{i pi l/6}` factorizes over the two modes and is applied there.
#[derive(Clone, Debug)]
pub struct CircularState {
    cutoff: usize,
    step: usize,
    /// Smallest `n-` in each row.
    starts: Vec<usize>,
    /// `rows[n+][j]` is the coefficient of `n- = starts[n+] + step j`.
    rows: Vec<Vec<f64>>,
    lf: Vec<f64>,
}

impl CircularState {
    pub fn new(basis: &SectorBasis, coeffs: &[f64]) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::InvalidParams(format!(
                "state has {} coefficients, basis has {} states",
                coeffs.len(),
                basis.dim()
            )));
        }
        let cutoff = basis.cutoff_n as usize;
        let (step, residue) = match basis.sector {
            Some(s) => (3usize, s.residue()),
            None => (1usize, 0),
        };
        let starts: Vec<usize> = (0..=cutoff)
            .map(|np| if step == 1 { 0 } else { (np as i64 - residue).rem_euclid(3) as usize })
            .collect();
        let mut rows: Vec<Vec<f64>> = (0..=cutoff)
            .map(|np| {
                let span = cutoff - np;
                let len = if starts[np] > span { 0 } else { (span - starts[np]) / step + 1 };
                vec![0.0; len]
            })
            .collect();
        for (i, &c) in coeffs.iter().enumerate() {
            let (np, nm) = basis.occupations(i);
            let j = (nm - starts[np]) / step;
            debug_assert_eq!((nm - starts[np]) % step, 0);
            rows[np][j] = c;
        }
        Ok(CircularState { cutoff, step, starts, rows, lf: ln_factorials(cutoff) })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Overlap `sum C_{nl} <alpha+, alpha-|n, l>` as `(a, s)` with value
    /// `a e^{s}`.
    pub fn amplitude(&self, ap: Complex64, am: Complex64, ws: &mut Workspace) -> (Complex64, f64) {
        let n = self.cutoff;
        ws.plus.fill(ap.norm(), PI / 6.0 - ap.arg(), n, &self.lf);
        ws.minus.fill(am.norm(), -PI / 6.0 - am.arg(), n, &self.lf);
        let (ex, ey) = (&ws.plus, &ws.minus);
        let step = self.step;
        let mut acc = ZERO;
        for np in ex.lo..=ex.hi.min(n) {
            let start = self.starts[np];
            let lo = ey.lo.max(start);
            let lo = lo + (step - (lo - start) % step) % step;
            let hi = ey.hi.min(n - np);
            if lo > hi {
                continue;
            }
            let row = &self.rows[np];
            let mut inner = ZERO;
            let mut j = (lo - start) / step;
            let mut nm = lo;
            while nm <= hi {
                inner += ey.get(nm) * row[j];
                nm += step;
                j += 1;
            }
            acc += ex.get(np) * inner;
        }
        let scale = ex.log_max + ey.log_max - 0.5 * (ap.norm_sqr() + am.norm_sqr());
        (acc, scale)
    }

    /// Husimi function `|<alpha_1, alpha_2|psi>|^2` at a phase-space point.
    pub fn husimi(&self, pt: CoherentPoint, hbar: f64, ws: &mut Workspace) -> f64 {
        let (ap, am) = pt.rotated(hbar);
        let (a, s) = self.amplitude(ap, am, ws);
        a.norm_sqr() * (2.0 * s).exp()
    }
}

/// Husimi function of a state given by gauged coefficients on `basis`.
pub fn husimi_point(basis: &SectorBasis, coeffs: &[f64], hbar: f64, pt: CoherentPoint) -> Result<f64> {
    let st = CircularState::new(basis, coeffs)?;
    Ok(st.husimi(pt, hbar, &mut Workspace::default()))
}

/// Which Husimi object a field holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldKind {
    /// Normalized quantum surface of section over `(q2, p2)`.
    Qsos,
    /// Completely projected Husimi function over `(q2, p2)`.
    Complete,
    /// Energy-shell projection over `(q2, p2)`.
    Shell,
    /// Energy-shell projection over configuration space `(q1, q2)`.
    Config,
}

impl FieldKind {
    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Qsos => "qsos",
            FieldKind::Complete => "complete",
            FieldKind::Shell => "shell",
            FieldKind::Config => "config",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            FieldKind::Qsos => 0,
            FieldKind::Complete => 1,
            FieldKind::Shell => 2,
            FieldKind::Config => 3,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(FieldKind::Qsos),
            1 => Some(FieldKind::Complete),
            2 => Some(FieldKind::Shell),
            3 => Some(FieldKind::Config),
            _ => None,
        }
    }
}

/// A Husimi object sampled at the cell centres of a grid.
#[derive(Clone, Debug)]
pub struct HusimiField {
    pub kind: FieldKind,
    /// Eigenenergy used for the section or shell (the complete projection
    /// does not use one and stores `NaN`).
    pub energy: f64,
    pub hbar: f64,
    /// Values per cell; `None` outside the field's domain.
    pub grid: SosGrid,
    /// For the QSOS the constant `A_k` that was divided out; for the
    /// projections their grid integral (`(1/pi) sum P dq dp / (2 hbar)` in
    /// phase space, `sum P dq1 dq2` in configuration space). Projections
    /// are stored unnormalized.
    pub normalization: f64,
    pub log_floor: f64,
}

impl HusimiField {
    pub fn values(&self) -> &[Option<f64>] {
        &self.grid.values
    }

    pub fn max_value(&self) -> f64 {
        self.grid.values.iter().flatten().cloned().fold(0.0, f64::max)
    }

    /// Sum of the values over nonempty cells.
    pub fn sum(&self) -> f64 {
        self.grid.values.iter().flatten().sum()
    }

    /// `(1/pi) sum value dq dp / (2 hbar)`, the phase-space measure of the
    /// second mode.
    pub fn phase_space_integral(&self) -> f64 {
        self.sum() * self.grid.cell_area() / (2.0 * PI * self.hbar)
    }
}

fn potential(params: &ModelParams) -> Potential {
    Potential::new(params.alpha, params.lambda)
}

fn check_energy(e: f64) -> Result<()> {
    if !e.is_finite() {
        return Err(Error::InvalidParams(format!("energy must be finite, got {e}")));
    }
    Ok(())
}

fn qsos_values(state: &CircularState, e_k: f64, pot: &Potential, hbar: f64, grid: &SosGrid, ws: &mut Workspace) -> Vec<Option<f64>> {
    (0..grid.nx * grid.ny)
        .map(|k| {
            let (q2, p2) = grid.center_of(k);
            p1_on_section(e_k, pot, q2, p2).map(|p1| state.husimi(CoherentPoint::new(0.0, p1, q2, p2), hbar, ws))
        })
        .collect()
}

fn normalize_qsos(values: Vec<Option<f64>>, e_k: f64, hbar: f64, grid: &SosGrid) -> Result<HusimiField> {
    let total: f64 = values.iter().flatten().sum();
    let a_k = total * grid.cell_area() / (2.0 * PI * hbar);
    if !(a_k > 0.0 && a_k.is_finite()) {
        return Err(Error::Numerical(format!("Husimi function vanishes on the section at E = {e_k}")));
    }
    let mut g = grid.empty_like();
    g.values = values.into_iter().map(|v| v.map(|x| x / a_k)).collect();
    Ok(HusimiField { kind: FieldKind::Qsos, energy: e_k, hbar, grid: g, normalization: a_k, log_floor: LOG_FLOOR })
}

/// Husimi QSOS on the section `q1 = 0`, `p1 = p1^+(q2, p2; E_k)`, normalized
/// so that `(1/pi) sum Q dq2 dp2 / (2 hbar) = 1`. Cells outside the allowed
/// section at `E_k` are empty.
pub fn qsos(state: &CircularState, e_k: f64, params: &ModelParams, grid: &SosGrid) -> Result<HusimiField> {
    check_energy(e_k)?;
    let pot = potential(params);
    let hbar = params.hbar;
    let values: Vec<Option<f64>> = (0..grid.nx * grid.ny)
        .into_par_iter()
        .map_init(Workspace::default, |ws, k| {
            let (q2, p2) = grid.center_of(k);
            p1_on_section(e_k, &pot, q2, p2).map(|p1| state.husimi(CoherentPoint::new(0.0, p1, q2, p2), hbar, ws))
        })
        .collect();
    normalize_qsos(values, e_k, hbar, grid)
}

/// QSOS of many states, parallel over states.
pub fn qsos_batch(states: &[CircularState], energies: &[f64], params: &ModelParams, grid: &SosGrid) -> Result<Vec<HusimiField>> {
    if states.len() != energies.len() {
        return Err(Error::InvalidParams("one energy per state is required".into()));
    }
    let pot = potential(params);
    states
        .par_iter()
        .zip(energies.par_iter())
        .map_init(Workspace::default, |ws, (st, &e)| {
            check_energy(e)?;
            normalize_qsos(qsos_values(st, e, &pot, params.hbar, grid, ws), e, params.hbar, grid)
        })
        .collect()
}

/// Reduced density `rho_{ab} = sum_{n1} B_{n1 a} conj(B_{n1 b})` of the
/// second mode, row-major `(N+1) x (N+1)`.
#[derive(Clone, Debug)]
pub struct ReducedDensity {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl ReducedDensity {
    pub fn at(&self, a: usize, b: usize) -> Complex64 {
        self.data[a * self.dim + b]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|a| self.at(a, a).re).sum()
    }
}

pub fn reduced_density(cart: &CartesianState) -> Result<ReducedDensity> {
    let n = cart.cutoff();
    if n > MAX_REDUCED_CUTOFF {
        return Err(Error::InvalidParams(format!(
            "reduced density for cutoff {n} exceeds the supported maximum {MAX_REDUCED_CUTOFF}"
        )));
    }
    let dim = n + 1;
    let rows: Vec<Vec<Complex64>> = (0..dim)
        .into_par_iter()
        .map(|a| {
            let mut row = vec![ZERO; dim];
            for n1 in 0..=n - a {
                let ba = cart.get(n1, a);
                if ba == ZERO {
                    continue;
                }
                for (b, r) in row.iter_mut().enumerate().take(n - n1 + 1) {
                    *r += ba * cart.get(n1, b).conj();
                }
            }
            row
        })
        .collect();
    Ok(ReducedDensity { dim, data: rows.into_iter().flatten().collect() })
}

/// Completely projected Husimi function
/// `P(alpha_2) = sum rho_{ab} <alpha_2|a><b|alpha_2>` over a `(q2, p2)` grid.
pub fn project_complete(cart: &CartesianState, hbar: f64, grid: &SosGrid) -> Result<HusimiField> {
    let rho = reduced_density(cart)?;
    project_complete_from(&rho, hbar, grid)
}

pub fn project_complete_from(rho: &ReducedDensity, hbar: f64, grid: &SosGrid) -> Result<HusimiField> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidParams(format!("hbar must be positive, got {hbar}")));
    }
    let n = rho.dim - 1;
    let lf = ln_factorials(n);
    let values: Vec<Option<f64>> = (0..grid.nx * grid.ny)
        .into_par_iter()
        .map_init(ModeWeights::default, |mw, k| {
            let (q2, p2) = grid.center_of(k);
            let a = Complex64::new(q2, p2) / (2.0 * hbar).sqrt();
            // v_b = conj(<alpha|b>) up to the common scale
            mw.fill(a.norm(), a.arg(), n, &lf);
            let mut acc = 0.0;
            for i in mw.lo..=mw.hi {
                let vi = mw.get(i).conj();
                let mut row = ZERO;
                for j in mw.lo..=mw.hi {
                    row += rho.at(i, j) * mw.get(j);
                }
                acc += (vi * row).re;
            }
            Some(acc.max(0.0) * (2.0 * mw.log_max - a.norm_sqr()).exp())
        })
        .collect();
    let mut g = grid.empty_like();
    g.values = values;
    let mut f = HusimiField { kind: FieldKind::Complete, energy: f64::NAN, hbar, grid: g, normalization: 0.0, log_floor: LOG_FLOOR };
    f.normalization = f.phase_space_integral();
    Ok(f)
}

/// `(a, b)` with `V(q1, q2) = V(0, q2) + a q1^2 + b q1^4`.
fn q1_quartic(pot: &Potential, q2: f64) -> (f64, f64) {
    (0.5 + pot.alpha * q2 + 2.0 * pot.lambda * q2 * q2, pot.lambda)
}

fn check_nodes(nodes: usize) -> Result<()> {
    if nodes == 0 {
        return Err(Error::InvalidParams("at least one quadrature node is required".into()));
    }
    Ok(())
}

/// Energy-shell projection at one `(q2, p2)`:
/// `(1/(2 hbar)) int dp1 sum_{q1 = q1^+-} H(q1, p1; q2, p2) / |dH/dq1|`.
fn shell_value(state: &CircularState, e_k: f64, pot: &Potential, hbar: f64, q2: f64, p2: f64, thetas: &[f64], ws: &mut Workspace) -> Result<Option<f64>> {
    let v0 = pot.v(0.0, q2);
    let er = e_k - 0.5 * p2 * p2;
    let (a, b) = q1_quartic(pot, q2);
    let h = |q1: f64, p1: f64, ws: &mut Workspace| state.husimi(CoherentPoint::new(q1, p1, q2, p2), hbar, ws);
    let n = thetas.len() as f64;
    if a > 0.0 {
        // single branch: fold points where q1^+ = 0, i.e. p1 = -+P
        let big_p2 = 2.0 * (er - v0);
        if !(big_p2 > 0.0) {
            return Ok(None);
        }
        let big_p = big_p2.sqrt();
        let mut acc = 0.0;
        for &t in thetas {
            let p1 = big_p * t.cos();
            let s = 0.5 * big_p2 * t.sin().powi(2);
            let disc = (a * a + 4.0 * b * s).sqrt();
            let u = 2.0 * s / (a + disc);
            let mut q1 = u.sqrt();
            // Newton polish on H(q1) = E
            for _ in 0..3 {
                let f = pot.v(q1, q2) + 0.5 * (p1 * p1 + p2 * p2) - e_k;
                let d = pot.grad(q1, q2).0;
                if f.abs() < 1e-12 * e_k.abs().max(1.0) || d.abs() < 1e-8 {
                    break;
                }
                q1 = (q1 - f / d).max(0.0);
            }
            // sqrt(2s) / |dV/dq1| with the endpoint behaviour divided out
            let g = (0.5 * (a + b * u)).sqrt() / disc;
            acc += g * (h(q1, p1, ws) + h(-q1, p1, ws));
        }
        return Ok(Some(acc * PI / n / (2.0 * hbar)));
    }
    if b <= 0.0 {
        // V decreases along q1 on this slice: no bounded shell
        return Ok(None);
    }
    // double-well slice: integrate over q1 between turning points
    let big_s = er - v0;
    let disc2 = a * a + 4.0 * b * big_s;
    if !(disc2 > 0.0) {
        return Ok(None);
    }
    let disc = disc2.sqrt();
    let u_hi = (-a + disc) / (2.0 * b);
    let u_lo = (-a - disc) / (2.0 * b);
    if !(u_hi > 0.0) {
        return Ok(None);
    }
    let x1 = u_hi.sqrt();
    let intervals: Vec<(f64, f64)> = if u_lo <= 0.0 {
        vec![(-x1, x1)]
    } else {
        let x0 = u_lo.sqrt();
        vec![(-x1, -x0), (x0, x1)]
    };
    let mut acc = 0.0;
    for (lo, hi) in intervals {
        let (c, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for &t in thetas {
            let q1 = c + half * t.cos();
            let u = q1 * q1;
            // |p1| = sqrt(2 b (u_hi - u)(u - u_lo)); dq1 = half sin(t) dt
            let p1 = (2.0 * b * (u_hi - u).max(0.0) * (u - u_lo).max(0.0)).sqrt();
            let g = if u_lo <= 0.0 {
                1.0 / (2.0 * b * (u - u_lo)).sqrt()
            } else {
                let x0 = u_lo.sqrt();
                let aq = q1.abs();
                1.0 / (2.0 * b * (x1 + aq) * (aq + x0)).sqrt()
            };
            acc += g * (h(q1, p1, ws) + h(q1, -p1, ws));
        }
    }
    Ok(Some(acc * PI / n / (2.0 * hbar)))
}

/// Energy-shell projection over `(q2, p2)`, evaluated with `nodes`
/// Chebyshev-Gauss nodes per branch. Returned unnormalized.
pub fn project_shell(state: &CircularState, e_k: f64, params: &ModelParams, grid: &SosGrid, nodes: usize) -> Result<HusimiField> {
    check_energy(e_k)?;
    check_nodes(nodes)?;
    let pot = potential(params);
    let thetas = crate::quad::chebyshev_gauss_angles(nodes);
    let values: Vec<Option<f64>> = (0..grid.nx * grid.ny)
        .into_par_iter()
        .map_init(Workspace::default, |ws, k| {
            let (q2, p2) = grid.center_of(k);
            shell_value(state, e_k, &pot, params.hbar, q2, p2, &thetas, ws)
        })
        .collect::<Result<_>>()?;
    let mut g = grid.empty_like();
    g.values = values;
    let mut f = HusimiField { kind: FieldKind::Shell, energy: e_k, hbar: params.hbar, grid: g, normalization: 0.0, log_floor: LOG_FLOOR };
    f.normalization = f.phase_space_integral();
    Ok(f)
}

/// Whether `(q1, q2)` lies in the well `{V < e}` around the origin.
pub fn in_well(pot: &Potential, e: f64, q1: f64, q2: f64) -> bool {
    if !(pot.v(q1, q2) < e) {
        return false;
    }
    let r = q1.hypot(q2);
    if r == 0.0 {
        return true;
    }
    let limit = WELL_SEARCH_LIMIT * (2.0 * e).sqrt().max(1.0);
    pot.well_radius(e, q2.atan2(q1), limit).map_or(false, |rb| r < rb)
}

/// Energy-shell projection over configuration space:
/// `(1/(2 hbar)) int dp2 sum_{p1 = +-p1^+} H / p1^+`. With
/// `p2 = P cos t`, `p1^+ = P sin t` the weight becomes exactly `dt`.
pub fn project_config(state: &CircularState, e_k: f64, params: &ModelParams, grid: &SosGrid, nodes: usize) -> Result<HusimiField> {
    check_energy(e_k)?;
    check_nodes(nodes)?;
    let pot = potential(params);
    let hbar = params.hbar;
    let thetas = crate::quad::chebyshev_gauss_angles(nodes);
    let n = nodes as f64;
    let values: Vec<Option<f64>> = (0..grid.nx * grid.ny)
        .into_par_iter()
        .map_init(Workspace::default, |ws, k| {
            let (q1, q2) = grid.center_of(k);
            if !in_well(&pot, e_k, q1, q2) {
                return None;
            }
            let big_p = (2.0 * (e_k - pot.v(q1, q2))).sqrt();
            let mut acc = 0.0;
            for &t in &thetas {
                let (p2, p1) = (big_p * t.cos(), big_p * t.sin());
                acc += state.husimi(CoherentPoint::new(q1, p1, q2, p2), hbar, ws)
                    + state.husimi(CoherentPoint::new(q1, -p1, q2, p2), hbar, ws);
            }
            Some(acc * PI / n / (2.0 * hbar))
        })
        .collect();
    let mut g = grid.empty_like();
    g.values = values;
    let mut f = HusimiField { kind: FieldKind::Config, energy: e_k, hbar, grid: g, normalization: 0.0, log_floor: LOG_FLOOR };
    f.normalization = f.sum() * f.grid.cell_area();
    Ok(f)
}

/// Default `(q1, q2)` bounds for configuration-space fields: the bounding
/// box of the well at energy `e`.
pub fn config_bounds(e: f64, params: &ModelParams) -> Result<(f64, f64, f64, f64)> {
    potential(params)
        .well_bounds(e)
        .ok_or_else(|| Error::Domain(format!("no bounded well at energy {e}")))
}

/// Normalized Hermite functions `h_n(q) = hbar^{-1/4} phi_n(q / sqrt hbar)`
/// for `n = 0..=n_max`, from the three-term recurrence with rescaling.
pub fn hermite_functions(n_max: usize, q: f64, hbar: f64) -> Vec<f64> {
    let x = q / hbar.sqrt();
    let mut out = Vec::with_capacity(n_max + 1);
    // phi_n = m_n e^{log_scale}
    let mut log_scale = -0.25 * PI.ln() - 0.5 * x * x - 0.25 * hbar.ln();
    let (mut prev, mut cur) = (0.0f64, 1.0f64);
    out.push(log_scale.exp());
    for n in 0..n_max {
        let nf = n as f64;
        let next = x * (2.0 / (nf + 1.0)).sqrt() * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > 1e150 {
            prev *= 1e-150;
            cur *= 1e-150;
            log_scale += 150.0 * 10f64.ln();
        }
        out.push(if cur == 0.0 { 0.0 } else { cur * log_scale.exp() });
    }
    out
}

/// Configuration-space wavefunction `psi(q1, q2) = sum B_{n1 n2} h_{n1}(q1) h_{n2}(q2)`.
pub fn wavefunction(cart: &CartesianState, hbar: f64, q1: f64, q2: f64) -> Complex64 {
    let n = cart.cutoff();
    let h1 = hermite_functions(n, q1, hbar);
    let h2 = hermite_functions(n, q2, hbar);
    let mut acc = ZERO;
    for (shell_n, shell) in cart.shells.iter().enumerate() {
        for (n2, b) in shell.iter().enumerate() {
            acc += b * (h1[shell_n - n2] * h2[n2]);
        }
    }
    acc
}

/// `|psi|^2` over a `(q1, q2)` grid (all cells filled).
pub fn probability_density(cart: &CartesianState, hbar: f64, grid: &SosGrid) -> Vec<f64> {
    (0..grid.nx * grid.ny)
        .into_par_iter()
        .map(|k| {
            let (q1, q2) = grid.center_of(k);
            wavefunction(cart, hbar, q1, q2).norm_sqr()
        })
        .collect()
}
