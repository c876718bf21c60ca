//! Classical dynamics of the two-degree-of-freedom model: trajectories,
//! Poincare sections on `q1 = 0, p1 > 0`, SALI chaos maps and the momentum
//! transport time.
//!
//! Times are in the natural units of the scaled Hamiltonian, in which the
//! linear oscillator has period `2 pi` (see [`LINEAR_PERIOD`]).

mod dop853;

use std::f64::consts::PI;

use rayon::prelude::*;

pub use dop853::Dop853;

use crate::error::{Error, Result};
use crate::model::Potential;
use crate::spectral::scaled_dos;

/// Period of the linear oscillator in natural time units.
pub const LINEAR_PERIOD: f64 = 2.0 * PI;
/// Interval between deviation-vector renormalizations.
pub const RENORM_DTAU: f64 = 0.5;
/// SALI below which an orbit is classified chaotic.
pub const SALI_THRESHOLD: f64 = 1e-8;
/// SALI integration stops once the index falls below this value; it can only
/// keep decreasing, so the classification is already settled.
pub const SALI_EARLY_STOP: f64 = 1e-12;

/// Point of the four-dimensional phase space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub q1: f64,
    pub q2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl PhasePoint {
    pub fn new(q1: f64, q2: f64, p1: f64, p2: f64) -> Self {
        PhasePoint { q1, q2, p1, p2 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.q1, self.q2, self.p1, self.p2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        PhasePoint { q1: a[0], q2: a[1], p1: a[2], p2: a[3] }
    }

    pub fn energy(&self, pot: &Potential) -> f64 {
        pot.energy(self.q1, self.q2, self.p1, self.p2)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Point on the section `q1 = 0` with `p1 > 0` at energy `e`.
    pub fn on_section(e: f64, pot: &Potential, q2: f64, p2: f64) -> Option<Self> {
        p1_on_section(e, pot, q2, p2).map(|p1| PhasePoint::new(0.0, q2, p1, p2))
    }
}

/// `p1^+ = sqrt(2E - 2V(0, q2) - p2^2)` when real.
pub fn p1_on_section(e: f64, pot: &Potential, q2: f64, p2: f64) -> Option<f64> {
    let arg = 2.0 * (e - pot.v(0.0, q2)) - p2 * p2;
    (arg >= 0.0).then(|| arg.sqrt())
}

/// Integration tolerances and the escape guard.
#[derive(Clone, Debug)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Radius beyond which a trajectory is reported as escaped; `None`
    /// derives one from the potential.
    pub escape_radius: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { rtol: 1e-14, atol: 1e-14, escape_radius: None }
    }
}

impl IntegratorOptions {
    fn escape_radius(&self, pot: &Potential) -> f64 {
        self.escape_radius.unwrap_or_else(|| {
            let a = pot.alpha.abs();
            if a > 0.0 {
                10.0 * (1.0 / a).max(1.0)
            } else {
                f64::INFINITY
            }
        })
    }
}

fn flow(pot: Potential) -> impl Fn(&[f64; 4], &mut [f64; 4]) {
    move |y, dy| {
        let (g1, g2) = pot.grad(y[0], y[1]);
        *dy = [y[2], y[3], -g1, -g2];
    }
}

/// Flow plus two tangent vectors: `y[4..8]` and `y[8..12]`.
fn tangent_flow(pot: Potential) -> impl Fn(&[f64; 12], &mut [f64; 12]) {
    move |y, dy| {
        let (g1, g2) = pot.grad(y[0], y[1]);
        let (h11, h12, h22) = pot.hessian(y[0], y[1]);
        dy[0] = y[2];
        dy[1] = y[3];
        dy[2] = -g1;
        dy[3] = -g2;
        for o in [4, 8] {
            dy[o] = y[o + 2];
            dy[o + 1] = y[o + 3];
            dy[o + 2] = -(h11 * y[o] + h12 * y[o + 1]);
            dy[o + 3] = -(h12 * y[o] + h22 * y[o + 1]);
        }
    }
}

const H0: f64 = 0.01;

fn check_escape(y: &[f64], radius: f64, t: f64) -> Result<()> {
    let r2 = y[0] * y[0] + y[1] * y[1];
    if !(r2 <= radius * radius) {
        return Err(Error::Domain(format!("trajectory escaped the well at t = {:.6}", t)));
    }
    Ok(())
}

fn norm4(v: &[f64]) -> f64 {
    v[..4].iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sampled trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub potential: Potential,
    /// Sample times.
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    /// Unit deviation vectors at each sample (empty without variational
    /// equations).
    pub deviations: Vec<[[f64; 4]; 2]>,
    /// Accumulated `ln` of the deviation norms removed by renormalization.
    pub log_norms: [f64; 2],
}

impl Trajectory {
    pub fn last(&self) -> PhasePoint {
        *self.points.last().expect("trajectory has at least the initial point")
    }
}

/// Integrate from `state` for time `t_end` (negative runs backwards),
/// sampling every accepted step. With `with_variational` the deviation
/// vectors start as `e_q1` and `e_p2` and are renormalized after every step.
pub fn integrate(
    pot: &Potential,
    state: PhasePoint,
    t_end: f64,
    with_variational: bool,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if !state.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidParams("non-finite initial state or time".into()));
    }
    let radius = opts.escape_radius(pot);
    let tau_end = t_end;
    let mut traj = Trajectory {
        potential: *pot,
        times: vec![0.0],
        points: vec![state],
        deviations: vec![],
        log_norms: [0.0; 2],
    };
    if with_variational {
        let f = tangent_flow(*pot);
        let mut y = [0.0; 12];
        y[..4].copy_from_slice(&state.to_array());
        y[4] = 1.0;
        y[11] = 1.0;
        traj.deviations.push([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
        let mut st = Dop853::new(&f, 0.0, y, H0, opts.rtol, opts.atol);
        while st.t != tau_end {
            st.step(&f, tau_end)?;
            check_escape(&st.y, radius, st.t)?;
            let mut y = st.y;
            let mut devs = [[0.0; 4]; 2];
            for (k, o) in [4usize, 8].into_iter().enumerate() {
                let n = norm4(&y[o..o + 4]);
                traj.log_norms[k] += n.ln();
                for i in 0..4 {
                    y[o + i] /= n;
                    devs[k][i] = y[o + i];
                }
            }
            st.reset_state(&f, y);
            traj.times.push(st.t);
            traj.points.push(PhasePoint::from_array([y[0], y[1], y[2], y[3]]));
            traj.deviations.push(devs);
        }
    } else {
        let f = flow(*pot);
        let mut st = Dop853::new(&f, 0.0, state.to_array(), H0, opts.rtol, opts.atol);
        while st.t != tau_end {
            st.step(&f, tau_end)?;
            check_escape(&st.y, radius, st.t)?;
            traj.times.push(st.t);
            traj.points.push(PhasePoint::from_array(st.y));
        }
    }
    Ok(traj)
}

/// Move a point with `q1 < 0 < p1` forward along its orbit onto `q1 = 0`
/// by integrating with `q1` as the independent variable.
fn polish_onto_section(pot: &Potential, p: PhasePoint) -> Result<PhasePoint> {
    let pot = *pot;
    let f = move |y: &[f64; 4], dy: &mut [f64; 4]| {
        // y = (q1, q2, p1, p2), derivatives with respect to q1
        let (g1, g2) = pot.grad(y[0], y[1]);
        let inv = 1.0 / y[2];
        *dy = [1.0, y[3] * inv, -g1 * inv, -g2 * inv];
    };
    let start = p.q1;
    let mut st = Dop853::new(&f, start, p.to_array(), -start, 1e-14, 1e-14);
    st.advance_to(&f, 0.0)?;
    let mut out = PhasePoint::from_array(st.y);
    out.q1 = 0.0;
    Ok(out)
}

/// Crossings of `q1 = 0` with `p1 > 0`, polished onto the plane.
pub fn section_crossings(traj: &Trajectory) -> Result<Vec<PhasePoint>> {
    let mut out = Vec::new();
    if let Some(&first) = traj.points.first() {
        if first.q1 == 0.0 && first.p1 > 0.0 {
            out.push(first);
        }
    }
    for w in traj.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.q1 < 0.0 && b.q1 >= 0.0 && a.p1 > 0.0 && b.p1 > 0.0 {
            out.push(if b.q1 == 0.0 { b } else { polish_onto_section(&traj.potential, a)? });
        }
    }
    Ok(out)
}

/// Section coordinates `(q2, p2)` of the crossings.
pub fn sos_section(traj: &Trajectory) -> Result<Vec<(f64, f64)>> {
    Ok(section_crossings(traj)?.into_iter().map(|p| (p.q2, p.p2)).collect())
}

/// SALI values sampled on a logarithmic time grid.
#[derive(Clone, Debug)]
pub struct SaliSeries {
    /// Sample times.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Time at which the integration ended.
    pub final_time: f64,
    pub final_value: f64,
    /// Whether the run ended before `t_end` because SALI fell below
    /// `SALI_EARLY_STOP`.
    pub stopped_early: bool,
}

impl SaliSeries {
    pub fn is_chaotic(&self, threshold: f64) -> bool {
        self.final_value <= threshold
    }
}

fn sali_of(y: &[f64; 12]) -> f64 {
    let n1 = norm4(&y[4..8]);
    let n2 = norm4(&y[8..12]);
    let mut plus = 0.0;
    let mut minus = 0.0;
    for i in 0..4 {
        let a = y[4 + i] / n1;
        let b = y[8 + i] / n2;
        plus += (a + b) * (a + b);
        minus += (a - b) * (a - b);
    }
    plus.sqrt().min(minus.sqrt())
}

/// SALI with the default deviation vectors `e_q1` and `e_p2`.
pub fn sali(pot: &Potential, state: PhasePoint, t_end: f64, opts: &IntegratorOptions) -> Result<SaliSeries> {
    sali_with(pot, state, [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], t_end, opts)
}

/// SALI from arbitrary initial deviation vectors.
pub fn sali_with(
    pot: &Potential,
    state: PhasePoint,
    v1: [f64; 4],
    v2: [f64; 4],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<SaliSeries> {
    if norm4(&v1) == 0.0 || norm4(&v2) == 0.0 {
        return Err(Error::InvalidParams("deviation vectors must be nonzero".into()));
    }
    if !(t_end >= 0.0) {
        return Err(Error::InvalidParams(format!("t_end must be >= 0, got {t_end}")));
    }
    let radius = opts.escape_radius(pot);
    let f = tangent_flow(*pot);
    let mut y = [0.0; 12];
    y[..4].copy_from_slice(&state.to_array());
    let (n1, n2) = (norm4(&v1), norm4(&v2));
    for i in 0..4 {
        y[4 + i] = v1[i] / n1;
        y[8 + i] = v2[i] / n2;
    }
    let tau_end = t_end;
    let mut st = Dop853::new(&f, 0.0, y, H0, opts.rtol, opts.atol);
    let mut series = SaliSeries { times: vec![0.0], values: vec![sali_of(&y)], final_time: 0.0, final_value: sali_of(&y), stopped_early: false };
    // ten samples per decade starting at t = 0.1
    let mut next_log = 0usize;
    let log_time = |k: usize| 0.1 * 10f64.powf(k as f64 / 10.0);
    let mut next_renorm = RENORM_DTAU;
    let mut current = series.final_value;
    if current < SALI_EARLY_STOP {
        series.stopped_early = tau_end > 0.0;
        return Ok(series);
    }
    while st.t != tau_end {
        st.step(&f, tau_end)?;
        check_escape(&st.y, radius, st.t)?;
        let at_end = st.t == tau_end;
        if st.t >= next_renorm || at_end {
            let mut y = st.y;
            for o in [4usize, 8] {
                let n = norm4(&y[o..o + 4]);
                for v in &mut y[o..o + 4] {
                    *v /= n;
                }
            }
            st.reset_state(&f, y);
            while next_renorm <= st.t {
                next_renorm += RENORM_DTAU;
            }
            current = sali_of(&st.y);
            let t = st.t;
            if t >= log_time(next_log) {
                series.times.push(t);
                series.values.push(current);
                while log_time(next_log) <= t {
                    next_log += 1;
                }
            }
            if current < SALI_EARLY_STOP && !at_end {
                series.stopped_early = true;
                break;
            }
        }
    }
    series.final_time = st.t;
    series.final_value = current;
    if series.times.last() != Some(&series.final_time) {
        series.times.push(series.final_time);
        series.values.push(current);
    }
    Ok(series)
}

/// Bounding box `(q2min, q2max, p2min, p2max)` of the allowed section region
/// `{2E - 2V(0, q2) - p2^2 >= 0}`.
pub fn sos_bounds(e: f64, pot: &Potential) -> Result<(f64, f64, f64, f64)> {
    if !(e > 0.0) {
        return Err(Error::Domain(format!("energy must be positive, got {e}")));
    }
    if pot.is_open(e) {
        return Err(Error::Domain(format!("energy {e} above the saddle: section region is unbounded")));
    }
    let v = |q2: f64| pot.v(0.0, q2);
    let edge = |dir: f64| -> Result<f64> {
        let step = (2.0 * e).sqrt() / 512.0;
        let mut lo = 0.0;
        let mut prev = 0.0;
        let mut r = step;
        while r < 1e4 {
            let vr = v(dir * r);
            if vr >= e {
                let mut hi = r;
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if v(dir * mid) >= e {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Ok(dir * lo);
            }
            if vr < prev {
                // a saddle at exactly this energy
                return Ok(dir * lo);
            }
            prev = vr;
            lo = r;
            r += step;
        }
        Err(Error::Domain(format!("no bounded section at energy {e}")))
    };
    // maximum kinetic energy sits at the well bottom
    let pmax = (2.0 * e).sqrt();
    Ok((edge(-1.0)?, edge(1.0)?, -pmax, pmax))
}

/// Resolution and extent of a section grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SosGridSpec {
    pub nx: usize,
    pub ny: usize,
    /// `(q2min, q2max, p2min, p2max)`; the allowed-region bounding box when
    /// absent.
    pub bounds: Option<(f64, f64, f64, f64)>,
    /// Square cells of this side length covering the bounds; overrides
    /// `nx` and `ny`.
    pub spacing: Option<f64>,
}

impl SosGridSpec {
    pub fn square(n: usize) -> Self {
        SosGridSpec { nx: n, ny: n, bounds: None, spacing: None }
    }

    /// Square cells of side `d` over the allowed region.
    pub fn spaced(d: f64) -> Self {
        SosGridSpec { nx: 0, ny: 0, bounds: None, spacing: Some(d) }
    }

    pub fn resolve(&self, e: f64, pot: &Potential) -> Result<SosGrid> {
        let bounds = match self.bounds {
            Some(b) => b,
            None => sos_bounds(e, pot)?,
        };
        self.resolve_in(bounds)
    }

    /// Grid over explicit default bounds (used when `bounds` is unset).
    pub fn resolve_in(&self, default_bounds: (f64, f64, f64, f64)) -> Result<SosGrid> {
        let b = self.bounds.unwrap_or(default_bounds);
        if !(b.1 > b.0 && b.3 > b.2) || ![b.0, b.1, b.2, b.3].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParams(format!("degenerate grid bounds {b:?}")));
        }
        let (bounds, nx, ny) = match self.spacing {
            Some(d) => {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::InvalidParams(format!("grid spacing must be positive, got {d}")));
                }
                let nx = ((b.1 - b.0) / d).ceil().max(1.0) as usize;
                let ny = ((b.3 - b.2) / d).ceil().max(1.0) as usize;
                let (cx, cy) = (0.5 * (b.0 + b.1), 0.5 * (b.2 + b.3));
                let (hx, hy) = (0.5 * nx as f64 * d, 0.5 * ny as f64 * d);
                ((cx - hx, cx + hx, cy - hy, cy + hy), nx, ny)
            }
            None => (b, self.nx, self.ny),
        };
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParams("grid resolution must be positive".into()));
        }
        if nx.checked_mul(ny).map_or(true, |n| n > 1 << 28) {
            return Err(Error::InvalidParams(format!("grid {nx} x {ny} is too large")));
        }
        Ok(SosGrid { bounds, nx, ny, values: vec![None; nx * ny] })
    }
}

/// Cell-centred values on a `(q2, p2)` grid; `None` marks cells outside the
/// allowed section region. Row-major with `q2` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct SosGrid {
    pub bounds: (f64, f64, f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<Option<f64>>,
}

impl SosGrid {
    pub fn dq(&self) -> f64 {
        (self.bounds.1 - self.bounds.0) / self.nx as f64
    }

    pub fn dp(&self) -> f64 {
        (self.bounds.3 - self.bounds.2) / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dq() * self.dp()
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (self.bounds.0 + (ix as f64 + 0.5) * self.dq(), self.bounds.2 + (iy as f64 + 0.5) * self.dp())
    }

    pub fn center_of(&self, k: usize) -> (f64, f64) {
        self.center(k % self.nx, k / self.nx)
    }

    /// Mask of cells whose centre lies in the allowed section region.
    pub fn allowed_mask(&self, e: f64, pot: &Potential) -> Vec<bool> {
        (0..self.nx * self.ny)
            .map(|k| {
                let (q2, p2) = self.center_of(k);
                p1_on_section(e, pot, q2, p2).is_some()
            })
            .collect()
    }

    /// Same geometry with every cell empty.
    pub fn empty_like(&self) -> SosGrid {
        SosGrid { bounds: self.bounds, nx: self.nx, ny: self.ny, values: vec![None; self.nx * self.ny] }
    }

    pub fn same_geometry(&self, other: &SosGrid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.bounds == other.bounds
    }

    pub fn allowed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// SALI map over the section with the chaotic/regular classification.
#[derive(Clone, Debug)]
pub struct SaliMap {
    pub energy: f64,
    /// SALI at the end of each run (or when it stopped early).
    pub grid: SosGrid,
    /// `+1` chaotic, `-1` regular, `0` outside the allowed region.
    pub chaotic: Vec<i8>,
    pub eta_c: f64,
    pub threshold: f64,
    pub t_end: f64,
}

/// SALI of the orbit started at every allowed cell centre.
pub fn sali_map(
    e: f64,
    pot: &Potential,
    spec: &SosGridSpec,
    t_end: f64,
    threshold: f64,
    opts: &IntegratorOptions,
) -> Result<SaliMap> {
    let mut grid = spec.resolve(e, pot)?;
    let mask = grid.allowed_mask(e, pot);
    let cells: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&k| {
            let (q2, p2) = grid.center_of(k);
            let start = PhasePoint::on_section(e, pot, q2, p2).expect("cell is allowed");
            sali(pot, start, t_end, opts).map(|s| s.final_value)
        })
        .collect::<Result<_>>()?;
    let mut chaotic = vec![0i8; mask.len()];
    let mut n_chaotic = 0usize;
    for (&k, &v) in cells.iter().zip(&values) {
        grid.values[k] = Some(v);
        if v <= threshold {
            chaotic[k] = 1;
            n_chaotic += 1;
        } else {
            chaotic[k] = -1;
        }
    }
    let eta_c = if cells.is_empty() { 0.0 } else { n_chaotic as f64 / cells.len() as f64 };
    Ok(SaliMap { energy: e, grid, chaotic, eta_c, threshold, t_end })
}

/// Ensemble of section initial conditions for the transport time.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub n_ics: usize,
    /// Initial `q2` values are the midpoints of `n_ics` equal subintervals.
    pub q2_range: (f64, f64),
    pub p2: f64,
    /// Length of the momentum-variance series.
    pub horizon: f64,
    /// Sampling interval.
    pub sample_dt: f64,
    /// Width of the sliding window for the temporal fluctuation.
    pub window: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec { n_ics: 4000, q2_range: (-0.25, -0.15), p2: 0.0, horizon: 1000.0, sample_dt: 0.5, window: 30.0 }
    }
}

/// Ensemble momentum variance `sigma_p^2(t) = Var(p1) + Var(p2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportSeries {
    pub times: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Outcome of the transport-time estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportResult {
    pub t_t: f64,
    pub times: Vec<f64>,
    pub sigma_series: Vec<f64>,
    /// Centre times of the fluctuation windows.
    pub mu_times: Vec<f64>,
    pub mu_series: Vec<f64>,
    pub threshold_used: f64,
    /// Long-time average of `sigma_p^2` over the second half of the series.
    pub sat_value: f64,
}

/// Momenta `(p1, p2)` of one orbit at `times` (ascending).
fn sample_momenta(pot: &Potential, start: PhasePoint, n_samples: usize, dt: f64, opts: &IntegratorOptions) -> Result<Vec<(f64, f64)>> {
    let f = flow(*pot);
    let radius = opts.escape_radius(pot);
    let mut st = Dop853::new(&f, 0.0, start.to_array(), H0, opts.rtol, opts.atol);
    let mut out = Vec::with_capacity(n_samples);
    out.push((start.p1, start.p2));
    for k in 1..n_samples {
        let target = k as f64 * dt;
        while st.t != target {
            st.step(&f, target)?;
            check_escape(&st.y, radius, st.t)?;
        }
        out.push((st.y[2], st.y[3]));
    }
    Ok(out)
}

/// Momentum variance of the ensemble as a function of time.
pub fn momentum_variance_series(e: f64, pot: &Potential, spec: &EnsembleSpec, opts: &IntegratorOptions) -> Result<TransportSeries> {
    if spec.n_ics < 2 {
        return Err(Error::InvalidParams("ensemble needs at least two members".into()));
    }
    if !(spec.sample_dt > 0.0 && spec.horizon > 0.0) {
        return Err(Error::InvalidParams("horizon and sampling interval must be positive".into()));
    }
    let n_samples = (spec.horizon / spec.sample_dt).round() as usize + 1;
    let (a, b) = spec.q2_range;
    let starts: Vec<PhasePoint> = (0..spec.n_ics)
        .map(|i| {
            let q2 = a + (i as f64 + 0.5) * (b - a) / spec.n_ics as f64;
            PhasePoint::on_section(e, pot, q2, spec.p2)
                .ok_or_else(|| Error::Domain(format!("initial condition q2 = {q2} outside the allowed section")))
        })
        .collect::<Result<_>>()?;
    let mut s1 = vec![0.0; n_samples];
    let mut s2 = vec![0.0; n_samples];
    let mut sq = vec![0.0; n_samples];
    // sums are shifted by the first orbit to avoid cancellation
    let mut reference: Option<Vec<(f64, f64)>> = None;
    // bounded memory; fixed reduction order keeps results bit-stable
    for chunk in starts.chunks(256) {
        let samples: Vec<Vec<(f64, f64)>> =
            chunk.par_iter().map(|&s| sample_momenta(pot, s, n_samples, spec.sample_dt, opts)).collect::<Result<_>>()?;
        let r = reference.get_or_insert_with(|| samples[0].clone());
        for orbit in &samples {
            for (k, &(p1, p2)) in orbit.iter().enumerate() {
                let (d1, d2) = (p1 - r[k].0, p2 - r[k].1);
                s1[k] += d1;
                s2[k] += d2;
                sq[k] += d1 * d1 + d2 * d2;
            }
        }
    }
    let n = spec.n_ics as f64;
    let sigma = (0..n_samples)
        .map(|k| {
            let (m1, m2) = (s1[k] / n, s2[k] / n);
            (sq[k] / n - m1 * m1 - m2 * m2).max(0.0)
        })
        .collect();
    let times = (0..n_samples).map(|k| k as f64 * spec.sample_dt).collect();
    Ok(TransportSeries { times, sigma })
}

fn long_time_average(series: &TransportSeries) -> f64 {
    let half = series.sigma.len() / 2;
    let tail = &series.sigma[half..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Transport time from the temporal fluctuation `mu_p^2`: the first time
/// after which `mu_p^2` stays at or below `threshold * max(mu_p^2)`.
pub fn analyze_transport(series: &TransportSeries, window: f64, threshold: f64) -> Result<TransportResult> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParams(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let n = series.sigma.len();
    if n < 3 {
        return Err(Error::InvalidParams("series too short".into()));
    }
    let dt = series.times[1] - series.times[0];
    let half = ((0.5 * window / dt).round() as usize).max(1);
    if n < 2 * half + 2 {
        return Err(Error::Numerical("horizon shorter than the fluctuation window".into()));
    }
    let mut mu_times = Vec::with_capacity(n - 2 * half);
    let mut mu_series = Vec::with_capacity(n - 2 * half);
    for i in half..n - half {
        let w = &series.sigma[i - half..=i + half];
        let m = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / w.len() as f64;
        mu_times.push(series.times[i]);
        mu_series.push(var);
    }
    let sat = long_time_average(series);
    let peak = mu_series.iter().cloned().fold(0.0, f64::max);
    let t_t = if peak <= 1e-12 * sat * sat {
        // stationary ensemble: nothing to relax
        0.0
    } else {
        let limit = threshold * peak;
        let last_above = mu_series.iter().rposition(|&m| m > limit).expect("the peak exceeds the limit");
        if last_above + 1 >= mu_series.len() {
            return Err(Error::Numerical(format!(
                "horizon too short: fluctuation still above {:.1}% of its peak at t = {}",
                threshold * 100.0,
                mu_times[last_above]
            )));
        }
        mu_times[last_above + 1]
    };
    Ok(TransportResult {
        t_t,
        times: series.times.clone(),
        sigma_series: series.sigma.clone(),
        mu_times,
        mu_series,
        threshold_used: threshold,
        sat_value: sat,
    })
}

/// Alternative estimate: first time after which `|sigma_p^2 - mean| <= eps1`
/// for the rest of the series.
pub fn transport_time_eps(series: &TransportSeries, eps1: f64) -> Result<f64> {
    let sat = long_time_average(series);
    match series.sigma.iter().rposition(|s| (s - sat).abs() > eps1) {
        None => Ok(0.0),
        Some(i) if i + 1 < series.sigma.len() => Ok(series.times[i + 1]),
        Some(_) => Err(Error::Numerical("horizon too short: variance never settles within eps1".into())),
    }
}

/// Run the ensemble and estimate the transport time.
pub fn transport_time(
    e: f64,
    pot: &Potential,
    spec: &EnsembleSpec,
    threshold: f64,
    opts: &IntegratorOptions,
) -> Result<TransportResult> {
    let series = momentum_variance_series(e, pot, spec, opts)?;
    analyze_transport(&series, spec.window, threshold)
}

/// Localization control ratio `alpha_L = f(E) / (hbar t_T)`.
pub fn alpha_ratio(e: f64, pot: &Potential, hbar: f64, t_t: f64) -> Result<f64> {
    if !(t_t > 0.0) {
        return Err(Error::Domain(format!("transport time must be positive, got {t_t}")));
    }
    if !(hbar > 0.0) {
        return Err(Error::InvalidParams(format!("hbar must be positive, got {hbar}")));
    }
    Ok(scaled_dos(e, pot)? / (hbar * t_t))
}
