//! Per-state statistics: the overlap index with the classical chaos map,
//! mixed-state fractions and their power-law decay, Renyi-Wehrl entropy
//! localization measures, and beta-distribution fits of their histograms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::{digamma, inv_digamma, ln_gamma};

use crate::basis::Sector;
use crate::classical::{SaliMap, SosGrid};
use crate::error::{Error, Result};
use crate::husimi::HusimiField;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Mixed-state window `[-0.8, 0]`.
pub const WINDOW_LOWER: (f64, f64) = (-0.8, 0.0);
/// Mixed-state window `[-0.8, 0.8]`.
pub const WINDOW_WIDE: (f64, f64) = (-0.8, 0.8);
/// Default chaotic-state threshold on `M`.
pub const DEFAULT_M_CHAOTIC: f64 = 0.8;
/// Number of histogram bins on `[-1, 1]` for `M`.
pub const M_BINS: usize = 40;

/// Chaotic (`+1`) / regular (`-1`) labels on a section grid; `0` marks
/// cells outside the allowed region.
#[derive(Clone, Debug, PartialEq)]
pub struct ChaosMap {
    pub geometry: SosGrid,
    pub labels: Vec<i8>,
}

impl ChaosMap {
    pub fn new(geometry: &SosGrid, labels: Vec<i8>) -> Result<Self> {
        if labels.len() != geometry.nx * geometry.ny {
            return Err(Error::GridMismatch(format!(
                "{} labels for a {} x {} grid",
                labels.len(),
                geometry.nx,
                geometry.ny
            )));
        }
        if labels.iter().any(|&l| !(-1..=1).contains(&l)) {
            return Err(Error::InvalidParams("labels must be -1, 0 or +1".into()));
        }
        Ok(ChaosMap { geometry: geometry.empty_like(), labels })
    }

    pub fn from_sali(map: &SaliMap) -> Self {
        ChaosMap { geometry: map.grid.empty_like(), labels: map.chaotic.clone() }
    }

    /// Every allowed cell chaotic, for fully chaotic systems.
    pub fn all_chaotic(geometry: &SosGrid, allowed: &[bool]) -> Result<Self> {
        Self::new(geometry, allowed.iter().map(|&a| if a { 1 } else { 0 }).collect())
    }

    pub fn chaotic_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Fraction of allowed cells that are chaotic.
    pub fn eta_c(&self) -> f64 {
        let allowed = self.labels.iter().filter(|&&l| l != 0).count();
        if allowed == 0 {
            0.0
        } else {
            self.chaotic_count() as f64 / allowed as f64
        }
    }
}

fn check_geometry(field: &HusimiField, cmap: &ChaosMap) -> Result<()> {
    if !field.grid.same_geometry(&cmap.geometry) {
        return Err(Error::GridMismatch(format!(
            "field grid {} x {} over {:?} differs from classification grid {} x {} over {:?}",
            field.grid.nx, field.grid.ny, field.grid.bounds, cmap.geometry.nx, cmap.geometry.ny, cmap.geometry.bounds
        )));
    }
    Ok(())
}

/// Overlap index `M = sum C_ij Q_ij / sum Q_ij` over cells where both the
/// field and the classification are defined.
pub fn overlap_index(field: &HusimiField, cmap: &ChaosMap) -> Result<f64> {
    check_geometry(field, cmap)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (v, &c) in field.values().iter().zip(&cmap.labels) {
        if let (Some(q), true) = (v, c != 0) {
            num += c as f64 * q;
            den += q;
        }
    }
    if !(den > 0.0) {
        return Err(Error::Numerical("field has no weight on classified cells".into()));
    }
    Ok((num / den).clamp(-1.0, 1.0))
}

/// Renyi-Wehrl entropy localization measure `L^alpha = e^{H_alpha} / N_c`
/// of the field rescaled to unit sum over the chaotic cells. `alpha = 1`
/// is the Wehrl limit and `alpha = inf` the min-entropy.
pub fn elm(field: &HusimiField, cmap: &ChaosMap, alpha: f64) -> Result<f64> {
    check_geometry(field, cmap)?;
    let q: Vec<f64> = field
        .values()
        .iter()
        .zip(&cmap.labels)
        .filter(|(_, &c)| c == 1)
        .map(|(v, _)| v.unwrap_or(0.0))
        .collect();
    elm_of_weights(&q, alpha)
}

/// ELM of nonnegative cell weights (rescaled internally).
pub fn elm_of_weights(q: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParams(format!("Renyi order must be positive, got {alpha}")));
    }
    let n_c = q.len();
    if n_c == 0 {
        return Err(Error::Domain("no chaotic cells".into()));
    }
    if q.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParams("weights must be finite and nonnegative".into()));
    }
    let total: f64 = q.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("field vanishes on the chaotic cells".into()));
    }
    let h = if alpha == 1.0 {
        -q.iter().filter(|&&x| x > 0.0).map(|&x| {
            let p = x / total;
            p * p.ln()
        }).sum::<f64>()
    } else if alpha.is_infinite() {
        -(q.iter().cloned().fold(0.0, f64::max) / total).ln()
    } else {
        // scale by the maximum so large orders do not underflow
        let m = q.iter().cloned().fold(0.0, f64::max);
        let s: f64 = q.iter().map(|&x| (x / m).powf(alpha)).sum();
        (s.ln() + alpha * (m / total).ln()) / (1.0 - alpha)
    };
    Ok((h.exp() / n_c as f64).clamp(1.0 / n_c as f64, 1.0))
}

/// ELM of a random state, `Gamma(1 + alpha)^{1/(1-alpha)}` (`e^{gamma - 1}`
/// at `alpha = 1`).
pub fn random_state_bound(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParams(format!("Renyi order must be positive, got {alpha}")));
    }
    if alpha.is_infinite() {
        return Ok(0.0);
    }
    if (alpha - 1.0).abs() < 1e-8 {
        // first-order expansion around alpha = 1
        let d = alpha - 1.0;
        return Ok((EULER_GAMMA - 1.0 + 0.5 * d * (1.0 - PI2_OVER_6)).exp());
    }
    Ok((ln_gamma(1.0 + alpha) / (1.0 - alpha)).exp())
}

const PI2_OVER_6: f64 = std::f64::consts::PI * std::f64::consts::PI / 6.0;

/// Normalized real Gaussian random vector.
pub fn random_unit_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Summary statistics of one eigenstate.
#[derive(Clone, Debug, PartialEq)]
pub struct StateStats {
    pub energy: f64,
    pub m: f64,
    /// `(alpha, L^alpha)` pairs in ascending `alpha`.
    pub elm: Vec<(f64, f64)>,
    pub sector: Sector,
    pub hbar: f64,
}

impl StateStats {
    pub fn elm_at(&self, alpha: f64) -> Option<f64> {
        self.elm.iter().find(|(a, _)| *a == alpha).map(|(_, l)| *l)
    }

    /// `L^alpha` nonincreasing in `alpha` up to `tol`.
    pub fn is_renyi_monotone(&self, tol: f64) -> bool {
        self.elm.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + tol))
    }
}

/// `M` and the ELMs of a QSOS field. The chaotic cells of `cmap` define the
/// ELM region; use [`ChaosMap::all_chaotic`] for ergodic runs.
pub fn state_stats(field: &HusimiField, cmap: &ChaosMap, alphas: &[f64], sector: Sector) -> Result<StateStats> {
    let m = overlap_index(field, cmap)?;
    let mut orders = alphas.to_vec();
    orders.sort_by(f64::total_cmp);
    let elm = orders.iter().map(|&a| elm(field, cmap, a).map(|l| (a, l))).collect::<Result<_>>()?;
    Ok(StateStats { energy: field.energy, m, elm, sector, hbar: field.hbar })
}

/// Fraction of states with `M` in the closed window `[m0, m1]`.
pub fn mixed_fraction(ms: &[f64], window: (f64, f64)) -> Result<f64> {
    if ms.is_empty() {
        return Err(Error::InvalidParams("empty ensemble".into()));
    }
    let n = ms.iter().filter(|&&m| m >= window.0 && m <= window.1).count();
    Ok(n as f64 / ms.len() as f64)
}

/// States with `M >= m_c`.
pub fn classify_chaotic(stats: &[StateStats], m_c: f64) -> Vec<StateStats> {
    stats.iter().filter(|s| s.m >= m_c).cloned().collect()
}

/// Least-squares fit `chi ~ prefactor * hbar^xi`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLawFit {
    pub xi: f64,
    pub prefactor: f64,
    /// Standard error of `xi`.
    pub std_err: f64,
    pub n_used: usize,
    /// Points with `chi = 0` left out of the fit.
    pub excluded: usize,
}

/// `chi_M` against `hbar` for one energy shell.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedFractionSeries {
    pub hbars: Vec<f64>,
    pub chi: Vec<f64>,
    pub window: (f64, f64),
    pub energy: f64,
    pub delta_e: f64,
}

impl MixedFractionSeries {
    pub fn fit(&self) -> Result<PowerLawFit> {
        fit_power_law(&self.hbars, &self.chi)
    }
}

pub fn fit_power_law(hbars: &[f64], chi: &[f64]) -> Result<PowerLawFit> {
    if hbars.len() != chi.len() {
        return Err(Error::InvalidParams("hbar and chi lengths differ".into()));
    }
    if hbars.iter().any(|&h| !(h > 0.0)) || chi.iter().any(|&c| !(c >= 0.0)) {
        return Err(Error::InvalidParams("hbar must be positive and chi nonnegative".into()));
    }
    let pts: Vec<(f64, f64)> = hbars.iter().zip(chi).filter(|(_, &c)| c > 0.0).map(|(&h, &c)| (h.ln(), c.ln())).collect();
    let excluded = hbars.len() - pts.len();
    let n = pts.len();
    if n < 3 {
        return Err(Error::InvalidParams(format!("power-law fit needs at least 3 nonzero points, got {n}")));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidParams("power-law fit needs distinct hbar values".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let xi = sxy / sxx;
    let icpt = my - xi * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - icpt - xi * p.0).powi(2)).sum();
    let std_err = (rss / (nf - 2.0) / sxx).sqrt();
    Ok(PowerLawFit { xi, prefactor: icpt.exp(), std_err, n_used: n, excluded })
}

/// Beta law `P(L) = L^{beta_a} (L0 - L)^{beta_b} / C`.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaFit {
    pub beta_a: f64,
    pub beta_b: f64,
    pub l0: f64,
    /// Log-likelihood of the samples in `L`.
    pub loglik: f64,
    pub n_samples: usize,
    /// Kolmogorov-Smirnov distance to the fitted CDF.
    pub ks: f64,
}

impl BetaFit {
    pub fn mean(&self) -> f64 {
        let (a, b) = (self.beta_a + 1.0, self.beta_b + 1.0);
        self.l0 * a / (a + b)
    }

    /// `L0^2 (beta_a + 1)(beta_b + 1) / ((beta_a + beta_b + 2)^2 (beta_a + beta_b + 3))`.
    pub fn variance(&self) -> f64 {
        let (a, b) = (self.beta_a + 1.0, self.beta_b + 1.0);
        self.l0 * self.l0 * a * b / ((a + b).powi(2) * (a + b + 1.0))
    }

    pub fn cdf(&self, l: f64) -> f64 {
        let x = (l / self.l0).clamp(0.0, 1.0);
        beta_reg(self.beta_a + 1.0, self.beta_b + 1.0, x)
    }

    pub fn pdf(&self, l: f64) -> f64 {
        if !(l > 0.0 && l < self.l0) {
            return 0.0;
        }
        let (a, b) = (self.beta_a + 1.0, self.beta_b + 1.0);
        let x = l / self.l0;
        ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)).exp() / self.l0
    }
}

/// Minimum number of samples for [`fit_beta`].
pub const BETA_MIN_SAMPLES: usize = 50;
const L0_GRID: usize = 240;
const L0_SPAN: f64 = 0.2;

/// Maximum-likelihood Beta(a, b) for samples in (0, 1) with the given
/// mean logs, by Minka's fixed-point iteration.
fn beta_mle(s1: f64, s2: f64, a0: f64, b0: f64) -> (f64, f64) {
    let (mut a, mut b) = (a0, b0);
    for _ in 0..10_000 {
        let d = digamma(a + b);
        let an = inv_digamma(d + s1);
        let bn = inv_digamma(d + s2);
        let done = ((an - a) / a).abs() < 1e-13 && ((bn - b) / b).abs() < 1e-13;
        a = an;
        b = bn;
        if done || !(a.is_finite() && b.is_finite()) {
            break;
        }
    }
    (a, b)
}

/// Profile log-likelihood at `l0`: `(loglik, a, b)`.
fn profile(samples: &[f64], l0: f64) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let (mut s1, mut s2, mut m, mut m2) = (0.0, 0.0, 0.0, 0.0);
    for &l in samples {
        let x = l / l0;
        s1 += x.ln();
        s2 += (1.0 - x).ln();
        m += x;
        m2 += x * x;
    }
    let (s1, s2, m) = (s1 / n, s2 / n, m / n);
    let v = (m2 / n - m * m).max(1e-300);
    let common = (m * (1.0 - m) / v - 1.0).max(1e-3);
    let (a, b) = beta_mle(s1, s2, m * common, (1.0 - m) * common);
    let ll = n * ((a - 1.0) * s1 + (b - 1.0) * s2 - ln_beta(a, b) - l0.ln());
    (ll, a, b)
}

fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Fit the beta law with `L0` profiled over `(max, 1.2 max]` and refined by
/// golden-section search around the best grid point.
pub fn fit_beta(samples: &[f64]) -> Result<BetaFit> {
    if samples.len() < BETA_MIN_SAMPLES {
        return Err(Error::InvalidParams(format!(
            "beta fit needs at least {BETA_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParams("beta fit samples must be positive and finite".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi - lo <= 1e-12 * hi {
        return Err(Error::InvalidParams("beta fit samples are degenerate (all equal)".into()));
    }
    let l0_at = |k: f64| hi * (1.0 + L0_SPAN * k / L0_GRID as f64);
    let score = |l0: f64| {
        let (ll, a, b) = profile(&sorted, l0);
        if ll.is_finite() && a.is_finite() && b.is_finite() {
            ll
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut best = (f64::NEG_INFINITY, 1usize);
    for k in 1..=L0_GRID {
        let s = score(l0_at(k as f64));
        if s > best.0 {
            best = (s, k);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Numerical("beta likelihood is not finite on the L0 grid".into()));
    }
    // golden-section refinement on the neighbouring grid interval
    let (mut a, mut b) = (l0_at(best.1 as f64 - 1.0).max(hi * (1.0 + 1e-9)), l0_at((best.1 + 1) as f64));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (score(c), score(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = score(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = score(d);
        }
    }
    let grid_l0 = l0_at(best.1 as f64);
    let l0 = if fc.max(fd) > best.0 { if fc > fd { c } else { d } } else { grid_l0 };
    let (loglik, pa, pb) = profile(&sorted, l0);
    let (beta_a, beta_b) = (pa - 1.0, pb - 1.0);
    let ks = ks_distance(&sorted, |l| beta_reg(pa, pb, (l / l0).clamp(0.0, 1.0)));
    Ok(BetaFit { beta_a, beta_b, l0, loglik, n_samples: sorted.len(), ks })
}

/// Counts of `values` in `bins` equal bins on `[lo, hi]`; the top edge is
/// included in the last bin and values outside are ignored.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Vec<usize>> {
    if bins == 0 || !(hi > lo) {
        return Err(Error::InvalidParams(format!("invalid histogram range [{lo}, {hi}] with {bins} bins")));
    }
    let mut out = vec![0usize; bins];
    for &v in values {
        if !(v >= lo && v <= hi) {
            continue;
        }
        let k = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        out[k.min(bins - 1)] += 1;
    }
    Ok(out)
}

/// Histogram of `M` on `[-1, 1]` with the default binning.
pub fn m_histogram(ms: &[f64]) -> Vec<usize> {
    histogram(ms, -1.0, 1.0, M_BINS).expect("fixed binning is valid")
}
