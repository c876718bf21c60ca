//! Classical potential `V = r^2/2 + alpha (q1^2 q2 - q2^3/3) + lambda r^4`.

/// Search radius (in units of the harmonic turning radius) for the well
/// boundary along a ray.
pub const WELL_SEARCH_LIMIT: f64 = 200.0;

/// Coupling constants of the classical model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Potential {
    pub alpha: f64,
    pub lambda: f64,
}

impl Potential {
    pub fn new(alpha: f64, lambda: f64) -> Self {
        Potential { alpha, lambda }
    }

    pub fn v(&self, q1: f64, q2: f64) -> f64 {
        let r2 = q1 * q1 + q2 * q2;
        0.5 * r2 + self.alpha * (q1 * q1 * q2 - q2 * q2 * q2 / 3.0) + self.lambda * r2 * r2
    }

    pub fn grad(&self, q1: f64, q2: f64) -> (f64, f64) {
        let r2 = q1 * q1 + q2 * q2;
        let a = self.alpha;
        let l4 = 4.0 * self.lambda * r2;
        (
            q1 + 2.0 * a * q1 * q2 + l4 * q1,
            q2 + a * (q1 * q1 - q2 * q2) + l4 * q2,
        )
    }

    /// `(V11, V12, V22)`.
    pub fn hessian(&self, q1: f64, q2: f64) -> (f64, f64, f64) {
        let r2 = q1 * q1 + q2 * q2;
        let a = self.alpha;
        let l = self.lambda;
        (
            1.0 + 2.0 * a * q2 + 4.0 * l * (r2 + 2.0 * q1 * q1),
            2.0 * a * q1 + 8.0 * l * q1 * q2,
            1.0 - 2.0 * a * q2 + 4.0 * l * (r2 + 2.0 * q2 * q2),
        )
    }

    pub fn energy(&self, q1: f64, q2: f64, p1: f64, p2: f64) -> f64 {
        0.5 * (p1 * p1 + p2 * p2) + self.v(q1, q2)
    }

    /// Energy of the lowest saddle, or `None` if the well has no saddle
    /// (harmonic or purely quartic cases).
    pub fn saddle_energy(&self) -> Option<f64> {
        let a = self.alpha.abs();
        if a == 0.0 {
            return None;
        }
        // Along the downhill ray V(r) = r^2/2 - a r^3/3 + lambda r^4,
        // V'(r)/r = 1 - a r + 4 lambda r^2.
        let l = self.lambda;
        let r = if l == 0.0 {
            1.0 / a
        } else {
            let disc = a * a - 16.0 * l;
            if disc < 0.0 {
                return None;
            }
            (a - disc.sqrt()) / (8.0 * l)
        };
        Some(0.5 * r * r - a * r * r * r / 3.0 + l * r.powi(4))
    }

    /// Whether the allowed region `V < E` escapes to infinity.
    pub fn is_open(&self, e: f64) -> bool {
        self.lambda == 0.0 && self.alpha != 0.0 && e > self.saddle_energy().unwrap()
    }

    /// First radius along direction `phi` where `V >= e`, or where `V` peaks
    /// below `e` (a saddle at exactly the energy).
    pub fn well_radius(&self, e: f64, phi: f64, r_limit: f64) -> Option<f64> {
        let (c, s) = (phi.cos(), phi.sin());
        let v = |r: f64| self.v(r * c, r * s);
        let step = (2.0 * e).sqrt() / 256.0;
        let mut lo = 0.0;
        let mut prev = v(0.0);
        let mut r = step;
        while r <= r_limit {
            let vr = v(r);
            if vr < prev {
                return Some(lo);
            }
            prev = vr;
            if vr >= e {
                let mut hi = r;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if v(mid) >= e {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(hi);
            }
            lo = r;
            r += step;
        }
        None
    }

    /// Bounding box `(q1min, q1max, q2min, q2max)` of the well `{V < e}`
    /// around the origin.
    pub fn well_bounds(&self, e: f64) -> Option<(f64, f64, f64, f64)> {
        if !(e > 0.0) || self.is_open(e) {
            return None;
        }
        let limit = WELL_SEARCH_LIMIT * (2.0 * e).sqrt().max(1.0);
        let rays = 1440;
        let mut b = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for k in 0..rays {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / rays as f64;
            let r = self.well_radius(e, phi, limit)?;
            let (x, y) = (r * phi.cos(), r * phi.sin());
            b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
        }
        // rays sample the boundary; pad for the gaps between them
        let pad = 0.01 * (b.1 - b.0).max(b.3 - b.2);
        Some((b.0 - pad, b.1 + pad, b.2 - pad, b.3 + pad))
    }
}
