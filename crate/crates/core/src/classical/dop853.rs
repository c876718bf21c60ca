//! Dormand-Prince 8(5,3) explicit Runge-Kutta stepper with Hairer's step
//! size control, for autonomous systems of fixed dimension.

use crate::error::{Error, Result};

// Stage coefficients a_ij for stages 2..=12.
const A2: [f64; 1] = [5.26001519587677318785587544488e-2];
const A3: [f64; 2] = [1.97250569845378994544595329183e-2, 5.91751709536136983633785987549e-2];
const A4: [f64; 3] = [2.95875854768068491816892993775e-2, 0.0, 8.87627564304205475450678981324e-2];
const A5: [f64; 4] = [
    2.41365134159266685502369798665e-1,
    0.0,
    -8.84549479328286085344864962717e-1,
    9.24834003261792003115737966543e-1,
];
const A6: [f64; 5] = [
    3.7037037037037037037037037037e-2,
    0.0,
    0.0,
    1.70828608729473871279604482173e-1,
    1.25467687566822425016691814123e-1,
];
const A7: [f64; 6] = [
    3.7109375e-2,
    0.0,
    0.0,
    1.70252211019544039314978060272e-1,
    6.02165389804559606850219397283e-2,
    -1.7578125e-2,
];
const A8: [f64; 7] = [
    3.70920001185047927108779319836e-2,
    0.0,
    0.0,
    1.70383925712239993810214054705e-1,
    1.07262030446373284651809199168e-1,
    -1.53194377486244017527936158236e-2,
    8.27378916381402288758473766002e-3,
];
const A9: [f64; 8] = [
    6.24110958716075717114429577812e-1,
    0.0,
    0.0,
    -3.36089262944694129406857109825e0,
    -8.68219346841726006818189891453e-1,
    2.75920996994467083049415600797e1,
    2.01540675504778934086186788979e1,
    -4.34898841810699588477366255144e1,
];
const A10: [f64; 9] = [
    4.77662536438264365890433908527e-1,
    0.0,
    0.0,
    -2.48811461997166764192642586468e0,
    -5.90290826836842996371446475743e-1,
    2.12300514481811942347288949897e1,
    1.52792336328824235832596922938e1,
    -3.32882109689848629194453265587e1,
    -2.03312017085086261358222928593e-2,
];
const A11: [f64; 10] = [
    -9.3714243008598732571704021658e-1,
    0.0,
    0.0,
    5.18637242884406370830023853209e0,
    1.09143734899672957818500254654e0,
    -8.14978701074692612513997267357e0,
    -1.85200656599969598641566180701e1,
    2.27394870993505042818970056734e1,
    2.49360555267965238987089396762e0,
    -3.0467644718982195003823669022e0,
];
const A12: [f64; 11] = [
    2.27331014751653820792359768449e0,
    0.0,
    0.0,
    -1.05344954667372501984066689879e1,
    -2.00087205822486249909675718444e0,
    -1.79589318631187989172765950534e1,
    2.79488845294199600508499808837e1,
    -2.85899827713502369474065508674e0,
    -8.87285693353062954433549289258e0,
    1.23605671757943030647266201528e1,
    6.43392746015763530355970484046e-1,
];

const B: [f64; 12] = [
    5.42937341165687622380535766363e-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.45031289275240888144113950566e0,
    1.89151789931450038304281599044e0,
    -5.8012039600105847814672114227e0,
    3.1116436695781989440891606237e-1,
    -1.52160949662516078556178806805e-1,
    2.01365400804030348374776537501e-1,
    4.47106157277725905176885569043e-2,
];

const BHH: [f64; 3] = [
    0.244094488188976377952755905512e0,
    0.733846688281611857341361741547e0,
    0.220588235294117647058823529412e-1,
];

const E: [f64; 12] = [
    0.1312004499419488073250102996e-1,
    0.0,
    0.0,
    0.0,
    0.0,
    -0.1225156446376204440720569753e1,
    -0.4957589496572501915214079952e0,
    0.1664377182454986536961530415e1,
    -0.3503288487499736816886487290e0,
    0.3341791187130174790297318841e0,
    0.8192320648511571246570742613e-1,
    -0.2235530786388629525884427845e-1,
];

fn rows() -> [&'static [f64]; 11] {
    [&A2, &A3, &A4, &A5, &A6, &A7, &A8, &A9, &A10, &A11, &A12]
}

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 1.0 / 3.0;
const FAC_MAX: f64 = 6.0;

/// Adaptive integrator state for `dy/dt = f(y)`.
#[derive(Clone, Debug)]
pub struct Dop853<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    /// Proposed size of the next step (signed).
    pub h: f64,
    k1: [f64; N],
    rtol: f64,
    atol: f64,
    last_rejected: bool,
    pub accepted: usize,
    pub rejected: usize,
}

impl<const N: usize> Dop853<N> {
    pub fn new<F: Fn(&[f64; N], &mut [f64; N])>(f: &F, t0: f64, y0: [f64; N], h0: f64, rtol: f64, atol: f64) -> Self {
        let mut k1 = [0.0; N];
        f(&y0, &mut k1);
        Dop853 { t: t0, y: y0, h: h0, k1, rtol, atol, last_rejected: false, accepted: 0, rejected: 0 }
    }

    /// Replace the state in place (for instance after renormalizing part of
    /// it); the derivative is recomputed.
    pub fn reset_state<F: Fn(&[f64; N], &mut [f64; N])>(&mut self, f: &F, y: [f64; N]) {
        self.y = y;
        f(&self.y, &mut self.k1);
    }

    /// Take one accepted step that does not pass `t_limit`.
    pub fn step<F: Fn(&[f64; N], &mut [f64; N])>(&mut self, f: &F, t_limit: f64) -> Result<()> {
        let dir = if t_limit >= self.t { 1.0 } else { -1.0 };
        if self.h * dir <= 0.0 {
            self.h = -self.h;
        }
        let mut k = [[0.0; N]; 12];
        let mut ytmp = [0.0; N];
        let rows = rows();
        loop {
            let remaining = t_limit - self.t;
            let (h, clipped) = if (self.h - remaining) * dir >= 0.0 { (remaining, true) } else { (self.h, false) };
            if h == 0.0 {
                return Ok(());
            }
            k[0] = self.k1;
            for (s, row) in rows.iter().enumerate() {
                for i in 0..N {
                    let mut acc = 0.0;
                    for (j, a) in row.iter().enumerate() {
                        if *a != 0.0 {
                            acc += a * k[j][i];
                        }
                    }
                    ytmp[i] = self.y[i] + h * acc;
                }
                let mut ks = [0.0; N];
                f(&ytmp, &mut ks);
                k[s + 1] = ks;
            }
            let mut ynew = [0.0; N];
            let mut err = 0.0;
            let mut err2 = 0.0;
            for i in 0..N {
                let mut b = 0.0;
                let mut e = 0.0;
                for s in 0..12 {
                    b += B[s] * k[s][i];
                    e += E[s] * k[s][i];
                }
                ynew[i] = self.y[i] + h * b;
                let sk = self.atol + self.rtol * self.y[i].abs().max(ynew[i].abs());
                let e2 = b - BHH[0] * k[0][i] - BHH[1] * k[8][i] - BHH[2] * k[11][i];
                err += (e / sk) * (e / sk);
                err2 += (e2 / sk) * (e2 / sk);
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = h.abs() * err * (1.0 / (N as f64 * deno)).sqrt();
            if !err.is_finite() {
                self.h = h * 0.1;
                self.rejected += 1;
                self.last_rejected = true;
                if self.h.abs() < 1e-14 * self.t.abs().max(1.0) {
                    return Err(Error::Numerical("integrator produced non-finite values".into()));
                }
                continue;
            }
            let fac11 = err.powf(0.125);
            if err <= 1.0 {
                let fac = (fac11 / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut hnew = h / fac;
                if self.last_rejected && hnew.abs() > h.abs() {
                    hnew = h;
                }
                self.t = if clipped { t_limit } else { self.t + h };
                self.y = ynew;
                f(&self.y, &mut self.k1);
                // a step shortened to hit `t_limit` says little about the
                // natural step size, so keep the previous proposal
                if !clipped {
                    self.h = hnew;
                }
                self.last_rejected = false;
                self.accepted += 1;
                return Ok(());
            }
            self.h = h / (1.0 / FAC_MIN).min(fac11 / SAFE);
            self.rejected += 1;
            self.last_rejected = true;
            if self.h.abs() < 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::Numerical(format!("step size underflow at t = {}", self.t)));
            }
        }
    }

    /// Integrate up to `t_end` exactly.
    pub fn advance_to<F: Fn(&[f64; N], &mut [f64; N])>(&mut self, f: &F, t_end: f64) -> Result<()> {
        while self.t != t_end {
            self.step(f, t_end)?;
        }
        Ok(())
    }
}
