//! Blowup ODEs: the second-order comparison problem behind the Sideris lemma and
//! the first-order Riccati equation, with adaptive integration in log variables.
//!
//! Both integrators advance in a pseudo-time `s` with `dt/ds = 1/(1 + z)`, where
//! `z` is the logarithmic growth rate, so the singularity is reached at finite
//! `s` with bounded derivatives. The solution is followed until the remaining
//! time predicted by the local blowup profile drops below [`TAIL_FRACTION`] of
//! `t + R`, and that remainder is then added.

use thiserror::Error;

use crate::domain::{ProblemSpec, SourceKind};
use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("invalid problem: {0}")]
    InvalidProblem(&'static str),
    #[error("(n-1)(p-1) = {0} exceeds 2")]
    RegimeMismatch(f64),
    #[error("exponent denominator {0} is not positive")]
    CriticalOrSupercritical(f64),
    #[error("integrator stalled at t = {t}")]
    Stalled { t: f64 },
}

/// Integration stops once the predicted remaining time is this fraction of `t + R`.
pub const TAIL_FRACTION: f64 = 1e-6;
/// Largest certified bracket ratio.
pub const BRACKET_RATIO: f64 = 1.02;
const DEFAULT_TOL: f64 = 1e-9;
const TIME_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlowupTime<T> {
    /// `+inf` when no blowup occurred before the time cap.
    pub value: T,
    pub method: Method,
    /// `(lower, upper)` from two tolerances; `None` for closed forms.
    pub certified_interval: Option<(T, T)>,
    /// Whether the problem satisfies the lemma's hypothesis.
    pub in_scope: bool,
}

impl<T: Real> BlowupTime<T> {
    fn closed(value: T) -> Self {
        Self { value, method: Method::ClosedForm, certified_interval: None, in_scope: true }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    /// Closed forms are exact; numerical values need a bracket within [`BRACKET_RATIO`].
    pub fn certified(&self) -> bool {
        match self.certified_interval {
            None => self.method == Method::ClosedForm,
            Some((lo, hi)) => lo > T::zero() && hi / lo <= T::lit(BRACKET_RATIO),
        }
    }
}

/// `F'' >= k (t+R)^{-q} F^p` together with `F >= delta (t+R)^a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeProblem<T> {
    pub p: T,
    pub a: T,
    pub q: T,
    pub radius: T,
    pub delta: T,
    pub k: T,
    pub f_init: T,
    pub f_rate_init: T,
}

impl<T: Real> OdeProblem<T> {
    /// Problem whose initial data sit on the lower-bound curve `delta (t+R)^a`.
    pub fn on_lower_bound(p: T, a: T, q: T, radius: T, delta: T, k: T) -> Result<Self, OdeError> {
        let prob = Self {
            p,
            a,
            q,
            radius,
            delta,
            k,
            f_init: delta * radius.powf(a),
            f_rate_init: a * delta * radius.powf(a - T::one()),
        };
        prob.validate()?;
        Ok(prob)
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        let ok = |x: T| x.is_finite();
        if !(ok(self.p) && self.p > T::one()) {
            return Err(OdeError::InvalidProblem("p must exceed 1"));
        }
        if !(ok(self.a) && self.a >= T::one()) {
            return Err(OdeError::InvalidProblem("a must be at least 1"));
        }
        if !(ok(self.radius) && self.radius > T::zero()) {
            return Err(OdeError::InvalidProblem("R must be positive"));
        }
        if !(ok(self.delta) && self.delta > T::zero() && ok(self.k) && self.k > T::zero()) {
            return Err(OdeError::InvalidProblem("delta and k must be positive"));
        }
        if !(ok(self.q) && ok(self.f_init) && ok(self.f_rate_init)) {
            return Err(OdeError::InvalidProblem("non-finite parameter"));
        }
        if self.f_init < self.delta * self.radius.powf(self.a) * (T::one() - T::lit(1e-12)) {
            return Err(OdeError::InvalidProblem("F(0) below delta R^a"));
        }
        if self.f_rate_init < T::zero() {
            return Err(OdeError::InvalidProblem("F'(0) must be nonnegative"));
        }
        Ok(())
    }

    /// `(p-1) a > q - 2`.
    pub fn in_scope(&self) -> bool {
        (self.p - T::one()) * self.a > self.q - T::lit(2.0)
    }

    /// `(p-1) / ((p-1) a - q + 2)`, the exponent of `delta` in the lifespan.
    pub fn lifespan_exponent(&self) -> T {
        (self.p - T::one()) / ((self.p - T::one()) * self.a - self.q + T::lit(2.0))
    }
}

/// A rescaled problem with the factors relating it to the original:
/// `tau = time_factor * t`, `H = amplitude_factor * F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rescaled<T> {
    pub problem: OdeProblem<T>,
    pub time_factor: T,
    pub amplitude_factor: T,
}

impl<T: Real> Rescaled<T> {
    pub fn original_time(&self, tau: T) -> T {
        tau / self.time_factor
    }

    pub fn original_value(&self, h: T) -> T {
        h / self.amplitude_factor
    }
}

/// Scales `delta` out: with `beta = (p-1)/D`, `gamma = (q-2)/D`, `D = (p-1)a - q + 2`,
/// the substitution `tau = delta^beta t`, `H = delta^gamma F` maps the problem to
/// one with `delta = 1` and `R' = delta^beta R`.
pub fn rescale_sideris<T: Real>(ode: &OdeProblem<T>) -> Rescaled<T> {
    let d = (ode.p - T::one()) * ode.a - ode.q + T::lit(2.0);
    let beta = (ode.p - T::one()) / d;
    let gamma = (ode.q - T::lit(2.0)) / d;
    let time_factor = ode.delta.powf(beta);
    let amplitude_factor = ode.delta.powf(gamma);
    let problem = OdeProblem {
        delta: T::one(),
        radius: ode.radius * time_factor,
        f_init: ode.f_init * amplitude_factor,
        f_rate_init: ode.f_rate_init * amplitude_factor / time_factor,
        ..*ode
    };
    Rescaled { problem, time_factor, amplitude_factor }
}

/// `v' = C9 |v|^p / (t+R)^{(n-1)(p-1)/2}`, `v(0) = M eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiProblem<T> {
    pub c9: T,
    pub m_data: T,
    pub epsilon: T,
    pub n: usize,
    pub p: T,
    pub radius: T,
}

impl<T: Real> RiccatiProblem<T> {
    pub fn new(c9: T, m_data: T, epsilon: T, n: usize, p: T, radius: T) -> Result<Self, OdeError> {
        let prob = Self { c9, m_data, epsilon, n, p, radius };
        if !(c9 > T::zero() && m_data > T::zero() && epsilon > T::zero() && radius > T::zero()) {
            return Err(OdeError::InvalidProblem("C9, M, eps and R must be positive"));
        }
        if !(p > T::one()) || n == 0 {
            return Err(OdeError::InvalidProblem("need p > 1 and n >= 1"));
        }
        let r = prob.regime_product();
        if r > T::lit(2.0) + T::lit(1e-12) {
            return Err(OdeError::RegimeMismatch(r.to_f64_lossy()));
        }
        Ok(prob)
    }

    /// `(n-1)(p-1)`.
    pub fn regime_product(&self) -> T {
        T::from_usize_lossy(self.n - 1) * (self.p - T::one())
    }

    /// `kappa = (n-1)(p-1)/2`.
    pub fn kappa(&self) -> T {
        self.regime_product() / T::lit(2.0)
    }

    pub fn is_logarithmic(&self) -> bool {
        (self.regime_product() - T::lit(2.0)).abs() <= T::lit(1e-12)
    }
}

/// Exact blowup time of the Riccati equation.
pub fn riccati_closed_form<T: Real>(prob: &RiccatiProblem<T>) -> BlowupTime<T> {
    let pm1 = prob.p - T::one();
    let w0 = (prob.m_data * prob.epsilon).powf(-pm1);
    if prob.is_logarithmic() {
        let c2 = prob.c9 * pm1;
        return BlowupTime::closed(prob.radius * (w0 / c2).exp_m1());
    }
    let e = T::one() - prob.kappa();
    let c1 = prob.c9 * pm1 / e;
    BlowupTime::closed((w0 / c1 + prob.radius.powf(e)).powf(T::one() / e) - prob.radius)
}

/// Lifespan exponent from the theorems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LifespanExponent<T> {
    /// `T(eps) <= A eps^{-alpha}`.
    Power(T),
    /// `T(eps) <= exp(B eps^{-(p-1)})`.
    Exponential,
}

pub fn theorem_exponent<T: Real>(spec: &ProblemSpec<T>) -> Result<LifespanExponent<T>, OdeError> {
    let p = spec.p;
    let n = T::from_usize_lossy(spec.n);
    let one = T::one();
    let two = T::lit(2.0);
    match spec.source_kind {
        SourceKind::DisplacementPower => {
            let den = two + (n + one) * p - (n - one) * p * p;
            if den <= T::zero() {
                return Err(OdeError::CriticalOrSupercritical(den.to_f64_lossy()));
            }
            Ok(LifespanExponent::Power(two * p * (p - one) / den))
        }
        SourceKind::VelocityPower => {
            let prod = (n - one) * (p - one);
            if (prod - two).abs() <= T::lit(1e-12) {
                return Ok(LifespanExponent::Exponential);
            }
            let den = one - prod / two;
            if den <= T::zero() {
                return Err(OdeError::CriticalOrSupercritical(den.to_f64_lossy()));
            }
            Ok(LifespanExponent::Power((p - one) / den))
        }
    }
}

/// Outcome of one pseudo-time integration.
struct Crossing<T> {
    t: T,
    /// Estimated time from the crossing to blowup.
    tail: T,
}

/// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One DP45 step; returns the fifth-order solution and the error estimate norm.
fn dp_step<T: Real, const N: usize>(f: &impl Fn(&[T; N]) -> [T; N], y: &[T; N], h: T, atol: T, rtol: T) -> ([T; N], T) {
    let mut k = [[T::zero(); N]; 7];
    k[0] = f(y);
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let aj = T::lit(A[s][j]);
            if aj != T::zero() {
                for i in 0..N {
                    ys[i] = ys[i] + h * aj * kj[i];
                }
            }
        }
        k[s] = f(&ys);
    }
    let mut y5 = *y;
    let mut err = T::zero();
    for i in 0..N {
        let mut d5 = T::zero();
        let mut d4 = T::zero();
        for s in 0..7 {
            d5 = d5 + T::lit(B5[s]) * k[s][i];
            d4 = d4 + T::lit(B4[s]) * k[s][i];
        }
        y5[i] = y[i] + h * d5;
        let scale = atol + rtol * y[i].abs().max(y5[i].abs());
        let e = h * (d5 - d4) / scale;
        err = err.max(e.abs());
    }
    (y5, err)
}

/// Integrates `y' = f(y)` in pseudo-time until `progress(y) >= 1`, then locates
/// the crossing by secant iteration on the final step size. Component 0 is time.
fn integrate_to_crossing<T: Real, const N: usize>(
    f: impl Fn(&[T; N]) -> [T; N],
    progress: impl Fn(&[T; N]) -> T,
    y0: [T; N],
    tol: T,
) -> Result<Option<[T; N]>, OdeError> {
    let mut y = y0;
    let mut h = T::lit(1e-3);
    let floor = T::lit(1e-14);
    let mut steps = 0usize;
    loop {
        if y[0] > T::lit(TIME_CAP) {
            return Ok(None);
        }
        steps += 1;
        if steps > 5_000_000 || !h.is_finite() {
            return Err(OdeError::Stalled { t: y[0].to_f64_lossy() });
        }
        let (y1, err) = dp_step(&f, &y, h, tol, tol);
        if !(err <= T::one()) {
            h = h * T::lit(0.2).max(T::lit(0.9) * err.powf(T::lit(-0.2)));
            if h < floor || !err.is_finite() && h < floor {
                return Err(OdeError::Stalled { t: y[0].to_f64_lossy() });
            }
            continue;
        }
        if progress(&y1) >= T::one() {
            return Ok(Some(refine_crossing(&f, &progress, &y, h, tol)));
        }
        y = y1;
        let grow = if err == T::zero() { T::lit(5.0) } else { T::lit(0.9) * err.powf(T::lit(-0.2)) };
        h = h * grow.clamp(T::lit(0.2), T::lit(5.0));
    }
}

fn refine_crossing<T: Real, const N: usize>(
    f: &impl Fn(&[T; N]) -> [T; N],
    progress: &impl Fn(&[T; N]) -> T,
    y: &[T; N],
    h: T,
    tol: T,
) -> [T; N] {
    let g = |s: T| progress(&dp_step(f, y, s, tol, tol).0) - T::one();
    let (mut lo, mut hi) = (T::zero(), h);
    let (mut glo, mut ghi) = (progress(y) - T::one(), g(h));
    for _ in 0..100 {
        let mut mid = lo - glo * (hi - lo) / (ghi - glo);
        if !(mid > lo && mid < hi) {
            mid = (lo + hi) / T::lit(2.0);
        }
        let gm = g(mid);
        if gm.abs() <= T::lit(1e-13) || (hi - lo) <= T::epsilon() * h {
            return dp_step(f, y, mid, tol, tol).0;
        }
        if gm < T::zero() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
            ghi = gm;
        }
    }
    dp_step(f, y, (lo + hi) / T::lit(2.0), tol, tol).0
}

fn bracketed<T: Real>(
    run: impl Fn(T) -> Result<Option<Crossing<T>>, OdeError>,
    tol: T,
) -> Result<BlowupTime<T>, OdeError> {
    let coarse = run(tol)?;
    let fine = run(tol / T::lit(10.0))?;
    match (coarse, fine) {
        (Some(c), Some(f)) => {
            let a = c.t + c.tail;
            let b = f.t + f.tail;
            // the tail estimate is asymptotic; its size bounds its own error
            let lower = a.min(b) - f.tail.abs();
            let upper = a.max(b) + f.tail.abs();
            Ok(BlowupTime {
                value: b,
                method: Method::Numerical,
                certified_interval: Some((lower, upper)),
                in_scope: true,
            })
        }
        _ => {
            Ok(BlowupTime { value: T::infinity(), method: Method::Numerical, certified_interval: None, in_scope: true })
        }
    }
}

/// Integrates the extremal case `F'' = k (t+R)^{-q} max(F, delta (t+R)^a)^p`.
///
/// State is `(t, ln F, F'/F)`; the remaining time is taken from the local
/// `(T-t)^{-2/(p-1)}` profile as `2/((p-1) F'/F)`.
pub fn integrate_sideris<T: Real>(ode: &OdeProblem<T>) -> Result<BlowupTime<T>, OdeError> {
    integrate_sideris_with(ode, T::lit(DEFAULT_TOL))
}

pub fn integrate_sideris_with<T: Real>(ode: &OdeProblem<T>, tol: T) -> Result<BlowupTime<T>, OdeError> {
    ode.validate()?;
    let pm1 = ode.p - T::one();
    let y0 = ode.f_init.ln();
    let frac = T::lit(TAIL_FRACTION);
    let (ln_k, ln_d) = (ode.k.ln(), ode.delta.ln());
    let rhs = move |s: &[T; 3]| -> [T; 3] {
        let (t, y, z) = (s[0], s[1], s[2]);
        let ln_base = (t + ode.radius).ln();
        let ln_lower = ln_d + ode.a * ln_base;
        let ln_g = if y >= ln_lower { ode.p * y } else { ode.p * ln_lower };
        let forcing = (ln_k - ode.q * ln_base + ln_g - y).exp();
        let speed = T::one() / (T::one() + z);
        [speed, z * speed, (forcing - z * z) * speed]
    };
    let run = |tol: T| -> Result<Option<Crossing<T>>, OdeError> {
        let start = [T::zero(), y0, ode.f_rate_init / ode.f_init];
        let progress = |s: &[T; 3]| frac * pm1 * s[2] * (s[0] + ode.radius) / T::lit(2.0);
        let end = integrate_to_crossing(rhs, progress, start, tol)?;
        Ok(end.map(|s| Crossing { t: s[0], tail: T::lit(2.0) / (pm1 * s[2]) }))
    };
    let mut out = bracketed(run, tol)?;
    out.in_scope = ode.in_scope();
    Ok(out)
}

/// Integrates the Riccati equation in `(t, ln v)`; the remaining time is
/// `1/((p-1) v'/v)` from the local `(T-t)^{-1/(p-1)}` profile.
pub fn integrate_riccati<T: Real>(prob: &RiccatiProblem<T>) -> Result<BlowupTime<T>, OdeError> {
    let pm1 = prob.p - T::one();
    let kappa = prob.kappa();
    let y0 = (prob.m_data * prob.epsilon).ln();
    let frac = T::lit(TAIL_FRACTION);
    let ln_c9 = prob.c9.ln();
    let rate = move |t: T, y: T| (ln_c9 + pm1 * y - kappa * (t + prob.radius).ln()).exp();
    let rhs = move |s: &[T; 2]| -> [T; 2] {
        let z = rate(s[0], s[1]);
        let speed = T::one() / (T::one() + z);
        [speed, z * speed]
    };
    let run = |tol: T| -> Result<Option<Crossing<T>>, OdeError> {
        let progress = |s: &[T; 2]| frac * pm1 * rate(s[0], s[1]) * (s[0] + prob.radius);
        let end = integrate_to_crossing(rhs, progress, [T::zero(), y0], tol)?;
        Ok(end.map(|s| Crossing { t: s[0], tail: T::one() / (pm1 * rate(s[0], s[1])) }))
    };
    bracketed(run, T::lit(DEFAULT_TOL))
}
