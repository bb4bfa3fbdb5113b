//! Test-function functionals of wave states, their time series along a run,
//! and the inequality and integral-estimate checks built on them.
//!
//! All spatial integrals use the trapezoid rule with the radial volume weight
//! `|S^{n-1}| r^{n-1}`, which is also the quadrature the discrete operator is
//! self-adjoint in.

use thiserror::Error;

use crate::domain::{unit_ball_volume, CoefficientField, DomainSpec, ProblemSpec, RadialGrid, SourceKind};
use crate::elliptic::{solve_phi0, solve_phi1, BoundFit, EigenWeight, EllipticError, HarmonicWeight, SLOPE_TOLERANCE};
use crate::real::{abs_pow, linear_fit, Real};
use crate::wave::{
    self, InitialData, LifespanResult, Observer, RunReport, SimConfig, SourceMode, WaveError, WaveState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("state and weight grids differ")]
    GridMismatch,
    #[error("need at least 5 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("harmonic weight unavailable (requires n >= 3)")]
    MissingPhi0,
    #[error("unknown check `{0}`")]
    UnknownInequality(String),
    #[error("t-grid must be positive, increasing and span at least one decade")]
    ShortTimeGrid,
    #[error("integration radius {radius} beyond grid end {outer}")]
    BeyondGrid { radius: f64, outer: f64 },
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Wave(#[from] WaveError),
}

/// `phi0` (when `n >= 3`) and `phi1` on a common grid.
#[derive(Debug, Clone)]
pub struct WeightPair<T> {
    pub phi0: Option<HarmonicWeight<T>>,
    pub phi1: EigenWeight<T>,
}

impl<T: Real> WeightPair<T> {
    pub fn new(phi0: Option<HarmonicWeight<T>>, phi1: EigenWeight<T>) -> Result<Self, FunctionalError> {
        if let Some(w) = &phi0 {
            if !w.grid.matches(&phi1.grid) {
                return Err(FunctionalError::GridMismatch);
            }
        }
        Ok(Self { phi0, phi1 })
    }

    pub fn solve(field: &CoefficientField<T>, grid: &RadialGrid<T>) -> Result<Self, FunctionalError> {
        let phi0 = if grid.n >= 3 { Some(solve_phi0(field, grid)?) } else { None };
        Self::new(phi0, solve_phi1(field, grid)?)
    }

    pub fn grid(&self) -> &RadialGrid<T> {
        &self.phi1.grid
    }

    /// `psi1(r_i, t) = phi1(r_i) e^{-t}`.
    #[inline]
    pub fn psi1(&self, i: usize, t: T) -> T {
        self.phi1.psi(i, t)
    }
}

/// Precomputed quadrature weights for the functionals.
#[derive(Debug, Clone)]
pub struct Quadrature<T> {
    pub weights: Vec<T>,
    phi0_w: Option<Vec<T>>,
    /// `phi1 w e^{-s_b}` with `s_b` the first node of the block containing the
    /// node, which keeps arbitrarily long grids in floating-point range.
    phi1_w: Vec<T>,
    block_shift: Vec<T>,
}

const BLOCK: usize = 256;

impl<T: Real> Quadrature<T> {
    pub fn new(pair: &WeightPair<T>) -> Self {
        let grid = pair.grid();
        let weights = grid.trapezoid_weights();
        let block_shift: Vec<T> = grid.nodes.iter().step_by(BLOCK).copied().collect();
        let phi0_w = pair.phi0.as_ref().map(|w| w.values.iter().zip(&weights).map(|(&a, &b)| a * b).collect());
        let phi1_w = (0..grid.len())
            .map(|i| pair.phi1.scaled[i] * (grid.nodes[i] - block_shift[i / BLOCK]).exp() * weights[i])
            .collect();
        Self { weights, phi0_w, phi1_w, block_shift }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integral(&self, f: &[T]) -> T {
        self.weights.iter().zip(f).map(|(&w, &x)| w * x).sum()
    }

    /// `int f phi0` over indices `0..=active`.
    pub fn phi0_moment(&self, active: usize, f: impl Fn(usize) -> T) -> Option<T> {
        self.phi0_w.as_ref().map(|w| (0..=active.min(w.len() - 1)).map(|i| w[i] * f(i)).sum())
    }

    /// `int f psi1(., t)` over indices `0..=active`.
    pub fn psi1_moment(&self, t: T, active: usize, f: impl Fn(usize) -> T) -> T {
        let end = active.min(self.phi1_w.len() - 1) + 1;
        let mut total = T::zero();
        for (b, &shift) in self.block_shift.iter().enumerate() {
            let lo = b * BLOCK;
            if lo >= end {
                break;
            }
            let s: T = (lo..end.min(lo + BLOCK)).map(|i| self.phi1_w[i] * f(i)).sum();
            if s != T::zero() {
                total = total + s * (shift - t).exp();
            }
        }
        total
    }
}

fn check_len<T: Real>(grid: &RadialGrid<T>, state: &WaveState<T>) -> Result<(), FunctionalError> {
    if state.u.len() != grid.len() || state.v.len() != grid.len() {
        return Err(FunctionalError::GridMismatch);
    }
    Ok(())
}

/// `F0(t) = int u phi0`.
pub fn compute_f0<T: Real>(state: &WaveState<T>, phi0: &HarmonicWeight<T>) -> Result<T, FunctionalError> {
    check_len(&phi0.grid, state)?;
    let w = phi0.grid.trapezoid_weights();
    Ok((0..w.len()).map(|i| w[i] * phi0.values[i] * state.u[i]).sum())
}

/// `F1(t) = int u psi1(., t)`.
pub fn compute_f1<T: Real>(state: &WaveState<T>, weights: &WeightPair<T>) -> Result<T, FunctionalError> {
    check_len(weights.grid(), state)?;
    let q = Quadrature::new(weights);
    Ok(q.psi1_moment(state.t, q.len() - 1, |i| state.u[i]))
}

/// `G0(t) = int psi1 u_t - cumulative/2 - (eps/2) int phi1 g`, where `cumulative`
/// is `int_0^t int psi1 |u_t|^p`.
pub fn compute_g0<T: Real>(
    state: &WaveState<T>,
    weights: &WeightPair<T>,
    cumulative: T,
    data: &InitialData<T>,
) -> Result<T, FunctionalError> {
    check_len(weights.grid(), state)?;
    let q = Quadrature::new(weights);
    let moment = q.psi1_moment(state.t, q.len() - 1, |i| state.v[i]);
    let g = data.g.sample(weights.grid());
    let g_phi1 = q.psi1_moment(T::zero(), q.len() - 1, |i| g[i]);
    let half = T::lit(0.5);
    Ok(moment - half * cumulative - half * data.epsilon * g_phi1)
}

/// Composite Simpson rule with the radial volume weight (3/8 rule on the last
/// three intervals when the interval count is odd).
pub fn simpson<T: Real>(grid: &RadialGrid<T>, f: &[T]) -> T {
    let g: Vec<T> = grid.measure().iter().zip(f).map(|(&m, &x)| m * x).collect();
    let m = g.len() - 1;
    let h = grid.spacing;
    let (three, four, two) = (T::lit(3.0), T::lit(4.0), T::lit(2.0));
    let simpson_part = |end: usize| -> T {
        let mut s = g[0] + g[end];
        for (i, &x) in g.iter().enumerate().take(end).skip(1) {
            s = s + if i % 2 == 1 { four * x } else { two * x };
        }
        s * h / three
    };
    if m < 2 {
        return (g[0] + g[m]) * h / two;
    }
    if m % 2 == 0 {
        return simpson_part(m);
    }
    if m == 3 {
        return three * h / T::lit(8.0) * (g[0] + three * g[1] + three * g[2] + g[3]);
    }
    let head = simpson_part(m - 3);
    let tail = three * h / T::lit(8.0) * (g[m - 3] + three * g[m - 2] + three * g[m - 1] + g[m]);
    head + tail
}

/// Time series sampled along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace<T> {
    pub times: Vec<T>,
    pub f0: Option<Vec<T>>,
    pub f1: Vec<T>,
    pub g0: Vec<T>,
    /// `F(t) = (1/2) int_0^t int psi1 |u_t|^p + (eps/2) int phi1 g`.
    pub fcum: Vec<T>,
    pub sup_u: Vec<T>,
    pub sup_v: Vec<T>,
    /// `int psi1 u_t`.
    pub psi1_ut: Vec<T>,
    /// `int N phi0` with `N` the active source; equals `F0''` exactly in the continuum.
    pub source_phi0: Option<Vec<T>>,
    /// Leapfrog double sum `P` of `int N phi0` over steps: `P(t+dt) - 2P(t) + P(t-dt) =
    /// dt^2 int N phi0 (t)`, so second differences of `P` and `F0` agree exactly when
    /// the operator term drops out of `F0''`.
    pub source_phi0_double: Option<Vec<T>>,
    /// `int psi1 N`.
    pub source_psi1: Vec<T>,
    /// `int_0^t int psi1 N`.
    pub cum_source: Vec<T>,
    /// `F'(t) = (1/2) int psi1 |u_t|^p`.
    pub rate: Vec<T>,
    pub blowup: Option<LifespanResult<T>>,
    pub mode: SourceMode,
}

impl<T: Real> SimTrace<T> {
    fn empty(has_phi0: bool, mode: SourceMode) -> Self {
        Self {
            times: Vec::new(),
            f0: has_phi0.then(Vec::new),
            f1: Vec::new(),
            g0: Vec::new(),
            fcum: Vec::new(),
            sup_u: Vec::new(),
            sup_v: Vec::new(),
            psi1_ut: Vec::new(),
            source_phi0: has_phi0.then(Vec::new),
            source_phi0_double: has_phi0.then(Vec::new),
            source_psi1: Vec::new(),
            cum_source: Vec::new(),
            rate: Vec::new(),
            blowup: None,
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Observer that accumulates the time integrals at every step and records
/// the functionals at every sample.
pub struct TraceRecorder<T> {
    quad: Quadrature<T>,
    kind: SourceKind,
    p: T,
    mode: SourceMode,
    data_term: T,
    prev: Option<(T, T, T)>,
    cum_velocity: T,
    cum_source: T,
    step: T,
    double: (T, T, T),
    trace: SimTrace<T>,
}

impl<T: Real> TraceRecorder<T> {
    pub fn new(weights: &WeightPair<T>, config: &SimConfig<T>) -> Self {
        let quad = Quadrature::new(weights);
        let g = config.data.g.sample(weights.grid());
        let g_phi1 = quad.psi1_moment(T::zero(), quad.len() - 1, |i| g[i]);
        Self {
            kind: config.problem.source_kind,
            p: config.problem.p,
            mode: config.mode,
            data_term: T::lit(0.5) * config.data.epsilon * g_phi1,
            prev: None,
            cum_velocity: T::zero(),
            cum_source: T::zero(),
            step: config.schedule().map(|s| s.0).unwrap_or(T::zero()),
            double: (T::zero(), T::zero(), T::zero()),
            trace: SimTrace::empty(weights.phi0.is_some(), config.mode),
            quad,
        }
    }

    fn source(&self, state: &WaveState<T>, i: usize) -> T {
        match (self.mode, self.kind) {
            (SourceMode::Off, _) => T::zero(),
            (_, SourceKind::DisplacementPower) => abs_pow(state.u[i], self.p),
            (_, SourceKind::VelocityPower) => abs_pow(state.v[i], self.p),
        }
    }

    pub fn finish(self) -> SimTrace<T> {
        self.trace
    }
}

impl<T: Real> Observer<T> for TraceRecorder<T> {
    fn on_step(&mut self, state: &WaveState<T>, active: usize) {
        let vel = self.quad.psi1_moment(state.t, active, |i| abs_pow(state.v[i], self.p));
        let src = if self.mode == SourceMode::Nonlinear && self.kind == SourceKind::VelocityPower {
            vel
        } else {
            self.quad.psi1_moment(state.t, active, |i| self.source(state, i))
        };
        if let Some((t0, v0, s0)) = self.prev {
            let half = (state.t - t0) / T::lit(2.0);
            self.cum_velocity = self.cum_velocity + half * (v0 + vel);
            self.cum_source = self.cum_source + half * (s0 + src);
        }
        self.prev = Some((state.t, vel, src));
        if self.quad.phi0_w.is_some() {
            let s0 = self.quad.phi0_moment(active, |i| self.source(state, i)).expect("phi0 present");
            let (_, mut p, mut v) = self.double;
            let at_state = p;
            v = v + self.step * self.step * s0;
            p = p + v;
            self.double = (at_state, p, v);
        }
    }

    fn on_sample(&mut self, state: &WaveState<T>, active: usize) {
        let (_, vel, src) = self.prev.expect("a step precedes every sample");
        let half = T::lit(0.5);
        let q = &self.quad;
        let fcum = half * self.cum_velocity + self.data_term;
        let psi1_ut = q.psi1_moment(state.t, active, |i| state.v[i]);
        let tr = &mut self.trace;
        tr.times.push(state.t);
        if let Some(f0) = tr.f0.as_mut() {
            f0.push(q.phi0_moment(active, |i| state.u[i]).expect("phi0 present"));
        }
        if let Some(s0) = tr.source_phi0.as_mut() {
            let (mode, kind, p) = (self.mode, self.kind, self.p);
            let value = q
                .phi0_moment(active, |i| match (mode, kind) {
                    (SourceMode::Off, _) => T::zero(),
                    (_, SourceKind::DisplacementPower) => abs_pow(state.u[i], p),
                    (_, SourceKind::VelocityPower) => abs_pow(state.v[i], p),
                })
                .expect("phi0 present");
            s0.push(value);
        }
        if let Some(d) = tr.source_phi0_double.as_mut() {
            d.push(self.double.0);
        }
        tr.f1.push(q.psi1_moment(state.t, active, |i| state.u[i]));
        tr.psi1_ut.push(psi1_ut);
        tr.fcum.push(fcum);
        tr.g0.push(psi1_ut - fcum);
        tr.sup_u.push(state.sup_u());
        tr.sup_v.push(state.sup_v());
        tr.source_psi1.push(src);
        tr.cum_source.push(self.cum_source);
        tr.rate.push(half * vel);
    }
}

/// A traced run with the weights it was measured against.
#[derive(Debug, Clone)]
pub struct Simulation<T> {
    pub trace: SimTrace<T>,
    pub weights: WeightPair<T>,
    pub report: RunReport<T>,
}

/// Solves the weights, runs the wave solver with trace recording and the
/// half-step confirmation, and attaches the lifespan to the trace.
pub fn simulate<T: Real>(config: &SimConfig<T>) -> Result<Simulation<T>, FunctionalError> {
    let grid = config.grid()?;
    let weights = WeightPair::solve(&config.field, &grid)?;
    let mut recorder = TraceRecorder::new(&weights, config);
    let report = wave::run(config, &mut recorder)?;
    let mut trace = recorder.finish();
    trace.blowup = report.lifespan;
    Ok(Simulation { trace, weights, report })
}

/// The three integral estimates over the cone `{r0 <= r <= t + R}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimateLemma {
    /// `int psi1^{p'}`, growth exponent `n - 1 - (n-1) p'/2`.
    PsiPower,
    /// `int phi0^{-1/(p-1)} psi1^{p'}`, same exponent.
    WeightedPsiPower,
    /// `int psi1`, growth exponent `(n-1)/2`.
    ConeMass,
}

impl EstimateLemma {
    pub const ALL: [EstimateLemma; 3] =
        [EstimateLemma::PsiPower, EstimateLemma::WeightedPsiPower, EstimateLemma::ConeMass];

    pub fn name(self) -> &'static str {
        match self {
            EstimateLemma::PsiPower => "psi_power",
            EstimateLemma::WeightedPsiPower => "weighted_psi_power",
            EstimateLemma::ConeMass => "cone_mass",
        }
    }

    pub fn exponent<T: Real>(self, n: usize, p: T) -> T {
        let m = T::from_usize_lossy(n - 1);
        let two = T::lit(2.0);
        match self {
            EstimateLemma::PsiPower | EstimateLemma::WeightedPsiPower => m - m * (p / (p - T::one())) / two,
            EstimateLemma::ConeMass => m / two,
        }
    }
}

/// Trapezoid integral of nodal values `g` (already including the volume weight)
/// over `[r0, x]`, with a linearly interpolated partial cell at the end.
fn partial_integral<T: Real>(grid: &RadialGrid<T>, g: &[T], x: T) -> Result<T, FunctionalError> {
    let h = grid.spacing;
    let r0 = grid.r0();
    if x > grid.r_outer() + h * T::lit(1e-9) {
        return Err(FunctionalError::BeyondGrid { radius: x.to_f64_lossy(), outer: grid.r_outer().to_f64_lossy() });
    }
    let k = grid.last_index_within(x);
    let half = T::lit(0.5);
    let mut s = T::zero();
    for i in 0..k {
        s = s + half * h * (g[i] + g[i + 1]);
    }
    let rest = (x - (r0 + T::from_usize_lossy(k) * h)).max(T::zero());
    if rest > T::zero() && k + 1 < g.len() {
        let gx = g[k] + (g[k + 1] - g[k]) * rest / h;
        s = s + half * rest * (g[k] + gx);
    }
    Ok(s)
}

/// Value of an estimate-lemma integral at time `t`.
pub fn estimate_integral<T: Real>(
    weights: &WeightPair<T>,
    p: T,
    support_radius: T,
    t: T,
    which: EstimateLemma,
) -> Result<T, FunctionalError> {
    let grid = weights.grid();
    let measure = grid.measure();
    let conj = p / (p - T::one());
    let g: Vec<T> = match which {
        EstimateLemma::ConeMass => (0..grid.len()).map(|i| weights.psi1(i, t) * measure[i]).collect(),
        EstimateLemma::PsiPower => (0..grid.len()).map(|i| abs_pow(weights.psi1(i, t), conj) * measure[i]).collect(),
        EstimateLemma::WeightedPsiPower => {
            let phi0 = weights.phi0.as_ref().ok_or(FunctionalError::MissingPhi0)?;
            let inv = -T::one() / (p - T::one());
            (0..grid.len())
                .map(|i| {
                    // both factors vanish linearly at r0 and the product tends to 0
                    if i == 0 || phi0.values[i] <= T::zero() {
                        T::zero()
                    } else {
                        phi0.values[i].powf(inv) * abs_pow(weights.psi1(i, t), conj) * measure[i]
                    }
                })
                .collect()
        }
    };
    partial_integral(grid, &g, t + support_radius)
}

/// Fits the growth of an estimate-lemma integral over `t_grid` against its exponent.
pub fn verify_estimate_lemma<T: Real>(
    weights: &WeightPair<T>,
    problem: &ProblemSpec<T>,
    domain: &DomainSpec<T>,
    t_grid: &[T],
    which: EstimateLemma,
) -> Result<BoundFit<T>, FunctionalError> {
    let ok = t_grid.len() >= 2
        && t_grid[0] > T::zero()
        && t_grid.windows(2).all(|w| w[1] > w[0])
        && t_grid[t_grid.len() - 1] >= T::lit(10.0) * t_grid[0] * (T::one() - T::lit(1e-12));
    if !ok {
        return Err(FunctionalError::ShortTimeGrid);
    }
    let theory = which.exponent(problem.n, problem.p);
    let radius = domain.support_radius;
    let mut xs = Vec::with_capacity(t_grid.len());
    let mut ys = Vec::with_capacity(t_grid.len());
    let mut constant = T::zero();
    for &t in t_grid {
        let value = estimate_integral(weights, problem.p, radius, t, which)?;
        let base = t + radius;
        constant = constant.max(value / base.powf(theory));
        xs.push(base.ln());
        ys.push(value.ln());
    }
    let slope_fit = linear_fit(&xs, &ys).map(|f| f.0).unwrap_or(T::nan());
    Ok(BoundFit { constant, exponent_theory: theory, slope_fit, pass: slope_fit <= theory + T::lit(SLOPE_TOLERANCE) })
}

/// Geometric time grid with `count` points on `[t_min, t_max]`.
pub fn geometric_grid<T: Real>(t_min: T, t_max: T, count: usize) -> Vec<T> {
    let ratio = (t_max / t_min).ln() / T::from_usize_lossy(count.max(2) - 1);
    (0..count).map(|j| t_min * (ratio * T::from_usize_lossy(j)).exp()).collect()
}

/// Inequalities checked along a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Check {
    /// `F0'' >= k (t+R)^{-n(p-1)} |F0|^p`, with `F0''` from second differences.
    Convexity,
    /// `F1(t) >= (1/2)(1 - e^{-2t}) eps int (f+g) phi1 + e^{-2t} eps int f phi1`.
    F1LowerBound,
    /// `F0(t) >= (1/2) delta (t+R)^a` once that dominates, the twice integrated
    /// bound before.
    F0Growth,
    /// `int psi1 u_t >= F(t)`.
    MomentBound,
    /// `F'(t) >= C9 F(t)^p / (t+R)^{(n-1)(p-1)/2}`.
    Riccati,
    /// `G0(t) >= e^{-2t} G0(0)`.
    G0Decay,
    /// Second difference of `F0` against that of the summed `int N phi0`.
    F0Identity,
}

impl Check {
    pub const ALL: [Check; 7] = [
        Check::Convexity,
        Check::F1LowerBound,
        Check::F0Growth,
        Check::MomentBound,
        Check::Riccati,
        Check::G0Decay,
        Check::F0Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Convexity => "convexity",
            Check::F1LowerBound => "f1_lower_bound",
            Check::F0Growth => "f0_growth",
            Check::MomentBound => "moment_bound",
            Check::Riccati => "riccati",
            Check::G0Decay => "g0_decay",
            Check::F0Identity => "f0_identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, FunctionalError> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| FunctionalError::UnknownInequality(name.to_string()))
    }

    /// Checks that belong to the argument for `kind`.
    pub fn for_source(kind: SourceKind) -> &'static [Check] {
        match kind {
            SourceKind::DisplacementPower => {
                &[Check::F1LowerBound, Check::Convexity, Check::F0Growth, Check::F0Identity]
            }
            SourceKind::VelocityPower => &[Check::MomentBound, Check::G0Decay, Check::Riccati],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    Inequality,
    /// Linear run: the source-driven side vanishes and the relation is an identity.
    SourceOffIdentity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport<T> {
    pub name: &'static str,
    pub mode: CheckMode,
    pub times: Vec<T>,
    /// `LHS - RHS` plus the differentiation allowance, per sample.
    pub margin_series: Vec<T>,
    pub scales: Vec<T>,
    pub min_margin: T,
    pub tolerance: T,
    pub pass: bool,
}

/// Constants the inequalities depend on, computed from data, weights and the run.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityContext<T> {
    pub n: usize,
    pub p: T,
    pub support_radius: T,
    pub epsilon: T,
    /// `Vol(B^n)^{-(p-1)}`.
    pub k: T,
    /// `min(int f phi1, (1/2) int (f+g) phi1)`.
    pub c0: T,
    /// Sup over samples of the weighted cone integral over `(t+R)^{n-1-(n-1)p'/2}`.
    pub c5: Option<T>,
    /// `eps^p c0^p C5^{-(p-1)} / (a (a-1))`.
    pub delta: Option<T>,
    /// `a = n + 1 - (n-1) p / 2`.
    pub growth_exponent: T,
    /// Sup over samples of `int_{cone} psi1 / (t+R)^{(n-1)/2}`.
    pub c8: T,
    /// `C8^{1-p} / 2`.
    pub c9: T,
    /// `(1/2) int phi1 g`.
    pub m_data: T,
    pub int_f_phi1: T,
    pub int_g_phi1: T,
    pub f0_init: Option<T>,
    pub f0_rate_init: Option<T>,
    pub tolerance: T,
}

/// Relative tolerance used when none is configured.
pub const DEFAULT_CHECK_TOLERANCE: f64 = 1e-3;

pub fn build_context<T: Real>(
    trace: &SimTrace<T>,
    weights: &WeightPair<T>,
    problem: &ProblemSpec<T>,
    domain: &DomainSpec<T>,
    data: &InitialData<T>,
    tolerance: T,
) -> Result<InequalityContext<T>, FunctionalError> {
    let grid = weights.grid();
    let quad = Quadrature::new(weights);
    let last = quad.len() - 1;
    let f = data.f.sample(grid);
    let g = data.g.sample(grid);
    let int_f_phi1 = quad.psi1_moment(T::zero(), last, |i| f[i]);
    let int_g_phi1 = quad.psi1_moment(T::zero(), last, |i| g[i]);
    let half = T::lit(0.5);
    let (n, p) = (problem.n, problem.p);
    let radius = domain.support_radius;
    let c0 = int_f_phi1.min(half * (int_f_phi1 + int_g_phi1));
    let k = unit_ball_volume::<T>(n).powf(-(p - T::one()));
    let a = T::from_usize_lossy(n + 1) - T::from_usize_lossy(n - 1) * p / T::lit(2.0);

    let sup_ratio = |which: EstimateLemma| -> Result<T, FunctionalError> {
        let e = which.exponent(n, p);
        let mut best = T::zero();
        for &t in &trace.times {
            let v = estimate_integral(weights, p, radius, t, which)?;
            best = best.max(v / (t + radius).powf(e));
        }
        Ok(best)
    };
    let c8 = sup_ratio(EstimateLemma::ConeMass)?;
    let c9 = half * c8.powf(T::one() - p);
    let c5 = if weights.phi0.is_some() { Some(sup_ratio(EstimateLemma::WeightedPsiPower)?) } else { None };
    let delta = c5.map(|c5| {
        let l = (data.epsilon * c0).powf(p) * c5.powf(-(p - T::one()));
        l / (a * (a - T::one()))
    });
    let f0_init = quad.phi0_moment(last, |i| data.epsilon * f[i]);
    let f0_rate_init = quad.phi0_moment(last, |i| data.epsilon * g[i]);
    Ok(InequalityContext {
        n,
        p,
        support_radius: radius,
        epsilon: data.epsilon,
        k,
        c0,
        c5,
        delta,
        growth_exponent: a,
        c8,
        c9,
        m_data: half * int_g_phi1,
        int_f_phi1,
        int_g_phi1,
        f0_init,
        f0_rate_init,
        tolerance,
    })
}

/// Smallest `t > 0` with `(1/2)(t+R)^a >= R^a + a R^{a-1} t`.
pub fn growth_crossover<T: Real>(a: T, radius: T) -> T {
    let h = |t: T| T::lit(0.5) * (t + radius).powf(a) - radius.powf(a) - a * radius.powf(a - T::one()) * t;
    let mut hi = radius.max(T::one());
    while h(hi) < T::zero() {
        hi = hi * T::lit(2.0);
        if !hi.is_finite() {
            return T::infinity();
        }
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if h(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

struct SecondDifference<T> {
    index: usize,
    value: T,
    allowance: T,
}

/// `|delta^4 f|` per index, taken from the nearest full stencil.
fn fourth_differences<T: Real>(f: &[T]) -> Vec<T> {
    let n = f.len();
    (0..n)
        .map(|i| {
            let j = i.clamp(2, n - 3);
            (f[j - 2] - T::lit(4.0) * f[j - 1] + T::lit(6.0) * f[j] - T::lit(4.0) * f[j + 1] + f[j + 2]).abs()
        })
        .collect()
}

/// Centered second differences with the allowance `|delta^4 f| / (12 dt^2)`
/// estimating their O(dt^2) error.
fn second_differences<T: Real>(times: &[T], f: &[T]) -> Vec<SecondDifference<T>> {
    let n = f.len();
    let dt = times[1] - times[0];
    let dt2 = dt * dt;
    let d4 = fourth_differences(f);
    (1..n - 1)
        .map(|i| SecondDifference {
            index: i,
            value: (f[i + 1] - T::lit(2.0) * f[i] + f[i - 1]) / dt2,
            allowance: d4[i] / (T::lit(12.0) * dt2),
        })
        .collect()
}

pub fn verify_inequality<T: Real>(
    trace: &SimTrace<T>,
    which: Check,
    ctx: &InequalityContext<T>,
) -> Result<InequalityReport<T>, FunctionalError> {
    let len = trace.len();
    if len < 5 {
        return Err(FunctionalError::InsufficientSamples(len));
    }
    let (p, radius, eps) = (ctx.p, ctx.support_radius, ctx.epsilon);
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let mut mode = CheckMode::Inequality;
    // (time, lhs, rhs, allowance); identities store the allowance minus |lhs - rhs| as lhs
    let mut rows: Vec<(T, T, T, T)> = Vec::with_capacity(len);
    match which {
        Check::Convexity | Check::F0Identity => {
            let f0 = trace.f0.as_ref().ok_or(FunctionalError::MissingPhi0)?;
            // the interval into the threshold crossing is not resolved by the samples
            let usable = if trace.blowup.is_some() { len - 1 } else { len };
            if usable < 5 {
                return Err(FunctionalError::InsufficientSamples(usable));
            }
            let (times, f0) = (&trace.times[..usable], &f0[..usable]);
            let identity = which == Check::F0Identity || trace.mode == SourceMode::Off;
            if trace.mode == SourceMode::Off && which == Check::Convexity {
                mode = CheckMode::SourceOffIdentity;
            }
            if identity {
                let double = trace.source_phi0_double.as_ref().ok_or(FunctionalError::MissingPhi0)?;
                let reference = second_differences(times, &double[..usable]);
                for (d, r) in second_differences(times, f0).into_iter().zip(reference) {
                    rows.push((times[d.index], d.value, r.value, T::zero()));
                }
                return Ok(finish(which.name(), mode, rows, ctx.tolerance, true));
            }
            let q = T::from_usize_lossy(ctx.n) * (p - T::one());
            for d in second_differences(times, f0) {
                let t = times[d.index];
                let rhs = ctx.k * (t + radius).powf(-q) * abs_pow(f0[d.index], p);
                rows.push((t, d.value, rhs, d.allowance));
            }
        }
        Check::F1LowerBound => {
            for (i, &t) in trace.times.iter().enumerate() {
                let decay = (-two * t).exp();
                let rhs =
                    half * (T::one() - decay) * eps * (ctx.int_f_phi1 + ctx.int_g_phi1) + decay * eps * ctx.int_f_phi1;
                rows.push((t, trace.f1[i], rhs, T::zero()));
            }
        }
        Check::F0Growth => {
            let f0 = trace.f0.as_ref().ok_or(FunctionalError::MissingPhi0)?;
            let delta = ctx.delta.ok_or(FunctionalError::MissingPhi0)?;
            let a = ctx.growth_exponent;
            let start = growth_crossover(a, radius);
            let (init, rate) = (ctx.f0_init.unwrap_or(T::zero()), ctx.f0_rate_init.unwrap_or(T::zero()));
            for (i, &t) in trace.times.iter().enumerate() {
                let base = (t + radius).powf(a);
                let rhs = if t >= start {
                    half * delta * base
                } else {
                    init + rate * t + delta * (base - radius.powf(a) - a * radius.powf(a - T::one()) * t)
                };
                rows.push((t, f0[i], rhs, T::zero()));
            }
        }
        Check::MomentBound => {
            for (i, &t) in trace.times.iter().enumerate() {
                rows.push((t, trace.psi1_ut[i], trace.fcum[i], T::zero()));
            }
        }
        Check::G0Decay => {
            let g00 = trace.g0[0];
            for (i, &t) in trace.times.iter().enumerate() {
                rows.push((t, trace.g0[i], (-two * t).exp() * g00, T::zero()));
            }
        }
        Check::Riccati => {
            let kappa = T::from_usize_lossy(ctx.n - 1) * (p - T::one()) / two;
            for (i, &t) in trace.times.iter().enumerate() {
                let rhs = ctx.c9 * abs_pow(trace.fcum[i], p) / (t + radius).powf(kappa);
                rows.push((t, trace.rate[i], rhs, T::zero()));
            }
        }
    }
    Ok(finish(which.name(), mode, rows, ctx.tolerance, false))
}

fn finish<T: Real>(
    name: &'static str,
    mode: CheckMode,
    rows: Vec<(T, T, T, T)>,
    tolerance: T,
    identity: bool,
) -> InequalityReport<T> {
    let mut times = Vec::with_capacity(rows.len());
    let mut margin_series = Vec::with_capacity(rows.len());
    let mut scales = Vec::with_capacity(rows.len());
    let mut pass = true;
    let mut min_margin = T::infinity();
    for (t, lhs, rhs, allowance) in rows {
        let scale = lhs.abs().max(rhs.abs()).max(T::one());
        let margin = if identity { allowance - (lhs - rhs).abs() } else { lhs - rhs + allowance };
        pass &= margin >= -tolerance * scale;
        min_margin = min_margin.min(margin);
        times.push(t);
        margin_series.push(margin);
        scales.push(scale);
    }
    InequalityReport { name, mode, times, margin_series, scales, min_margin, tolerance, pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CoefficientProfile, DomainSpec};
    use crate::wave::DataProfile;

    fn identity_pair(n: usize, h: f64, m: usize) -> WeightPair<f64> {
        let g = RadialGrid::uniform(n, 1.0, h, m);
        WeightPair::solve(&CoefficientField::identity(), &g).unwrap()
    }

    #[test]
    fn f0_of_phi0_on_truncated_ball() {
        let pair = identity_pair(3, 1e-3, 2000);
        let phi0 = pair.phi0.as_ref().unwrap();
        let u: Vec<f64> = pair.grid().nodes.iter().map(|&r| 1.0 - 1.0 / r).collect();
        let state = WaveState { t: 0.0, u, v: vec![0.0; pair.grid().len()] };
        // weight phi0 differs from 1 - 1/r only through the far-field row; compare
        // against the discrete weight's own Simpson integral and the closed form
        let f0 = compute_f0(&state, phi0).unwrap();
        let prod: Vec<f64> = state.u.iter().zip(&phi0.values).map(|(a, b)| a * b).collect();
        let oracle = simpson(pair.grid(), &prod);
        assert!(((f0 - oracle) / oracle).abs() < 1e-6);
        // int_1^3 (1 - 1/r)^2 4 pi r^2 dr = 4 pi * 8/3 with the exact weight
        let exact: Vec<f64> = pair.grid().nodes.iter().map(|&r| (1.0 - 1.0 / r) * (1.0 - 1.0 / r)).collect();
        let tr = pair.grid().trapezoid_weights().iter().zip(&exact).map(|(w, x)| w * x).sum::<f64>();
        let target = 4.0 * std::f64::consts::PI * 8.0 / 3.0;
        assert!(((tr - target) / target).abs() < 1e-6, "{tr} vs {target}");
    }

    #[test]
    fn zero_state_has_zero_functionals() {
        let pair = identity_pair(3, 1e-2, 300);
        let s = WaveState::zeros(pair.grid().len());
        assert_eq!(compute_f0(&s, pair.phi0.as_ref().unwrap()).unwrap(), 0.0);
        assert_eq!(compute_f1(&s, &pair).unwrap(), 0.0);
    }

    #[test]
    fn f1_time_factor_is_exact() {
        let pair = identity_pair(3, 1e-2, 300);
        let u: Vec<f64> = pair.grid().nodes.iter().map(|&r| crate::domain::bump((r - 1.5) / 0.5)).collect();
        let len = u.len();
        let a = compute_f1(&WaveState { t: 0.7, u: u.clone(), v: vec![0.0; len] }, &pair).unwrap();
        let b = compute_f1(&WaveState { t: 1.7, u, v: vec![0.0; len] }, &pair).unwrap();
        assert!((b / a - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let pair = identity_pair(3, 1e-2, 300);
        let s = WaveState::zeros(10);
        assert_eq!(compute_f1(&s, &pair), Err(FunctionalError::GridMismatch));
    }

    #[test]
    fn g0_at_start_is_half_the_data_term() {
        let pair = identity_pair(1, 1e-3, 3000);
        let data = InitialData {
            f: DataProfile::Zero,
            g: DataProfile::Bump { amplitude: 1.0, center: 1.5, width: 0.5 },
            epsilon: 0.3,
        };
        let g = data.g.sample(pair.grid());
        let state = WaveState { t: 0.0, u: vec![0.0; g.len()], v: g.iter().map(|x| 0.3 * x).collect() };
        let g0 = compute_g0(&state, &pair, 0.0, &data).unwrap();
        let phi1g: Vec<f64> = (0..g.len()).map(|i| pair.phi1.value(i) * g[i]).collect();
        let oracle = 0.5 * 0.3 * simpson(pair.grid(), &phi1g);
        assert!(((g0 - oracle) / oracle).abs() < 1e-6, "{g0} vs {oracle}");

        let f_only = InitialData { f: data.g, g: DataProfile::Zero, epsilon: 0.3 };
        let s = WaveState { t: 0.0, u: state.v.clone(), v: vec![0.0; g.len()] };
        assert_eq!(compute_g0(&s, &pair, 0.0, &f_only).unwrap(), 0.0);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let g = RadialGrid::uniform(1, 0.0, 0.1, 7);
        let f: Vec<f64> = g.nodes.iter().map(|&x| x * x * x).collect();
        assert!((simpson(&g, &f) - 0.7f64.powi(4) / 4.0).abs() < 1e-14);
        let g = RadialGrid::uniform(1, 0.0, 0.1, 8);
        let f: Vec<f64> = g.nodes.iter().map(|&x| x * x * x).collect();
        assert!((simpson(&g, &f) - 0.8f64.powi(4) / 4.0).abs() < 1e-14);
    }

    #[test]
    fn cone_mass_is_bounded_in_one_dimension() {
        let d = DomainSpec::new(1, 1.0, 2.0).unwrap();
        let problem = ProblemSpec::new(1, 2.0, SourceKind::VelocityPower).unwrap();
        let pair = identity_pair(1, 1e-2, 5300);
        let ts = geometric_grid(5.0, 50.0, 12);
        let fit = verify_estimate_lemma(&pair, &problem, &d, &ts, EstimateLemma::ConeMass).unwrap();
        assert!(fit.pass && fit.slope_fit.abs() < 0.05, "{fit:?}");
        assert!(fit.constant.is_finite() && fit.constant > 0.0);
        assert_eq!(
            verify_estimate_lemma(&pair, &problem, &d, &[5.0, 10.0], EstimateLemma::ConeMass).unwrap_err(),
            FunctionalError::ShortTimeGrid
        );
        assert_eq!(
            verify_estimate_lemma(&pair, &problem, &d, &ts, EstimateLemma::WeightedPsiPower).unwrap_err(),
            FunctionalError::MissingPhi0
        );
    }

    #[test]
    fn weighted_integral_three_dimensions() {
        let d = DomainSpec::new(3, 1.0, 2.0).unwrap();
        let problem = ProblemSpec::new(3, 2.0, SourceKind::DisplacementPower).unwrap();
        let profile = CoefficientProfile::Bump { amplitude: 0.5, center: 1.5, width: 0.4 };
        let field = CoefficientField::with_tight_ellipticity(profile).unwrap();
        let g = RadialGrid::uniform(3, 1.0, 1e-2, 5300);
        let pair = WeightPair::solve(&field, &g).unwrap();
        let ts = geometric_grid(5.0, 50.0, 12);
        for which in EstimateLemma::ALL {
            let fit = verify_estimate_lemma(&pair, &problem, &d, &ts, which).unwrap();
            assert!(fit.pass, "{}: {fit:?}", which.name());
        }
    }

    #[test]
    fn crossover_solves_its_equation() {
        let t = growth_crossover(2.0, 2.0);
        // (1/2)(t+2)^2 = 4 + 4t  ->  t^2 - 4t - 4 = 0
        assert!((t - (2.0 + 8f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn check_names_round_trip() {
        for c in Check::ALL {
            assert_eq!(Check::from_name(c.name()).unwrap(), c);
        }
        assert!(matches!(Check::from_name("nope"), Err(FunctionalError::UnknownInequality(_))));
    }
}
