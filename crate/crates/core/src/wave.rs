//! Explicit leapfrog integration of `u_tt = r^{1-n}(r^{n-1} a u_r)_r + N` on the
//! exterior radial grid, with `N = |u|^p` or `|u_t|^p`.
//!
//! The step is kick-drift-kick: a half kick of `v`, a full drift of `u`, and a
//! closing half kick. For the velocity source the closing kick depends on the
//! new velocity itself and is resolved with one explicit predictor, which keeps
//! the scheme second order.

use thiserror::Error;

use crate::domain::{
    build_grid, CoefficientField, DivergenceStencil, DomainError, DomainSpec, ProblemSpec, RadialGrid, SourceKind,
};
use crate::real::{abs_pow, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveError {
    #[error("initial data negative at r = {r}: {value}")]
    SignViolation { r: f64, value: f64 },
    #[error("initial data nonzero beyond the support radius at r = {r}")]
    SupportViolation { r: f64 },
    #[error("initial {0} vanishes identically but the problem requires it")]
    TrivialData(&'static str),
    #[error("time step {dt} exceeds the CFL limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("non-finite value after step at t = {t}")]
    Overflow { t: f64 },
    #[error("numerical support reached r = {r} at t = {t}, light cone ends at {limit}")]
    SupportLeak { t: f64, r: f64, limit: f64 },
    #[error("sample interval and horizon must be positive")]
    InvalidSchedule,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Named radial profile for initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataProfile<T> {
    Zero,
    /// `amplitude * bump((r - center)/width)`.
    Bump {
        amplitude: T,
        center: T,
        width: T,
    },
}

impl<T: Real> DataProfile<T> {
    #[inline]
    pub fn eval(&self, r: T) -> T {
        match *self {
            DataProfile::Zero => T::zero(),
            DataProfile::Bump { amplitude, center, width } => amplitude * crate::domain::bump((r - center) / width),
        }
    }

    pub fn sample(&self, grid: &RadialGrid<T>) -> Vec<T> {
        grid.nodes.iter().map(|&r| self.eval(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialData<T> {
    pub f: DataProfile<T>,
    pub g: DataProfile<T>,
    pub epsilon: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveState<T> {
    pub t: T,
    pub u: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> WaveState<T> {
    pub fn zeros(len: usize) -> Self {
        Self { t: T::zero(), u: vec![T::zero(); len], v: vec![T::zero(); len] }
    }

    pub fn sup_u(&self) -> T {
        self.u.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn sup_v(&self) -> T {
        self.v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

pub fn init_state<T: Real>(
    data: &InitialData<T>,
    problem: &ProblemSpec<T>,
    domain: &DomainSpec<T>,
    grid: &RadialGrid<T>,
) -> Result<WaveState<T>, WaveError> {
    let f = data.f.sample(grid);
    let g = data.g.sample(grid);
    for (i, &r) in grid.nodes.iter().enumerate() {
        for value in [f[i], g[i]] {
            if value < T::zero() {
                return Err(WaveError::SignViolation { r: r.to_f64_lossy(), value: value.to_f64_lossy() });
            }
            if value != T::zero() && r > domain.support_radius {
                return Err(WaveError::SupportViolation { r: r.to_f64_lossy() });
            }
        }
    }
    let required = match problem.source_kind {
        SourceKind::DisplacementPower => ("f", &f),
        SourceKind::VelocityPower => ("g", &g),
    };
    if required.1.iter().all(|&x| x == T::zero()) {
        return Err(WaveError::TrivialData(required.0));
    }
    let mut u: Vec<T> = f.iter().map(|&x| data.epsilon * x).collect();
    let mut v: Vec<T> = g.iter().map(|&x| data.epsilon * x).collect();
    let last = u.len() - 1;
    u[0] = T::zero();
    v[0] = T::zero();
    u[last] = T::zero();
    v[last] = T::zero();
    Ok(WaveState { t: T::zero(), u, v })
}

/// Whether the power source is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceMode {
    #[default]
    Nonlinear,
    /// Linear wave equation; used for the source-off identities.
    Off,
}

/// Sup norms after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo<T> {
    pub sup_u: T,
    pub sup_v: T,
    /// Nodes past this index were not touched and are still zero.
    pub active: usize,
}

/// Width `(c t h^2 / 8)^{1/3}` of the Airy front the three-point scheme forms
/// around the light cone; the discrete solution ahead of the cone decays like
/// `exp(-(2/3) (d/w)^{3/2})` in the distance `d` measured in this unit.
pub fn dispersion_width<T: Real>(spacing: T, speed: T, t: T) -> T {
    (speed * t * spacing * spacing / T::lit(8.0)).cbrt()
}

/// Front widths (plus a fixed number of nodes) the update window extends past the cone.
const WINDOW_WIDTHS: f64 = 16.0;
const WINDOW_NODES: f64 = 32.0;

/// Front widths past `cone + 2h` beyond which amplitude counts as leaked.
pub const LEAK_WIDTHS: f64 = 8.0;

/// Reusable stepping workspace for one grid and coefficient.
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    stencil: DivergenceStencil<T>,
    kind: SourceKind,
    p: T,
    mode: SourceMode,
    dt_limit: T,
    /// `(support radius, max speed, r0, h)` when the update is restricted to the light cone.
    window: Option<(T, T, T, T)>,
    len: usize,
    lu: Vec<T>,
}

impl<T: Real> Stepper<T> {
    pub fn new(
        field: &CoefficientField<T>,
        problem: &ProblemSpec<T>,
        grid: &RadialGrid<T>,
        cfl_factor: T,
        mode: SourceMode,
    ) -> Self {
        Self {
            stencil: DivergenceStencil::new(field, grid),
            kind: problem.source_kind,
            p: problem.p,
            mode,
            dt_limit: cfl_factor * grid.spacing / field.max_speed(),
            window: None,
            len: grid.len(),
            lu: vec![T::zero(); grid.len()],
        }
    }

    /// Skips nodes well outside `r <= R + sqrt(C) t`, where the solution is exactly zero.
    pub fn with_light_cone(
        mut self,
        domain: &DomainSpec<T>,
        field: &CoefficientField<T>,
        grid: &RadialGrid<T>,
    ) -> Self {
        self.window = Some((domain.support_radius, field.max_speed(), grid.r0(), grid.spacing));
        self
    }

    pub fn dt_limit(&self) -> T {
        self.dt_limit
    }

    fn upper(&self, t: T) -> usize {
        let last = self.len - 2;
        match self.window {
            None => last,
            Some((radius, speed, r0, h)) => {
                let reach = radius
                    + speed * t
                    + T::lit(WINDOW_WIDTHS) * dispersion_width(h, speed, t)
                    + T::lit(WINDOW_NODES) * h;
                ((reach - r0) / h).ceil().to_usize().unwrap_or(usize::MAX).min(last)
            }
        }
    }

    #[inline]
    fn power(&self, w: T) -> T {
        abs_pow(w, self.p)
    }

    fn apply(&mut self, u: &[T], hi: usize) {
        let st = &self.stencil;
        for i in 1..=hi {
            let right = st.flux[i] * (u[i + 1] - u[i]);
            let left = st.flux[i - 1] * (u[i] - u[i - 1]);
            self.lu[i] = (right - left) * st.inv_mass[i];
        }
    }

    /// Advances `state` by `dt` in place.
    pub fn step(&mut self, state: &mut WaveState<T>, dt: T) -> Result<StepInfo<T>, WaveError> {
        if dt > self.dt_limit * (T::one() + T::lit(1e-12)) {
            return Err(WaveError::CflViolation { dt: dt.to_f64_lossy(), limit: self.dt_limit.to_f64_lossy() });
        }
        let hi = self.upper(state.t + dt);
        let half = dt / T::lit(2.0);
        let on = self.mode == SourceMode::Nonlinear;
        let kind = self.kind;

        self.apply(&state.u, hi);
        for i in 1..=hi {
            let src = if on {
                match kind {
                    SourceKind::DisplacementPower => self.power(state.u[i]),
                    SourceKind::VelocityPower => self.power(state.v[i]),
                }
            } else {
                T::zero()
            };
            state.v[i] = state.v[i] + half * (self.lu[i] + src);
            state.u[i] = state.u[i] + dt * state.v[i];
        }
        self.apply(&state.u, hi);
        let mut sup_u = T::zero();
        let mut sup_v = T::zero();
        let mut finite = true;
        for i in 1..=hi {
            let kick = if on {
                match kind {
                    SourceKind::DisplacementPower => self.lu[i] + self.power(state.u[i]),
                    SourceKind::VelocityPower => {
                        let pred = state.v[i] + half * (self.lu[i] + self.power(state.v[i]));
                        self.lu[i] + self.power(pred)
                    }
                }
            } else {
                self.lu[i]
            };
            state.v[i] = state.v[i] + half * kick;
            let (au, av) = (state.u[i].abs(), state.v[i].abs());
            finite &= au.is_finite() && av.is_finite();
            sup_u = sup_u.max(au);
            sup_v = sup_v.max(av);
        }
        state.t = state.t + dt;
        if !finite {
            return Err(WaveError::Overflow { t: state.t.to_f64_lossy() });
        }
        Ok(StepInfo { sup_u, sup_v, active: hi + 1 })
    }
}

/// One step on a freshly built workspace.
pub fn step<T: Real>(
    state: &WaveState<T>,
    field: &CoefficientField<T>,
    problem: &ProblemSpec<T>,
    grid: &RadialGrid<T>,
    dt: T,
    cfl_factor: T,
) -> Result<WaveState<T>, WaveError> {
    let mut next = state.clone();
    Stepper::new(field, problem, grid, cfl_factor, SourceMode::Nonlinear).step(&mut next, dt)?;
    Ok(next)
}

/// `1/2 int (v^2 + a u_r^2)` in the quadrature the stencil is conservative for.
pub fn discrete_energy<T: Real>(state: &WaveState<T>, field: &CoefficientField<T>, grid: &RadialGrid<T>) -> T {
    let st = DivergenceStencil::new(field, grid);
    let area = crate::domain::sphere_area::<T>(grid.n);
    let h = grid.spacing;
    let half = T::lit(0.5);
    let kinetic: T = (0..grid.len()).map(|i| state.v[i] * state.v[i] / (st.inv_mass[i] * h)).sum();
    let potential: T = (0..grid.len() - 1)
        .map(|i| {
            let d = state.u[i + 1] - state.u[i];
            st.flux[i] * d * d / h
        })
        .sum();
    half * area * (kinetic + potential)
}

/// Everything a run needs besides the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub problem: ProblemSpec<T>,
    pub domain: DomainSpec<T>,
    pub field: CoefficientField<T>,
    pub data: InitialData<T>,
    pub spacing: T,
    pub cfl_factor: T,
    pub u_max: T,
    pub t_max: T,
    pub sample_interval: T,
    pub lifespan_tol: T,
    pub mode: SourceMode,
}

impl<T: Real> SimConfig<T> {
    pub fn grid(&self) -> Result<RadialGrid<T>, WaveError> {
        Ok(build_grid(&self.domain, self.spacing, self.t_max, self.field.c_ell, self.problem.n)?)
    }

    /// Largest step dividing the sample interval that satisfies the CFL bound.
    pub fn schedule(&self) -> Result<(T, usize), WaveError> {
        if !(self.sample_interval > T::zero() && self.t_max > T::zero()) {
            return Err(WaveError::InvalidSchedule);
        }
        let limit = self.cfl_factor * self.spacing / self.field.max_speed();
        let per = (self.sample_interval / limit - T::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
        Ok((self.sample_interval / T::from_usize_lossy(per), per))
    }
}

/// Receives the states a run produces. `active` bounds the indices that may be nonzero.
pub trait Observer<T: Real> {
    /// Every accepted state, including the initial one.
    fn on_step(&mut self, _state: &WaveState<T>, _active: usize) {}
    /// States at multiples of the sample interval, including `t = 0`.
    fn on_sample(&mut self, _state: &WaveState<T>, _active: usize) {}
}

pub struct NullObserver;

impl<T: Real> Observer<T> for NullObserver {}

/// Result of a single integration at a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome<T> {
    pub dt: T,
    pub steps: usize,
    pub t_end: T,
    /// Interpolated time where `max(sup|u|, sup|v|)` reached `u_max`.
    pub crossing: Option<T>,
    /// Same for `u_max / 100`.
    pub crossing_low: Option<T>,
    pub overflowed: bool,
    /// Largest radius with amplitude above the support floor seen at a sample.
    pub max_support: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifespanResult<T> {
    /// Crossing time of the refined run.
    pub t_num: T,
    pub t_coarse: T,
    pub threshold: T,
    pub dt_used: T,
    pub converged: bool,
    /// Crossing time of `threshold / 100` on the refined run.
    pub t_low_threshold: T,
    /// The two thresholds disagree by more than 5%.
    pub threshold_sensitive: bool,
}

/// Values below this fraction of the sup norm count as zero in the support check.
pub const SUPPORT_FLOOR: f64 = 1e-8;

fn interpolate_crossing<T: Real>(t0: T, dt: T, a: T, b: T, threshold: T) -> T {
    if !(a > T::zero()) || !b.is_finite() || !(b > a) {
        return t0 + dt;
    }
    let frac = (threshold / a).ln() / (b / a).ln();
    t0 + dt * frac.max(T::zero()).min(T::one())
}

/// Integrates with step `dt`, sampling every `per_sample` steps.
pub fn integrate<T: Real, O: Observer<T>>(
    config: &SimConfig<T>,
    grid: &RadialGrid<T>,
    dt: T,
    per_sample: usize,
    observer: &mut O,
) -> Result<RunOutcome<T>, WaveError> {
    let mut state = init_state(&config.data, &config.problem, &config.domain, grid)?;
    let mut stepper = Stepper::new(&config.field, &config.problem, grid, config.cfl_factor, config.mode)
        .with_light_cone(&config.domain, &config.field, grid);
    let speed = config.field.max_speed();
    let h = grid.spacing;
    let low = config.u_max / T::lit(100.0);
    let mut sup = state.sup_u().max(state.sup_v());
    let mut crossing = None;
    let mut crossing_low = None;
    let mut overflowed = false;
    let mut max_support = T::zero();
    let mut active = grid.len() - 1;
    observer.on_step(&state, active);
    observer.on_sample(&state, active);
    let total = (config.t_max / dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(0);
    let mut k = 0;
    while k < total {
        let t0 = T::from_usize_lossy(k) * dt;
        state.t = t0;
        k += 1;
        let next = match stepper.step(&mut state, dt) {
            Ok(info) => {
                active = info.active;
                info.sup_u.max(info.sup_v)
            }
            Err(WaveError::Overflow { .. }) => {
                overflowed = true;
                T::infinity()
            }
            Err(e) => return Err(e),
        };
        state.t = T::from_usize_lossy(k) * dt;
        if crossing_low.is_none() && next >= low {
            crossing_low = Some(interpolate_crossing(t0, dt, sup, next, low));
        }
        if next >= config.u_max {
            crossing = Some(interpolate_crossing(t0, dt, sup, next, config.u_max));
            break;
        }
        sup = next;
        observer.on_step(&state, active);
        if k % per_sample == 0 {
            let floor = T::lit(SUPPORT_FLOOR) * sup.max(T::one());
            let edge = (0..=active)
                .rev()
                .find(|&i| state.u[i].abs() > floor || state.v[i].abs() > floor)
                .map(|i| grid.nodes[i])
                .unwrap_or(grid.r0());
            let limit = config.domain.support_radius
                + speed * state.t
                + T::lit(2.0) * h
                + T::lit(LEAK_WIDTHS) * dispersion_width(h, speed, state.t);
            if edge > limit {
                return Err(WaveError::SupportLeak {
                    t: state.t.to_f64_lossy(),
                    r: edge.to_f64_lossy(),
                    limit: limit.to_f64_lossy(),
                });
            }
            max_support = max_support.max(edge);
            observer.on_sample(&state, active);
        }
    }
    Ok(RunOutcome { dt, steps: k, t_end: state.t, crossing, crossing_low, overflowed, max_support })
}

/// A run together with its refinement at half the step.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport<T> {
    pub grid: RadialGrid<T>,
    pub coarse: RunOutcome<T>,
    pub refined: Option<RunOutcome<T>>,
    pub lifespan: Option<LifespanResult<T>>,
}

/// Integrates `config`, reporting every state to `observer`; if the threshold is
/// reached the run is repeated at half the step to confirm the lifespan.
pub fn run<T: Real, O: Observer<T>>(config: &SimConfig<T>, observer: &mut O) -> Result<RunReport<T>, WaveError> {
    let grid = config.grid()?;
    let (dt, per) = config.schedule()?;
    let coarse = integrate(config, &grid, dt, per, observer)?;
    let Some(t_coarse) = coarse.crossing else {
        return Ok(RunReport { grid, coarse, refined: None, lifespan: None });
    };
    let refined = integrate(config, &grid, dt / T::lit(2.0), 2 * per, &mut NullObserver)?;
    let lifespan = refined.crossing.map(|t_num| {
        let t_low = refined.crossing_low.unwrap_or(t_num);
        LifespanResult {
            t_num,
            t_coarse,
            threshold: config.u_max,
            dt_used: refined.dt,
            converged: (t_num - t_coarse).abs() <= config.lifespan_tol * t_num,
            t_low_threshold: t_low,
            threshold_sensitive: (t_num - t_low).abs() > T::lit(0.05) * t_num,
        }
    });
    let lifespan = lifespan.or(Some(LifespanResult {
        t_num: t_coarse,
        t_coarse,
        threshold: config.u_max,
        dt_used: dt,
        converged: false,
        t_low_threshold: coarse.crossing_low.unwrap_or(t_coarse),
        threshold_sensitive: false,
    }));
    Ok(RunReport { grid, coarse, refined: Some(refined), lifespan })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CoefficientProfile;

    fn bump(amplitude: f64, center: f64, width: f64) -> DataProfile<f64> {
        DataProfile::Bump { amplitude, center, width }
    }

    fn velocity_1d() -> SimConfig<f64> {
        SimConfig {
            problem: ProblemSpec::new(1, 2.0, SourceKind::VelocityPower).unwrap(),
            domain: DomainSpec::new(1, 1.0, 2.0).unwrap(),
            field: CoefficientField::identity(),
            data: InitialData { f: DataProfile::Zero, g: bump(1.0, 1.5, 0.5), epsilon: 0.5 },
            spacing: 5e-3,
            cfl_factor: 0.5,
            u_max: 1e8,
            t_max: 40.0,
            sample_interval: 0.05,
            lifespan_tol: 0.02,
            mode: SourceMode::Nonlinear,
        }
    }

    #[test]
    fn init_state_checks_data() {
        let cfg = velocity_1d();
        let grid = cfg.grid().unwrap();
        let s = init_state(&cfg.data, &cfg.problem, &cfg.domain, &grid).unwrap();
        assert!((s.sup_v() - 0.5).abs() < 1e-3);
        assert_eq!(s.sup_u(), 0.0);

        let disp = ProblemSpec::new(3, 2.0, SourceKind::DisplacementPower).unwrap();
        let d3 = DomainSpec::new(3, 1.0, 2.0).unwrap();
        let g3 = RadialGrid::uniform(3, 1.0, 0.01, 300);
        assert_eq!(init_state(&cfg.data, &disp, &d3, &g3), Err(WaveError::TrivialData("f")));

        let f_only = InitialData { f: bump(1.0, 1.5, 0.5), g: DataProfile::Zero, epsilon: 0.1 };
        let s = init_state(&f_only, &disp, &d3, &g3).unwrap();
        assert!((s.sup_u() - 0.1).abs() < 1e-12);

        let negative = InitialData { f: bump(-0.01, 1.5, 0.2), g: DataProfile::Zero, epsilon: 0.1 };
        assert!(matches!(init_state(&negative, &disp, &d3, &g3), Err(WaveError::SignViolation { .. })));

        let wide = InitialData { f: bump(1.0, 2.0, 0.5), g: DataProfile::Zero, epsilon: 0.1 };
        assert!(matches!(init_state(&wide, &disp, &d3, &g3), Err(WaveError::SupportViolation { .. })));
    }

    #[test]
    fn zero_state_is_fixed() {
        let p = ProblemSpec::new(3, 2.0, SourceKind::DisplacementPower).unwrap();
        let g = RadialGrid::uniform(3, 1.0, 0.01, 100);
        let s = WaveState::<f64>::zeros(g.len());
        let next = step(&s, &CoefficientField::identity(), &p, &g, 0.004, 0.5).unwrap();
        assert!(next.u.iter().chain(&next.v).all(|&x| x == 0.0));
        assert!((next.t - 0.004).abs() < 1e-15);
    }

    #[test]
    fn cfl_is_enforced() {
        let p = ProblemSpec::new(3, 2.0, SourceKind::DisplacementPower).unwrap();
        let g = RadialGrid::uniform(3, 1.0, 0.01, 100);
        let field = CoefficientField::new(CoefficientProfile::Identity, 4.0).unwrap();
        let s = WaveState::<f64>::zeros(g.len());
        // limit is 0.5 * 0.01 / 2
        assert!(matches!(step(&s, &field, &p, &g, 0.003, 0.5), Err(WaveError::CflViolation { .. })));
        assert!(step(&s, &field, &p, &g, 0.0025, 0.5).is_ok());
    }

    #[test]
    fn velocity_source_single_node() {
        let p = ProblemSpec::new(1, 2.0, SourceKind::VelocityPower).unwrap();
        let g = RadialGrid::uniform(1, 1.0, 0.01, 100);
        let mut s = WaveState::<f64>::zeros(g.len());
        let (j, v0, dt) = (50, 2.0, 1e-4);
        s.v[j] = v0;
        let next = step(&s, &CoefficientField::identity(), &p, &g, dt, 0.5).unwrap();
        assert!((next.u[j] - dt * v0).abs() <= 10.0 * dt * dt * v0 * v0);
        // the discrete Laplacian of u is O(dt v0 / h^2) and enters v at order dt^2
        let lap = -2.0 * dt * v0 / (0.01 * 0.01);
        let expected = v0 + dt * v0 * v0 + 0.5 * dt * lap;
        assert!((next.v[j] - expected).abs() < 1e-3 * dt * v0 * v0, "{} vs {}", next.v[j], expected);
    }

    #[test]
    fn linear_pulse_translates_and_conserves_energy() {
        let p = ProblemSpec::new(1, 2.0, SourceKind::VelocityPower).unwrap();
        let h = 1e-3;
        let g = RadialGrid::uniform(1, 1.0, h, 4000);
        let field = CoefficientField::identity();
        let pulse = |x: f64| crate::domain::bump((x - 2.5) / 0.5);
        let dpulse = |x: f64| (pulse(x + 1e-6) - pulse(x - 1e-6)) / 2e-6;
        // right-moving wave: u = F(x - t), u_t = -F'(x - t)
        let mut s = WaveState {
            t: 0.0,
            u: g.nodes.iter().map(|&x| pulse(x)).collect(),
            v: g.nodes.iter().map(|&x| -dpulse(x)).collect(),
        };
        let e0 = discrete_energy(&s, &field, &g);
        let mut stepper = Stepper::new(&field, &p, &g, 0.5, SourceMode::Off);
        let dt = 5e-4;
        for _ in 0..2000 {
            stepper.step(&mut s, dt).unwrap();
        }
        let e1 = discrete_energy(&s, &field, &g);
        assert!(((e1 - e0) / e0).abs() <= 1e-6, "energy drift {}", (e1 - e0) / e0);
        let err = g.nodes.iter().zip(&s.u).map(|(&x, &u)| (u - pulse(x - 1.0)).abs()).fold(0.0, f64::max);
        // second-order dispersion of a width-0.5 pulse over unit time
        assert!(err < 5e-4, "translation error {err}");
    }

    #[test]
    fn linear_run_does_not_blow_up() {
        let mut cfg = velocity_1d();
        cfg.mode = SourceMode::Off;
        cfg.t_max = 5.0;
        let report = run(&cfg, &mut NullObserver).unwrap();
        assert!(report.lifespan.is_none());
        let w = dispersion_width(cfg.spacing, 1.0, 5.0);
        assert!(report.coarse.max_support <= 2.0 + 5.0 + 2.0 * cfg.spacing + LEAK_WIDTHS * w);
    }

    #[test]
    fn one_dimensional_velocity_blowup_converges() {
        let cfg = velocity_1d();
        let report = run(&cfg, &mut NullObserver).unwrap();
        let life = report.lifespan.expect("blowup");
        assert!(life.converged, "{life:?}");
        assert!(life.t_num.is_finite() && life.t_num > 0.0);

        let mut half = cfg.clone();
        half.data.epsilon = 0.25;
        let later = run(&half, &mut NullObserver).unwrap().lifespan.expect("blowup");
        assert!(later.t_num > life.t_num);
    }
}
