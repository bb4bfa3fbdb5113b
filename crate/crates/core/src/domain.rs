//! Exterior geometry, radial coefficients and uniform radial grids.
//!
//! The obstacle is the ball (or interval) of radius `r0` about the origin and
//! every field is radial, so the exterior problem lives on `r >= r0`. In one
//! dimension only the right component `x > r0` is represented.

use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("grid spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("simulation horizon must be non-negative, got {0}")]
    HorizonNegative(f64),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),
}

/// Which semilinear source drives the wave equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    /// `u_tt - div(a grad u) = |u|^p`.
    DisplacementPower,
    /// `u_tt - div(a grad u) = |u_t|^p`.
    VelocityPower,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::DisplacementPower => "displacement",
            SourceKind::VelocityPower => "velocity",
        }
    }
}

/// Larger root of `(n-1) p^2 - (n+1) p - 2 = 0`; only defined for `n >= 2`.
pub fn p1_crit<T: Real>(n: usize) -> Option<T> {
    if n < 2 {
        return None;
    }
    let a = T::from_usize_lossy(n - 1);
    let b = -T::from_usize_lossy(n + 1);
    let c = T::lit(-2.0);
    let disc = b * b - T::lit(4.0) * a * c;
    Some((-b + disc.sqrt()) / (T::lit(2.0) * a))
}

/// `2/(n-1) + 1`, infinite for `n = 1`.
pub fn p2_crit<T: Real>(n: usize) -> T {
    if n < 2 {
        T::infinity()
    } else {
        T::lit(2.0) / T::from_usize_lossy(n - 1) + T::one()
    }
}

/// Dimension, exponent and source of one of the two exterior problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec<T> {
    pub n: usize,
    pub p: T,
    pub source_kind: SourceKind,
}

impl<T: Real> ProblemSpec<T> {
    /// Validates the subcritical regime the blowup results cover.
    pub fn new(n: usize, p: T, source_kind: SourceKind) -> Result<Self, DomainError> {
        if n == 0 {
            return Err(DomainError::InvalidProblem("dimension must be >= 1".into()));
        }
        if !(p > T::one()) {
            return Err(DomainError::InvalidProblem(format!("p must exceed 1, got {p}")));
        }
        match source_kind {
            SourceKind::DisplacementPower => {
                if n < 3 {
                    return Err(DomainError::InvalidProblem(format!("displacement source needs n >= 3, got n = {n}")));
                }
                let p1 = p1_crit::<T>(n).expect("n >= 3");
                if !(p < p1) {
                    return Err(DomainError::InvalidProblem(format!(
                        "displacement source needs p < p1({n}) = {p1}, got {p}"
                    )));
                }
            }
            SourceKind::VelocityPower => {
                let slack = T::from_usize_lossy(n - 1) * (p - T::one());
                if slack > T::lit(2.0) * (T::one() + T::epsilon() * T::lit(16.0)) {
                    return Err(DomainError::InvalidProblem(format!(
                        "velocity source needs (n-1)(p-1) <= 2, got {slack}"
                    )));
                }
            }
        }
        Ok(Self { n, p, source_kind })
    }

    pub fn p1_crit(&self) -> Option<T> {
        p1_crit(self.n)
    }

    pub fn p2_crit(&self) -> T {
        p2_crit(self.n)
    }

    /// `(n-1)(p-1)/2`, the time-weight exponent of the Riccati reduction.
    pub fn riccati_weight(&self) -> T {
        T::from_usize_lossy(self.n - 1) * (self.p - T::one()) / T::lit(2.0)
    }

    /// `p' = p/(p-1)`.
    pub fn conjugate(&self) -> T {
        self.p / (self.p - T::one())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sidedness {
    RadialExterior,
    HalfLineRight,
}

/// Obstacle radius `r0` and the support radius `R` of data and coefficient perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec<T> {
    pub r0: T,
    pub support_radius: T,
    pub sidedness: Sidedness,
}

impl<T: Real> DomainSpec<T> {
    pub fn new(n: usize, r0: T, support_radius: T) -> Result<Self, DomainError> {
        if !(r0 > T::zero()) {
            return Err(DomainError::InvalidDomain(format!("obstacle radius must be positive, got {r0}")));
        }
        if !(support_radius > r0) {
            return Err(DomainError::InvalidDomain(format!(
                "support radius {support_radius} must exceed obstacle radius {r0}"
            )));
        }
        let sidedness = if n == 1 { Sidedness::HalfLineRight } else { Sidedness::RadialExterior };
        Ok(Self { r0, support_radius, sidedness })
    }
}

/// Standard mollifier `exp(1/(s^2-1))` rescaled to peak value 1, zero for `|s| >= 1`.
pub fn bump<T: Real>(s: T) -> T {
    let s2 = s * s;
    if s2 >= T::one() {
        T::zero()
    } else {
        (T::one() + T::one() / (s2 - T::one())).exp()
    }
}

/// Named radial profile of the coefficient `a(r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientProfile<T> {
    Identity,
    /// `1 + amplitude * bump((r - center)/width)`.
    Bump {
        amplitude: T,
        center: T,
        width: T,
    },
}

impl<T: Real> CoefficientProfile<T> {
    #[inline]
    pub fn eval(&self, r: T) -> T {
        match *self {
            CoefficientProfile::Identity => T::one(),
            CoefficientProfile::Bump { amplitude, center, width } => T::one() + amplitude * bump((r - center) / width),
        }
    }

    /// Largest radius where the profile may differ from 1.
    pub fn perturbation_extent(&self) -> Option<T> {
        match *self {
            CoefficientProfile::Identity => None,
            CoefficientProfile::Bump { center, width, .. } => Some(center + width.abs()),
        }
    }
}

/// Scalar radial coefficient `a(r) delta_ij` with ellipticity constant `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientField<T> {
    pub profile: CoefficientProfile<T>,
    pub c_ell: T,
}

impl<T: Real> CoefficientField<T> {
    pub fn new(profile: CoefficientProfile<T>, c_ell: T) -> Result<Self, DomainError> {
        if !(c_ell >= T::one()) {
            return Err(DomainError::InvalidCoefficient(format!("ellipticity constant must be >= 1, got {c_ell}")));
        }
        if let CoefficientProfile::Bump { amplitude, width, .. } = profile {
            if !(amplitude > -T::one()) {
                return Err(DomainError::InvalidCoefficient(format!("bump amplitude must exceed -1, got {amplitude}")));
            }
            if !(width > T::zero()) {
                return Err(DomainError::InvalidCoefficient(format!("bump width must be positive, got {width}")));
            }
        }
        Ok(Self { profile, c_ell })
    }

    pub fn identity() -> Self {
        Self { profile: CoefficientProfile::Identity, c_ell: T::one() }
    }

    /// Uses the smallest ellipticity constant the profile admits.
    pub fn with_tight_ellipticity(profile: CoefficientProfile<T>) -> Result<Self, DomainError> {
        let c_ell = match profile {
            CoefficientProfile::Identity => T::one(),
            CoefficientProfile::Bump { amplitude, .. } => {
                let peak = T::one() + amplitude;
                peak.max(T::one() / peak)
            }
        };
        Self::new(profile, c_ell)
    }

    #[inline]
    pub fn a(&self, r: T) -> T {
        self.profile.eval(r)
    }

    /// Maximum wave speed `sqrt(C)`.
    pub fn max_speed(&self) -> T {
        self.c_ell.sqrt()
    }
}

/// Uniform radial grid `r0 = r_0 < ... < r_M` carrying the dimension for volume weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid<T> {
    pub n: usize,
    pub spacing: T,
    pub nodes: Vec<T>,
}

impl<T: Real> RadialGrid<T> {
    /// Grid with `m + 1` nodes starting at `r0`.
    pub fn uniform(n: usize, r0: T, spacing: T, m: usize) -> Self {
        let nodes = (0..=m).map(|i| r0 + T::from_usize_lossy(i) * spacing).collect();
        Self { n, spacing, nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r0(&self) -> T {
        self.nodes[0]
    }

    pub fn r_outer(&self) -> T {
        *self.nodes.last().expect("non-empty grid")
    }

    /// Index of the last node with `r <= radius` (clamped to the grid).
    pub fn last_index_within(&self, radius: T) -> usize {
        let h = self.spacing;
        let k = ((radius - self.r0()) / h + T::lit(1e-9)).floor();
        if k < T::zero() {
            0
        } else {
            k.to_usize().unwrap_or(usize::MAX).min(self.len() - 1)
        }
    }

    /// Same geometry (dimension, spacing, node count and origin).
    pub fn matches(&self, other: &RadialGrid<T>) -> bool {
        self.n == other.n
            && self.len() == other.len()
            && self.spacing == other.spacing
            && self.nodes.first() == other.nodes.first()
    }

    /// Volume weight `omega_{n-1} r^{n-1}` at every node.
    pub fn measure(&self) -> Vec<T> {
        let area = sphere_area::<T>(self.n);
        self.nodes.iter().map(|&r| area * r.powi(self.n as i32 - 1)).collect()
    }

    /// Trapezoid weights including the volume weight.
    pub fn trapezoid_weights(&self) -> Vec<T> {
        let mut w = self.measure();
        let h = self.spacing;
        let last = w.len() - 1;
        for (i, wi) in w.iter_mut().enumerate() {
            let f = if i == 0 || i == last { h / T::lit(2.0) } else { h };
            *wi = *wi * f;
        }
        w
    }
}

/// Surface measure of the unit sphere used as the radial volume factor.
///
/// For `n = 1` only the right component is simulated, so the factor is 1
/// (a single point of `S^0`) rather than 2.
pub fn sphere_area<T: Real>(n: usize) -> T {
    if n == 1 {
        return T::one();
    }
    unit_sphere_area(n)
}

/// `|S^{n-1}| = 2 pi^{n/2} / Gamma(n/2)`.
pub fn unit_sphere_area<T: Real>(n: usize) -> T {
    let two = T::lit(2.0);
    two * T::PI().powf(T::from_usize_lossy(n) / two) / gamma_half(n)
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume<T: Real>(n: usize) -> T {
    unit_sphere_area::<T>(n) / T::from_usize_lossy(n)
}

/// `Gamma(m/2)` for positive integers `m`.
fn gamma_half<T: Real>(m: usize) -> T {
    assert!(m >= 1);
    let (mut g, mut x) = if m % 2 == 0 { (T::one(), T::one()) } else { (T::PI().sqrt(), T::lit(0.5)) };
    let target = T::from_usize_lossy(m) / T::lit(2.0);
    while x < target {
        g = g * x;
        x = x + T::one();
    }
    g
}

/// Builds the uniform grid covering the light cone of a run of length `horizon`.
pub fn build_grid<T: Real>(
    domain: &DomainSpec<T>,
    spacing: T,
    horizon: T,
    c_ell: T,
    n: usize,
) -> Result<RadialGrid<T>, DomainError> {
    if !(spacing > T::zero()) {
        return Err(DomainError::NonPositiveSpacing(spacing.to_f64_lossy()));
    }
    if !(horizon >= T::zero()) {
        return Err(DomainError::HorizonNegative(horizon.to_f64_lossy()));
    }
    let span = domain.support_radius + c_ell.sqrt() * horizon + T::lit(2.0) * spacing;
    let m = (span / spacing - T::lit(1e-9)).ceil();
    let m = m.to_usize().ok_or_else(|| DomainError::InvalidDomain("grid too large".into()))?;
    Ok(RadialGrid::uniform(n, domain.r0, spacing, m.max(2)))
}

/// Coefficient coefficients of the conservative three-point stencil of
/// `r^{1-n} (r^{n-1} a u_r)_r`.
///
/// `flux[i]` holds `c_{i+1/2} = r_{i+1/2}^{n-1} a(r_{i+1/2})` for `i < M`.
#[derive(Debug, Clone)]
pub struct DivergenceStencil<T> {
    pub flux: Vec<T>,
    /// `1 / (h^2 r_i^{n-1})`.
    pub inv_mass: Vec<T>,
}

impl<T: Real> DivergenceStencil<T> {
    pub fn new(field: &CoefficientField<T>, grid: &RadialGrid<T>) -> Self {
        let h = grid.spacing;
        let half = h / T::lit(2.0);
        let pow = grid.n as i32 - 1;
        let flux = grid.nodes[..grid.len() - 1]
            .iter()
            .map(|&r| {
                let rm = r + half;
                rm.powi(pow) * field.a(rm)
            })
            .collect();
        let inv_mass = grid.nodes.iter().map(|&r| T::one() / (h * h * r.powi(pow))).collect();
        Self { flux, inv_mass }
    }

    /// Applies the operator at interior nodes; boundary entries are zero.
    pub fn apply(&self, u: &[T], out: &mut [T]) {
        let m = u.len() - 1;
        out[0] = T::zero();
        out[m] = T::zero();
        for i in 1..m {
            let right = self.flux[i] * (u[i + 1] - u[i]);
            let left = self.flux[i - 1] * (u[i] - u[i - 1]);
            out[i] = (right - left) * self.inv_mass[i];
        }
    }
}

/// Outcome of checking a coefficient against ellipticity and the identity tail.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityReport<T> {
    pub min: T,
    pub max: T,
    /// `max |a - 1|` over nodes with `r >= R`.
    pub tail_deviation: T,
    /// `(index, radius, value)` of every node breaking an invariant.
    pub violations: Vec<(usize, T, T)>,
    pub pass: bool,
}

pub fn validate_coefficient<T: Real>(
    field: &CoefficientField<T>,
    domain: &DomainSpec<T>,
    grid: &RadialGrid<T>,
) -> EllipticityReport<T> {
    let tol = T::lit(1e-12);
    let lo = T::one() / field.c_ell - tol;
    let hi = field.c_ell + tol;
    let mut min = T::infinity();
    let mut max = T::neg_infinity();
    let mut tail_deviation = T::zero();
    let mut violations = Vec::new();
    for (i, &r) in grid.nodes.iter().enumerate() {
        let a = field.a(r);
        min = min.min(a);
        max = max.max(a);
        let mut bad = !(a >= lo && a <= hi);
        if r >= domain.support_radius {
            let dev = (a - T::one()).abs();
            tail_deviation = tail_deviation.max(dev);
            bad |= dev != T::zero();
        }
        if bad {
            violations.push((i, r, a));
        }
    }
    let pass = violations.is_empty() && !grid.is_empty();
    EllipticityReport { min, max, tail_deviation, violations, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom() -> DomainSpec<f64> {
        DomainSpec::new(3, 1.0, 2.0).unwrap()
    }

    #[test]
    fn critical_exponents_in_three_dimensions() {
        let p1 = p1_crit::<f64>(3).unwrap();
        assert!((p1 - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(p2_crit::<f64>(3), 2.0);
        assert!(p2_crit::<f64>(1).is_infinite());
        assert!(p1_crit::<f64>(1).is_none());
        for n in 2..9 {
            let p = p1_crit::<f64>(n).unwrap();
            let q = (n as f64 - 1.0) * p * p - (n as f64 + 1.0) * p - 2.0;
            assert!(q.abs() < 1e-12, "n = {n}: residual {q}");
        }
    }

    #[test]
    fn problem_regimes_are_enforced() {
        assert!(ProblemSpec::new(3, 2.0, SourceKind::DisplacementPower).is_ok());
        assert!(ProblemSpec::new(3, 2.5, SourceKind::DisplacementPower).is_err());
        assert!(ProblemSpec::new(2, 1.5, SourceKind::DisplacementPower).is_err());
        assert!(ProblemSpec::new(1, 5.0, SourceKind::VelocityPower).is_ok());
        assert!(ProblemSpec::new(3, 2.0, SourceKind::VelocityPower).is_ok());
        assert!(ProblemSpec::new(3, 2.1, SourceKind::VelocityPower).is_err());
        assert!(ProblemSpec::new(1, 1.0, SourceKind::VelocityPower).is_err());
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area::<f64>(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_sphere_area::<f64>(2) - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_sphere_area::<f64>(4) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
        assert!((unit_ball_volume::<f64>(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(sphere_area::<f64>(1), 1.0);
    }

    #[test]
    fn grid_without_horizon() {
        let g = build_grid(&dom(), 0.1, 0.0, 1.0, 3).unwrap();
        assert_eq!(g.len(), 23);
        assert!((g.r_outer() - 3.2).abs() < 1e-12);
    }

    #[test]
    fn grid_covers_light_cone() {
        let g = build_grid(&dom(), 0.1, 10.0, 1.0, 3).unwrap();
        assert!(g.r_outer() >= 13.2 - 1e-12);
        let g = build_grid(&dom(), 0.1, 10.0, 4.0, 3).unwrap();
        assert!(g.r_outer() >= 23.2 - 1e-12);
        for w in g.nodes.windows(2) {
            assert!(((w[1] - w[0]) - 0.1).abs() < 1e-12 * 23.2);
        }
    }

    #[test]
    fn grid_argument_errors() {
        assert_eq!(build_grid(&dom(), 0.0, 1.0, 1.0, 3), Err(DomainError::NonPositiveSpacing(0.0)));
        assert_eq!(build_grid(&dom(), 0.1, -1.0, 1.0, 3), Err(DomainError::HorizonNegative(-1.0)));
    }

    #[test]
    fn identity_coefficient_passes() {
        let g = build_grid(&dom(), 0.1, 0.0, 1.0, 3).unwrap();
        let rep = validate_coefficient(&CoefficientField::identity(), &dom(), &g);
        assert_eq!((rep.min, rep.max, rep.tail_deviation), (1.0, 1.0, 0.0));
        assert!(rep.pass);
    }

    #[test]
    fn bump_coefficient_inside_support_passes() {
        let profile = CoefficientProfile::Bump { amplitude: 0.5, center: 1.5, width: 0.4 };
        let field = CoefficientField::with_tight_ellipticity(profile).unwrap();
        let g = build_grid(&dom(), 0.1, 0.0, field.c_ell, 3).unwrap();
        let rep = validate_coefficient(&field, &dom(), &g);
        assert!((rep.min - 1.0).abs() < 1e-15);
        assert!((rep.max - 1.5).abs() < 1e-12);
        assert_eq!(rep.tail_deviation, 0.0);
        assert!(rep.pass);
        // identity bit-exactly beyond R
        for &r in g.nodes.iter().filter(|&&r| r >= 2.0) {
            assert_eq!(field.a(r), 1.0);
        }
    }

    #[test]
    fn bump_coefficient_leaking_past_support_fails() {
        let profile = CoefficientProfile::Bump { amplitude: 0.5, center: 1.5, width: 0.4 };
        let field = CoefficientField::with_tight_ellipticity(profile).unwrap();
        let d = DomainSpec::<f64>::new(3, 1.0, 1.6).unwrap();
        let g = build_grid(&d, 0.1, 0.0, field.c_ell, 3).unwrap();
        let rep = validate_coefficient(&field, &d, &g);
        assert!(!rep.pass);
        // a(1.7) = 1 + 0.5 bump(0.5) = 1 + 0.5 exp(1 - 1/0.75)
        let expected = 1.0 + 0.5 * (1.0 - 1.0 / 0.75_f64).exp();
        assert!(rep.violations.iter().any(|&(_, r, a)| (r - 1.7).abs() < 1e-9 && (a - expected).abs() < 1e-12));
    }

    #[test]
    fn stencil_annihilates_constants() {
        let g = RadialGrid::<f64>::uniform(3, 1.0, 0.01, 200);
        let st = DivergenceStencil::new(&CoefficientField::identity(), &g);
        let u = vec![1.0; g.len()];
        let mut out = vec![0.0; g.len()];
        st.apply(&u, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-9));
    }
}
