//! Radial solvers for the harmonic weight `phi0` and the exponential weight `phi1`.
//!
//! Both problems are discretized with the same conservative three-point stencil
//! the wave solver uses, so the discrete weights are exact null vectors (or
//! eigenvectors) of the discrete operator. The resulting tridiagonal systems
//! are M-matrices and are solved by direct elimination.
//!
//! `phi1` grows like `e^r`; it is stored and solved in the scaled form
//! `phi1(r) e^{-r}`, which leaves the pivots of the elimination unchanged.

use thiserror::Error;

use crate::domain::{unit_sphere_area, CoefficientField, DivergenceStencil, DomainSpec, RadialGrid};
use crate::real::{linear_fit, Real};
use crate::tridiag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipticError {
    #[error("harmonic weight requires n >= 3, got n = {0}")]
    DimensionTooLow(usize),
    #[error("elliptic system is singular (non-positive pivot)")]
    SingularSystem,
    #[error("no grid nodes in (r0, r0 + R]")]
    EmptyNearRegion,
    #[error("source vector has {got} entries, grid has {expected}")]
    SourceLength { expected: usize, got: usize },
}

/// Discrete `phi0`: zero on the obstacle, tending to 1 at infinity.
#[derive(Debug, Clone)]
pub struct HarmonicWeight<T> {
    pub grid: RadialGrid<T>,
    pub values: Vec<T>,
    /// Largest row residual relative to the row scale.
    pub residual: T,
}

/// Discrete `phi1`, stored as `phi1(r) e^{-r}`.
#[derive(Debug, Clone)]
pub struct EigenWeight<T> {
    pub grid: RadialGrid<T>,
    pub scaled: Vec<T>,
    pub residual: T,
}

impl<T: Real> EigenWeight<T> {
    /// `phi1(r_i)`; overflows to infinity for very large radii.
    pub fn value(&self, i: usize) -> T {
        self.scaled[i] * self.grid.nodes[i].exp()
    }

    /// `psi1(r_i, t) = phi1(r_i) e^{-t}` without forming `phi1` itself.
    #[inline]
    pub fn psi(&self, i: usize, t: T) -> T {
        self.scaled[i] * (self.grid.nodes[i] - t).exp()
    }

    /// Far-field profile `h(r)` scaled by `e^{-r}`.
    pub fn farfield_scaled(&self, r: T) -> T {
        farfield_scaled(self.grid.n, r)
    }
}

/// Fitted stand-in for an existential constant of a bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundFit<T> {
    pub constant: T,
    pub exponent_theory: T,
    pub slope_fit: T,
    pub pass: bool,
}

/// Tolerance on the log-log trend of a ratio that should not grow.
pub const SLOPE_TOLERANCE: f64 = 0.1;

/// Margin by which the fitted Hopf constant must stay positive.
pub const HOPF_MARGIN: f64 = 1e-8;

pub fn solve_phi0<T: Real>(
    field: &CoefficientField<T>,
    grid: &RadialGrid<T>,
) -> Result<HarmonicWeight<T>, EllipticError> {
    let n = grid.n;
    if n < 3 {
        return Err(EllipticError::DimensionTooLow(n));
    }
    let stencil = DivergenceStencil::new(field, grid);
    let c = &stencil.flux;
    let m = grid.len() - 1;
    let h = grid.spacing;
    let mut sub = vec![T::zero(); m + 1];
    let mut diag = vec![T::zero(); m + 1];
    let mut sup = vec![T::zero(); m + 1];
    let mut rhs = vec![T::zero(); m + 1];
    diag[0] = T::one();
    for i in 1..m {
        sub[i] = -c[i - 1];
        sup[i] = -c[i];
        diag[i] = c[i - 1] + c[i];
    }
    // Beyond R the exact solution is 1 - J r^{2-n}/(n-2) with J the (constant) flux.
    let rm = grid.r_outer();
    let kappa = c[m - 1] * rm.powi(2 - n as i32) / (T::from_usize_lossy(n - 2) * h);
    sub[m] = -kappa;
    diag[m] = T::one() + kappa;
    rhs[m] = T::one();
    let values = tridiag::solve(&sub, &diag, &sup, &rhs).ok_or(EllipticError::SingularSystem)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EllipticError::SingularSystem);
    }
    let residual = row_residual(&sub, &diag, &sup, &rhs, &values);
    Ok(HarmonicWeight { grid: grid.clone(), values, residual })
}

pub fn solve_phi1<T: Real>(field: &CoefficientField<T>, grid: &RadialGrid<T>) -> Result<EigenWeight<T>, EllipticError> {
    solve_phi1_inner(field, grid, None)
}

/// Solves `-(r^{n-1} a phi')' + r^{n-1} phi = r^{n-1} source` with the `phi1`
/// boundary data. A nonnegative source can only raise the solution.
pub fn solve_phi1_with_source<T: Real>(
    field: &CoefficientField<T>,
    grid: &RadialGrid<T>,
    source: &[T],
) -> Result<EigenWeight<T>, EllipticError> {
    if source.len() != grid.len() {
        return Err(EllipticError::SourceLength { expected: grid.len(), got: source.len() });
    }
    solve_phi1_inner(field, grid, Some(source))
}

fn solve_phi1_inner<T: Real>(
    field: &CoefficientField<T>,
    grid: &RadialGrid<T>,
    source: Option<&[T]>,
) -> Result<EigenWeight<T>, EllipticError> {
    let n = grid.n;
    let stencil = DivergenceStencil::new(field, grid);
    let c = &stencil.flux;
    let m = grid.len() - 1;
    let h = grid.spacing;
    let (eh, emh) = (h.exp(), (-h).exp());
    let mut sub = vec![T::zero(); m + 1];
    let mut diag = vec![T::zero(); m + 1];
    let mut sup = vec![T::zero(); m + 1];
    let mut rhs = vec![T::zero(); m + 1];
    diag[0] = T::one();
    for i in 1..m {
        let r = grid.nodes[i];
        let mass = h * h * r.powi(n as i32 - 1);
        sub[i] = -c[i - 1] * emh;
        sup[i] = -c[i] * eh;
        diag[i] = c[i - 1] + c[i] + mass;
        if let Some(s) = source {
            rhs[i] = mass * s[i] * (-r).exp();
        }
    }
    diag[m] = T::one();
    rhs[m] = farfield_scaled(n, grid.r_outer());
    let scaled = tridiag::solve(&sub, &diag, &sup, &rhs).ok_or(EllipticError::SingularSystem)?;
    if scaled.iter().any(|v| !v.is_finite()) {
        return Err(EllipticError::SingularSystem);
    }
    let residual = row_residual(&sub, &diag, &sup, &rhs, &scaled);
    Ok(EigenWeight { grid: grid.clone(), scaled, residual })
}

fn row_residual<T: Real>(sub: &[T], diag: &[T], sup: &[T], rhs: &[T], x: &[T]) -> T {
    let m = x.len() - 1;
    let mut worst = T::zero();
    for i in 1..m {
        let row = sub[i] * x[i - 1] + diag[i] * x[i] + sup[i] * x[i + 1] - rhs[i];
        let scale = diag[i].abs() * x[i].abs().max(x[i - 1].abs()).max(x[i + 1].abs()).max(T::min_positive_value());
        worst = worst.max(row.abs() / scale);
    }
    worst
}

/// Fits `phi0(r) >= C_** (r - r0)` over nodes in `(r0, r0 + R]`.
pub fn check_hopf_distance<T: Real>(
    phi0: &HarmonicWeight<T>,
    domain: &DomainSpec<T>,
) -> Result<BoundFit<T>, EllipticError> {
    let r0 = phi0.grid.r0();
    let limit = r0 + domain.support_radius;
    let pairs: Vec<(T, T)> = phi0
        .grid
        .nodes
        .iter()
        .zip(&phi0.values)
        .skip(1)
        .take_while(|(&r, _)| r <= limit + phi0.grid.spacing * T::lit(1e-9))
        .map(|(&r, &v)| (r - r0, v))
        .collect();
    if pairs.is_empty() {
        return Err(EllipticError::EmptyNearRegion);
    }
    let constant = pairs.iter().map(|&(d, v)| v / d).fold(T::infinity(), T::min);
    // local order of vanishing at the boundary, from the nodes closest to it
    let near: Vec<(T, T)> = pairs.iter().take(8).copied().collect();
    let xs: Vec<T> = near.iter().map(|&(d, _)| d.ln()).collect();
    let ys: Vec<T> = near.iter().map(|&(_, v)| v.ln()).collect();
    let slope_fit = linear_fit(&xs, &ys).map(|f| f.0).unwrap_or(T::nan());
    Ok(BoundFit { constant, exponent_theory: T::one(), slope_fit, pass: constant > T::lit(HOPF_MARGIN) })
}

/// Fits `phi1(r) <= C (1 + r)^{-(n-1)/2} e^r` and the trend of the ratio beyond `R`.
pub fn phi1_growth_fit<T: Real>(phi1: &EigenWeight<T>, domain: &DomainSpec<T>) -> BoundFit<T> {
    let n = phi1.grid.n;
    let half = T::from_usize_lossy(n - 1) / T::lit(2.0);
    let m = phi1.grid.len() - 1;
    let mut constant = T::zero();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 1..m {
        let r = phi1.grid.nodes[i];
        let ratio = phi1.scaled[i] * (T::one() + r).powf(half);
        constant = constant.max(ratio);
        if r >= domain.support_radius && ratio > T::zero() {
            xs.push((T::one() + r).ln());
            ys.push(ratio.ln());
        }
    }
    let slope_fit = linear_fit(&xs, &ys).map(|f| f.0).unwrap_or(T::zero());
    BoundFit {
        constant,
        exponent_theory: -half,
        slope_fit,
        pass: constant.is_finite() && slope_fit <= T::lit(SLOPE_TOLERANCE),
    }
}

/// `e^{-r} h(r)` with `h(r) = int_{S^{n-1}} e^{r w_1} dw` (one component for `n = 1`).
pub fn farfield_scaled<T: Real>(n: usize, r: T) -> T {
    let two = T::lit(2.0);
    match n {
        1 => T::one() + (-two * r).exp(),
        3 => two * T::PI() * (T::one() - (-two * r).exp()) / r,
        _ => {
            // |S^{n-2}| int_0^pi e^{-r(1 - cos t)} sin^{n-2} t dt, panels graded towards t = 0
            let area = unit_sphere_area::<T>(n - 1);
            let panels = 256usize;
            let k = T::from_usize_lossy(panels);
            let mut total = T::zero();
            for j in 0..panels {
                let a = T::PI() * (T::from_usize_lossy(j) / k).powi(2);
                let b = T::PI() * (T::from_usize_lossy(j + 1) / k).powi(2);
                let mid = (a + b) / two;
                let half = (b - a) / two;
                for (x, w) in GAUSS8 {
                    let th = mid + half * T::lit(x);
                    let f = (-r * (T::one() - th.cos())).exp() * th.sin().powi(n as i32 - 2);
                    total = total + T::lit(w) * half * f;
                }
            }
            area * total
        }
    }
}

const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// Closed forms for the identity coefficient, used as oracles.
pub mod identity {
    use crate::real::Real;

    /// `phi0(r) = 1 - (r0/r)^{n-2}`.
    pub fn phi0<T: Real>(n: usize, r0: T, r: T) -> T {
        T::one() - (r0 / r).powi(n as i32 - 2)
    }

    /// `e^{-r} phi1(r)` for `n = 1` (`e^x - e^{2 r0 - x}`) and `n = 3`
    /// (`4 pi (sinh r - sinh r0 e^{-(r - r0)}) / r`).
    pub fn phi1_scaled<T: Real>(n: usize, r0: T, r: T) -> Option<T> {
        let two = T::lit(2.0);
        let tail = (two * (r0 - r)).exp();
        match n {
            1 => Some(T::one() - tail),
            3 => Some(two * T::PI() * (T::one() - tail) / r),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CoefficientProfile, DomainSpec};

    fn bump_field() -> CoefficientField<f64> {
        let profile = CoefficientProfile::Bump { amplitude: 0.5, center: 1.5, width: 0.4 };
        CoefficientField::with_tight_ellipticity(profile).unwrap()
    }

    #[test]
    fn phi0_requires_three_dimensions() {
        let g = RadialGrid::<f64>::uniform(2, 1.0, 0.01, 100);
        assert_eq!(solve_phi0(&CoefficientField::identity(), &g).unwrap_err(), EllipticError::DimensionTooLow(2));
    }

    #[test]
    fn phi0_identity_matches_closed_form() {
        for n in [3usize, 4] {
            let g = RadialGrid::<f64>::uniform(n, 1.0, 1e-3, 9000);
            let w = solve_phi0(&CoefficientField::identity(), &g).unwrap();
            let err =
                g.nodes.iter().zip(&w.values).map(|(&r, &v)| (v - identity::phi0(n, 1.0, r)).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-4, "n = {n}: {err}");
            assert!(w.residual <= 1e-10, "residual {}", w.residual);
        }
    }

    #[test]
    fn phi0_strict_bounds_and_monotone_for_bump() {
        let g = RadialGrid::<f64>::uniform(3, 1.0, 1e-3, 6000);
        let w = solve_phi0(&bump_field(), &g).unwrap();
        assert_eq!(w.values[0], 0.0);
        assert!(w.values[1..].iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(w.values.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn phi1_identity_one_dimension() {
        let g = RadialGrid::<f64>::uniform(1, 1.0, 1e-3, 11000);
        let w = solve_phi1(&CoefficientField::identity(), &g).unwrap();
        let err = (1..g.len() - 1)
            .map(|i| {
                let exact = identity::phi1_scaled(1, 1.0, g.nodes[i]).unwrap();
                ((w.scaled[i] - exact) / exact).abs()
            })
            .fold(0.0, f64::max);
        assert!(err <= 1e-6, "max relative error {err}");
    }

    #[test]
    fn phi1_identity_three_dimensions() {
        let g = RadialGrid::<f64>::uniform(3, 1.0, 1e-3, 11000);
        let w = solve_phi1(&CoefficientField::identity(), &g).unwrap();
        let err = (1..g.len() - 1)
            .map(|i| {
                let exact = identity::phi1_scaled(3, 1.0, g.nodes[i]).unwrap();
                ((w.scaled[i] - exact) / exact).abs()
            })
            .fold(0.0, f64::max);
        assert!(err <= 1e-6, "max relative error {err}");
    }

    #[test]
    fn phi1_bump_positive_and_bounded() {
        let d = DomainSpec::<f64>::new(3, 1.0, 2.0).unwrap();
        let g = RadialGrid::<f64>::uniform(3, 1.0, 1e-3, 12000);
        let w = solve_phi1(&bump_field(), &g).unwrap();
        assert!(w.scaled[1..].iter().all(|&v| v > 0.0));
        let fit = phi1_growth_fit(&w, &d);
        assert!(fit.pass && fit.constant.is_finite(), "{fit:?}");
    }

    #[test]
    fn hopf_constant_identity_fields() {
        let d = DomainSpec::<f64>::new(3, 1.0, 2.0).unwrap();
        let g = RadialGrid::<f64>::uniform(3, 1.0, 1e-3, 6000);
        let w = solve_phi0(&CoefficientField::identity(), &g).unwrap();
        let fit = check_hopf_distance(&w, &d).unwrap();
        assert!((fit.constant - 1.0 / 3.0).abs() < 1e-4, "{}", fit.constant);
        assert!(fit.pass);
        assert!((fit.slope_fit - 1.0).abs() < 1e-2);

        let g4 = RadialGrid::<f64>::uniform(4, 1.0, 1e-3, 6000);
        let w4 = solve_phi0(&CoefficientField::identity(), &g4).unwrap();
        let fit4 = check_hopf_distance(&w4, &d).unwrap();
        assert!((fit4.constant - 4.0 / 9.0).abs() < 1e-4, "{}", fit4.constant);
    }

    #[test]
    fn hopf_needs_near_nodes() {
        let d = DomainSpec::<f64>::new(3, 1.0, 2.0).unwrap();
        let g = RadialGrid::<f64>::uniform(3, 1.0, 5.0, 3);
        let w = solve_phi0(&CoefficientField::identity(), &g).unwrap();
        assert_eq!(check_hopf_distance(&w, &d).unwrap_err(), EllipticError::EmptyNearRegion);
    }

    #[test]
    fn general_farfield_quadrature_matches_closed_forms() {
        for &r in &[0.5f64, 1.0, 4.0, 30.0, 300.0] {
            let exact = 2.0 * std::f64::consts::PI * (1.0 - (-2.0 * r).exp()) / r;
            // n = 3 through the generic quadrature path
            let area = unit_sphere_area::<f64>(2);
            let mut total = 0.0;
            let k = 4000;
            for j in 0..k {
                let a = std::f64::consts::PI * j as f64 / k as f64;
                let b = std::f64::consts::PI * (j + 1) as f64 / k as f64;
                let f = |t: f64| (-r * (1.0 - t.cos())).exp() * t.sin();
                total += (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
            }
            assert!(((area * total) - exact).abs() / exact < 1e-6);
        }
        // n = 2: h(r) = 2 pi I_0(r); I_0(1) = 1.2660658777520082
        let i0 = 1.266_065_877_752_008_2;
        let h2 = farfield_scaled::<f64>(2, 1.0) * 1f64.exp();
        assert!((h2 - 2.0 * std::f64::consts::PI * i0).abs() < 1e-10);
        // n = 5 reduces to the n = 3 closed form in the large-r regime only asymptotically,
        // but must stay positive and finite
        assert!(farfield_scaled::<f64>(5, 700.0) > 0.0);
    }

    #[test]
    fn f32_solver_path() {
        let g = RadialGrid::<f32>::uniform(3, 1.0, 1e-2, 900);
        let w = solve_phi0(&CoefficientField::identity(), &g).unwrap();
        let err = g
            .nodes
            .iter()
            .zip(&w.values)
            .map(|(&r, &v)| (v - identity::phi0(3, 1.0f32, r)).abs())
            .fold(0.0f32, f32::max);
        // single precision roundoff over ~900 rows, not truncation
        assert!(err < 5e-3, "{err}");
    }
}
