//! Lifespan scaling fits.

use blowup_core::ode::LifespanExponent;
use blowup_core::real::linear_fit;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("scaling fit needs at least 3 positive points, got {0}")]
    InsufficientPoints(usize),
}

/// Minimum coefficient of determination for an exponential lifespan.
pub const EXPONENTIAL_R2: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "form", content = "alpha", rename_all = "snake_case")]
pub enum TheoryForm {
    /// `T <= A eps^{-alpha}`.
    Power(f64),
    /// `T <= exp(B eps^{-(p-1)})`.
    Exponential,
}

impl From<LifespanExponent<f64>> for TheoryForm {
    fn from(e: LifespanExponent<f64>) -> Self {
        match e {
            LifespanExponent::Power(a) => TheoryForm::Power(a),
            LifespanExponent::Exponential => TheoryForm::Exponential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    /// Power form: slope of `log T` against `log eps`. Exponential form: slope of
    /// `log T` against `eps^{-(p-1)}`, which estimates `B`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub theory: TheoryForm,
    /// Power form: `|slope + alpha| <= tolerance`. Exponential form: `r^2 >= 0.98`.
    pub pass: bool,
    /// Power form: smallest `A` with `T <= A eps^{-alpha}` at every point.
    /// Exponential form: `exp(intercept)`.
    pub envelope_constant: f64,
    /// No lifespan grows faster than the theoretical envelope beyond the tolerance.
    pub upper_bound_consistent: bool,
    pub tolerance: f64,
}

/// Fits `(eps, T)` pairs against the theoretical lifespan form.
///
/// A power-law sweep is consistent with the upper bound when the fitted slope
/// is no steeper than `-alpha - tol`. The exponential envelope is the
/// regression line in `log T`, widened by `tol`.
pub fn fit_scaling(points: &[(f64, f64)], theory: TheoryForm, p: f64, tolerance: f64) -> Result<ScalingFit, FitError> {
    let points: Vec<(f64, f64)> =
        points.iter().copied().filter(|&(e, t)| e > 0.0 && t > 0.0 && t.is_finite()).collect();
    if points.len() < 3 {
        return Err(FitError::InsufficientPoints(points.len()));
    }
    let ys: Vec<f64> = points.iter().map(|&(_, t)| t.ln()).collect();
    match theory {
        TheoryForm::Power(alpha) => {
            let xs: Vec<f64> = points.iter().map(|&(e, _)| e.ln()).collect();
            let (slope, intercept, r_squared) =
                linear_fit(&xs, &ys).ok_or(FitError::InsufficientPoints(points.len()))?;
            let envelope_constant = points.iter().map(|&(e, t)| t * e.powf(alpha)).fold(0.0, f64::max);
            let upper_bound_consistent = slope >= -alpha - tolerance;
            Ok(ScalingFit {
                slope,
                intercept,
                r_squared,
                theory,
                pass: (slope + alpha).abs() <= tolerance,
                envelope_constant,
                upper_bound_consistent,
                tolerance,
            })
        }
        TheoryForm::Exponential => {
            let xs: Vec<f64> = points.iter().map(|&(e, _)| e.powf(-(p - 1.0))).collect();
            let (slope, intercept, r_squared) =
                linear_fit(&xs, &ys).ok_or(FitError::InsufficientPoints(points.len()))?;
            let upper_bound_consistent =
                slope > 0.0 && xs.iter().zip(&ys).all(|(&x, &y)| y <= intercept + slope * x + tolerance);
            Ok(ScalingFit {
                slope,
                intercept,
                r_squared,
                theory,
                pass: r_squared >= EXPONENTIAL_R2,
                envelope_constant: intercept.exp(),
                upper_bound_consistent,
                tolerance,
            })
        }
    }
}
