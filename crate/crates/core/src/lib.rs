//! Numerical laboratory for small-data blowup of semilinear wave equations
//! exterior to a ball, with a variable radial coefficient.
//!
//! Everything is generic over the scalar through [`Real`]; the aliases below
//! fix it to `f64`.

pub mod domain;
pub mod elliptic;
pub mod functionals;
pub mod ode;
pub mod real;
pub mod tridiag;
pub mod wave;

pub use real::Real;

pub type ProblemSpec = domain::ProblemSpec<f64>;
pub type DomainSpec = domain::DomainSpec<f64>;
pub type CoefficientField = domain::CoefficientField<f64>;
pub type CoefficientProfile = domain::CoefficientProfile<f64>;
pub type RadialGrid = domain::RadialGrid<f64>;
pub type HarmonicWeight = elliptic::HarmonicWeight<f64>;
pub type EigenWeight = elliptic::EigenWeight<f64>;
pub type BoundFit = elliptic::BoundFit<f64>;
pub type DataProfile = wave::DataProfile<f64>;
pub type InitialData = wave::InitialData<f64>;
pub type WaveState = wave::WaveState<f64>;
pub type SimConfig = wave::SimConfig<f64>;
pub type LifespanResult = wave::LifespanResult<f64>;
pub type WeightPair = functionals::WeightPair<f64>;
pub type SimTrace = functionals::SimTrace<f64>;
pub type Simulation = functionals::Simulation<f64>;
pub type InequalityContext = functionals::InequalityContext<f64>;
pub type InequalityReport = functionals::InequalityReport<f64>;
pub type OdeProblem = ode::OdeProblem<f64>;
pub type RiccatiProblem = ode::RiccatiProblem<f64>;
pub type BlowupTime = ode::BlowupTime<f64>;
