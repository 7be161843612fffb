//! Tikhonov regularization for vector fields on planar parametric curves.
//!
//! The crate solves ill-posed linear operator equations `F u = y` whose
//! unknowns are `R^2`-valued fields on a curve, taking into account that the
//! curve itself may only be known through a spline approximation. It
//! provides:
//!
//! * exact differential geometry of parametric curves ([`geometry`]):
//!   frames, tangential/normal projections, surface gradients, covariant
//!   derivatives and a sampled curvature bound;
//! * uniform cubic B-spline curve approximation with the `W^{2,inf}`
//!   perturbation measure `gamma` and pullbacks between curves sharing a
//!   parameter domain ([`spline`]);
//! * piecewise-linear vector fields with the ambient and split Sobolev
//!   (semi)norms ([`field`], [`fem`]);
//! * forward operators: a magnetization integral operator with its discrete
//!   adjoint, the embedding operator for denoising, and the normal-penalty
//!   operator for tangential reconstruction ([`operator`]);
//! * assembly and solution of the regularized normal equations, plus an
//!   unregularized least-squares path that exhibits the instability
//!   ([`tikhonov`]);
//! * reproducible experiment drivers with CSV/report output ([`experiment`]).
//!
//! All numerics are `f64`, single-threaded and deterministic; noise comes
//! from seeded ChaCha12 streams. Everything is safe to call from multiple
//! threads since inputs are immutable.

pub mod error;
pub mod experiment;
pub mod fem;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod operator;
pub mod spline;
pub mod tikhonov;

pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentKind};
pub use field::{DiscreteVectorField, NormReport};
pub use geometry::{AnalyticCurve, Curve, CurveRef, Frame, Orientation, PolylineCurve};
pub use grid::Grid;
pub use operator::DiscreteOperator;
pub use spline::{fit_spline, gamma, EndCondition, PullbackOperator, SplineCurve};
pub use tikhonov::{Regularizer, SolveResult, TikhonovProblem};
