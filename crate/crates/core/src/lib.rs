//! Finite-dimensional open-quantum-system dynamics and the trace-distance
//! (information backflow) non-Markovianity measure.
//!
//! The measure is computed two ways: by maximization over orthogonal initial
//! state pairs, and by a local scan over an enclosing surface around an
//! interior reference state, normalized by the initial trace distance. The
//! two representations are mathematically equal; the `measure` module exposes
//! both engines plus an equivalence report, and the `experiment` module runs
//! a desk-scale reproduction of the photonic dephasing study the local
//! representation was demonstrated on.

pub mod dynamics;
pub mod experiment;
pub mod linalg;
pub mod measure;
pub mod qstate;
pub mod surfaces;
pub mod svg;

mod error;

pub use error::Error;
pub type Result<T> = std::result::Result<T, Error>;

pub use dynamics::{DynamicalMapFamily, FpDephasingParams, ThicknessToTime};
pub use linalg::{C64, CMat};
pub use measure::{MeasureResult, TimeGrid, TraceDistanceTrajectory};
pub use qstate::{BlochVector, DensityMatrix, OrthogonalPair, TracelessDirection};
pub use surfaces::{DirectionLattice, EnclosingSurface};
