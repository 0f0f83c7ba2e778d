//! A laboratory for gradient descent with large learning rates on the
//! product family `f(x, y) = F(xy)`: closed-form objectives parametrized
//! by regularity, exact GD iteration with full diagnostics, detectors for
//! the large-learning-rate phenomena (edge of stability, balancing,
//! catapult, one-sided stability), numerical verification of the
//! convergence/sharpness theorems, and a small neural-network harness
//! that reproduces the same effects at desk scale.

pub mod engine;
pub mod experiment;
pub mod family;
pub mod nn;
pub mod phenomena;
pub mod props;
pub mod theorems;

pub use engine::{gd_step, run, RunConfig, Stability, Status, Trajectory};
pub use family::{ObjectiveSpec, Point2D};
pub use phenomena::PhenomenaReport;
pub use theorems::{verify, TheoremCheck, TheoremId};
