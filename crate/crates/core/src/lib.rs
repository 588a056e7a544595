//! Bezier Kolmogorov-Arnold networks trained by compiling the network and
//! its squared-error objective into a binary polynomial, reducing it to a
//! QUBO and annealing it.
//!
//! Pipeline: [`network`] builds the symbolic forward pass over radix-2
//! control-point bits ([`encoding`]), [`objective`] collapses a dataset into
//! a fixed moment table and assembles the objective, [`reduction`] brings it
//! down to quadratic order, and [`solver`] searches for low-energy bits.
//! [`session`] persists the collapsed objective so batches can be added or
//! removed without revisiting old samples. [`baseline`] trains the same
//! network with gradient descent for comparison, and [`bench`] generates the
//! benchmark tasks and runs experiments.

pub mod baseline;
pub mod bench;
pub mod binpoly;
pub mod data;
pub mod encoding;
pub mod error;
pub mod network;
pub mod objective;
pub mod reduction;
pub mod session;
pub mod solver;

pub use baseline::{GdConfig, Optimizer};
pub use binpoly::{BinaryPolynomial, Monomial, VarId};
pub use data::{Dataset, DatasetKind, Normalizer};
pub use encoding::{ControlPointCode, EncodingSpec};
pub use error::{Error, Result};
pub use network::{DecodedModel, KanSpec, VariableLayout};
pub use objective::{MomentTable, ObjectiveConfig, ObjectiveTemplate};
pub use reduction::{AuxRegistry, QuboProblem};
pub use session::ObjectiveState;
pub use solver::{AnnealSchedule, AuxMode, SolveResult, Solver, SolverRegistry};
