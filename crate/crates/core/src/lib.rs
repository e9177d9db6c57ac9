//! Finite-horizon laboratory for Cesàro averages of operator-sequence orbits.
//!
//! The crate evaluates `A_n(x) = (1/n) Σ_{i≤n} ‖T_i x‖` over very long
//! horizons, classifies vectors and pairs by their dips and peaks, and runs
//! the constructive search for irregular manifolds.

pub mod cesaro;
pub mod classify;
pub mod error;
pub mod manifold;
pub mod numeric;
pub mod operator;
pub mod scalar;
pub mod schedules;
mod serde_dec;
pub mod shiftlab;
pub mod vector;
pub mod weights;

pub use error::{Error, Result};
pub use operator::{CompositeRule, NormSegment, OperatorKind, OperatorSequenceSpec};
pub use scalar::Scalar;
pub use schedules::{Block, BlockEnd, BlockOp, BlockSchedule, GeneratorTag};
pub use vector::{Coord, Space, Vector, MAX_INDEX};
pub use weights::WeightSequence;
