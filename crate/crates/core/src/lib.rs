//! Chain recurrence for finitely generated semigroups of maps on a gridded
//! window of ℝ^d: outer and inner cell approximations of the chain recurrent
//! set, trapping regions, attractors, basins and the Conley decomposition.

pub mod attractor;
pub mod cellset;
pub mod config;
pub mod conley;
pub mod chaingraph;
pub mod eps;
pub mod error;
pub mod expr;
pub mod interval;
pub mod io;
pub mod pipeline;
pub mod semigroup;
pub mod space;

pub use cellset::CellSet;
pub use eps::EpsFunction;
pub use error::{Error, Result};
pub use semigroup::{EnclosureMode, Enclosure, GeneratorMap, Semigroup, Word};
pub use space::{Aabb, Grid, Window};
