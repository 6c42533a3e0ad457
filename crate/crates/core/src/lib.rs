//! Numerical exploration of the behaviour of real polynomial fibers at
//! infinity: directions at infinity, asymptotic critical values, gradient
//! flows between fibers and volumes of direction sets.

pub mod analysis;
pub mod corpus;
pub mod directions;
pub mod fibers;
pub mod flow;
pub mod geom;
pub mod malgrange;
pub mod poly;
pub mod volume;

pub use directions::{DirectionSet, DirectionsError, Provenance};
pub use poly::{parse, PolyError, Polynomial};
