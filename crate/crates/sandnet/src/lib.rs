//! Equilibrium sandpile configurations on metric networks.
//!
//! The standing layer is the weighted distance to the network boundary,
//! computed by an upwind scheme in fast-marching order; the rolling layer
//! follows by edgewise quadrature along ascent walks with transmission
//! conditions at the transition vertices. The crate also carries the
//! uniqueness diagnostics (minimal admissible profile, singular-set
//! coverage) and error/convergence machinery around them.

pub mod analysis;
pub mod eikonal;
pub mod expr;
pub mod grid;
pub mod net;
pub mod netfile;
pub mod output;
pub mod pipeline;
pub mod rolling;
pub mod verify;

pub use eikonal::{classify, enlarge_ties, solve, Classification, DistanceField};
pub use grid::{Grid, NodeId};
pub use net::{EdgeId, Network, VertexId};
pub use netfile::{generate, Generator, NetFile};
pub use pipeline::{solve_network, Solution};
pub use rolling::{RollingField, TransmissionSpec};
