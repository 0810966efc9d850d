//! Simulation and limit laws for root and largest clusters of Bernoulli
//! bond percolation on b-ary recursive, scale-free and uniform recursive
//! trees, together with the coupled Yule branching system with rare
//! mutations.

pub mod branching;
pub mod error;
pub mod experiments;
pub mod limit;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod tree;

pub use branching::{BranchingOutcome, BranchingParams, BranchingState, Family, GermSample, Mass, Mode, StopReason, StopRule};
pub use error::{Error, Result};
pub use limit::{LimitLaw, LimitSpec, SeriesResult, Theorem};
pub use rng::SeedSplitter;
pub use tree::{PercolationResult, TreeModel};
pub use stats::{KsReport, SampleSet};
