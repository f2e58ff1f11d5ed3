//! Leader-following consensus for heterogeneous linear agents over digraphs
//! with asymmetric matrix-valued edge weights.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: agents, the matrix-weighted digraph, spanning-tree extraction,
//!   incidence matrices and block Laplacians.
//! * [`reduction`]: the stacked closed loop, the tree-based change of
//!   coordinates, the observability sequence of the leader exosystem and the
//!   auxiliary matrix whose Hurwitz property decides consensus.
//! * [`synthesis`]: decentralized gain design and the two stability criteria
//!   (exact per-block test for the tree protocol, block Gerschgorin test for
//!   the all-neighbors protocol).
//! * [`simulate`]: fixed-step RK4 integration of the closed loop, used as an
//!   independent oracle for every analytic verdict.
//! * [`fixtures`]: the four-follower reference system and seeded random
//!   instances.

pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod model;
pub mod reduction;
pub mod simulate;
pub mod synthesis;

use serde::{Deserialize, Serialize};

pub use error::{ConsensusError, Result};
pub use model::{
    AgentDynamics, BlockLaplacian, MatrixWeightedDigraph, SpanningTree, ValidatedSystem,
    WeightedEdge,
};
pub use reduction::{ProtocolKind, ReducedSystem};
pub use simulate::{LeaderInput, SimulationConfig, SimulationTrace};
pub use synthesis::{CriterionReport, GainSet};

/// Numeric thresholds that steer every verdict. Reports echo them verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// A matrix counts as Hurwitz only if its spectral abscissa is below
    /// `-hurwitz_margin`; abscissae within `±hurwitz_margin` are marginal.
    pub hurwitz_margin: f64,
    /// Multiplier on the SVD rank threshold `max(rows, cols) * eps * sigma_max`.
    pub rank_tol_scale: f64,
    /// Grid divisions per axis for the block Gerschgorin region scan.
    pub gerschgorin_grid: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hurwitz_margin: 1e-9,
            rank_tol_scale: 1e4,
            gerschgorin_grid: 400,
        }
    }
}
