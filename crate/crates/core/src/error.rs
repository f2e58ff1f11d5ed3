use thiserror::Error;

/// Errors raised while validating, reducing, designing or simulating a
/// multi-agent system.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("zero weight on declared edge ({from} -> {to})")]
    ZeroWeight { from: usize, to: usize },

    #[error("edge ({from} -> 0) points into the leader; followers may not feed the leader")]
    EdgeIntoLeader { from: usize },

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("edge ({from} -> {to}) references a node outside 0..={max}")]
    UnknownNode { from: usize, to: usize, max: usize },

    #[error("duplicate edge ({from} -> {to})")]
    DuplicateEdge { from: usize, to: usize },

    #[error("unreachable follower {0:?}: the graph has no spanning tree rooted at the leader")]
    Unreachable(Vec<usize>),

    #[error("transformation lost leader autonomy: bottom-left block residual {0:e}")]
    LeaderCoupling(f64),

    #[error("row scan kept {kept} rows but rank is {rank} (tolerance {tolerance:e})")]
    RankInconsistent { kept: usize, rank: usize, tolerance: f64 },

    #[error("no invertible column subset in L1: {0}")]
    NoInvertibleColumns(String),

    #[error("eigenvalue computation did not converge for a {0}x{0} matrix")]
    EigenSolver(usize),

    #[error("uncontrollable pair: {0}")]
    Uncontrollable(String),

    #[error("effective weight not invertible (condition number {0:e})")]
    SingularWeight(f64),

    #[error("pole targets are not closed under conjugation")]
    TargetsNotSelfConjugate,

    #[error("designed block is not sufficiently stable: abscissa {abscissa} exceeds {bound}")]
    DesignPostcondition { abscissa: f64, bound: f64 },

    #[error("invalid simulation configuration: {0}")]
    SimulationConfig(String),

    #[error("non-finite value during integration at t = {0}")]
    IntegrationBlowUp(f64),
}

pub type Result<T> = std::result::Result<T, ConsensusError>;
