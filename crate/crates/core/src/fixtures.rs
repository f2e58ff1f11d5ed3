//! Reference systems: the four-follower example network with its published
//! gain sets, small structured systems, and seeded random instances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg;
use crate::model::{validate_system, AgentDynamics, MatrixWeightedDigraph, ValidatedSystem, WeightedEdge};
use crate::synthesis::GainSet;

fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

fn agent(a: &[f64], b: &[f64]) -> AgentDynamics {
    AgentDynamics::new(m(2, 2, a), m(2, 1, b)).expect("fixture agent")
}

fn edge(from: usize, to: usize, w: &[f64]) -> WeightedEdge {
    WeightedEdge {
        from,
        to,
        weight: m(2, 2, w),
    }
}

/// Unstable leader, four heterogeneous followers, six asymmetric weights.
pub fn example_system() -> ValidatedSystem {
    let agents = vec![
        agent(&[2.0, 0.0, 0.0, 4.0], &[1.0, 1.0]),
        agent(&[1.0, 0.0, 3.0, 4.0], &[2.0, 1.0]),
        agent(&[1.0, 2.0, 1.0, 4.0], &[2.0, 3.0]),
        agent(&[1.0, 1.0, 0.0, 4.0], &[1.0, 4.0]),
        agent(&[2.0, 2.0, 3.0, 5.0], &[2.0, 4.0]),
    ];
    let edges = vec![
        edge(0, 1, &[1.0, 2.0, 3.0, 4.0]),
        edge(0, 2, &[4.0, 3.0, 3.0, 4.0]),
        edge(1, 4, &[1.0, 2.0, 5.0, 4.0]),
        edge(2, 4, &[2.0, 2.0, 3.0, 4.0]),
        edge(2, 3, &[1.0, 2.0, 0.0, 4.0]),
        edge(4, 3, &[1.0, 0.0, 3.0, 4.0]),
    ];
    let graph = MatrixWeightedDigraph::new(5, edges).expect("fixture graph");
    validate_system(agents, graph).expect("fixture system")
}

fn row_gains(rows: &[[f64; 2]]) -> Vec<DMatrix<f64>> {
    rows.iter().map(|r| m(1, 2, r)).collect()
}

const G_RAMP: [[f64; 2]; 4] = [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]];

/// Published gains for the tree protocol with `G_i = [i, i]`.
pub fn example1_gains() -> GainSet {
    GainSet::new(
        row_gains(&G_RAMP),
        row_gains(&[[0.7, 0.1], [-2.786, 2.464], [2.0, -1.625], [-12.25, 6.0]]),
    )
    .expect("fixture gains")
}

/// Published gains for the tree protocol with `G_i = 0`.
pub fn example2_gains() -> GainSet {
    GainSet::new(
        row_gains(&[[0.0, 0.0]; 4]),
        row_gains(&[[0.2222, 0.6111], [-2.5, 2.75], [2.5, -1.10313], [-10.25, 6.0]]),
    )
    .expect("fixture gains")
}

/// Published gains for the all-neighbors protocol.
pub fn example3_gains() -> GainSet {
    GainSet::new(
        row_gains(&G_RAMP),
        row_gains(&[[0.7, 0.1], [-2.786, 2.464], [2.0, -1.625], [-12.25, 5.0]]),
    )
    .expect("fixture gains")
}

pub fn example_initial_states() -> Vec<DVector<f64>> {
    [[2.5, 2.5], [0.5, 0.0], [1.0, 0.0], [1.5, 0.0], [2.0, 0.0]]
        .iter()
        .map(|x| DVector::from_row_slice(x))
        .collect()
}

/// `followers` copies of `agent` (leader included), each hearing the leader
/// through `weight` and nothing else.
pub fn homogeneous_star(agent: &AgentDynamics, followers: usize, weight: DMatrix<f64>) -> ValidatedSystem {
    let agents = vec![agent.clone(); followers + 1];
    let edges = (1..=followers).map(|i| WeightedEdge {
        from: 0,
        to: i,
        weight: weight.clone(),
    });
    let graph = MatrixWeightedDigraph::new(followers + 1, edges).expect("star graph");
    validate_system(agents, graph).expect("star system")
}

/// Homogeneous chain-of-integrators agents with `B = I_n` on an
/// identity-weighted star.
pub fn star_system(followers: usize, n: usize) -> ValidatedSystem {
    let a = DMatrix::from_fn(n, n, |r, c| if c == r + 1 { 1.0 } else { 0.0 });
    let agent = AgentDynamics::new(a, DMatrix::identity(n, n)).expect("star agent");
    homogeneous_star(&agent, followers, DMatrix::identity(n, n))
}

/// How the random leader behaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaderClass {
    /// Hurwitz `A_0`, `B_0 = 0`: every leader mode decays.
    StableAutonomous,
    /// Hurwitz `A_0` with a nonzero `B_0` driven by an unknown constant input.
    StableForced,
    /// `A_0` with an eigenvalue in the open right half plane.
    Unstable,
}

#[derive(Debug, Clone)]
pub struct RandomSpec {
    pub followers: usize,
    pub n: usize,
    pub m: usize,
    pub leader: LeaderClass,
    /// Probability of each extra follower-to-follower edge.
    pub extra_edge_prob: f64,
    /// Scale of extra (non-tree) follower weights.
    pub extra_edge_scale: f64,
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// Random invertible weight with condition number below 20.
pub fn random_weight(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    loop {
        let w = random_matrix(rng, n, n, 2.0);
        if linalg::condition_number(&w) < 20.0 && linalg::max_abs(&w) > 0.1 {
            return w * scale;
        }
    }
}

fn shifted_to_abscissa(rng: &mut ChaCha8Rng, n: usize, target: f64) -> DMatrix<f64> {
    let r = random_matrix(rng, n, n, 2.0);
    let abscissa = linalg::spectral_abscissa(&r).expect("eigenvalues");
    r + DMatrix::identity(n, n) * (target - abscissa)
}

fn controllable_pair(rng: &mut ChaCha8Rng, n: usize, m: usize) -> AgentDynamics {
    loop {
        let a = random_matrix(rng, n, n, 2.0);
        let b = random_matrix(rng, n, m, 2.0);
        let mut c = DMatrix::zeros(n, n * m);
        let mut col = b.clone();
        for k in 0..n {
            linalg::set_block(&mut c, 0, k * m, &col);
            col = &a * col;
        }
        let sv = linalg::singular_values(&c);
        if sv.min() > 0.05 * sv.max() {
            return AgentDynamics::new(a, b).expect("random agent");
        }
    }
}

/// Random heterogeneous system whose graph always contains a leader-rooted
/// spanning tree.
pub fn random_system(rng: &mut ChaCha8Rng, spec: &RandomSpec) -> ValidatedSystem {
    let (n, m, n_f) = (spec.n, spec.m, spec.followers);
    let leader_a = match spec.leader {
        LeaderClass::StableAutonomous | LeaderClass::StableForced => {
            let target = -rng.random_range(1.0..2.0);
            shifted_to_abscissa(rng, n, target)
        }
        LeaderClass::Unstable => {
            let target = rng.random_range(0.3..1.0);
            shifted_to_abscissa(rng, n, target)
        }
    };
    let leader_b = match spec.leader {
        LeaderClass::StableAutonomous => DMatrix::zeros(n, m),
        _ => loop {
            let b = random_matrix(rng, n, m, 1.5);
            if linalg::max_abs(&b) > 0.3 {
                break b;
            }
        },
    };
    let mut agents = vec![AgentDynamics::new(leader_a, leader_b).expect("leader")];
    agents.extend((0..n_f).map(|_| controllable_pair(rng, n, m)));

    // random spanning tree over a random visiting order, then extra edges
    let mut order: Vec<usize> = (1..=n_f).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut edges = Vec::new();
    let mut present = std::collections::BTreeSet::new();
    for (k, &child) in order.iter().enumerate() {
        let choice = rng.random_range(0..=k);
        let parent = if choice == 0 { 0 } else { order[choice - 1] };
        edges.push(WeightedEdge {
            from: parent,
            to: child,
            weight: random_weight(rng, n, 1.0),
        });
        present.insert((parent, child));
    }
    for from in 1..=n_f {
        for to in 1..=n_f {
            if from != to && !present.contains(&(from, to)) && rng.random_bool(spec.extra_edge_prob) {
                edges.push(WeightedEdge {
                    from,
                    to,
                    weight: random_weight(rng, n, spec.extra_edge_scale),
                });
                present.insert((from, to));
            }
        }
    }
    let graph = MatrixWeightedDigraph::new(n_f + 1, edges).expect("random graph");
    validate_system(agents, graph).expect("random system")
}

pub fn random_initial_states(rng: &mut ChaCha8Rng, agents: usize, n: usize) -> Vec<DVector<f64>> {
    (0..agents)
        .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
