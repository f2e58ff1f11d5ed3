//! Agents, the matrix-weighted communication digraph and the structures
//! derived from its leader-rooted spanning tree.
//!
//! Node 0 is always the leader; followers carry ids `1..=N`. Spanning-tree
//! based constructions work in an *internal* follower order in which every
//! parent precedes its children. [`SpanningTree`] owns the mapping between
//! the two labelings so that results can always be reported by original id.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ConsensusError, Result};
use crate::linalg::{self, add_block, set_block};

/// Entries at or below this magnitude do not make a weight block "nonzero".
pub const ZERO_WEIGHT_TOL: f64 = 1e-12;

/// Linear dynamics `x' = A x + B u` of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl AgentDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(ConsensusError::Dimension(format!(
                "state matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() {
            return Err(ConsensusError::Dimension(format!(
                "input matrix has {} rows, state matrix has {}",
                b.nrows(),
                a.nrows()
            )));
        }
        if !linalg::all_finite(&a) || !linalg::all_finite(&b) {
            return Err(ConsensusError::NonFinite("agent dynamics".into()));
        }
        Ok(Self { a, b })
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub from: usize,
    pub to: usize,
    pub weight: DMatrix<f64>,
}

/// Directed graph over `N + 1` nodes whose edges carry `n x n` weight blocks.
///
/// An edge `(j -> i)` with block `W_ij` means follower `i` receives the state
/// of node `j`. Blocks may be asymmetric and indefinite, but never zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixWeightedDigraph {
    node_count: usize,
    // keyed by (to, from) so in-neighbors of a node are contiguous
    weights: BTreeMap<(usize, usize), DMatrix<f64>>,
}

impl MatrixWeightedDigraph {
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = WeightedEdge>) -> Result<Self> {
        let mut weights = BTreeMap::new();
        let max = node_count.saturating_sub(1);
        for WeightedEdge { from, to, weight } in edges {
            if from >= node_count || to >= node_count {
                return Err(ConsensusError::UnknownNode { from, to, max });
            }
            if from == to {
                return Err(ConsensusError::SelfLoop(from));
            }
            if to == 0 {
                return Err(ConsensusError::EdgeIntoLeader { from });
            }
            if !linalg::all_finite(&weight) {
                return Err(ConsensusError::NonFinite(format!("weight ({from} -> {to})")));
            }
            if linalg::max_abs(&weight) <= ZERO_WEIGHT_TOL {
                return Err(ConsensusError::ZeroWeight { from, to });
            }
            if weights.insert((to, from), weight).is_some() {
                return Err(ConsensusError::DuplicateEdge { from, to });
            }
        }
        Ok(Self { node_count, weights })
    }

    /// Total node count, leader included.
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn follower_count(&self) -> usize {
        self.node_count.saturating_sub(1)
    }

    /// `W_ij` for the edge `j -> i`, if present.
    pub fn weight(&self, to: usize, from: usize) -> Option<&DMatrix<f64>> {
        self.weights.get(&(to, from))
    }

    /// Leader coupling `D_i = W_i0`, if follower `i` hears the leader.
    pub fn leader_weight(&self, follower: usize) -> Option<&DMatrix<f64>> {
        self.weight(follower, 0)
    }

    /// In-neighbors of `node` (leader included) in ascending id order.
    pub fn in_neighbors(&self, node: usize) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.weights
            .range((node, 0)..(node + 1, 0))
            .map(|(&(_, from), w)| (from, w))
    }

    pub fn edges(&self) -> impl Iterator<Item = WeightedEdge> + '_ {
        self.weights.iter().map(|(&(to, from), w)| WeightedEdge {
            from,
            to,
            weight: w.clone(),
        })
    }

    pub fn edge_count(&self) -> usize {
        self.weights.len()
    }
}

/// Agents and topology that passed every consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSystem {
    agents: Vec<AgentDynamics>,
    graph: MatrixWeightedDigraph,
    n: usize,
    m: usize,
}

pub fn validate_system(
    agents: Vec<AgentDynamics>,
    graph: MatrixWeightedDigraph,
) -> Result<ValidatedSystem> {
    if agents.len() < 2 {
        return Err(ConsensusError::Dimension(format!(
            "need a leader and at least one follower, got {} agents",
            agents.len()
        )));
    }
    if graph.node_count() != agents.len() {
        return Err(ConsensusError::Dimension(format!(
            "graph has {} nodes but {} agents were given",
            graph.node_count(),
            agents.len()
        )));
    }
    let n = agents[0].n();
    let m = agents[0].m();
    for (i, agent) in agents.iter().enumerate() {
        if agent.n() != n || agent.m() != m {
            return Err(ConsensusError::Dimension(format!(
                "agent {i} is {}x{} / {}x{}, expected A {n}x{n} and B {n}x{m}",
                agent.a.nrows(),
                agent.a.ncols(),
                agent.b.nrows(),
                agent.b.ncols()
            )));
        }
    }
    for e in graph.edges() {
        if e.weight.shape() != (n, n) {
            return Err(ConsensusError::Dimension(format!(
                "weight ({} -> {}) is {}x{}, weight must be n x n with n = {n}",
                e.from,
                e.to,
                e.weight.nrows(),
                e.weight.ncols()
            )));
        }
    }
    Ok(ValidatedSystem { agents, graph, n, m })
}

impl ValidatedSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of followers `N`.
    pub fn follower_count(&self) -> usize {
        self.agents.len() - 1
    }

    pub fn leader(&self) -> &AgentDynamics {
        &self.agents[0]
    }

    /// Agent by original id; 0 is the leader.
    pub fn agent(&self, id: usize) -> &AgentDynamics {
        &self.agents[id]
    }

    pub fn agents(&self) -> &[AgentDynamics] {
        &self.agents
    }

    pub fn graph(&self) -> &MatrixWeightedDigraph {
        &self.graph
    }

    /// Renumbers followers so that new follower `p` is old follower
    /// `order[p - 1]`. The leader keeps id 0.
    pub fn relabeled(&self, order: &[usize]) -> Result<Self> {
        let n_f = self.follower_count();
        let inverse = inverse_permutation(order, n_f)?;
        let mut agents = Vec::with_capacity(n_f + 1);
        agents.push(self.agents[0].clone());
        agents.extend(order.iter().map(|&old| self.agents[old].clone()));
        let map = |id: usize| if id == 0 { 0 } else { inverse[id - 1] };
        let edges = self.graph.edges().map(|e| WeightedEdge {
            from: map(e.from),
            to: map(e.to),
            weight: e.weight,
        });
        let graph = MatrixWeightedDigraph::new(self.graph.node_count(), edges)?;
        validate_system(agents, graph)
    }
}

/// For a permutation `order` of `1..=n` returns `position` with
/// `position[order[p-1] - 1] = p`.
pub fn inverse_permutation(order: &[usize], n: usize) -> Result<Vec<usize>> {
    if order.len() != n {
        return Err(ConsensusError::Dimension(format!(
            "permutation has {} entries, expected {n}",
            order.len()
        )));
    }
    let mut position = vec![0; n];
    for (p, &id) in order.iter().enumerate() {
        if id == 0 || id > n || position[id - 1] != 0 {
            return Err(ConsensusError::Dimension(format!(
                "{order:?} is not a permutation of 1..={n}"
            )));
        }
        position[id - 1] = p + 1;
    }
    Ok(position)
}

/// Leader-rooted directed spanning tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanningTree {
    /// `parent[i - 1]` is the original id of follower `i`'s parent.
    parent: Vec<usize>,
    /// `order[p - 1]` is the original id at internal position `p`.
    order: Vec<usize>,
    /// `position[i - 1]` is the internal position of follower `i`.
    position: Vec<usize>,
}

impl SpanningTree {
    /// Builds a tree from a parent map over original ids.
    ///
    /// Followers are ordered by depth, then by id, which puts every parent
    /// before its children.
    pub fn from_parents(parent: Vec<usize>) -> Result<Self> {
        let n_f = parent.len();
        let mut depth: Vec<Option<usize>> = vec![None; n_f + 1];
        depth[0] = Some(0);
        for start in 1..=n_f {
            let mut path = Vec::new();
            let mut cur = start;
            while depth[cur].is_none() {
                if path.contains(&cur) || path.len() > n_f {
                    return Err(ConsensusError::Unreachable(path));
                }
                path.push(cur);
                let p = parent[cur - 1];
                if p > n_f {
                    return Err(ConsensusError::UnknownNode {
                        from: p,
                        to: cur,
                        max: n_f,
                    });
                }
                if p == cur {
                    return Err(ConsensusError::SelfLoop(cur));
                }
                cur = p;
            }
            let mut d = depth[cur].unwrap();
            for &node in path.iter().rev() {
                d += 1;
                depth[node] = Some(d);
            }
        }
        let mut order: Vec<usize> = (1..=n_f).collect();
        order.sort_by_key(|&i| (depth[i].unwrap(), i));
        let position = inverse_permutation(&order, n_f)?;
        Ok(Self {
            parent,
            order,
            position,
        })
    }

    pub fn follower_count(&self) -> usize {
        self.parent.len()
    }

    /// Parent (original id) of follower `i` (original id).
    pub fn parent(&self, follower: usize) -> usize {
        self.parent[follower - 1]
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    /// Original ids in internal order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Internal position of an original id (0 maps to 0).
    pub fn internal(&self, id: usize) -> usize {
        if id == 0 {
            0
        } else {
            self.position[id - 1]
        }
    }

    /// Original id at an internal position (0 maps to 0).
    pub fn original(&self, pos: usize) -> usize {
        if pos == 0 {
            0
        } else {
            self.order[pos - 1]
        }
    }

    /// Internal position of the parent of the follower at internal position `p`.
    pub fn internal_parent(&self, pos: usize) -> usize {
        self.internal(self.parent(self.original(pos)))
    }

    /// Tree edges `(parent, child)` in original ids, listed in internal order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.order.iter().map(|&i| (self.parent(i), i)).collect()
    }

    pub fn is_identity_order(&self) -> bool {
        self.order.iter().enumerate().all(|(p, &i)| p + 1 == i)
    }
}

/// Extracts a leader-rooted spanning tree by breadth-first search from node 0.
///
/// Each follower takes its parent among in-neighbors one hop closer to the
/// leader; when several qualify the highest id wins, i.e. the candidate the
/// search visited last.
pub fn find_spanning_tree(graph: &MatrixWeightedDigraph) -> Result<SpanningTree> {
    let n_f = graph.follower_count();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n_f + 1];
    for e in graph.edges() {
        out[e.from].push(e.to);
    }
    for list in &mut out {
        list.sort_unstable();
    }
    let mut depth: Vec<Option<usize>> = vec![None; n_f + 1];
    depth[0] = Some(0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &out[u] {
            if depth[v].is_none() {
                depth[v] = Some(depth[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    let unreachable: Vec<usize> = (1..=n_f).filter(|&i| depth[i].is_none()).collect();
    if !unreachable.is_empty() {
        return Err(ConsensusError::Unreachable(unreachable));
    }
    let mut parent = vec![0; n_f];
    for i in 1..=n_f {
        let target = depth[i].unwrap() - 1;
        parent[i - 1] = graph
            .in_neighbors(i)
            .map(|(j, _)| j)
            .filter(|&j| depth[j] == Some(target))
            .max()
            .expect("BFS depth implies a predecessor");
    }
    SpanningTree::from_parents(parent)
}

/// Incidence matrix `P0` of the tree in internal order: column `p` has `+1`
/// at the parent row and `-1` at row `p`.
pub fn incidence_matrix(tree: &SpanningTree) -> DMatrix<f64> {
    let n_f = tree.follower_count();
    let mut p0 = DMatrix::zeros(n_f + 1, n_f);
    for pos in 1..=n_f {
        p0[(tree.internal_parent(pos), pos - 1)] = 1.0;
        p0[(pos, pos - 1)] = -1.0;
    }
    p0
}

/// Weight a follower applies to its tree parent's relative state: `W_{i,k_i}`
/// for a follower parent, `D_i` for the leader. Never their sum.
pub fn effective_weight(system: &ValidatedSystem, tree: &SpanningTree, follower: usize) -> DMatrix<f64> {
    let parent = tree.parent(follower);
    system
        .graph()
        .weight(follower, parent)
        .cloned()
        .expect("tree edge missing from graph")
}

/// Follower-network block Laplacian with leader coupling, in internal order.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLaplacian {
    /// `Nn x Nn`
    pub l: DMatrix<f64>,
    /// Block diagonal of leader weights, `Nn x Nn`.
    pub delta: DMatrix<f64>,
    /// Stacked leader weights, `Nn x n`.
    pub delta_stack: DMatrix<f64>,
    pub n: usize,
}

impl BlockLaplacian {
    fn zeros(n_f: usize, n: usize) -> Self {
        Self {
            l: DMatrix::zeros(n_f * n, n_f * n),
            delta: DMatrix::zeros(n_f * n, n_f * n),
            delta_stack: DMatrix::zeros(n_f * n, n),
            n,
        }
    }

    fn set_leader(&mut self, pos: usize, d: &DMatrix<f64>) {
        let r = (pos - 1) * self.n;
        set_block(&mut self.delta, r, r, d);
        set_block(&mut self.delta_stack, r, 0, d);
    }

    /// Block `(i, j)` of `L` with 1-based internal positions.
    pub fn l_block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let n = self.n;
        linalg::block(&self.l, (i - 1) * n, (j - 1) * n, n, n)
    }

    pub fn delta_block(&self, i: usize) -> DMatrix<f64> {
        let n = self.n;
        linalg::block(&self.delta, (i - 1) * n, (i - 1) * n, n, n)
    }
}

/// Laplacian of the tree-only protocol: each follower listens to its parent.
pub fn dst_laplacian(system: &ValidatedSystem, tree: &SpanningTree) -> BlockLaplacian {
    let n = system.n();
    let n_f = system.follower_count();
    let mut lap = BlockLaplacian::zeros(n_f, n);
    for pos in 1..=n_f {
        let i = tree.original(pos);
        let w = effective_weight(system, tree, i);
        let q = tree.internal_parent(pos);
        if q == 0 {
            lap.set_leader(pos, &w);
        } else {
            let r = (pos - 1) * n;
            set_block(&mut lap.l, r, r, &w);
            set_block(&mut lap.l, r, (q - 1) * n, &(-&w));
        }
    }
    lap
}

/// Laplacian of the all-neighbors protocol over the original graph, laid out
/// in the tree's internal order.
pub fn full_laplacian(system: &ValidatedSystem, tree: &SpanningTree) -> BlockLaplacian {
    let n = system.n();
    let n_f = system.follower_count();
    let mut lap = BlockLaplacian::zeros(n_f, n);
    for pos in 1..=n_f {
        let i = tree.original(pos);
        let r = (pos - 1) * n;
        for (j, w) in system.graph().in_neighbors(i) {
            if j == 0 {
                lap.set_leader(pos, w);
            } else {
                add_block(&mut lap.l, r, r, w);
                set_block(&mut lap.l, r, (tree.internal(j) - 1) * n, &(-w));
            }
        }
    }
    lap
}
