//! From the stacked closed loop to the auxiliary matrix.
//!
//! With `y_i = x_{k_i} - x_i` along tree edges the closed loop splits into
//! `y' = Abar y + Bbar eta`, `eta' = Dbar eta` where `eta = [x_0; u_0]` is the
//! leader exosystem (constant `u_0`). Consensus is `y`-stability of that
//! cascade, which holds iff `Mbar = [[Abar, Bbar L3], [0, L1 Dbar L3]]` is
//! Hurwitz. `L1` spans the observable part of `(Bbar, Dbar)` and `L3` is a
//! right inverse of `L1` supported on an invertible column subset.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ConsensusError, Result};
use crate::linalg::{self, block, set_block};
use crate::model::{self, BlockLaplacian, SpanningTree, ValidatedSystem};
use crate::synthesis::GainSet;
use crate::Tolerances;

/// Which follower protocol closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    /// Each follower uses only its spanning-tree parent.
    Dst,
    /// Each follower uses every in-neighbor.
    AllNeighbors,
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProtocolKind::Dst => "dst",
            ProtocolKind::AllNeighbors => "all-neighbors",
        })
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dst" => Ok(ProtocolKind::Dst),
            "all-neighbors" => Ok(ProtocolKind::AllNeighbors),
            other => Err(format!("unknown protocol {other:?}, expected dst or all-neighbors")),
        }
    }
}

/// Stacked leader + follower drift in the tree's internal order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopMatrix {
    /// `(N+1)n x (N+1)n`
    pub f: DMatrix<f64>,
    /// `(N+1)n x m`, leader input only.
    pub b_stack: DMatrix<f64>,
    pub kind: ProtocolKind,
    pub n: usize,
}

impl ClosedLoopMatrix {
    /// The follower block `M` (or `M'` for all-neighbors).
    pub fn follower_block(&self) -> DMatrix<f64> {
        let n = self.n;
        let size = self.f.nrows() - n;
        block(&self.f, n, n, size, size)
    }

    /// Follower block `(i, j)` with 1-based internal positions.
    pub fn follower_sub_block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let n = self.n;
        block(&self.f, i * n, j * n, n, n)
    }
}

pub fn laplacian_for(
    system: &ValidatedSystem,
    tree: &SpanningTree,
    kind: ProtocolKind,
) -> BlockLaplacian {
    match kind {
        ProtocolKind::Dst => model::dst_laplacian(system, tree),
        ProtocolKind::AllNeighbors => model::full_laplacian(system, tree),
    }
}

/// `F = [[A_0, 0], [B_D K_D delta, A_D - B_D (G_D + K_D L + K_D Delta)]]`.
pub fn closed_loop_matrix(
    system: &ValidatedSystem,
    tree: &SpanningTree,
    gains: &GainSet,
    kind: ProtocolKind,
) -> Result<ClosedLoopMatrix> {
    gains.check_against(system)?;
    let n = system.n();
    let n_f = system.follower_count();
    let lap = laplacian_for(system, tree, kind);

    let mut a_d = Vec::with_capacity(n_f);
    let mut b_d = Vec::with_capacity(n_f);
    let mut g_d = Vec::with_capacity(n_f);
    let mut k_d = Vec::with_capacity(n_f);
    for pos in 1..=n_f {
        let i = tree.original(pos);
        a_d.push(system.agent(i).a.clone());
        b_d.push(system.agent(i).b.clone());
        g_d.push(gains.g(i).clone());
        k_d.push(gains.k(i).clone());
    }
    let (a_d, b_d, g_d, k_d) = (
        linalg::block_diag(&a_d),
        linalg::block_diag(&b_d),
        linalg::block_diag(&g_d),
        linalg::block_diag(&k_d),
    );
    let m_block = &a_d - &b_d * (&g_d + &k_d * &lap.l + &k_d * &lap.delta);
    let coupling = &b_d * &k_d * &lap.delta_stack;

    let size = (n_f + 1) * n;
    let mut f = DMatrix::zeros(size, size);
    set_block(&mut f, 0, 0, &system.leader().a);
    set_block(&mut f, n, 0, &coupling);
    set_block(&mut f, n, n, &m_block);
    let mut b_stack = DMatrix::zeros(size, system.m());
    set_block(&mut b_stack, 0, 0, &system.leader().b);
    Ok(ClosedLoopMatrix { f, b_stack, kind, n })
}

/// `P = [P0 e_1]^T (x) I_n`, mapping `[x_0; x]` to `[y; x_0]`.
pub fn transformation_matrix(tree: &SpanningTree, n: usize) -> DMatrix<f64> {
    let p0 = model::incidence_matrix(tree);
    let n_f = tree.follower_count();
    let mut core = DMatrix::zeros(n_f + 1, n_f + 1);
    core.view_mut((0, 0), (n_f, n_f + 1)).copy_from(&p0.transpose());
    core[(n_f, 0)] = 1.0;
    core.kronecker(&DMatrix::identity(n, n))
}

/// Closed-form inverse `[[0, 1], [P~0^{-1}, 1_N]] (x) I_n`.
///
/// `P~0^{-1}` has `-1` at `(i, j)` exactly when `j` lies on the tree path from
/// `i` up to (not including) the leader.
pub fn transformation_inverse(tree: &SpanningTree, n: usize) -> DMatrix<f64> {
    let n_f = tree.follower_count();
    let mut core = DMatrix::zeros(n_f + 1, n_f + 1);
    core[(0, n_f)] = 1.0;
    for pos in 1..=n_f {
        core[(pos, n_f)] = 1.0;
        let mut cur = pos;
        while cur != 0 {
            core[(pos, cur - 1)] = -1.0;
            cur = tree.internal_parent(cur);
        }
    }
    core.kronecker(&DMatrix::identity(n, n))
}

/// Result of `P F P^{-1}` split into the `y` subsystem blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub abar: DMatrix<f64>,
    pub ahat: DMatrix<f64>,
    pub bhat: DMatrix<f64>,
    /// Largest entry of the bottom-left block before cleanup.
    pub leader_residual: f64,
}

pub fn transform(closed: &ClosedLoopMatrix, tree: &SpanningTree) -> Result<Transformed> {
    let n = closed.n;
    let size = closed.f.nrows();
    let ny = size - n;
    let p = transformation_matrix(tree, n);
    let p_inv = transformation_inverse(tree, n);
    let mut t = &p * &closed.f * &p_inv;
    let mut bt = &p * &closed.b_stack;

    // entries of P and P^{-1} are 0/±1, so rounding is bounded by a small
    // multiple of eps * |F|; anything below that is cancellation noise.
    let noise = 4.0 * size as f64 * f64::EPSILON * linalg::max_abs(&closed.f).max(1.0);
    t.iter_mut().chain(bt.iter_mut()).for_each(|x| {
        if x.abs() <= noise {
            *x = 0.0
        }
    });

    let residual = linalg::max_abs(&block(&t, ny, 0, n, ny));
    let scale = linalg::max_abs(&closed.f).max(1.0);
    if residual > 1e-9 * scale {
        return Err(ConsensusError::LeaderCoupling(residual));
    }
    Ok(Transformed {
        abar: block(&t, 0, 0, ny, ny),
        ahat: block(&t, 0, ny, ny, n),
        bhat: block(&bt, 0, 0, ny, bt.ncols()),
        leader_residual: residual,
    })
}

/// `Bbar = [Ahat | Bhat]` and `Dbar = [[A_0, B_0], [0, 0]]`.
pub fn eta_matrices(
    transformed: &Transformed,
    leader: &model::AgentDynamics,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (leader.n(), leader.m());
    let ny = transformed.ahat.nrows();
    let mut bbar = DMatrix::zeros(ny, n + m);
    set_block(&mut bbar, 0, 0, &transformed.ahat);
    set_block(&mut bbar, 0, n, &transformed.bhat);
    let mut dbar = DMatrix::zeros(n + m, n + m);
    set_block(&mut dbar, 0, 0, &leader.a);
    set_block(&mut dbar, 0, n, &leader.b);
    (bbar, dbar)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observability {
    pub vs: DMatrix<f64>,
    pub s: usize,
    pub h: usize,
    /// Rank threshold applied to `V_s`.
    pub tolerance: f64,
}

/// `V_k = [Bbar; Bbar Dbar; ...; Bbar Dbar^k]` for `k = 0..=n+m-1`; returns the
/// first `s` at which the rank stops growing.
pub fn observability_sequence(bbar: &DMatrix<f64>, dbar: &DMatrix<f64>, tol_scale: f64) -> Observability {
    let q = dbar.nrows();
    let rows = bbar.nrows();
    let cap = q.saturating_sub(1);
    let mut stacked: Vec<DMatrix<f64>> = vec![bbar.clone()];
    let build = |blocks: &[DMatrix<f64>]| {
        let mut v = DMatrix::zeros(rows * blocks.len(), q);
        for (k, b) in blocks.iter().enumerate() {
            set_block(&mut v, k * rows, 0, b);
        }
        v
    };
    let rank_of = |v: &DMatrix<f64>| {
        let tol = linalg::rank_tolerance(v, tol_scale);
        (linalg::rank_with_tolerance(v, tol), tol)
    };
    let mut current = build(&stacked);
    let (mut rank, mut tol) = rank_of(&current);
    let mut s = 0;
    while s < cap {
        let next_block = stacked.last().unwrap() * dbar;
        stacked.push(next_block);
        let next = build(&stacked);
        let (next_rank, next_tol) = rank_of(&next);
        if next_rank == rank {
            break;
        }
        current = next;
        rank = next_rank;
        tol = next_tol;
        s += 1;
    }
    Observability {
        vs: current,
        s,
        h: rank,
        tolerance: tol,
    }
}

/// Keeps the rows of `vs` that are independent of the rows kept before them.
pub fn extract_l1(vs: &DMatrix<f64>, h: usize, tol: f64) -> Result<DMatrix<f64>> {
    let cols = vs.ncols();
    let mut kept: Vec<usize> = Vec::new();
    let mut rank = 0;
    for r in 0..vs.nrows() {
        let mut candidate = kept.clone();
        candidate.push(r);
        let sub = vs.select_rows(candidate.iter());
        let new_rank = linalg::rank_with_tolerance(&sub, tol);
        if new_rank > rank {
            kept = candidate;
            rank = new_rank;
            if rank == cols {
                break;
            }
        }
    }
    if kept.len() != h {
        return Err(ConsensusError::RankInconsistent {
            kept: kept.len(),
            rank: h,
            tolerance: tol,
        });
    }
    Ok(vs.select_rows(kept.iter()))
}

/// Right inverse of `L1` supported on the first independent column subset.
///
/// Returns `L3` and the chosen column indices.
pub fn extract_l3(l1: &DMatrix<f64>, tol_scale: f64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let (h, q) = l1.shape();
    if h == 0 {
        return Ok((DMatrix::zeros(q, 0), Vec::new()));
    }
    let tol = linalg::rank_tolerance(l1, tol_scale);
    let mut cols: Vec<usize> = Vec::new();
    for c in 0..q {
        let mut candidate = cols.clone();
        candidate.push(c);
        let sub = l1.select_columns(candidate.iter());
        if linalg::rank_with_tolerance(&sub, tol) == candidate.len() {
            cols = candidate;
            if cols.len() == h {
                break;
            }
        }
    }
    if cols.len() != h {
        return Err(ConsensusError::NoInvertibleColumns(format!(
            "found {} of {h} independent columns",
            cols.len()
        )));
    }
    let l2 = l1.select_columns(cols.iter());
    let l2_inv = l2
        .clone()
        .try_inverse()
        .ok_or_else(|| ConsensusError::NoInvertibleColumns("selected block is singular".into()))?;
    let mut l3 = DMatrix::zeros(q, h);
    for (j, &c) in cols.iter().enumerate() {
        l3.row_mut(c).copy_from(&l2_inv.row(j));
    }
    let residual = linalg::max_abs(&(l1 * &l3 - DMatrix::identity(h, h)));
    if residual > 1e-10 {
        return Err(ConsensusError::NoInvertibleColumns(format!(
            "L1 L3 deviates from identity by {residual:e}"
        )));
    }
    Ok((l3, cols))
}

/// `[[Abar, Bbar L3], [0, L1 Dbar L3]]`.
pub fn auxiliary_matrix(
    abar: &DMatrix<f64>,
    bbar: &DMatrix<f64>,
    dbar: &DMatrix<f64>,
    l1: &DMatrix<f64>,
    l3: &DMatrix<f64>,
) -> DMatrix<f64> {
    let ny = abar.nrows();
    let h = l1.nrows();
    let mut mbar = DMatrix::zeros(ny + h, ny + h);
    set_block(&mut mbar, 0, 0, abar);
    if h > 0 {
        set_block(&mut mbar, 0, ny, &(bbar * l3));
        set_block(&mut mbar, ny, ny, &(l1 * dbar * l3));
    }
    mbar
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurwitzVerdict {
    pub verdict: bool,
    /// Largest real part of the spectrum; `-inf` (serialized as null) when empty.
    pub spectral_abscissa: f64,
    /// Abscissa within `±margin`: reported as inconclusive, verdict false.
    pub marginal: bool,
}

pub fn is_hurwitz(h: &DMatrix<f64>, margin: f64) -> Result<HurwitzVerdict> {
    if !h.is_square() {
        return Err(ConsensusError::Dimension(format!(
            "Hurwitz test needs a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if !linalg::all_finite(h) {
        return Err(ConsensusError::NonFinite("Hurwitz test input".into()));
    }
    let abscissa = linalg::spectral_abscissa(h)?;
    Ok(HurwitzVerdict {
        verdict: abscissa < -margin,
        spectral_abscissa: abscissa,
        marginal: abscissa.abs() <= margin,
    })
}

/// Every intermediate of the reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub kind: ProtocolKind,
    pub closed: ClosedLoopMatrix,
    pub abar: DMatrix<f64>,
    pub ahat: DMatrix<f64>,
    pub bhat: DMatrix<f64>,
    pub bbar: DMatrix<f64>,
    pub dbar: DMatrix<f64>,
    pub vs: DMatrix<f64>,
    pub s: usize,
    pub h: usize,
    pub rank_tolerance: f64,
    pub l1: DMatrix<f64>,
    pub l3: DMatrix<f64>,
    pub l2_columns: Vec<usize>,
    pub mbar: DMatrix<f64>,
}

impl ReducedSystem {
    /// `L1 Dbar L3`, the leader modes visible in `y`.
    pub fn tail(&self) -> DMatrix<f64> {
        &self.l1 * &self.dbar * &self.l3
    }
}

pub fn reduce(
    system: &ValidatedSystem,
    tree: &SpanningTree,
    gains: &GainSet,
    kind: ProtocolKind,
    tol: &Tolerances,
) -> Result<ReducedSystem> {
    let closed = closed_loop_matrix(system, tree, gains, kind)?;
    let transformed = transform(&closed, tree)?;
    let (bbar, dbar) = eta_matrices(&transformed, system.leader());
    let obs = observability_sequence(&bbar, &dbar, tol.rank_tol_scale);
    let l1 = extract_l1(&obs.vs, obs.h, obs.tolerance)?;
    let (l3, l2_columns) = extract_l3(&l1, tol.rank_tol_scale)?;
    let mbar = auxiliary_matrix(&transformed.abar, &bbar, &dbar, &l1, &l3);
    Ok(ReducedSystem {
        kind,
        closed,
        abar: transformed.abar,
        ahat: transformed.ahat,
        bhat: transformed.bhat,
        bbar,
        dbar,
        vs: obs.vs,
        s: obs.s,
        h: obs.h,
        rank_tolerance: obs.tolerance,
        l1,
        l3,
        l2_columns,
        mbar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::linalg::{eigenvalues, spectrum_distance};
    use crate::model::find_spanning_tree;

    fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn example_one_first_follower_block() {
        let sys = fixtures::example_system();
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let cl = closed_loop_matrix(&sys, &tree, &fixtures::example1_gains(), ProtocolKind::Dst).unwrap();
        let b = cl.follower_sub_block(1, 1);
        let expected = m(2, 2, &[-3.0, -5.6, 1.0, 1.2]);
        assert!((b - expected).abs().max() < 1e-12);
    }

    #[test]
    fn zero_gains_decouple() {
        let sys = fixtures::example_system();
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let cl = closed_loop_matrix(&sys, &tree, &GainSet::zeros(4, 2, 1), ProtocolKind::Dst).unwrap();
        let blocks: Vec<_> = sys.agents().iter().map(|a| a.a.clone()).collect();
        assert_eq!(cl.f, linalg::block_diag(&blocks));
    }

    #[test]
    fn all_neighbors_off_diagonal_block() {
        let sys = fixtures::example_system();
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let gains = fixtures::example3_gains();
        let cl = closed_loop_matrix(&sys, &tree, &gains, ProtocolKind::AllNeighbors).unwrap();
        let expected = &sys.agent(4).b * gains.k(4) * sys.graph().weight(4, 1).unwrap();
        assert!((cl.follower_sub_block(4, 1) - expected).abs().max() < 1e-12);
    }

    #[test]
    fn leader_row_is_autonomous() {
        let sys = fixtures::example_system();
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let cl = closed_loop_matrix(&sys, &tree, &fixtures::example1_gains(), ProtocolKind::AllNeighbors).unwrap();
        assert_eq!(block(&cl.f, 0, 2, 2, 8), DMatrix::zeros(2, 8));
    }

    #[test]
    fn closed_form_inverse_matches_numeric() {
        let sys = fixtures::example_system();
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let p = transformation_matrix(&tree, 2);
        let p_inv = transformation_inverse(&tree, 2);
        assert!((&p * &p_inv - DMatrix::identity(10, 10)).abs().max() < 1e-10);
        let numeric = p.clone().try_inverse().unwrap();
        assert!((numeric - p_inv).abs().max() < 1e-10);
    }

    #[test]
    fn homogeneous_zero_gain_has_no_leader_drive() {
        let sys = fixtures::star_system(3, 2);
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let cl = closed_loop_matrix(&sys, &tree, &GainSet::zeros(3, 2, 2), ProtocolKind::Dst).unwrap();
        let t = transform(&cl, &tree).unwrap();
        assert!(t.ahat.abs().max() < 1e-12);
    }

    #[test]
    fn ahat_rows_match_closed_form() {
        let sys = fixtures::example_system();
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let gains = fixtures::example1_gains();
        let cl = closed_loop_matrix(&sys, &tree, &gains, ProtocolKind::Dst).unwrap();
        let t = transform(&cl, &tree).unwrap();
        let star = |i: usize| {
            if i == 0 {
                sys.leader().a.clone()
            } else {
                &sys.agent(i).a - &sys.agent(i).b * gains.g(i)
            }
        };
        for pos in 1..=4 {
            let i = tree.original(pos);
            let expected = star(tree.parent(i)) - star(i);
            let got = block(&t.ahat, (pos - 1) * 2, 0, 2, 2);
            assert!((got - expected).abs().max() < 1e-12, "row block {pos}");
        }
    }

    #[test]
    fn bhat_has_leader_input_on_leader_rooted_rows() {
        let sys = fixtures::example_system();
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let cl = closed_loop_matrix(&sys, &tree, &fixtures::example1_gains(), ProtocolKind::Dst).unwrap();
        let t = transform(&cl, &tree).unwrap();
        let b0 = &sys.leader().b;
        assert_eq!(block(&t.bhat, 0, 0, 2, 1), *b0);
        assert_eq!(block(&t.bhat, 2, 0, 2, 1), *b0);
        assert_eq!(block(&t.bhat, 4, 0, 4, 1), DMatrix::zeros(4, 1));
    }

    #[test]
    fn abar_is_similar_to_follower_block() {
        let sys = fixtures::example_system();
        let tree = find_spanning_tree(sys.graph()).unwrap();
        for (gains, kind) in [
            (fixtures::example1_gains(), ProtocolKind::Dst),
            (fixtures::example2_gains(), ProtocolKind::Dst),
            (fixtures::example3_gains(), ProtocolKind::AllNeighbors),
        ] {
            let cl = closed_loop_matrix(&sys, &tree, &gains, kind).unwrap();
            let t = transform(&cl, &tree).unwrap();
            let d = spectrum_distance(
                &eigenvalues(&t.abar).unwrap(),
                &eigenvalues(&cl.follower_block()).unwrap(),
                1e-5,
            );
            assert!(d < 1e-8, "{kind}: {d}");
        }
    }

    #[test]
    fn dbar_of_example_one() {
        let sys = fixtures::example_system();
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let cl = closed_loop_matrix(&sys, &tree, &fixtures::example1_gains(), ProtocolKind::Dst).unwrap();
        let (bbar, dbar) = eta_matrices(&transform(&cl, &tree).unwrap(), sys.leader());
        assert_eq!(dbar, m(3, 3, &[2.0, 0.0, 1.0, 0.0, 4.0, 1.0, 0.0, 0.0, 0.0]));
        assert_eq!(bbar.shape(), (8, 3));
    }

    #[test]
    fn zero_leader_input_gives_zero_dbar_column() {
        let leader = model::AgentDynamics::new(m(1, 1, &[-1.0]), m(1, 1, &[0.0])).unwrap();
        let t = Transformed {
            abar: DMatrix::zeros(1, 1),
            ahat: DMatrix::zeros(1, 1),
            bhat: DMatrix::zeros(1, 1),
            leader_residual: 0.0,
        };
        let (_, dbar) = eta_matrices(&t, &leader);
        assert_eq!(dbar.column(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
    }

    #[test]
    fn observability_of_zero_bbar() {
        let obs = observability_sequence(&DMatrix::zeros(4, 3), &DMatrix::identity(3, 3), 1.0);
        assert_eq!((obs.s, obs.h), (0, 0));
        assert_eq!(extract_l1(&obs.vs, obs.h, obs.tolerance).unwrap().nrows(), 0);
    }

    #[test]
    fn observability_of_identity_bbar() {
        let d = m(3, 3, &[1.0, 2.0, 0.0, 0.0, 3.0, 1.0, 4.0, 0.0, 5.0]);
        let obs = observability_sequence(&DMatrix::identity(3, 3), &d, 1.0);
        assert_eq!((obs.s, obs.h), (0, 3));
    }

    #[test]
    fn observability_of_example_one_is_bounded() {
        let sys = fixtures::example_system();
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let r = reduce(&sys, &tree, &fixtures::example1_gains(), ProtocolKind::Dst, &Tolerances::default()).unwrap();
        assert!(r.h <= 3);
        let q = r.dbar.nrows();
        // V_{s+1} has the same rank as V_s
        let mut next = r.vs.clone().resize_vertically(r.vs.nrows() + r.bbar.nrows(), 0.0);
        let extra = &r.bbar * r.dbar.pow((r.s + 1) as u32);
        set_block(&mut next, r.vs.nrows(), 0, &extra);
        assert_eq!(next.ncols(), q);
        let tol = linalg::rank_tolerance(&next, Tolerances::default().rank_tol_scale);
        assert_eq!(linalg::rank_with_tolerance(&next, tol), r.h);
    }

    #[test]
    fn l1_row_scan() {
        let vs = m(3, 2, &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0]);
        let l1 = extract_l1(&vs, 2, 1e-12).unwrap();
        assert_eq!(l1, DMatrix::identity(2, 2));
        let full = m(2, 3, &[1.0, 2.0, 3.0, 0.0, 1.0, 4.0]);
        assert_eq!(extract_l1(&full, 2, 1e-12).unwrap(), full);
        assert!(matches!(
            extract_l1(&vs, 1, 1e-12),
            Err(ConsensusError::RankInconsistent { kept: 2, rank: 1, .. })
        ));
    }

    #[test]
    fn l1_skips_leading_zero_row() {
        let vs = m(3, 2, &[0.0, 0.0, 0.0, 3.0, 1.0, 1.0]);
        assert_eq!(extract_l1(&vs, 2, 1e-12).unwrap(), m(2, 2, &[0.0, 3.0, 1.0, 1.0]));
    }

    #[test]
    fn l3_of_identity_and_single_row() {
        let (l3, cols) = extract_l3(&DMatrix::identity(3, 3), 1.0).unwrap();
        assert_eq!(l3, DMatrix::identity(3, 3));
        assert_eq!(cols, vec![0, 1, 2]);
        let (l3, cols) = extract_l3(&m(1, 3, &[0.0, 2.0, 0.0]), 1.0).unwrap();
        assert_eq!(cols, vec![1]);
        assert_eq!(l3, m(3, 1, &[0.0, 0.5, 0.0]));
    }

    #[test]
    fn auxiliary_without_tail_is_abar() {
        let abar = m(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let bbar = DMatrix::zeros(2, 3);
        let mbar = auxiliary_matrix(&abar, &bbar, &DMatrix::zeros(3, 3), &DMatrix::zeros(0, 3), &DMatrix::zeros(3, 0));
        assert_eq!(mbar, abar);
    }

    #[test]
    fn hurwitz_examples() {
        let v = is_hurwitz(&m(2, 2, &[-1.0, 0.0, 0.0, -2.0]), 1e-9).unwrap();
        assert!(v.verdict);
        assert!((v.spectral_abscissa + 1.0).abs() < 1e-12);
        let v = is_hurwitz(&m(2, 2, &[2.0, 0.0, 0.0, 4.0]), 1e-9).unwrap();
        assert!(!v.verdict);
        assert!((v.spectral_abscissa - 4.0).abs() < 1e-12);
        let v = is_hurwitz(&m(2, 2, &[-3.0, -5.6, 1.0, 1.2]), 1e-9).unwrap();
        assert!(v.verdict);
        let v = is_hurwitz(&DMatrix::zeros(0, 0), 1e-9).unwrap();
        assert!(v.verdict);
        assert_eq!(v.spectral_abscissa, f64::NEG_INFINITY);
    }

    #[test]
    fn marginal_abscissa_is_not_hurwitz() {
        let v = is_hurwitz(&m(2, 2, &[0.0, 1.0, -1.0, 0.0]), 1e-9).unwrap();
        assert!(!v.verdict);
        assert!(v.marginal);
    }

    #[test]
    fn mbar_spectrum_is_union() {
        let sys = fixtures::example_system();
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let r = reduce(&sys, &tree, &fixtures::example1_gains(), ProtocolKind::Dst, &Tolerances::default()).unwrap();
        let mut union = eigenvalues(&r.abar).unwrap();
        union.extend(eigenvalues(&r.tail()).unwrap());
        let d = spectrum_distance(&eigenvalues(&r.mbar).unwrap(), &union, 1e-5);
        assert!(d < 1e-8, "{d}");
    }
}
