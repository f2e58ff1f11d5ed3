//! Decentralized gain design and the two consensus criteria.
//!
//! Tree protocol: consensus holds iff every follower block
//! `A_i - B_i G_i - B_i K_i W_eff,i` and the leader tail `L1 Dbar L3` are
//! Hurwitz. Each block only involves agent `i` and its parent weight, so
//! `K_i` can be designed locally by pole placement.
//!
//! All-neighbors protocol: the follower matrix is no longer block triangular.
//! A block Gerschgorin argument gives a sufficient test: every region
//! `{lambda : nu(A_i' - B_i' - lambda I) <= R_i}` must avoid the closed right
//! half plane, where `nu(H) = 1 / ||H^{-1}||_inf` and `R_i` sums the
//! infinity norms of the off-diagonal blocks in row `i`.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConsensusError, Result};
use crate::linalg;
use crate::model::{self, AgentDynamics, SpanningTree, ValidatedSystem};
use crate::reduction::{self, HurwitzVerdict, ProtocolKind, ReducedSystem};
use crate::Tolerances;

pub use crate::model::effective_weight;

/// Per-follower feedback gains `G_i` (own state) and `K_i` (relative state),
/// each `m x n`, indexed by original follower id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    g: Vec<DMatrix<f64>>,
    k: Vec<DMatrix<f64>>,
}

impl GainSet {
    pub fn new(g: Vec<DMatrix<f64>>, k: Vec<DMatrix<f64>>) -> Result<Self> {
        if g.len() != k.len() {
            return Err(ConsensusError::Dimension(format!(
                "{} G gains but {} K gains",
                g.len(),
                k.len()
            )));
        }
        if let Some(first) = g.first() {
            let shape = first.shape();
            for (i, (gi, ki)) in g.iter().zip(&k).enumerate() {
                if gi.shape() != shape || ki.shape() != shape {
                    return Err(ConsensusError::Dimension(format!(
                        "gains of follower {} are not all {}x{}",
                        i + 1,
                        shape.0,
                        shape.1
                    )));
                }
                if !linalg::all_finite(gi) || !linalg::all_finite(ki) {
                    return Err(ConsensusError::NonFinite(format!("gains of follower {}", i + 1)));
                }
            }
        }
        Ok(Self { g, k })
    }

    pub fn zeros(followers: usize, n: usize, m: usize) -> Self {
        Self {
            g: vec![DMatrix::zeros(m, n); followers],
            k: vec![DMatrix::zeros(m, n); followers],
        }
    }

    pub fn follower_count(&self) -> usize {
        self.g.len()
    }

    pub fn g(&self, follower: usize) -> &DMatrix<f64> {
        &self.g[follower - 1]
    }

    pub fn k(&self, follower: usize) -> &DMatrix<f64> {
        &self.k[follower - 1]
    }

    pub fn g_all(&self) -> &[DMatrix<f64>] {
        &self.g
    }

    pub fn k_all(&self) -> &[DMatrix<f64>] {
        &self.k
    }

    pub fn set_k(&mut self, follower: usize, k: DMatrix<f64>) {
        self.k[follower - 1] = k;
    }

    pub fn check_against(&self, system: &ValidatedSystem) -> Result<()> {
        let expected = (system.m(), system.n());
        if self.g.len() != system.follower_count() {
            return Err(ConsensusError::Dimension(format!(
                "gain set covers {} followers, system has {}",
                self.g.len(),
                system.follower_count()
            )));
        }
        if self.g.iter().chain(&self.k).any(|x| x.shape() != expected) {
            return Err(ConsensusError::Dimension(format!(
                "gains must be {}x{} (m x n)",
                expected.0, expected.1
            )));
        }
        Ok(())
    }

    /// Renumbers followers like [`ValidatedSystem::relabeled`].
    pub fn relabeled(&self, order: &[usize]) -> Self {
        Self {
            g: order.iter().map(|&i| self.g[i - 1].clone()).collect(),
            k: order.iter().map(|&i| self.k[i - 1].clone()).collect(),
        }
    }
}

fn check_self_conjugate(targets: &[Complex64]) -> Result<()> {
    let mut unmatched: Vec<Complex64> = targets.iter().copied().filter(|z| z.im != 0.0).collect();
    while let Some(z) = unmatched.pop() {
        let tol = 1e-12 * (1.0 + z.norm());
        match unmatched.iter().position(|w| (w - z.conj()).norm() <= tol) {
            Some(idx) => {
                unmatched.swap_remove(idx);
            }
            None => return Err(ConsensusError::TargetsNotSelfConjugate),
        }
    }
    Ok(())
}

/// Coefficients `c_0..c_{n-1}` of the monic polynomial with the given roots.
fn monic_coefficients(roots: &[Complex64]) -> Vec<f64> {
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (k, &c) in poly.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * r;
        }
        poly = next;
    }
    poly.iter().take(roots.len()).map(|c| c.re).collect()
}

fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut c = DMatrix::zeros(n, n * m);
    let mut col = b.clone();
    for k in 0..n {
        linalg::set_block(&mut c, 0, k * m, &col);
        col = a * col;
    }
    c
}

const CONTROLLABILITY_COND_LIMIT: f64 = 1e12;

fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let c = controllability_matrix(a, b);
    let tol = linalg::rank_tolerance(&c, Tolerances::default().rank_tol_scale);
    if linalg::rank_with_tolerance(&c, tol) < a.nrows() {
        return false;
    }
    // single-input: C is square, reject numerically singular ones too
    !(c.is_square() && linalg::condition_number(&c) > CONTROLLABILITY_COND_LIMIT)
}

/// Ackermann's formula for a single input column `b`.
fn ackermann(a: &DMatrix<f64>, b: &DMatrix<f64>, targets: &[Complex64]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !is_controllable(a, b) {
        return Err(ConsensusError::Uncontrollable(
            "controllability matrix is rank deficient".into(),
        ));
    }
    let c = controllability_matrix(a, b);
    let mut e_n = DMatrix::zeros(n, 1);
    e_n[(n - 1, 0)] = 1.0;
    let w = c
        .transpose()
        .lu()
        .solve(&e_n)
        .ok_or_else(|| ConsensusError::Uncontrollable("singular controllability matrix".into()))?;
    let coeffs = monic_coefficients(targets);
    let mut phi = DMatrix::zeros(n, n);
    let mut power = DMatrix::identity(n, n);
    for &c_k in &coeffs {
        phi += &power * c_k;
        power = a * power;
    }
    phi += power;
    Ok(w.transpose() * phi)
}

const PROJECTION_TRIALS: usize = 32;

/// State feedback `F` with `eig(A - B F) = targets`.
///
/// Single input uses Ackermann's formula. Multi-input systems are projected
/// onto `b = B v` for axis directions first, then fixed pseudo-random unit
/// vectors, until `(A, b)` is controllable; the result is `F = v f`.
pub fn place_poles(a: &DMatrix<f64>, b: &DMatrix<f64>, targets: &[Complex64]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || targets.len() != n {
        return Err(ConsensusError::Dimension(format!(
            "pole placement needs A n x n, B n x m and n targets (n = {n}, {} targets)",
            targets.len()
        )));
    }
    check_self_conjugate(targets)?;
    let m = b.ncols();
    if m == 0 || !is_controllable(a, b) {
        return Err(ConsensusError::Uncontrollable("(A, B) is not controllable".into()));
    }
    if m == 1 {
        return ackermann(a, b, targets);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_d0f9_01e5);
    for trial in 0..PROJECTION_TRIALS {
        let v = if trial < m {
            let mut v = DMatrix::zeros(m, 1);
            v[(trial, 0)] = 1.0;
            v
        } else {
            let v = DMatrix::from_fn(m, 1, |_, _| rng.random_range(-1.0..1.0));
            let norm = v.norm();
            if norm < 1e-6 {
                continue;
            }
            v / norm
        };
        let bv = b * &v;
        if is_controllable(a, &bv) {
            let f = ackermann(a, &bv, targets)?;
            return Ok(v * f);
        }
    }
    Err(ConsensusError::Uncontrollable(format!(
        "no controllable single-input projection in {PROJECTION_TRIALS} trials"
    )))
}

/// Default pole targets `-rate * {1, ..., n}`.
pub fn default_targets(n: usize, rate: f64) -> Vec<Complex64> {
    (1..=n).map(|k| Complex64::new(-rate * k as f64, 0.0)).collect()
}

const WEIGHT_COND_LIMIT: f64 = 1e12;

/// Designs `K_i` so that `A_i - B_i G_i - B_i K_i W_eff` has poles
/// `-rate * {1..n}`.
pub fn design_k_dst(
    agent: &AgentDynamics,
    g: &DMatrix<f64>,
    w_eff: &DMatrix<f64>,
    rate: f64,
) -> Result<DMatrix<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(ConsensusError::Dimension(format!("rate must be positive, got {rate}")));
    }
    let cond = linalg::condition_number(w_eff);
    if cond >= WEIGHT_COND_LIMIT {
        return Err(ConsensusError::SingularWeight(cond));
    }
    let w_inv = w_eff
        .clone()
        .try_inverse()
        .ok_or(ConsensusError::SingularWeight(cond))?;
    let a_star = &agent.a - &agent.b * g;
    let f = place_poles(&a_star, &agent.b, &default_targets(agent.n(), rate))?;
    let k = f * w_inv;
    let closed = &a_star - &agent.b * &k * w_eff;
    let abscissa = linalg::spectral_abscissa(&closed)?;
    let bound = -rate / 2.0;
    if abscissa > bound {
        return Err(ConsensusError::DesignPostcondition { abscissa, bound });
    }
    Ok(k)
}

/// Designs every `K_i` from agent `i` and its tree-parent weight only.
/// `g` defaults to zero gains.
pub fn design_gains(
    system: &ValidatedSystem,
    tree: &SpanningTree,
    g: Option<Vec<DMatrix<f64>>>,
    rate: f64,
) -> Result<GainSet> {
    design_with(system, g, rate, |i| effective_weight(system, tree, i))
}

fn design_with(
    system: &ValidatedSystem,
    g: Option<Vec<DMatrix<f64>>>,
    rate: f64,
    weight_of: impl Fn(usize) -> DMatrix<f64>,
) -> Result<GainSet> {
    let (n, m, n_f) = (system.n(), system.m(), system.follower_count());
    let g = g.unwrap_or_else(|| vec![DMatrix::zeros(m, n); n_f]);
    let mut gains = GainSet::new(g, vec![DMatrix::zeros(m, n); n_f])?;
    gains.check_against(system)?;
    for i in 1..=n_f {
        let k = design_k_dst(system.agent(i), gains.g(i), &weight_of(i), rate)?;
        gains.set_k(i, k);
    }
    Ok(gains)
}

/// `sum_j W_ij` over every in-neighbor of `follower`, leader included.
pub fn total_in_weight(system: &ValidatedSystem, follower: usize) -> DMatrix<f64> {
    let n = system.n();
    let mut total = DMatrix::zeros(n, n);
    for (_, w) in system.graph().in_neighbors(follower) {
        total += w;
    }
    total
}

/// `A_i - B_i G_i - B_i K_i W_eff,i`.
pub fn dst_diagonal_block(
    system: &ValidatedSystem,
    tree: &SpanningTree,
    gains: &GainSet,
    follower: usize,
) -> DMatrix<f64> {
    let agent = system.agent(follower);
    let w = effective_weight(system, tree, follower);
    &agent.a - &agent.b * gains.g(follower) - &agent.b * gains.k(follower) * w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    /// Verdict is necessary and sufficient for consensus.
    Exact,
    /// Verdict PASS guarantees consensus; FAIL is inconclusive.
    SufficientOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockVerdict {
    pub follower: usize,
    pub block: String,
    #[serde(flatten)]
    pub hurwitz: HurwitzVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailVerdict {
    #[serde(flatten)]
    pub hurwitz: HurwitzVerdict,
    pub s: usize,
    pub h: usize,
    pub rank_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GerschgorinEntry {
    pub follower: usize,
    pub radius: f64,
    pub region_clear: bool,
    pub worst_point: [f64; 2],
    pub worst_slack: f64,
    pub extent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: CriterionKind,
    pub protocol: ProtocolKind,
    pub per_block: Vec<BlockVerdict>,
    pub tail_block: TailVerdict,
    /// Block Gerschgorin regions (all-neighbors protocol only).
    pub gerschgorin: Option<Vec<GerschgorinEntry>>,
    /// Direct eigenvalue test of the follower matrix (all-neighbors only).
    pub direct_test: Option<HurwitzVerdict>,
    /// `direct_test && tail`, the exact verdict the sufficient test
    /// approximates (all-neighbors only).
    pub exact_verdict: Option<bool>,
    /// Hurwitz test of the whole auxiliary matrix.
    pub auxiliary: HurwitzVerdict,
    pub overall: bool,
    pub tolerances: Tolerances,
}

impl CriterionReport {
    pub fn failing_followers(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .per_block
            .iter()
            .filter(|b| !b.hurwitz.verdict)
            .map(|b| b.follower)
            .collect();
        if let Some(g) = &self.gerschgorin {
            out.extend(g.iter().filter(|e| !e.region_clear).map(|e| e.follower));
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn tail_verdict(reduced: &ReducedSystem, tol: &Tolerances) -> Result<TailVerdict> {
    Ok(TailVerdict {
        hurwitz: reduction::is_hurwitz(&reduced.tail(), tol.hurwitz_margin)?,
        s: reduced.s,
        h: reduced.h,
        rank_tolerance: reduced.rank_tolerance,
    })
}

/// Exact criterion for the tree protocol.
pub fn check_theorem1(
    system: &ValidatedSystem,
    tree: &SpanningTree,
    gains: &GainSet,
    tol: &Tolerances,
) -> Result<CriterionReport> {
    gains.check_against(system)?;
    let mut per_block = Vec::with_capacity(system.follower_count());
    for i in 1..=system.follower_count() {
        let block = dst_diagonal_block(system, tree, gains, i);
        per_block.push(BlockVerdict {
            follower: i,
            block: format!("A_{i} - B_{i} G_{i} - B_{i} K_{i} W_{i},{}", tree.parent(i)),
            hurwitz: reduction::is_hurwitz(&block, tol.hurwitz_margin)?,
        });
    }
    let reduced = reduction::reduce(system, tree, gains, ProtocolKind::Dst, tol)?;
    let tail_block = tail_verdict(&reduced, tol)?;
    let auxiliary = reduction::is_hurwitz(&reduced.mbar, tol.hurwitz_margin)?;
    let overall = per_block.iter().all(|b| b.hurwitz.verdict) && tail_block.hurwitz.verdict;
    Ok(CriterionReport {
        criterion: CriterionKind::Exact,
        protocol: ProtocolKind::Dst,
        per_block,
        tail_block,
        gerschgorin: None,
        direct_test: None,
        exact_verdict: None,
        auxiliary,
        overall,
        tolerances: *tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowSumNorms {
    /// `max_i sum_j |h_ij|`, the induced infinity norm.
    pub max_row_sum: f64,
    pub min_row_sum: f64,
}

pub fn row_sum_norms<T: ComplexField<RealField = f64>>(h: &DMatrix<T>) -> RowSumNorms {
    if h.nrows() == 0 {
        return RowSumNorms {
            max_row_sum: 0.0,
            min_row_sum: 0.0,
        };
    }
    let sums: Vec<f64> = h
        .row_iter()
        .map(|row| row.iter().map(|x| x.clone().modulus()).sum())
        .collect();
    RowSumNorms {
        max_row_sum: sums.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_row_sum: sums.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// `1 / ||H^{-1}||_inf`, zero for singular `H`. Never exceeds the smallest
/// absolute row sum of `H`.
pub fn inverse_norm_bound(h: &DMatrix<Complex64>) -> f64 {
    match h.clone().try_inverse() {
        Some(inv) => {
            let norm = row_sum_norms(&inv).max_row_sum;
            if norm.is_finite() && norm > 0.0 {
                1.0 / norm
            } else {
                0.0
            }
        }
        None => 0.0,
    }
}

/// `A_i' - B_i'` with `B_i' = B_i K_i (sum of follower in-weights + D_i)`.
pub fn gerschgorin_block(system: &ValidatedSystem, gains: &GainSet, follower: usize) -> DMatrix<f64> {
    let agent = system.agent(follower);
    let total = total_in_weight(system, follower);
    &agent.a - &agent.b * gains.g(follower) - &agent.b * gains.k(follower) * total
}

/// `R_i = sum over follower in-neighbors j of ||B_i K_i W_ij||_inf`.
pub fn gerschgorin_radius(system: &ValidatedSystem, gains: &GainSet, follower: usize) -> f64 {
    let agent = system.agent(follower);
    let bk = &agent.b * gains.k(follower);
    system
        .graph()
        .in_neighbors(follower)
        .filter(|(j, _)| *j != 0)
        .map(|(_, w)| row_sum_norms(&(&bk * w)).max_row_sum)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub divisions: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { divisions: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionCheck {
    pub clear: bool,
    /// Grid point with the smallest slack `nu(A - lambda I) - R`.
    pub worst_point: Complex64,
    pub worst_slack: f64,
    /// Half-width `Omega` of the scanned box.
    pub extent: f64,
}

/// Checks that the block Gerschgorin region `{lambda : nu(A - lambda I) <= R}`
/// stays clear of the closed right half plane.
///
/// The eigenvalues of `A` always belong to the region (`nu` vanishes there)
/// and every connected piece of the region contains one of them, so they are
/// tested exactly first. The rest of the region is found by scanning
/// `sigma in [0, Omega]`, `omega in [-Omega, Omega]`. Outside
/// `|lambda| <= Omega = ||A||_inf + R + 1` we have
/// `nu(A - lambda I) >= |lambda| - ||A||_inf > R`, so the box covers the whole
/// right-half-plane part of the region. A piece that enters the right half
/// plane from a stable eigenvalue must cross the imaginary axis, so the
/// smallest slack on the axis is additionally refined between grid points.
/// The verdict is exact only up to that resolution.
pub fn region_clear_of_rhp(
    a_block: &DMatrix<f64>,
    radius: f64,
    grid: GridSpec,
    margin: f64,
) -> Result<RegionCheck> {
    let n = a_block.nrows();
    let extent = row_sum_norms(a_block).max_row_sum + radius + 1.0;
    let base: DMatrix<Complex64> = a_block.map(|x| Complex64::new(x, 0.0));
    let slack_at = |lambda: Complex64| {
        let mut work = base.clone();
        for d in 0..n {
            work[(d, d)] -= lambda;
        }
        inverse_norm_bound(&work) - radius
    };

    let rightmost = linalg::eigenvalues(a_block)?
        .into_iter()
        .max_by(|a, b| a.re.total_cmp(&b.re));
    if let Some(eig) = rightmost {
        if eig.re >= -margin {
            return Ok(RegionCheck {
                clear: false,
                worst_point: eig,
                worst_slack: -radius,
                extent,
            });
        }
    }

    let divisions = grid.divisions.max(1);
    let step = extent / divisions as f64;
    let mut worst = (f64::INFINITY, Complex64::new(0.0, 0.0));
    let mut axis_best = (f64::INFINITY, 0.0);
    for si in 0..=divisions {
        let sigma = si as f64 * step;
        for wi in 0..=(2 * divisions) {
            let omega = -extent + wi as f64 * step;
            let lambda = Complex64::new(sigma, omega);
            let slack = slack_at(lambda);
            if slack < worst.0 {
                worst = (slack, lambda);
            }
            if si == 0 && slack < axis_best.0 {
                axis_best = (slack, omega);
            }
        }
    }

    // golden-section search for the axis minimum around the best grid point
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (axis_best.1 - step, axis_best.1 + step);
    let on_axis = |omega: f64| slack_at(Complex64::new(0.0, omega));
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (on_axis(c), on_axis(d));
    for _ in 0..40 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = on_axis(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = on_axis(d);
        }
    }
    for (slack, omega) in [(fc, c), (fd, d)] {
        if slack < worst.0 {
            worst = (slack, Complex64::new(0.0, omega));
        }
    }

    Ok(RegionCheck {
        clear: worst.0 > margin,
        worst_point: worst.1,
        worst_slack: worst.0,
        extent,
    })
}

/// Sufficient criterion for the all-neighbors protocol, reported together
/// with the exact eigenvalue test it approximates.
pub fn check_theorem2(
    system: &ValidatedSystem,
    tree: &SpanningTree,
    gains: &GainSet,
    tol: &Tolerances,
) -> Result<CriterionReport> {
    gains.check_against(system)?;
    let grid = GridSpec {
        divisions: tol.gerschgorin_grid,
    };
    let mut per_block = Vec::new();
    let mut entries = Vec::new();
    for i in 1..=system.follower_count() {
        let block = gerschgorin_block(system, gains, i);
        let radius = gerschgorin_radius(system, gains, i);
        let region = region_clear_of_rhp(&block, radius, grid, tol.hurwitz_margin)?;
        per_block.push(BlockVerdict {
            follower: i,
            block: format!("A'_{i} - B'_{i}"),
            hurwitz: reduction::is_hurwitz(&block, tol.hurwitz_margin)?,
        });
        entries.push(GerschgorinEntry {
            follower: i,
            radius,
            region_clear: region.clear,
            worst_point: [region.worst_point.re, region.worst_point.im],
            worst_slack: region.worst_slack,
            extent: region.extent,
        });
    }
    let reduced = reduction::reduce(system, tree, gains, ProtocolKind::AllNeighbors, tol)?;
    let tail_block = tail_verdict(&reduced, tol)?;
    let direct = reduction::is_hurwitz(&reduced.closed.follower_block(), tol.hurwitz_margin)?;
    let auxiliary = reduction::is_hurwitz(&reduced.mbar, tol.hurwitz_margin)?;
    let overall = tail_block.hurwitz.verdict && entries.iter().all(|e| e.region_clear);
    Ok(CriterionReport {
        criterion: CriterionKind::SufficientOnly,
        protocol: ProtocolKind::AllNeighbors,
        per_block,
        exact_verdict: Some(direct.verdict && tail_block.hurwitz.verdict),
        tail_block,
        gerschgorin: Some(entries),
        direct_test: Some(direct),
        auxiliary,
        overall,
        tolerances: *tol,
    })
}

/// Dispatches to the criterion matching the protocol.
pub fn check(
    system: &ValidatedSystem,
    tree: &SpanningTree,
    gains: &GainSet,
    kind: ProtocolKind,
    tol: &Tolerances,
) -> Result<CriterionReport> {
    match kind {
        ProtocolKind::Dst => check_theorem1(system, tree, gains, tol),
        ProtocolKind::AllNeighbors => check_theorem2(system, tree, gains, tol),
    }
}

/// Original-label tree for callers that only need the default extraction.
pub fn default_tree(system: &ValidatedSystem) -> Result<SpanningTree> {
    model::find_spanning_tree(system.graph())
}
