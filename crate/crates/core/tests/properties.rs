use consensus_core::fixtures::{self, LeaderClass, RandomSpec};
use consensus_core::linalg::{eigenvalues, spectrum_distance};
use consensus_core::model::{find_spanning_tree, inverse_permutation, SpanningTree};
use consensus_core::reduction::{self, ProtocolKind};
use consensus_core::simulate::{self, SimulationConfig, SimulationTrace};
use consensus_core::synthesis::{self, GainSet};
use consensus_core::{Tolerances, ValidatedSystem};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const CLASSES: [LeaderClass; 3] = [
    LeaderClass::StableAutonomous,
    LeaderClass::StableForced,
    LeaderClass::Unstable,
];

fn instance(rng: &mut ChaCha8Rng, leader: LeaderClass, extra_scale: f64) -> ValidatedSystem {
    let followers = rng.random_range(1..=4);
    let spec = RandomSpec {
        followers,
        n: 2,
        m: 1,
        leader,
        extra_edge_prob: 0.4,
        extra_edge_scale: extra_scale,
    };
    fixtures::random_system(rng, &spec)
}

fn random_gains(rng: &mut ChaCha8Rng, sys: &ValidatedSystem, scale: f64) -> GainSet {
    let (n, m, n_f) = (sys.n(), sys.m(), sys.follower_count());
    let draw = |rng: &mut ChaCha8Rng| DMatrix::from_fn(m, n, |_, _| scale * rng.random_range(-1.0..1.0));
    let g = (0..n_f).map(|_| draw(rng)).collect();
    let k = (0..n_f).map(|_| draw(rng)).collect();
    GainSet::new(g, k).unwrap()
}

fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    order
}

/// The same tree expressed in the relabeled ids.
fn relabeled_tree(tree: &SpanningTree, order: &[usize]) -> SpanningTree {
    let position = inverse_permutation(order, order.len()).unwrap();
    let map = |id: usize| if id == 0 { 0 } else { position[id - 1] };
    SpanningTree::from_parents(order.iter().map(|&old| map(tree.parent(old))).collect()).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-8 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn relabel_then_unrelabel_is_identity(seed in any::<u64>()) {
        let mut rng = fixtures::rng(seed);
        let sys = instance(&mut rng, CLASSES[(seed % 3) as usize], 0.5);
        let gains = random_gains(&mut rng, &sys, 2.0);
        let order = shuffled(&mut rng, sys.follower_count());
        let back = inverse_permutation(&order, order.len()).unwrap();
        prop_assert_eq!(sys.relabeled(&order).unwrap().relabeled(&back).unwrap(), sys);
        prop_assert_eq!(gains.relabeled(&order).relabeled(&back), gains);
    }

    #[test]
    fn tree_criterion_ignores_follower_numbering(seed in any::<u64>()) {
        let mut rng = fixtures::rng(seed);
        let sys = instance(&mut rng, CLASSES[(seed % 3) as usize], 0.5);
        let gains = random_gains(&mut rng, &sys, 3.0);
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let order = shuffled(&mut rng, sys.follower_count());
        let sys2 = sys.relabeled(&order).unwrap();
        let tree2 = relabeled_tree(&tree, &order);
        let gains2 = gains.relabeled(&order);
        let tol = Tolerances::default();
        let a = synthesis::check_theorem1(&sys, &tree, &gains, &tol).unwrap();
        let b = synthesis::check_theorem1(&sys2, &tree2, &gains2, &tol).unwrap();
        prop_assert_eq!(a.overall, b.overall);
        prop_assert_eq!(a.tail_block.hurwitz.verdict, b.tail_block.hurwitz.verdict);
        prop_assert_eq!(a.tail_block.h, b.tail_block.h);
        for (p, &old) in order.iter().enumerate() {
            let x = a.per_block[old - 1].hurwitz.spectral_abscissa;
            let y = b.per_block[p].hurwitz.spectral_abscissa;
            prop_assert!(close(x, y), "follower {}: {} vs {}", old, x, y);
        }
    }

    #[test]
    fn reduction_identities_hold(seed in any::<u64>(), all_neighbors in any::<bool>()) {
        let mut rng = fixtures::rng(seed);
        let sys = instance(&mut rng, CLASSES[(seed % 3) as usize], 0.5);
        let gains = random_gains(&mut rng, &sys, 2.0);
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let kind = if all_neighbors { ProtocolKind::AllNeighbors } else { ProtocolKind::Dst };
        let r = reduction::reduce(&sys, &tree, &gains, kind, &Tolerances::default()).unwrap();

        let l1l3 = &r.l1 * &r.l3;
        prop_assert!((l1l3 - DMatrix::identity(r.h, r.h)).abs().max() <= 1e-10);

        let m = r.closed.follower_block();
        let scale = 1.0 + m.abs().max();
        let d = spectrum_distance(&eigenvalues(&r.abar).unwrap(), &eigenvalues(&m).unwrap(), 1e-5 * scale);
        prop_assert!(d <= 1e-8 * scale, "Abar vs M: {}", d);

        let mut union = eigenvalues(&r.abar).unwrap();
        union.extend(eigenvalues(&r.tail()).unwrap());
        let d = spectrum_distance(&eigenvalues(&r.mbar).unwrap(), &union, 1e-5 * scale);
        prop_assert!(d <= 1e-8 * scale, "Mbar vs union: {}", d);
    }

    #[test]
    fn auxiliary_verdict_matches_tree_criterion(seed in any::<u64>()) {
        let mut rng = fixtures::rng(seed);
        let sys = instance(&mut rng, CLASSES[(seed % 3) as usize], 0.5);
        let gains = random_gains(&mut rng, &sys, 3.0);
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let report = synthesis::check_theorem1(&sys, &tree, &gains, &Tolerances::default()).unwrap();
        let marginal = report.auxiliary.marginal
            || report.tail_block.hurwitz.marginal
            || report.per_block.iter().any(|b| b.hurwitz.marginal);
        prop_assume!(!marginal);
        prop_assert_eq!(report.auxiliary.verdict, report.overall);
    }

    #[test]
    fn designed_blocks_sit_on_their_targets(seed in any::<u64>(), rate in 0.5f64..3.0) {
        let mut rng = fixtures::rng(seed);
        let sys = instance(&mut rng, CLASSES[(seed % 3) as usize], 0.5);
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let g = random_gains(&mut rng, &sys, 1.0).g_all().to_vec();
        let gains = synthesis::design_gains(&sys, &tree, Some(g), rate).unwrap();
        let targets = synthesis::default_targets(sys.n(), rate);
        for i in 1..=sys.follower_count() {
            let block = synthesis::dst_diagonal_block(&sys, &tree, &gains, i);
            let d = spectrum_distance(&eigenvalues(&block).unwrap(), &targets, 1e-3 * rate);
            prop_assert!(d <= 1e-6 * rate, "follower {}: {}", i, d);
        }
    }

    #[test]
    fn block_regions_contain_every_eigenvalue(seed in any::<u64>()) {
        let mut rng = fixtures::rng(seed);
        let sys = instance(&mut rng, CLASSES[(seed % 3) as usize], 0.3);
        let gains = if seed % 2 == 0 {
            // place the poles of each diagonal block, then let the regions decide
            let rate = rng.random_range(1.0..3.0);
            let mut gains = GainSet::zeros(sys.follower_count(), sys.n(), sys.m());
            for i in 1..=sys.follower_count() {
                let w = synthesis::total_in_weight(&sys, i);
                gains.set_k(i, synthesis::design_k_dst(sys.agent(i), gains.g(i), &w, rate).unwrap());
            }
            gains
        } else {
            random_gains(&mut rng, &sys, 2.0)
        };
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let closed = reduction::closed_loop_matrix(&sys, &tree, &gains, ProtocolKind::AllNeighbors).unwrap();
        let n = sys.n();
        for lambda in eigenvalues(&closed.follower_block()).unwrap() {
            let inside = (1..=sys.follower_count()).any(|i| {
                let block = synthesis::gerschgorin_block(&sys, &gains, i);
                let mut shifted: DMatrix<Complex64> = block.map(|x| Complex64::new(x, 0.0));
                for d in 0..n {
                    shifted[(d, d)] -= lambda;
                }
                let radius = synthesis::gerschgorin_radius(&sys, &gains, i);
                synthesis::inverse_norm_bound(&shifted) <= radius + 1e-9 * (1.0 + radius)
            });
            prop_assert!(inside, "eigenvalue {} outside every region", lambda);
        }

        let report = synthesis::check_theorem2(&sys, &tree, &gains, &Tolerances::default()).unwrap();
        let regions_clear = report.gerschgorin.as_ref().unwrap().iter().all(|e| e.region_clear);
        if regions_clear {
            prop_assert!(report.direct_test.unwrap().verdict);
        }
    }

    #[test]
    fn tree_edge_differences_obey_the_triangle_inequality(seed in any::<u64>()) {
        let mut rng = fixtures::rng(seed);
        let sys = instance(&mut rng, CLASSES[(seed % 3) as usize], 0.5);
        let gains = random_gains(&mut rng, &sys, 1.0);
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let states = fixtures::random_initial_states(&mut rng, sys.follower_count() + 1, sys.n());
        let config = SimulationConfig { t_end: 1.0, dt: 0.01, ..SimulationConfig::new(states) };
        let trace = simulate::simulate(&sys, &tree, &gains, ProtocolKind::Dst, &config).unwrap();
        let ys = simulate::y_trajectory(&trace, &tree);
        let n = sys.n();
        let n_f = sys.follower_count();
        for (t, y) in ys.iter().enumerate() {
            let err = |id: usize| if id == 0 { 0.0 } else { trace.errors[t][id - 1] };
            for i in 1..=n_f {
                let yi = y.rows((i - 1) * n, n).norm();
                let bound = err(tree.parent(i)) + err(i);
                prop_assert!(yi <= bound * (1.0 + 1e-12) + 1e-12);
            }
            let max = trace.errors[t].iter().copied().fold(0.0, f64::max);
            prop_assert!(y.norm() <= 2.0 * (n_f as f64).sqrt() * max * (1.0 + 1e-12) + 1e-12);
        }
    }
}

/// The aggregate bound `||y|| <= N max_i ||x_i - x_0||` fails for a two-link
/// chain: errors of 1 and -1 give `||y|| = sqrt(5) > 2`.
#[test]
fn chain_of_two_exceeds_n_times_max_error() {
    let tree = SpanningTree::from_parents(vec![0, 1]).unwrap();
    let trace = SimulationTrace {
        times: vec![0.0],
        states: vec![DVector::from_vec(vec![0.0, 1.0, -1.0])],
        errors: vec![vec![1.0, 1.0]],
        rel_errors: vec![vec![1.0, 1.0]],
        diverged: false,
        n: 1,
    };
    let y = &simulate::y_trajectory(&trace, &tree)[0];
    assert!((y.norm() - 5f64.sqrt()).abs() < 1e-15);
    assert!(y.norm() > 2.0);
}

#[test]
fn stacked_route_agrees_on_random_instances() {
    for seed in 0..12u64 {
        let mut rng = fixtures::rng(seed);
        let sys = instance(&mut rng, CLASSES[(seed % 3) as usize], 0.5);
        let gains = random_gains(&mut rng, &sys, 1.0);
        let tree = find_spanning_tree(sys.graph()).unwrap();
        let states = fixtures::random_initial_states(&mut rng, sys.follower_count() + 1, sys.n());
        let config = SimulationConfig {
            t_end: 3.0,
            ..SimulationConfig::new(states)
        };
        for kind in [ProtocolKind::Dst, ProtocolKind::AllNeighbors] {
            let dev = simulate::stacked_equivalence(&sys, &tree, &gains, kind, &config).unwrap();
            assert!(dev <= 1e-8, "seed {seed} {kind}: {dev}");
        }
    }
}
