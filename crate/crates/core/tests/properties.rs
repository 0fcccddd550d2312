use proptest::prelude::*;

use dfagnn::diagnostics::{accuracy, Angle};
use dfagnn::graph::{apply_operator_power, build_graph, normalized_operator, perturb, Attack, Graph};
use dfagnn::numkit::{matmul, spmm, DenseMatrix, Rng, SparseMatrix};
use dfagnn::pseudo_error::{compute_mask, rescale, spread_errors, SpreadConfig};

fn dense(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |data| DenseMatrix::new(rows, cols, data).unwrap())
}

/// Dense matrix with roughly `1 - density` of its entries zeroed.
fn sparse_dense(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(prop_oneof![3 => Just(0.0), 1 => -2.0f64..2.0], rows * cols)
        .prop_map(move |data| DenseMatrix::new(rows, cols, data).unwrap())
}

fn graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |pairs| {
            let edges: Vec<_> = pairs.into_iter().filter(|(u, v)| u != v).collect();
            build_graph(n, &edges).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spmm_matches_dense(a in sparse_dense(9, 7), x in dense(7, 4), y in dense(9, 3)) {
        let s = SparseMatrix::from_dense(&a);
        let want = matmul(&a, &x).unwrap();
        prop_assert!(spmm(&s, &x, false).unwrap().max_abs_diff(&want) < 1e-12);
        let want_t = matmul(&a.transpose(), &y).unwrap();
        prop_assert!(spmm(&s, &y, true).unwrap().max_abs_diff(&want_t) < 1e-12);
    }

    #[test]
    fn operator_is_symmetric_and_nonexpansive(g in graph(12), seed in any::<u64>()) {
        let s = normalized_operator(&g);
        prop_assert!(s.is_symmetric());
        let x = dfagnn::numkit::random_matrix(g.node_count(), 3, 1.0, &mut Rng::new(seed)).unwrap();
        let sx = spmm(&s, &x, false).unwrap();
        prop_assert!(sx.frobenius_norm() <= x.frobenius_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn operator_powers_compose(g in graph(10), a in 0usize..4, b in 0usize..4, seed in any::<u64>()) {
        let s = normalized_operator(&g);
        let x = dfagnn::numkit::random_matrix(g.node_count(), 2, 1.0, &mut Rng::new(seed)).unwrap();
        let direct = apply_operator_power(&s, &x, a + b).unwrap();
        let stepped = apply_operator_power(&s, &apply_operator_power(&s, &x, b).unwrap(), a).unwrap();
        prop_assert!(direct.max_abs_diff(&stepped) < 1e-12);
    }

    #[test]
    fn spreading_never_grows_norm(g in graph(10), alpha in 0.0f64..0.99, seed in any::<u64>()) {
        let s = normalized_operator(&g);
        let e = dfagnn::numkit::random_matrix(g.node_count(), 3, 1.0, &mut Rng::new(seed)).unwrap();
        let cfg = SpreadConfig { alpha, iterations: 30, epsilon: 0.5 };
        let z = spread_errors(&e, &s, &cfg).unwrap();
        prop_assert!(z.spectral_norm() <= e.spectral_norm() * (1.0 + 1e-9));
    }

    #[test]
    fn rescale_keeps_labeled_rows_and_fixes_norms(
        z in dense(8, 3),
        e in dense(8, 3),
        labeled in prop::collection::vec(any::<bool>(), 8),
    ) {
        prop_assume!(labeled.iter().any(|&l| l));
        let out = rescale(&z, &e, &labeled).unwrap();
        let count = labeled.iter().filter(|&&l| l).count() as f64;
        let eta: f64 = (0..8).filter(|&i| labeled[i]).map(|i| e.row_l1_norm(i)).sum::<f64>() / count;
        for i in 0..8 {
            if labeled[i] {
                prop_assert_eq!(out.row(i), e.row(i));
            } else if z.row_l1_norm(i) > 0.0 {
                prop_assert!((out.row_l1_norm(i) - eta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn labeled_rows_pass_the_mask(
        pred in prop::collection::vec(0.0f64..1.0, 12),
        classes in prop::collection::vec(0usize..3, 4),
        epsilon in 0.01f64..0.99,
    ) {
        let p = DenseMatrix::new(4, 3, pred).unwrap();
        let mut y = DenseMatrix::zeros(4, 3);
        for (i, &c) in classes.iter().enumerate() {
            y.set(i, c, 1.0);
        }
        let e = p.sub(&y).unwrap();
        prop_assert!(compute_mask(&p, &e, epsilon).unwrap().iter().all(|&m| m));
    }

    #[test]
    fn angles_are_scale_invariant(a in dense(4, 5), b in dense(4, 5), k in 0.01f64..100.0, j in 0.01f64..100.0) {
        let base = Angle::between(&a, &b).unwrap();
        let scaled = Angle::between(&a.scale(k), &b.scale(j)).unwrap();
        prop_assert!((base.degrees - scaled.degrees).abs() < 1e-6);
        prop_assert!((0.0..=180.0).contains(&base.degrees));
    }

    #[test]
    fn accuracy_ignores_index_order(
        pred in prop::collection::vec(0usize..3, 10),
        truth in prop::collection::vec(0usize..3, 10),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..10).collect();
        let a = accuracy(&pred, &truth, &idx).unwrap();
        idx.shuffle(&mut Rng::new(seed));
        prop_assert_eq!(a, accuracy(&pred, &truth, &idx).unwrap());
    }

    #[test]
    fn perturbation_counts(g in graph(14), rate in 0.0f64..1.0, seed in any::<u64>()) {
        let m = g.edge_count();
        let k = (rate * m as f64).floor() as usize;
        let mut rng = Rng::new(seed);
        let removed = perturb(&g, Attack::Remove, rate, &mut rng).unwrap();
        prop_assert_eq!(removed.edge_count(), m - k);
        prop_assert!(removed.edges().iter().all(|&(u, v)| g.has_edge(u, v)));
        let n = g.node_count();
        if m + k <= n * (n - 1) / 2 {
            let added = perturb(&g, Attack::Add, rate, &mut rng).unwrap();
            prop_assert_eq!(added.edge_count(), m + k);
            prop_assert!(g.edges().iter().all(|&(u, v)| added.has_edge(u, v)));
        }
        let flipped = perturb(&g, Attack::Flip, rate, &mut rng).unwrap();
        let changed = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| g.has_edge(u, v) != flipped.has_edge(u, v))
            .count();
        prop_assert_eq!(changed, k);
    }
}
