mod common;

use common::*;
use ndarray::{Array1, Array2, Axis};
use popgcn::dataset::{AcquisitionRecord, FeatureMatrix, Label};
use popgcn::popgraph::{self, GraphSpec, Measure, SimMode, Strategy};
use popgcn::spectral::{self, Storage};
use proptest::prelude::*;
use rand::Rng;

fn max_abs(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

// Straight from the definition, no shared helpers.
fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn random_population(seed: u64, n: usize, c: usize) -> (FeatureMatrix, Vec<AcquisitionRecord>) {
    let mut rng = rng(seed);
    let records = (0..n)
        .map(|i| AcquisitionRecord {
            acquisition_id: format!("a{i}"),
            subject_id: format!("s{}", i / 2),
            label: Label::Known(rng.random_range(0..2)),
            site: ["A", "B", "C"][rng.random_range(0..3)].into(),
            sex: ["M", "F"][rng.random_range(0..2)].into(),
            age: rng.random_range(20..30) as f64,
            gene_flag: [None, Some("0".to_string()), Some("1".to_string())][rng.random_range(0..3)].clone(),
        })
        .collect();
    (
        FeatureMatrix::from_array(random_matrix(&mut rng, n, c)).unwrap(),
        records,
    )
}

fn connected_random_graph(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> popgraph::PopulationGraph {
    let g = random_graph(rng, n, 0.3);
    let mut edges = g.edges().to_vec();
    for v in 1..n {
        if g.weight(v - 1, v) == 0.0 {
            edges.push(popgraph::Edge {
                u: v - 1,
                v,
                weight: 0.5,
            });
        }
    }
    popgraph::PopulationGraph::new(n, edges, GraphSpec::default()).unwrap()
}

#[test]
fn phenotypic_weights_match_brute_force() {
    let (features, records) = random_population(3, 14, 9);
    let spec = GraphSpec {
        measures: vec![Measure::Sex, Measure::Site, Measure::Age, Measure::Gene],
        sigma: Some(0.7),
        ..GraphSpec::default()
    };
    let g = popgraph::build_graph(&features, &records, &spec, None).unwrap();
    let x = features.values();
    for u in 0..records.len() {
        for v in (u + 1)..records.len() {
            let (a, b) = (&records[u], &records[v]);
            let gamma = u32::from(a.sex == b.sex)
                + u32::from(a.site == b.site)
                + u32::from((a.age - b.age).abs() < 2.0)
                + u32::from(a.gene_flag.is_some() && a.gene_flag == b.gene_flag);
            let rho = 1.0 - pearson(&x.row(u).to_vec(), &x.row(v).to_vec());
            let expected = f64::from(gamma) * (-rho * rho / (2.0 * 0.49)).exp();
            assert!((g.weight(u, v) - expected).abs() < 1e-12, "pair ({u},{v})");
        }
    }
}

#[test]
fn longitudinal_weights_follow_subjects() {
    let (features, records) = random_population(4, 12, 5);
    let spec = GraphSpec {
        measures: vec![Measure::Sex],
        sim_mode: SimMode::Longitudinal,
        lambda: 10.0,
        ..GraphSpec::default()
    };
    let g = popgraph::build_graph(&features, &records, &spec, None).unwrap();
    for u in 0..12 {
        for v in (u + 1)..12 {
            let same_subject = records[u].subject_id == records[v].subject_id;
            let same_sex = records[u].sex == records[v].sex;
            let expected = if same_subject && same_sex { 10.0 } else { 0.0 };
            assert_eq!(g.weight(u, v), expected);
        }
    }
}

#[test]
fn knn_with_all_neighbours_is_the_weighted_complete_graph() {
    let (features, _) = random_population(5, 11, 6);
    let knn = popgraph::build_knn_graph(&features, 10, Some(0.8), None).unwrap();
    let all = popgraph::build_complete_graph(11, true, Some(&features), Some(0.8), None).unwrap();
    assert_eq!(knn.n_edges(), 55);
    for (a, b) in knn.edges().iter().zip(all.edges()) {
        assert_eq!((a.u, a.v, a.weight), (b.u, b.v, b.weight));
    }
}

#[test]
fn knn_keeps_each_nodes_nearest() {
    let (features, _) = random_population(6, 15, 8);
    let kernel = popgraph::KernelMatrix::compute(&features, Some(0.5), None).unwrap();
    let g = popgraph::knn_from_kernel(&kernel, 3).unwrap();
    for u in 0..15 {
        let mut ranked: Vec<usize> = (0..15).filter(|&v| v != u).collect();
        ranked.sort_by(|&a, &b| kernel.values[[u, b]].total_cmp(&kernel.values[[u, a]]));
        for &v in &ranked[..3] {
            assert!(g.weight(u, v) > 0.0, "node {u} lost neighbour {v}");
            assert_eq!(g.weight(u, v), g.weight(v, u));
        }
    }
}

#[test]
fn random_rewiring_preserves_count_and_weights() {
    let (features, records) = random_population(7, 30, 6);
    let reference = popgraph::build_graph(&features, &records, &GraphSpec::default(), None).unwrap();
    let a = popgraph::build_random_graph(&reference, 11).unwrap();
    let b = popgraph::build_random_graph(&reference, 11).unwrap();
    let c = popgraph::build_random_graph(&reference, 12).unwrap();
    assert_eq!(a.n_edges(), reference.n_edges());
    let sorted = |g: &popgraph::PopulationGraph| {
        let mut w: Vec<f64> = g.edges().iter().map(|e| e.weight).collect();
        w.sort_by(f64::total_cmp);
        w
    };
    assert_eq!(sorted(&a), sorted(&reference));
    assert_eq!(a, b);
    assert_ne!(a.edges(), c.edges());
}

#[test]
fn random_strategy_via_build_graph() {
    let (features, records) = random_population(8, 25, 6);
    let spec = GraphSpec {
        strategy: Strategy::Random,
        seed: 3,
        ..GraphSpec::default()
    };
    let pheno = popgraph::build_graph(&features, &records, &GraphSpec::default(), None).unwrap();
    let random = popgraph::build_graph(&features, &records, &spec, None).unwrap();
    assert_eq!(random.n_edges(), pheno.n_edges());
}

#[test]
fn graph_is_equivariant_under_node_permutation() {
    let (features, records) = random_population(9, 16, 7);
    let order: Vec<usize> = (0..16).rev().collect();
    let g = popgraph::build_graph(&features, &records, &GraphSpec::default(), None).unwrap();
    let pf = features.permute_rows(&order).unwrap();
    let pr: Vec<_> = order.iter().map(|&i| records[i].clone()).collect();
    let pg = popgraph::build_graph(&pf, &pr, &GraphSpec::default(), None).unwrap();
    for a in 0..16 {
        for b in 0..16 {
            assert!((g.weight(order[a], order[b]) - pg.weight(a, b)).abs() < 1e-12);
        }
    }
}

#[test]
fn nullspace_is_sqrt_degree_per_component() {
    let mut rng = rng(21);
    for _ in 0..10 {
        let g = connected_random_graph(&mut rng, 10);
        let l = spectral::normalized_laplacian(&g).to_dense();
        let (values, vectors) = spectral::dense_eigen(&l);
        assert!(values[0].abs() < 1e-8);
        assert!(values[1] > 1e-8, "connected graph has a single zero eigenvalue");
        let d: Array1<f64> = g.degrees().iter().map(|d| d.sqrt()).collect();
        let v0 = vectors.column(0);
        let cos = v0.dot(&d).abs() / d.dot(&d).sqrt();
        assert!((cos - 1.0).abs() < 1e-8);
    }
    let (g, _) = block_graph(&mut rng, 3);
    let l = spectral::normalized_laplacian(&g);
    let comp = g.components();
    let deg = g.degrees();
    for c in 0..3 {
        let v: Array1<f64> = (0..g.n_nodes())
            .map(|i| if comp[i] == c { deg[i].sqrt() } else { 0.0 })
            .collect();
        let lv = l.apply_vec(&v);
        assert!(lv.iter().all(|x| x.abs() < 1e-12));
    }
}

#[test]
fn difference_operator_is_combinatorial_laplacian() {
    let mut rng = rng(22);
    let g = random_graph(&mut rng, 6, 0.6);
    let w = g.adjacency();
    let d = Array2::from_diag(&w.sum_axis(Axis(1)));
    let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lx = (&d - &w).dot(&Array1::from(x.clone()));
    for i in 0..6 {
        assert!((spectral::laplacian_difference(&g, &x, i) - lx[i]).abs() < 1e-12);
    }
}

#[test]
fn lambda_max_matches_dense_eigensolver() {
    let mut rng = rng(23);
    for _ in 0..10 {
        let g = random_graph(&mut rng, 20, 0.3);
        let l = spectral::normalized_laplacian(&g);
        let est = spectral::estimate_lambda_max(&l);
        let exact = *spectral::dense_eigenvalues(&l).last().unwrap();
        assert!(!est.fallback);
        assert!((est.value - exact).abs() < 1e-5, "{} vs {exact}", est.value);
    }
    let k2 = popgraph::complete_from_kernel(2, None).unwrap();
    let est = spectral::estimate_lambda_max(&spectral::normalized_laplacian(&k2));
    assert!((est.value - 2.0).abs() < 1e-10);
}

#[test]
fn lambda_max_on_sparse_storage() {
    let mut rng = rng(24);
    let g = random_graph(&mut rng, 260, 0.02);
    let l = spectral::normalized_laplacian(&g);
    assert!(l.is_sparse());
    let est = spectral::estimate_lambda_max(&l);
    let exact = *spectral::dense_eigenvalues(&l).last().unwrap();
    assert!((est.value - exact).abs() < 1e-5);
}

#[test]
fn scaling_with_two_subtracts_identity() {
    let mut rng = rng(25);
    let g = random_graph(&mut rng, 12, 0.4);
    let l = spectral::normalized_laplacian(&g);
    let ls = spectral::scale_laplacian(&l, 2.0).unwrap();
    let expected = l.to_dense() - Array2::<f64>::eye(12);
    assert!(max_abs(&ls.to_dense(), &expected) < 1e-15);

    let k2 = popgraph::complete_from_kernel(2, None).unwrap();
    let (ls, _) = spectral::scaled_laplacian(&k2).unwrap();
    let d = ls.to_dense();
    assert!(max_abs(&d, &ndarray::array![[0.0, -1.0], [-1.0, 0.0]]) < 1e-10);
}

#[test]
fn low_order_bases() {
    let mut rng = rng(26);
    let g = random_graph(&mut rng, 9, 0.5);
    let (ls, _) = spectral::scaled_laplacian(&g).unwrap();
    let x = random_matrix(&mut rng, 9, 3);
    let b0 = spectral::chebyshev_basis(&ls, x.view(), 0);
    assert_eq!(b0.terms().len(), 1);
    assert_eq!(b0.terms()[0], x);
    let b1 = spectral::chebyshev_basis(&ls, x.view(), 1);
    assert_eq!(b1.terms()[0], x);
    assert!(max_abs(&b1.terms()[1], &ls.to_dense().dot(&x)) < 1e-14);
}

#[test]
fn filter_on_thirty_nodes_matches_oracle() {
    let mut rng = rng(27);
    let g = random_graph(&mut rng, 30, 0.2);
    let l = spectral::normalized_laplacian(&g);
    let lm = spectral::estimate_lambda_max(&l).value;
    let ls = spectral::scale_laplacian(&l, lm).unwrap();
    let x = Array1::from_iter((0..30).map(|_| rng.random_range(-1.0..1.0)));
    let theta: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let basis = spectral::chebyshev_basis(&ls, x.view().insert_axis(Axis(1)), 4);
    let direct = theta
        .iter()
        .zip(basis.terms())
        .fold(Array1::<f64>::zeros(30), |acc, (t, term)| {
            acc + &(term.column(0).to_owned() * *t)
        });
    let oracle = spectral::spectral_filter_oracle(&l, lm, &x, &theta).unwrap();
    assert!((&direct - &oracle).iter().all(|d| d.abs() < 1e-8));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_is_symmetric_with_bounded_spectrum(seed in any::<u64>(), n in 2usize..30, p in 0.0f64..0.6) {
        let mut rng = rng(seed);
        let g = random_graph(&mut rng, n, p);
        let l = spectral::normalized_laplacian(&g).to_dense();
        prop_assert!(max_abs(&l, &l.t().to_owned()) < 1e-15);
        let values = spectral::dense_eigen(&l).0;
        prop_assert!(values[0] > -1e-10 && values[n - 1] < 2.0 + 1e-10);
        let (ls, _) = spectral::scaled_laplacian(&g).unwrap();
        let scaled = spectral::dense_eigen(&ls.to_dense()).0;
        prop_assert!(scaled[0] >= -1.0 - 1e-6 && scaled[n - 1] <= 1.0 + 1e-6);
    }

    #[test]
    fn sparse_and_dense_storage_agree(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = rng(seed);
        let g = random_graph(&mut rng, n, 0.15);
        let dense = spectral::normalized_laplacian_with(&g, Storage::Dense);
        let sparse = spectral::normalized_laplacian_with(&g, Storage::Sparse);
        let x = random_matrix(&mut rng, n, 3);
        prop_assert!(max_abs(&dense.apply(x.view()), &sparse.apply(x.view())) < 1e-13);
    }

    #[test]
    fn edge_list_round_trips(seed in any::<u64>(), n in 2usize..25) {
        let mut rng = rng(seed);
        let g = random_graph(&mut rng, n, 0.3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.csv");
        popgraph::write_edge_list(&path, &g).unwrap();
        prop_assert_eq!(popgraph::read_edge_list(&path).unwrap(), g);
    }

    #[test]
    fn adjacency_is_symmetric_and_nonnegative(seed in any::<u64>(), n in 2usize..20) {
        let (features, records) = random_population(seed, n, 5);
        let g = popgraph::build_graph(&features, &records, &GraphSpec::default(), None).unwrap();
        let w = g.adjacency();
        prop_assert!(max_abs(&w, &w.t().to_owned()) == 0.0);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((0..n).all(|i| w[[i, i]] == 0.0));
    }
}
