use num_bigint::BigUint;
use proptest::prelude::*;

use region_atlas::arrangement::{exact_count_multi, exact_count_one_layer, CountOptions};
use region_atlas::bounds::{binom_sum, kset_count, multi_lower, multi_upper, naive_bound, one_layer_max};
use region_atlas::gcn::{forward, init_kaiming, pattern, GcnSpec, Parameters};
use region_atlas::graph::{normalize, Fixture, Graph};
use region_atlas::linalg::Matrix;
use region_atlas::render::{rasterize_slice, SliceSpec};
use region_atlas::sampler::{estimate_regions, InputDistribution, SamplingConfig};
use region_atlas::witness::sawtooth_fold;

fn fixture() -> impl Strategy<Value = Fixture> {
    prop::sample::select(Fixture::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bound_chain(d in 1usize..6, n in 1usize..4, n1 in 1usize..8) {
        let opt = one_layer_max(d, n, n1);
        prop_assert!(opt <= binom_sum(d * n, d * n1));
        prop_assert!(binom_sum(d * n, d * n1) <= naive_bound(d * n1));
    }

    #[test]
    fn sawtooth_stays_in_range(p in 1usize..8, c in 0.01f64..100.0, u in 0.0f64..=1.0) {
        let f = sawtooth_fold(p, c, u * c);
        prop_assert!(f >= -1e-9 * c && f <= c * (1.0 + 1e-9));
    }

    #[test]
    fn graph_json_round_trip(nodes in 1usize..7, raw in prop::collection::vec((0usize..7, 0usize..7), 0..10)) {
        let mut edges = std::collections::BTreeSet::new();
        for (i, j) in raw {
            let (i, j) = (i % nodes, j % nodes);
            if i != j {
                edges.insert((i.min(j), i.max(j)));
            }
        }
        let g = Graph::new(nodes, edges).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        prop_assert_eq!(Graph::from_json_str(&json).unwrap(), g);
    }

    #[test]
    fn one_layer_count_respects_bounds(f in fixture(), n in 1usize..3, n1 in 1usize..3, seed in any::<u64>()) {
        let adj = normalize(&f.graph());
        let spec = GcnSpec::new(vec![n, n1]).unwrap();
        let p = init_kaiming(&spec, seed);
        let exact = exact_count_one_layer(&adj, &p.weights[0], &p.biases[0], 1e4).unwrap();
        prop_assert!(exact <= one_layer_max(adj.d_star, n, n1));
        prop_assert!(exact <= kset_count(&adj, &p.weights[0]).unwrap());
        prop_assert!(exact >= BigUint::from(1u8));
    }

    #[test]
    fn sampled_patterns_are_exact_regions(f in fixture(), seed in any::<u64>()) {
        let adj = normalize(&f.graph());
        let spec = GcnSpec::new(vec![1, 2, 2]).unwrap();
        let params = init_kaiming(&spec, seed);
        let exact = exact_count_multi(&spec, &adj, &params, CountOptions::default()).unwrap();
        let cfg = SamplingConfig::new(InputDistribution::Normal { sigma: 2.0 }, 4000, seed);
        let est = estimate_regions(&spec, &adj, &params, &cfg).unwrap();
        prop_assert!(est.distinct_patterns <= exact.count);
        prop_assert!(exact.count <= multi_upper(&spec, &adj));
    }

    #[test]
    fn region_witnesses_reproduce_their_patterns(seed in any::<u64>()) {
        let adj = normalize(&Fixture::Path3.graph());
        let spec = GcnSpec::new(vec![1, 2, 1]).unwrap();
        let params = init_kaiming(&spec, seed);
        let exact = exact_count_multi(&spec, &adj, &params, CountOptions::default()).unwrap();
        for (region, pat) in exact.regions.iter().zip(&exact.patterns) {
            let x0 = Matrix::from_vec(3, 1, region.witness.clone());
            let trace = forward(&spec, &adj, &params, &x0).unwrap();
            prop_assert_eq!(&pattern(&trace.preacts, 0.0), pat);
        }
    }

    #[test]
    fn slice_sees_no_more_than_exist(seed in any::<u64>()) {
        let adj = normalize(&Fixture::Path3.graph());
        let spec = GcnSpec::new(vec![1, 2, 2]).unwrap();
        let params = init_kaiming(&spec, seed);
        let exact = exact_count_multi(&spec, &adj, &params, CountOptions::default()).unwrap().count;
        let slice = SliceSpec { grid: 40, ..SliceSpec::random(3, seed) };
        let img = rasterize_slice(&spec, &adj, &params, &slice).unwrap();
        prop_assert!(BigUint::from(img.distinct_patterns) <= exact);
        prop_assert_eq!(img.distinct_colors(), img.distinct_patterns);
    }
}

#[test]
fn lower_bound_below_upper_bound() {
    for f in Fixture::ALL {
        let adj = normalize(&f.graph());
        for widths in [vec![1, 1], vec![1, 3, 2], vec![2, 2, 3], vec![2, 4, 4, 1]] {
            let spec = GcnSpec::new(widths).unwrap();
            let lower = multi_lower(&spec, &adj, adj.rank()).unwrap();
            assert!(lower <= multi_upper(&spec, &adj), "{f} {spec}");
        }
    }
}

#[test]
fn zero_weights_give_one_region() {
    let adj = normalize(&Fixture::Star3.graph());
    let spec = GcnSpec::new(vec![2, 3, 2]).unwrap();
    let mut params = Parameters::zeros(&spec);
    params.biases = vec![vec![1.0, -1.0, 0.5], vec![0.3, -0.2]];
    let c = exact_count_multi(&spec, &adj, &params, CountOptions::default()).unwrap();
    assert_eq!(c.count, BigUint::from(1u8));
}

// Every subset of the rank-one normals, ranked by SVD.
fn kset_oracle(adj: &region_atlas::graph::NormalizedAdjacency, w: &Matrix) -> u64 {
    let mut normals = Vec::new();
    for i in 0..adj.a_tilde.rows() {
        for j in 0..w.cols() {
            let col = w.column(j);
            normals.push(adj.a_tilde.row(i).iter().flat_map(|&a| col.iter().map(move |&x| a * x)).collect::<Vec<f64>>());
        }
    }
    (0u32..1 << normals.len())
        .filter(|&mask| {
            let rows: Vec<&[f64]> = (0..normals.len()).filter(|k| mask >> k & 1 == 1).map(|k| normals[k].as_slice()).collect();
            rows.is_empty() || Matrix::from_rows(&rows).unwrap().numeric_rank(1e-9) == rows.len()
        })
        .count() as u64
}

#[test]
fn kset_matches_subset_enumeration() {
    let adj = normalize(&Fixture::Path3.graph());
    let cases = [
        // one input feature: the two normals per node are always parallel
        (Matrix::from_rows(&[[1.0, 1.0]]).unwrap(), 27),
        (Matrix::from_rows(&[[1.0, 0.3, 1.0], [0.5, 2.0, 0.5]]).unwrap(), 0),
        (Matrix::from_rows(&[[1.0, 0.3, -0.7], [0.5, 2.0, 0.4]]).unwrap(), 343),
    ];
    for (w, expected) in cases {
        let k = kset_count(&adj, &w).unwrap();
        assert_eq!(k, BigUint::from(kset_oracle(&adj, &w)));
        if expected > 0 {
            assert_eq!(k, BigUint::from(expected as u32));
        } else {
            assert!(k < one_layer_max(adj.d_star, 2, 3), "{k}");
        }
    }
}
