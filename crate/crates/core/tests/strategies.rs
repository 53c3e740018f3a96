use fanns::filter::InvertedLabelIndex;
use fanns::strategy::acorn::{acorn_search, build_acorn_gamma};
use fanns::workload::{gaussian_mixture, gen_fixed_length_labels, selectivity_labels};
use fanns::{
    exact_filtered_knn, recall_at_k, satisfies, Algorithm, Dataset, DistanceMetric, Embedding, FannsIndex,
    FilterBitmap, FilterConstraint, FilteredQuery, GroundTruth, LabelSet, Params,
};
use proptest::prelude::*;
use std::sync::OnceLock;

const M: DistanceMetric = DistanceMetric::SquaredEuclidean;

fn small() -> &'static (Dataset, Vec<FannsIndex>) {
    static CELL: OnceLock<(Dataset, Vec<FannsIndex>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let n = 1500;
        let vectors = gaussian_mixture(n, 8, 8, 0.5, 4).unwrap();
        let labels = gen_fixed_length_labels(n, 3, 3, 5).unwrap();
        let ds = Dataset::new(vectors, labels).unwrap();
        let built = Algorithm::ALL
            .iter()
            .map(|&a| FannsIndex::build(ds.clone(), a, &Params::new(), M, 1).unwrap())
            .collect();
        (ds, built)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn results_satisfy_the_filter(
        point in prop::collection::vec(-1.5f32..1.5, 8),
        labels in prop::collection::btree_set(0u32..9, 0..4),
        scenario in 0usize..4,
        k in 1usize..15,
        knob in 1usize..64,
    ) {
        let (ds, built) = small();
        let c = FilterConstraint::ALL[scenario];
        let labels = LabelSet::new(labels);
        prop_assume!(c != FilterConstraint::FixedLengthEquality || labels.len() == 3);
        let q = FilteredQuery::new(Embedding::new(point).unwrap(), labels, k, c).unwrap();
        for index in built.iter().filter(|i| i.algorithm().supports(c)) {
            let out = index.search(&q, knob).unwrap();
            prop_assert!(out.neighbors.len() <= k);
            prop_assert!(out.neighbors.windows(2).all(|w| w[0] <= w[1]), "{} unsorted", index.algorithm());
            let mut ids = out.ids();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), out.neighbors.len());
            for id in ids {
                prop_assert!(satisfies(&ds.labels[id as usize], &q.labels, c), "{} returned {}", index.algorithm(), id);
            }
        }
    }
}

#[test]
fn container_round_trip_preserves_search() {
    let (ds, built) = small();
    let q = FilteredQuery::new(
        Embedding::new(ds.vectors.get(3).to_vec()).unwrap(),
        ds.labels[3].clone(),
        5,
        FilterConstraint::Equality,
    )
    .unwrap();
    for index in built.iter().filter(|i| i.algorithm().supports(FilterConstraint::Equality)) {
        let loaded = FannsIndex::from_bytes(&index.to_bytes().unwrap()).unwrap();
        assert_eq!(loaded.metadata(), index.metadata());
        assert_eq!(loaded.search(&q, 20).unwrap(), index.search(&q, 20).unwrap());
    }
}

fn selectivity_dataset(n: usize, sigma: f64) -> (Dataset, Vec<FilteredQuery>) {
    let vectors = gaussian_mixture(n + 200, 32, 64, 0.6, 8).unwrap();
    let (labels, layout) = selectivity_labels(n + 200, 6, &[sigma], 9).unwrap();
    let all = Dataset::new(vectors, labels).unwrap();
    let queries = (n..n + 200)
        .map(|i| {
            let e = Embedding::new(all.vectors.get(i).to_vec()).unwrap();
            FilteredQuery::new(e, LabelSet::new([layout.a(0)]), 10, FilterConstraint::Containment).unwrap()
        })
        .collect();
    let ids: Vec<u32> = (0..n as u32).collect();
    (all.subset(&ids), queries)
}

fn mean_recall(ds: &Dataset, queries: &[FilteredQuery], mut search: impl FnMut(&FilteredQuery, &FilterBitmap) -> Vec<u32>) -> f64 {
    let index = InvertedLabelIndex::build(&ds.labels);
    let mut total = 0.0;
    for q in queries {
        let truth = GroundTruth::from_neighbors(&exact_filtered_knn(ds, &index, q, M).unwrap().neighbors);
        let bm = index.filter_map(&q.labels, q.constraint, &ds.labels).unwrap();
        total += recall_at_k(&search(q, &bm), &truth, q.k).unwrap();
    }
    total / queries.len() as f64
}

#[test]
fn two_hop_beats_one_hop_on_average() {
    let (ds, queries) = selectivity_dataset(5000, 0.05);
    let index = FannsIndex::build(ds.clone(), Algorithm::Acorn1, &Params::new(), M, 2).unwrap();
    let graph = index.layered_graph().unwrap();
    let run = |two_hop: bool| {
        mean_recall(&ds, &queries, |q, bm| {
            acorn_search(graph, &ds.vectors, M, q.vector(), bm, q.k, 40, two_hop).iter().map(|n| n.id).collect()
        })
    };
    let (one, two) = (run(false), run(true));
    assert!(two >= one, "two-hop {two} < one-hop {one}");
}

#[test]
fn denser_gamma_graph_recalls_at_least_as_well() {
    let (ds, queries) = selectivity_dataset(10_000, 0.05);
    let run = |gamma: usize| {
        let g = build_acorn_gamma(&ds.vectors, M, 16, gamma, 100, 2).unwrap();
        mean_recall(&ds, &queries, |q, bm| {
            acorn_search(&g, &ds.vectors, M, q.vector(), bm, q.k, 100, false).iter().map(|n| n.id).collect()
        })
    };
    let (base, dense) = (run(1), run(4));
    assert!(dense >= base, "gamma=4 {dense} < gamma=1 {base}");
}

#[test]
fn all_ones_bitmap_matches_plain_search() {
    let n = 1000;
    let vectors = gaussian_mixture(n + 100, 16, 16, 0.5, 3).unwrap();
    let all = Dataset::new(vectors, vec![LabelSet::new([0]); n + 100]).unwrap();
    let ids: Vec<u32> = (0..n as u32).collect();
    let ds = all.subset(&ids);
    let index = FannsIndex::build(ds.clone(), Algorithm::Acorn1, &Params::new(), M, 5).unwrap();
    let queries: Vec<FilteredQuery> = (n..n + 100)
        .map(|i| {
            let e = Embedding::new(all.vectors.get(i).to_vec()).unwrap();
            FilteredQuery::new(e, LabelSet::empty(), 10, FilterConstraint::Containment).unwrap()
        })
        .collect();
    let graph = index.layered_graph().unwrap();
    let ones = FilterBitmap::ones(n);
    let filtered = mean_recall(&ds, &queries, |q, _| {
        acorn_search(graph, &ds.vectors, M, q.vector(), &ones, q.k, 100, true).iter().map(|x| x.id).collect()
    });
    let plain = mean_recall(&ds, &queries, |q, _| {
        let pred = |_: u32| true;
        let params = fanns::graph::BeamParams::filtered(100, fanns::graph::HopMode::OneHop, &pred);
        graph.layered_search(|i| M.eval(q.vector(), ds.vectors.get(i as usize)), &params).results[..10]
            .iter()
            .map(|x| x.id)
            .collect()
    });
    assert!((filtered - plain).abs() <= 0.01, "filtered {filtered} vs plain {plain}");
}
