use std::collections::{HashSet, VecDeque};

use ggnn::data::{gen_synthetic, Law};
use ggnn::eval::brute_force_oracle;
use ggnn::graph::{AdjacencyLayer, GraphStats};
use ggnn::search::{greedy_search, hierarchical_query, query};
use ggnn::{build, distance, BuildConfig, Dataset, Hierarchy, QueryConfig};
use proptest::prelude::*;

fn small_index(n: usize, d: usize, seed: u64) -> (Dataset, Hierarchy) {
    let data = gen_synthetic(n, d, seed, Law::Clustered(3));
    let cfg = BuildConfig {
        k: 8,
        k_nn: 4,
        k_sym: 4,
        s: 16,
        g: 2,
        seed,
        ..BuildConfig::default()
    };
    let (h, _) = build(&data, &cfg).unwrap();
    (data, h)
}

fn reachable(layer: &AdjacencyLayer, from: &[u32]) -> Vec<u32> {
    let mut seen: HashSet<u32> = from.iter().copied().collect();
    let mut queue: VecDeque<u32> = from.iter().copied().collect();
    while let Some(x) = queue.pop_front() {
        for y in layer.neighbors(x).unwrap() {
            if seen.insert(y) {
                queue.push_back(y);
            }
        }
    }
    let mut out: Vec<u32> = seen.into_iter().collect();
    out.sort_unstable();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hits_are_sorted_unique_and_recomputable(seed in 0u64..500, n in 16usize..300, k_out in 1usize..8, tau in 0.0f32..3.0) {
        let (data, h) = small_index(n, 5, seed);
        let cfg = QueryConfig { k_out, tau, prioq_size: 2 * k_out + 4, visited_size: 16, ..QueryConfig::default() };
        let q = gen_synthetic(1, 5, seed + 1, Law::Gaussian);
        let res = query(&h, &data, q.row(0), &cfg).unwrap();
        prop_assert!(res.hits.len() <= k_out);
        let ids: HashSet<u32> = res.hits.iter().map(|h| h.id).collect();
        prop_assert_eq!(ids.len(), res.hits.len());
        for w in res.hits.windows(2) {
            prop_assert!((w[0].dist, w[0].id) <= (w[1].dist, w[1].id));
        }
        for hit in &res.hits {
            prop_assert_eq!(hit.dist.to_bits(), distance(q.row(0), data.row(hit.id as usize)).to_bits());
        }
        prop_assert!(res.steps <= cfg.max_iterations);
        prop_assert!(res.visited_count <= res.unique_touched + res.forgotten);
    }

    #[test]
    fn larger_slack_never_worsens_first_hit(seed in 0u64..500, t1 in 0.0f32..1.0, dt in 0.0f32..2.0) {
        let (data, h) = small_index(200, 6, seed);
        let q = gen_synthetic(1, 6, seed ^ 0xABCD, Law::Gaussian);
        let big = QueryConfig { k_out: 4, prioq_size: 4096, visited_size: 4096, ..QueryConfig::default() };
        let a = query(&h, &data, q.row(0), &QueryConfig { tau: t1, ..big.clone() }).unwrap();
        let b = query(&h, &data, q.row(0), &QueryConfig { tau: t1 + dt, ..big }).unwrap();
        prop_assert!(a.hits[0].dist >= b.hits[0].dist);
    }

    #[test]
    fn unbounded_search_finds_reachable_top_k(seed in 0u64..300, n in 20usize..200) {
        let (data, h) = small_index(n, 4, seed);
        let layer = h.bottom();
        let q = gen_synthetic(1, 4, seed + 7, Law::Gaussian);
        let seeds = [(0u32, distance(q.row(0), data.row(0)))];
        let cfg = QueryConfig {
            k_out: 5,
            tau: f32::INFINITY,
            max_iterations: usize::MAX,
            prioq_size: 4 * n,
            visited_size: 4 * n,
        };
        let res = greedy_search(layer, h.points(&data, 0), &seeds, q.row(0), &cfg, &h.stats()).unwrap();
        let reach = reachable(layer, &[0]);
        let mut want: Vec<(f32, u32)> = reach.iter().map(|&id| (distance(q.row(0), data.row(id as usize)), id)).collect();
        want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        want.truncate(5);
        let got: Vec<(f32, u32)> = res.hits.iter().map(|h| (h.dist, h.id)).collect();
        prop_assert_eq!(got, want);
    }
}

#[test]
fn adversarial_inputs_terminate() {
    let same = Dataset::new(100, 3, vec![2.5; 300]).unwrap();
    let (h, _) = build(&same, &BuildConfig { s: 25, ..BuildConfig::default() }).unwrap();
    for cap in [1, 2, 10, 4096] {
        let cfg = QueryConfig { max_iterations: cap, tau: f32::INFINITY, ..QueryConfig::default() };
        let res = query(&h, &same, &[2.5, 2.5, 2.5], &cfg).unwrap();
        assert!(res.steps <= cap);
        assert!(res.hits.iter().all(|h| h.dist == 0.0));
    }
    let one = Dataset::new(1, 2, vec![0.0, 1.0]).unwrap();
    let layer = AdjacencyLayer::new(1, 1, 0);
    let res = greedy_search(&layer, ggnn::graph::LayerPoints::new(&one, None), &[(0, 1.0)], &[0.0, 0.0], &QueryConfig::default(), &GraphStats::default()).unwrap();
    assert_eq!(res.ids(), vec![0]);
}

#[test]
fn exact_single_batch_graph_answers_point_queries() {
    let data = gen_synthetic(256, 2, 21, Law::Uniform);
    let (h, _) = build(&data, &BuildConfig { s: 256, ..BuildConfig::default() }).unwrap();
    let cfg = QueryConfig { tau: 0.6, ..QueryConfig::default() };
    let mut good = 0;
    for p in 0..256usize {
        let q = data.row(p);
        let seeds: Vec<(u32, f32)> = [(p * 7 + 1) % 256, (p * 13 + 5) % 256, (p * 29 + 11) % 256, (p * 31 + 17) % 256]
            .iter()
            .map(|&s| (s as u32, distance(q, data.row(s))))
            .collect();
        let res = greedy_search(h.bottom(), h.points(&data, 0), &seeds, q, &cfg, &h.stats()).unwrap();
        good += usize::from(res.hits[0].id == p as u32);
    }
    assert!(good >= 250, "{good} of 256");
}

#[test]
fn query_modes_mostly_agree() {
    let data = gen_synthetic(4096, 8, 4, Law::Gaussian);
    let (h, _) = build(&data, &BuildConfig { s: 1024, ..BuildConfig::default() }).unwrap();
    assert_eq!(h.layer_count(), 2);
    let queries = gen_synthetic(500, 8, 5, Law::Gaussian);
    let cfg = QueryConfig::default();
    let agree = (0..500)
        .filter(|&i| {
            let a = query(&h, &data, queries.row(i), &cfg).unwrap();
            let b = hierarchical_query(&h, &data, queries.row(i), &cfg, 1).unwrap();
            a.hits[0].id == b.hits[0].id
        })
        .count();
    println!("bottom-start vs hierarchical first-hit agreement: {agree}/500");
    let gt = brute_force_oracle(&data, &queries, 1);
    assert_eq!(gt.len(), 500);
}

#[test]
fn top_layer_point_is_found_without_search() {
    let (data, h) = small_index(64, 3, 9);
    let top = h.top_index();
    let id = h.translation(top).unwrap()[0];
    let res = hierarchical_query(&h, &data, data.row(id as usize), &QueryConfig::default(), top).unwrap();
    assert_eq!(res.hits[0].id, id);
    assert_eq!(res.hits[0].dist, 0.0);
}
