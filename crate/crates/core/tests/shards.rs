use ggnn::data::{gen_synthetic, Law};
use ggnn::eval::brute_force_oracle;
use ggnn::graph::encode_index;
use ggnn::shard::{build_sharded, merge_hits, query_sharded, ShardError, ShardReader, ShardedIndex};
use ggnn::{build, query, BuildConfig, QueryConfig};

#[test]
fn one_shard_equals_plain_build() {
    let data = gen_synthetic(700, 6, 1, Law::Gaussian);
    let cfg = BuildConfig::default();
    let si = build_sharded(&data, 1000, &cfg).unwrap();
    assert_eq!(si.shards.len(), 1);
    let (h, _) = build(&data, &cfg).unwrap();
    assert_eq!(encode_index(&si.shards[0].index), encode_index(&h));
    let q = gen_synthetic(20, 6, 2, Law::Gaussian);
    let qc = QueryConfig::default();
    for i in 0..20 {
        assert_eq!(query_sharded(&si, q.row(i), &qc).unwrap(), query(&h, &data, q.row(i), &qc).unwrap());
    }
}

#[test]
fn offsets_and_invariants() {
    let data = gen_synthetic(4096, 4, 3, Law::Uniform);
    let si = build_sharded(&data, 2048, &BuildConfig::default()).unwrap();
    let offsets: Vec<u32> = si.shards.iter().map(|s| s.offset).collect();
    assert_eq!(offsets, vec![0, 2048]);
    for s in &si.shards {
        s.index.check_invariants(&s.data).unwrap();
    }
}

#[test]
fn too_small_shards_are_rejected() {
    let data = gen_synthetic(100, 4, 3, Law::Uniform);
    assert!(matches!(
        build_sharded(&data, 8, &BuildConfig::default()),
        Err(ShardError::ShardSize { shard_size: 8, s: 32 })
    ));
}

#[test]
fn exact_per_shard_answers_merge_to_global_answer() {
    let data = gen_synthetic(900, 5, 8, Law::Clustered(5));
    let queries = gen_synthetic(30, 5, 9, Law::Gaussian);
    let global = brute_force_oracle(&data, &queries, 7);
    let parts: Vec<_> = [0..300usize, 300..900]
        .into_iter()
        .map(|r| (r.start as u32, brute_force_oracle(&data.slice(r).unwrap(), &queries, 7)))
        .collect();
    for qi in 0..30 {
        let merged = merge_hits(parts.iter().map(|(o, gt)| (*o, gt.rows[qi].as_slice())), 7);
        assert_eq!(merged, global.rows[qi]);
    }
}

#[test]
fn persistence_order_and_streaming() {
    let data = gen_synthetic(3000, 8, 5, Law::Clustered(6));
    let queries = gen_synthetic(40, 8, 6, Law::Clustered(6));
    let si = build_sharded(&data, 1000, &BuildConfig::default()).unwrap();
    assert_eq!(si.shards.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    si.save(dir.path()).unwrap();
    let loaded = ShardedIndex::load(dir.path(), &data).unwrap();
    let mut reversed = si.clone();
    reversed.shards.reverse();
    let qc = QueryConfig::default();
    let direct: Vec<_> = (0..40).map(|i| query_sharded(&si, queries.row(i), &qc).unwrap()).collect();
    for i in 0..40 {
        assert_eq!(query_sharded(&loaded, queries.row(i), &qc).unwrap(), direct[i]);
        assert_eq!(query_sharded(&reversed, queries.row(i), &qc).unwrap().hits, direct[i].hits);
    }
    let reader = ShardReader::open(dir.path(), &data).unwrap();
    assert_eq!(reader.shard_count(), 3);
    let streamed = reader.query_all(&queries, &qc).unwrap();
    for i in 0..40 {
        assert_eq!(streamed[i].hits, direct[i].hits);
        let ids = streamed[i].ids();
        let mut uniq = ids.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), ids.len());
    }
    let other = gen_synthetic(2999, 8, 5, Law::Uniform);
    assert!(ShardReader::open(dir.path(), &other).is_err());
}
