use ggnn::data::{load_ids, load_vectors, write_bvecs, write_fvecs, write_ivecs, Dataset, VecFormat};
use ggnn::eval::{brute_force_oracle, GroundTruth};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fvecs_round_trip(n in 1usize..20, d in 1usize..40, raw in proptest::collection::vec(any::<u32>(), 800)) {
        let v: Vec<f32> = raw.iter().take(n * d).map(|&b| {
            let f = f32::from_bits(b);
            if f.is_finite() { f } else { 0.5 }
        }).collect();
        let data = Dataset::new(n, d, v).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.fvecs");
        write_fvecs(&p, &data).unwrap();
        let back = load_vectors(&p, VecFormat::Fvecs).unwrap();
        prop_assert!(data.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!((back.len(), back.dim()), (n, d));
    }

    #[test]
    fn bvecs_round_trip(n in 1usize..20, d in 1usize..40, raw in proptest::collection::vec(any::<u8>(), 800)) {
        let v: Vec<f32> = raw.iter().take(n * d).map(|&b| f32::from(b)).collect();
        let data = Dataset::new(n, d, v).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bvecs");
        write_bvecs(&p, &data).unwrap();
        prop_assert_eq!(load_vectors(&p, VecFormat::Bvecs).unwrap(), data);
    }

    #[test]
    fn ivecs_round_trip(rows in proptest::collection::vec(proptest::collection::vec(0u32..i32::MAX as u32, 5), 1..30)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ivecs");
        write_ivecs(&p, &rows).unwrap();
        prop_assert_eq!(load_ids(&p).unwrap(), rows);
    }
}

#[test]
fn ground_truth_ivecs_round_trip() {
    let data = ggnn::data::gen_synthetic(300, 6, 1, ggnn::data::Law::Gaussian);
    let queries = ggnn::data::gen_synthetic(12, 6, 2, ggnn::data::Law::Gaussian);
    let gt = brute_force_oracle(&data, &queries, 10);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gt.ivecs");
    gt.save_ivecs(&p).unwrap();
    assert_eq!(GroundTruth::load_ivecs(&p, &data, &queries).unwrap(), gt);
}
