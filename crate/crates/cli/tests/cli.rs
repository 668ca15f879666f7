use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ggnn::data::{gen_synthetic, load_ids, write_fvecs, write_ivecs, Dataset, Law};
use ggnn::eval::{brute_force_oracle, recall_at};

fn ggnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggnn"))
        .args(args)
        .env_remove("GGNN_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ggnn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    base: PathBuf,
    queries: PathBuf,
}

impl Fixture {
    fn new(n: usize, nq: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let base = root.join("base.fvecs");
        let queries = root.join("queries.fvecs");
        write_fvecs(&base, &gen_synthetic(n, 8, 3, Law::Gaussian)).unwrap();
        write_fvecs(&queries, &gen_synthetic(nq, 8, 4, Law::Gaussian)).unwrap();
        Self {
            _dir: dir,
            root,
            base,
            queries,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn build(&self, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let mut args = vec!["build", "--data", s(&self.base), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ggnn(&[
        "build",
        "--data",
        s(&dir.path().join("nope.fvecs")),
        "--out",
        s(&dir.path().join("x.ggnn")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert!(err["error"].as_str().unwrap().contains("dataset not found"));
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn inconsistent_degree_is_a_usage_error() {
    let f = Fixture::new(256, 4);
    let out = ggnn(&[
        "build",
        "--data",
        s(&f.base),
        "--out",
        s(&f.path("x.ggnn")),
        "--knn",
        "8",
        "--k",
        "24",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["kind"], "usage");
    assert!(!f.path("x.ggnn").exists());
}

#[test]
fn single_worker_rebuild_is_byte_identical() {
    let f = Fixture::new(1024, 4);
    let a = f.build("a.ggnn", &["--threads", "1"]);
    let b = f.build("b.ggnn", &["--threads", "1"]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn base_points_find_themselves() {
    let f = Fixture::new(512, 4);
    let index = f.build("i.ggnn", &[]);
    let base = ggnn::data::load_vectors(&f.base, ggnn::data::VecFormat::Fvecs).unwrap();
    let picks = [0usize, 77, 511];
    let q = f.path("picked.fvecs");
    write_fvecs(&q, &base.select(&picks).unwrap()).unwrap();
    let res = f.path("res.ivecs");
    let out = ok(&[
        "query",
        "--data",
        s(&f.base),
        "--queries",
        s(&q),
        "--index",
        s(&index),
        "--out",
        s(&res),
    ]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["mean_query_us"].as_f64().unwrap() >= 0.0);
    let rows = load_ids(&res).unwrap();
    assert_eq!(rows.len(), 3);
    for (row, &p) in rows.iter().zip(&picks) {
        assert_eq!(row.len(), 10);
        assert_eq!(row[0] as usize, p);
    }
}

#[test]
fn kout_above_n_is_a_usage_error() {
    let f = Fixture::new(256, 4);
    let index = f.build("i.ggnn", &[]);
    let out = ggnn(&[
        "query",
        "--data",
        s(&f.base),
        "--queries",
        s(&f.queries),
        "--index",
        s(&index),
        "--kout",
        "300",
        "--out",
        s(&f.path("r.ivecs")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ground_truth_by_hand_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("b.fvecs");
    let q = dir.path().join("q.fvecs");
    write_fvecs(&base, &Dataset::new(4, 1, vec![0.0, 1.0, 3.0, 7.0]).unwrap()).unwrap();
    write_fvecs(&q, &Dataset::new(3, 1, vec![-5.0, 2.9, 6.0]).unwrap()).unwrap();
    let a = dir.path().join("a.ivecs");
    let b = dir.path().join("b.ivecs");
    for out in [&a, &b] {
        ok(&["gt", "--data", s(&base), "--queries", s(&q), "--k", "1", "--out", s(out)]);
    }
    assert_eq!(load_ids(&a).unwrap(), vec![vec![0], vec![2], vec![3]]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn sharded_build_and_query() {
    let f = Fixture::new(1500, 20);
    let index = f.build("sharded", &["--shard-size", "512"]);
    assert!(index.join("manifest.json").exists());
    let res = f.path("res.ivecs");
    ok(&[
        "query",
        "--data",
        s(&f.base),
        "--queries",
        s(&f.queries),
        "--index",
        s(&index),
        "--out",
        s(&res),
    ]);
    let rows = load_ids(&res).unwrap();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r.len() == 10 && r.iter().all(|&id| id < 1500)));
}

fn read_csv(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().map(String::from).zip(rec.iter().map(String::from)).collect()
        })
        .collect()
}

#[test]
fn bench_reports_agree() {
    let f = Fixture::new(1024, 30);
    let index = f.build("i.ggnn", &[]);

    let gt_file = f.path("gt.ivecs");
    ok(&["gt", "--data", s(&f.base), "--queries", s(&f.queries), "--out", s(&gt_file)]);

    let run = |gt: &str, dir: &str| {
        let out = f.path(dir);
        ok(&[
            "bench",
            "--data",
            s(&f.base),
            "--queries",
            s(&f.queries),
            "--index",
            s(&index),
            "--gt",
            gt,
            "--tau-sweep",
            "0.3:0.6:0.3",
            "--out",
            s(&out),
        ]);
        out
    };
    let auto = run("auto", "auto");
    let file = run(s(&gt_file), "file");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(auto.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["dataset"]["n"], 1024);
    assert_eq!(report["dataset"]["sha256"].as_str().unwrap().len(), 64);
    let rows = report["tau_rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);

    let csv_rows = read_csv(&auto.join("tau_sweep.csv"));
    assert_eq!(csv_rows.len(), rows.len());
    for (j, c) in rows.iter().zip(&csv_rows) {
        for key in ["tau", "recall_at_1", "recall_at_10", "mean_visited", "mean_query_us"] {
            let from_csv: f64 = c[key].parse().unwrap();
            assert_eq!(from_csv, j[key].as_f64().unwrap(), "{key}");
        }
    }
    let plot = read_csv(&auto.join("plot.csv"));
    assert_eq!(plot.len(), rows.len());

    // R@1 recomputed outside the bench.
    let data = ggnn::data::load_vectors(&f.base, ggnn::data::VecFormat::Fvecs).unwrap();
    let queries = ggnn::data::load_vectors(&f.queries, ggnn::data::VecFormat::Fvecs).unwrap();
    let gt = brute_force_oracle(&data, &queries, 10).ids();
    let res = f.path("res.ivecs");
    ok(&[
        "query",
        "--data",
        s(&f.base),
        "--queries",
        s(&f.queries),
        "--index",
        s(&index),
        "--tau",
        "0.6",
        "--out",
        s(&res),
    ]);
    let manual = recall_at(&load_ids(&res).unwrap(), &gt, 1).unwrap();
    assert_eq!(rows[1]["recall_at_1"].as_f64().unwrap(), manual);

    let from_file = read_csv(&file.join("tau_sweep.csv"));
    for (a, b) in csv_rows.iter().zip(&from_file) {
        assert_eq!(a["recall_at_1"], b["recall_at_1"]);
        assert_eq!(a["recall_at_10"], b["recall_at_10"]);
    }
}

#[test]
fn bench_refinement_sweep() {
    let f = Fixture::new(512, 10);
    let out = f.path("r");
    ok(&[
        "bench",
        "--data",
        s(&f.base),
        "--queries",
        s(&f.queries),
        "--tau-sweep",
        "0.5:0.5:0.1",
        "--refine-sweep",
        "0:1",
        "--report",
        "csv",
        "--out",
        s(&out),
    ]);
    let rows = read_csv(&out.join("refine_sweep.csv"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let c: f64 = r["consensus_at_10"].parse().unwrap();
        assert!((0.0..=1.0).contains(&c));
    }
    assert!(!out.join("report.json").exists());
}

#[test]
fn bad_sweep_is_a_usage_error() {
    let f = Fixture::new(256, 4);
    let out = ggnn(&[
        "bench",
        "--data",
        s(&f.base),
        "--queries",
        s(&f.queries),
        "--tau-sweep",
        "0.8:0.3:0.1",
        "--out",
        s(&f.path("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn query_output_is_ivecs_readable_by_gt_loader() {
    let f = Fixture::new(300, 5);
    let index = f.build("i.ggnn", &[]);
    let res = f.path("r.ivecs");
    ok(&[
        "query",
        "--data",
        s(&f.base),
        "--queries",
        s(&f.queries),
        "--index",
        s(&index),
        "--kout",
        "3",
        "--out",
        s(&res),
    ]);
    let rows = load_ids(&res).unwrap();
    write_ivecs(f.path("copy.ivecs"), &rows).unwrap();
    assert_eq!(std::fs::read(&res).unwrap(), std::fs::read(f.path("copy.ivecs")).unwrap());
}
