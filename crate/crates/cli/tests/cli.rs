use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn prefsum(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prefsum")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const DOCS: [&str; 3] = [
    "The river flooded the valley town after three days of heavy rain. Rescue teams moved families to the school. \
     Officials said the river crest passed overnight. Farmers lost much of the harvest in the lower fields.",
    "Heavy rain caused the river to burst its banks near the valley town. Families sheltered in the school gym. \
     The mayor asked for federal aid to repair the bridge. Power was restored to most homes by evening.",
    "Flood waters receded on Friday as rescue teams searched the lower fields. The bridge on the main road collapsed. \
     Insurance claims are expected to rise sharply. The school will reopen next week once cleaning is done.",
];

fn cluster_dir(root: &Path) -> std::path::PathBuf {
    let dir = root.join("flood");
    fs::create_dir_all(dir.join("docs")).unwrap();
    fs::create_dir_all(dir.join("refs")).unwrap();
    for (i, d) in DOCS.iter().enumerate() {
        fs::write(dir.join("docs").join(format!("d{i}.txt")), d).unwrap();
    }
    fs::write(
        dir.join("refs/r0.txt"),
        "Heavy rain flooded the valley town and rescue teams moved families to the school. The bridge collapsed.",
    )
    .unwrap();
    dir
}

#[test]
fn synthetic_simulation_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let run = |out: &str| prefsum(&["--seed", "11", "--out", out, "simulate", "--budget", "4"], tmp.path());
    let (a, b) = (run("a"), run("b"));
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(b.status.success(), "{}", stderr(&b));
    let ja = fs::read(tmp.path().join("a/simulation.json")).unwrap();
    let jb = fs::read(tmp.path().join("b/simulation.json")).unwrap();
    assert_eq!(ja, jb);
    let v: serde_json::Value = serde_json::from_slice(&ja).unwrap();
    assert_eq!(v["config"]["seed"], 11);
    assert_eq!(v["config"]["budget"], 4);
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("run.json"), r#"{"budget": 6, "length_budget": 30, "seed": 2}"#).unwrap();
    let o = prefsum(&["--config", "run.json", "--out", "o", "simulate", "--budget", "3"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("o/simulation.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["budget"], 3);
    assert_eq!(v["config"]["length_budget"], 30);
    assert_eq!(v["config"]["seed"], 2);
    assert!(stderr(&o).contains("effective config"));
}

#[test]
fn ingest_then_simulate_real_cluster() {
    let tmp = TempDir::new().unwrap();
    let dir = cluster_dir(tmp.path());
    let o = prefsum(&["--out", "c", "ingest", dir.to_str().unwrap(), "--unit", "unigram"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let ingested = tmp.path().join("c/flood.cluster.json");
    assert!(ingested.is_file());
    let o = prefsum(
        &["--out", "s", "simulate", "--cluster", ingested.to_str().unwrap(), "--unit", "unigram", "--budget", "3", "--length", "25"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("s/simulation.json")).unwrap()).unwrap();
    let r1 = v["rouge"]["rouge1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&r1));

    let o = prefsum(&["simulate", "--cluster", ingested.to_str().unwrap(), "--unit", "sentence"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    for args in [
        &["simulate", "--bogus"][..],
        &["simulate", "--strategy", "psychic"],
        &["ablate", "--seeds", "many"],
        &["frobnicate"],
    ] {
        let o = prefsum(args, tmp.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn runtime_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.json"), "{ not json").unwrap();
    for args in [
        &["simulate", "--cluster", "missing-dir"][..],
        &["--config", "bad.json", "simulate"],
        &["simulate", "--length", "0"],
        &["evaluate", "--analysis", "astrology"],
        &["ablate", "--variant", "xx", "--seeds", "1"],
    ] {
        let o = prefsum(args, tmp.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error: ") || stderr(&o).contains("\nerror: "), "{args:?}");
    }
}

#[test]
fn ablate_one_variant_writes_csv() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("suite.json"),
        r#"[{"documents": 3, "sentences": 14, "vocab_size": 30}]"#,
    )
    .unwrap();
    let o = prefsum(
        &["--out", "ab", "ablate", "--variant", "ge", "--seeds", "2", "--suite", "suite.json", "--budget", "3", "--reward-budget", "3"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("ab/ablation.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.contains("variant"), "{header}");
    let rows: Vec<&str> = lines.collect();
    let keys: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(keys, ["full", "ge"]);
    assert!(tmp.path().join("ab/grid.json").is_file());
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for k in i..=j {
                r[idx[k]] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    };
    let (rx, ry) = (rank(xs), rank(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn budget_csv_trends_upward() {
    let tmp = TempDir::new().unwrap();
    let o = prefsum(&["--out", "ev", "evaluate", "--analysis", "budget", "--seeds", "6"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rdr = csv_rows(&fs::read_to_string(tmp.path().join("ev/budget.csv")).unwrap());
    let (header, rdr) = rdr.split_first().unwrap();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no {name} in {header:?}"));
    let (b, r) = (col("budget"), col("rouge1_mean"));
    assert!(rdr.len() >= 3);
    let xs: Vec<f64> = rdr.iter().map(|row| row[b].parse().unwrap()).collect();
    let ys: Vec<f64> = rdr.iter().map(|row| row[r].parse().unwrap()).collect();
    assert!(spearman(&xs, &ys) > 0.0, "{xs:?} {ys:?}");
}

fn csv_rows(s: &str) -> Vec<Vec<String>> {
    s.lines().filter(|l| !l.is_empty()).map(|l| l.split(',').map(str::to_string).collect()).collect()
}
