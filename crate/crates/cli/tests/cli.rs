use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tkge(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tkge"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Five entities, two predicates; `r` changes partner halfway.
fn write_dataset(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let train = "a\tr\tb\t2000\t2004\n\
                 a\tr\tc\t2006\t2010\n\
                 b\tr\tc\t2000\t2003\n\
                 b\tr\td\t2007\t2010\n\
                 c\tq\td\t2001\t2009\n\
                 d\tq\te\t2002\t####\n\
                 e\tr\ta\t2000\t2005\n";
    fs::write(dir.join("train.txt"), train).unwrap();
    fs::write(dir.join("valid.txt"), "c\tr\td\t2000\t2004\na\tr\tb\t2001\t2002\n").unwrap();
    fs::write(dir.join("test.txt"), "e\tr\tb\t2006\t2010\nc\tq\te\t2003\t2004\n").unwrap();
}

#[test]
fn load_stats_prints_counts() {
    let d = tempfile::tempdir().unwrap();
    write_dataset(&d.path().join("toy"));
    let o = tkge(&["load-stats", "--data", "toy"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    // every year of 2000..=2010 except 2008
    assert_eq!(row, ["toy", "5", "2", "10", "7", "2", "2"]);
    assert!(text.contains("end filled          1"));
}

#[test]
fn audit_reports_valid_overlap() {
    let d = tempfile::tempdir().unwrap();
    write_dataset(&d.path().join("toy"));
    let o = tkge(&["audit", "--data", "toy"], d.path());
    assert!(o.status.success());
    let text = stdout(&o);
    // (a, r, b) of valid also appears in train
    let line = text.lines().find(|l| l.starts_with("valid in train")).unwrap();
    assert!(line.contains("1 (50.00%)"), "{line}");
}

#[test]
fn segment_debug_finds_the_step() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("s.csv"), "value\n0\n0\n0\n5\n5\n5\n").unwrap();
    let o = tkge(&["segment-debug", "s.csv", "--epsilon", "0.5"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("breakpoints 3 6\n"), "{}", stdout(&o));
}

#[test]
fn transform_writes_dataset_lineage_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    write_dataset(&d.path().join("toy"));
    let o = tkge(&["transform", "--data", "toy", "--method", "split-time", "--grow", "1.5", "--out", "t"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("predicates_after = 3"));
    for f in ["dataset/train.txt", "lineage.tsv", "transform_report.txt", "manifest.toml"] {
        assert!(d.path().join("t").join(f).is_file(), "{f}");
    }
    let manifest = fs::read_to_string(d.path().join("t/manifest.toml")).unwrap();
    assert!(manifest.contains("path = \"lineage.tsv\""));
    assert!(manifest.contains("config_sha256"));

    // The transformed dataset loads again like any other.
    let o = tkge(&["load-stats", "--data", "t/dataset"], d.path());
    assert!(o.status.success());
}

#[test]
fn run_is_deterministic_and_train_eval_agree() {
    let d = tempfile::tempdir().unwrap();
    write_dataset(&d.path().join("toy"));
    let config = "[data]\npath = \"toy\"\n[transform]\nmethod = \"timestamp\"\n\
                  [filter]\nmode = \"none\"\n[train]\nepochs = 5\ndim = 8\nbatch_size = 4\nnegatives = 4\n\
                  [eval]\ndump_ranks = true\n";
    fs::write(d.path().join("c.toml"), config).unwrap();
    for out in ["r1", "r2"] {
        let o = tkge(&["--config", "c.toml", "--seed", "3", "--deterministic", "--out", out, "run"], d.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("MRR"));
    }
    let m1 = fs::read_to_string(d.path().join("r1/manifest.toml")).unwrap();
    let m2 = fs::read_to_string(d.path().join("r2/manifest.toml")).unwrap();
    assert_eq!(m1, m2);
    for f in ["model.ckpt", "metrics.csv", "ranks.tsv", "audit.txt", "audit_filtered.csv", "lineage.tsv", "loss.csv"] {
        assert!(m1.contains(&format!("path = \"{f}\"")), "{f}");
    }

    // Evaluating the saved model on the saved dataset reproduces the metrics.
    let o = tkge(
        &["--config", "c.toml", "--out", "e", "eval", "--data", "r1/dataset", "--checkpoint", "r1/model.ckpt"],
        d.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(d.path().join("e/metrics.csv")).unwrap(),
        fs::read_to_string(d.path().join("r1/metrics.csv")).unwrap()
    );

    let o = tkge(&["--out", "x", "export", "--checkpoint", "r1/model.ckpt"], d.path());
    assert!(o.status.success());
    let vectors = fs::read_to_string(d.path().join("x/entity_vectors.tsv")).unwrap();
    assert_eq!(vectors.lines().count(), 5);
    assert_eq!(vectors.lines().next().unwrap().split('\t').count(), 9);
}

#[test]
fn sweep_writes_one_directory_per_point() {
    let d = tempfile::tempdir().unwrap();
    write_dataset(&d.path().join("toy"));
    let config = "[data]\npath = \"toy\"\n[transform]\nmethod = \"split-count\"\n\
                  [filter]\nmode = \"none\"\n[train]\nepochs = 2\ndim = 4\n[sweep]\ngrow = [1.5, 2.0]\n";
    fs::write(d.path().join("c.toml"), config).unwrap();
    let o = tkge(&["--config", "c.toml", "--out", "s", "run"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("s/split-count-grow1.5/metrics.txt").is_file());
    assert!(d.path().join("s/split-count-grow2/metrics.txt").is_file());
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let d = tempfile::tempdir().unwrap();
    write_dataset(&d.path().join("toy"));
    // config errors: bad key, bad range, missing data
    fs::write(d.path().join("bad.toml"), "[train]\nepoch = 1\n").unwrap();
    assert_eq!(tkge(&["--config", "bad.toml", "load-stats", "--data", "toy"], d.path()).status.code(), Some(2));
    assert_eq!(tkge(&["transform", "--data", "toy", "--method", "split-time", "--grow", "0.5"], d.path()).status.code(), Some(2));
    assert_eq!(tkge(&["load-stats", "--data", "nowhere"], d.path()).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_tkge"))
        .args(["run", "--data", "toy"])
        .env("TKGE_TRAIN_LEARNING_RATE", "-1")
        .current_dir(d.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[train]"));

    // data error: malformed line
    let bad = d.path().join("broken");
    write_dataset(&bad);
    fs::write(bad.join("test.txt"), "just-one-column\n").unwrap();
    assert_eq!(tkge(&["load-stats", "--data", "broken"], d.path()).status.code(), Some(3));

    // numeric failure: a learning rate that overflows the parameters
    let o = tkge(
        &["run", "--data", "toy", "--mode", "none", "--epochs", "3", "--dim", "4", "--learning-rate", "1e308", "--out", "n"],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
