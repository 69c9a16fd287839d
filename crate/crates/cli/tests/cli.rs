use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fixrocket(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fixrocket"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FIXROCKET_OUT")
        .output()
        .unwrap()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Cohort plus dataset for 6 + 6 subjects under `dir`.
fn prepared(dir: &Path) -> String {
    ok(fixrocket(
        &["generate", "--subjects", "6", "--seed", "1"],
        dir,
    ));
    let cohort = dir.join("cohort");
    ok(fixrocket(
        &["preprocess", "--cohort", cohort.to_str().unwrap()],
        dir,
    ));
    dir.join("dataset.txt").to_str().unwrap().to_string()
}

#[test]
fn generate_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        ok(fixrocket(
            &["generate", "--subjects", "3", "--seed", "0"],
            d.path(),
        ));
    }
    let (ta, tb) = (
        tree(&a.path().join("cohort")),
        tree(&b.path().join("cohort")),
    );
    assert_eq!(ta.len(), 3 * 2 * 2 + 1);
    assert_eq!(ta, tb);
    let manifest = fs::read_to_string(a.path().join("manifests/generate.txt")).unwrap();
    assert!(manifest.contains("subjects=3") && manifest.contains("stream.cohort="));
}

#[test]
fn usage_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    let o = fixrocket(&["train"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--dataset"));
    assert_eq!(
        fixrocket(&["train", "--bogus", "1"], d.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(fixrocket(&["frobnicate"], d.path()).status.code(), Some(1));
    let cfg = d.path().join("bad.txt");
    fs::write(&cfg, "not_an_option=3\n").unwrap();
    let o = fixrocket(&["--config", cfg.to_str().unwrap(), "generate"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(fixrocket(&["--help"], d.path()).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("nope.txt");
    let o = fixrocket(&["train", "--dataset", missing.to_str().unwrap()], d.path());
    assert_eq!(o.status.code(), Some(2));
    let garbage = d.path().join("garbage.txt");
    fs::write(&garbage, "hello\n").unwrap();
    let o = fixrocket(
        &["transform", "--dataset", garbage.to_str().unwrap()],
        d.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = fixrocket(&["generate", "--subjects", "0"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_and_flag_precedence() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    fs::write(&cfg, "# cohort\nsubjects=4\nsessions = 2\nseed=9\n").unwrap();
    let c = cfg.to_str().unwrap();
    ok(fixrocket(
        &["--config", c, "generate", "--subjects", "3"],
        d.path(),
    ));
    let manifest = fs::read_to_string(d.path().join("manifests/generate.txt")).unwrap();
    assert!(manifest.contains("\nsubjects=3\n"), "{manifest}");
    assert!(manifest.contains("\nseed=9\n"), "{manifest}");
    assert_eq!(
        fs::read_dir(d.path().join("cohort")).unwrap().count(),
        3 * 2 * 2 + 1
    );
}

#[test]
fn output_root_from_environment() {
    let root = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fixrocket"))
        .args(["generate", "--subjects", "3", "--out", "nested/run"])
        .env("FIXROCKET_OUT", root.path())
        .output()
        .unwrap();
    ok(o);
    assert!(root.path().join("nested/run/cohort/manifest.txt").exists());
}

#[test]
fn pipeline_and_report() {
    let d = tempfile::tempdir().unwrap();
    let ds = prepared(d.path());
    ok(fixrocket(
        &["train", "--dataset", &ds, "--kernels", "200"],
        d.path(),
    ));
    let train_kv = fs::read_to_string(d.path().join("train.kv")).unwrap();
    assert!(train_kv.contains("train_accuracy="));
    ok(fixrocket(&["evaluate", "--dataset", &ds], d.path()));
    let metrics = fs::read_to_string(d.path().join("eval/metrics.kv")).unwrap();
    for key in [
        "trial_accuracy.mean=",
        "subject_accuracy.mean=",
        "subject_uf1.std=",
    ] {
        assert!(metrics.contains(key), "{metrics}");
    }
    let summary = fs::read_to_string(d.path().join("eval/summary.tsv")).unwrap();
    let stdout = ok(fixrocket(&["report", "--check"], d.path()));
    assert!(stdout.contains("tables reproduced"));
    ok(fixrocket(&["report"], d.path()));
    assert_eq!(
        fs::read_to_string(d.path().join("report/summary.tsv")).unwrap(),
        summary
    );

    // a tampered table is detected
    fs::write(d.path().join("eval/summary.tsv"), "changed\n").unwrap();
    assert_eq!(
        fixrocket(&["report", "--check"], d.path()).status.code(),
        Some(2)
    );
}

#[test]
fn multi_seed_evaluation() {
    let d = tempfile::tempdir().unwrap();
    let ds = prepared(d.path());
    let out = ok(fixrocket(
        &[
            "evaluate",
            "--dataset",
            &ds,
            "--seeds",
            "0,1",
            "--kernels",
            "100",
            "--sfd",
        ],
        d.path(),
    ));
    assert!(out.contains("retained_fraction"));
    for s in [0, 1] {
        assert!(d
            .path()
            .join(format!("eval/seed-{s}/sfd_trace.tsv"))
            .exists());
    }
    let per_seed = fs::read_to_string(d.path().join("eval/per_seed.tsv")).unwrap();
    assert_eq!(per_seed.lines().count(), 2 + 2);
    ok(fixrocket(&["report", "--check"], d.path()));
}

#[test]
fn grid_and_sweep() {
    let d = tempfile::tempdir().unwrap();
    let ds = prepared(d.path());
    ok(fixrocket(
        &[
            "grid-search",
            "--dataset",
            &ds,
            "--folds",
            "3",
            "--kernels-grid",
            "50,100",
            "--alphas",
            "1,1e4",
        ],
        d.path(),
    ));
    let grid = fs::read_to_string(d.path().join("grid_search.tsv")).unwrap();
    let rows: Vec<&str> = grid.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].split('\t').count(), 3);

    let cohort = d.path().join("cohort");
    ok(fixrocket(
        &[
            "sweep-cutoff",
            "--cohort",
            cohort.to_str().unwrap(),
            "--cutoffs",
            "0,20",
            "--seeds",
            "0",
            "--kernels",
            "50",
        ],
        d.path(),
    ));
    let sweep = fs::read_to_string(d.path().join("cutoff_sweep.tsv")).unwrap();
    assert_eq!(sweep.lines().filter(|l| !l.starts_with('#')).count(), 3);
    let long = fs::read_to_string(d.path().join("cutoff_sweep_long.csv")).unwrap();
    assert!(long.starts_with("experiment,parameter,level,metric,value\n"));
}
