use std::path::Path;
use std::process::{Command, Output};

fn popgcn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popgcn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "{}", stderr(&o));
    String::from_utf8(o.stdout).unwrap()
}

const QUICK: &str = "name = \"quick\"\n\n[synthetic]\nn_subjects = 40\nseed = 2\n\n[model]\nepochs = 10\n\n[cv]\nfolds = 3\nseeds = [0]\n";

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    ok(popgcn(&["synth", "--seed", "7", "--out", "a"], dir.path()));
    ok(popgcn(&["synth", "--seed", "7", "--out", "b"], dir.path()));
    for f in ["features.csv", "phenotypes.csv", "config.toml"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let header = std::fs::read_to_string(dir.path().join("a/phenotypes.csv")).unwrap();
    assert!(header.starts_with("acquisition_id,subject_id,label,site,sex,age,gene_flag\n"));
}

#[test]
fn missing_features_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "[data]\nfeatures = \"nowhere/features.csv\"\nphenotypes = \"p.csv\"\n",
    )
    .unwrap();
    let o = popgcn(&["run", "--config", "exp.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere/features.csv"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(popgcn(&["train"], dir.path()).status.code(), Some(2));
    assert_eq!(popgcn(&["run", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(popgcn(&[], dir.path()).status.code(), Some(2));
}

#[test]
fn validation_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), QUICK).unwrap();
    let o = popgcn(
        &[
            "run",
            "--config",
            "exp.toml",
            "--set",
            "model.dropout_rate=1.5",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.dropout_rate"), "{}", stderr(&o));
    let o = popgcn(
        &[
            "run",
            "--config",
            "exp.toml",
            "--set",
            "model.colour=1",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_over_order_gives_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), QUICK).unwrap();
    ok(popgcn(
        &[
            "sweep",
            "--config",
            "exp.toml",
            "--param",
            "K",
            "--values",
            "1,2,3,4,5",
            "--out",
            "sw",
        ],
        dir.path(),
    ));
    let sw = dir.path().join("sw");
    let table = std::fs::read_to_string(sw.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    for (k, row) in (1..=5).zip(&rows) {
        assert!(row.starts_with(&format!("K,{k},")), "{row}");
        let sub = sw.join(format!("K={k}"));
        assert!(sub.join("config.toml").exists());
        let cfg = std::fs::read_to_string(sub.join("config.toml")).unwrap();
        assert!(cfg.contains(&format!("cheb_order = {k}")));
    }
    assert!(sw.join("config.toml").exists());
    let plot = std::fs::read_to_string(sw.join("plot.csv")).unwrap();
    assert_eq!(plot.lines().next(), Some("experiment,fold,seed,accuracy,auc"));
    assert_eq!(plot.lines().count(), 1 + 5 * 3);
}

#[test]
fn graph_then_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(popgcn(
        &["synth", "--subjects", "30", "--out", "data"],
        dir.path(),
    ));
    std::fs::write(
        dir.path().join("data/exp.toml"),
        "name = \"fromfiles\"\n\n[data]\nfeatures = \"features.csv\"\nphenotypes = \"phenotypes.csv\"\n\n[model]\nepochs = 5\n\n[cv]\nfolds = 3\nseeds = [0, 1]\n",
    )
    .unwrap();
    let stats = ok(popgcn(
        &["graph", "--config", "data/exp.toml", "--out", "g"],
        dir.path(),
    ));
    assert!(stats.contains("edges"));
    let edges = std::fs::read_to_string(dir.path().join("g/edges.csv")).unwrap();
    let mut lines = edges.lines();
    assert!(lines.next().unwrap().starts_with("# provenance: "));
    assert_eq!(lines.next(), Some("u,v,weight"));
    assert!(dir.path().join("g/config.toml").exists());

    ok(popgcn(
        &["run", "--config", "data/exp.toml", "--out", "r"],
        dir.path(),
    ));
    for f in ["report.json", "summary.txt", "plot.csv", "config.toml"] {
        assert!(dir.path().join("r").join(f).exists(), "{f}");
    }
    let text = ok(popgcn(&["report", "r", "--plot", "merged.csv"], dir.path()));
    assert!(text.contains("fromfiles"));
    let merged = std::fs::read_to_string(dir.path().join("merged.csv")).unwrap();
    assert_eq!(merged.lines().count(), 1 + 3 * 2);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), QUICK).unwrap();
    ok(popgcn(
        &[
            "run",
            "--config",
            "exp.toml",
            "--set",
            "graph.sigma=0.5",
            "--out",
            "a",
        ],
        dir.path(),
    ));
    ok(popgcn(
        &["run", "--config", "a/config.toml", "--out", "b"],
        dir.path(),
    ));
    let a = std::fs::read(dir.path().join("a/plot.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b/plot.csv")).unwrap());
}
