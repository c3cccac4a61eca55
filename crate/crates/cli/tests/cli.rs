use std::path::Path;
use std::process::{Command, Output};

fn regionrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regionrec"))
        .args(args)
        .env_remove("REGIONREC_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = regionrec(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

/// synth -> ingest -> prune -> split, returning the working directory.
fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", &p(d, "data"), "--regions", "40", "--items", "12", "--factors", "3",
         "--interactions", "5", "--seed", "1"]);
    let ingest = ok(&["ingest", "--features", &p(d, "data/features.csv"), "--out", &p(d, "ug.tsv")]);
    assert!(ingest.contains("regions\t40"));
    let prune = ok(&["prune", "--graph", &p(d, "ug.tsv"), "--out", &p(d, "ugp.tsv")]);
    assert!(prune.contains("before") && prune.contains("after"), "{prune}");
    assert!(d.join("ugp.tsv.bins.toml").exists());
    ok(&["split", "--interactions", &p(d, "data/interactions.tsv"), "--graph", &p(d, "ugp.tsv"),
         "--out", &p(d, "split"), "--seed", "2"]);
    std::fs::write(d.join("train.toml"), "dim = 8\nnum_layers = 2\nnum_intents = 2\nepochs = 3\nlearning_rate = 0.01\n").unwrap();
    dir
}

fn train(d: &Path, out: &str) {
    ok(&["train", "--graph", &p(d, "ugp.tsv"), "--split", &p(d, "split"), "--config", &p(d, "train.toml"),
         "--bins", &p(d, "ugp.tsv.bins.toml"), "--out", &p(d, out), "--seed", "5"]);
}

#[test]
fn end_to_end() {
    let dir = prepared();
    let d = dir.path();
    train(d, "model.ckpt");
    assert!(d.join("model.ckpt.toml").exists());

    let model = ["--checkpoint", &p(d, "model.ckpt"), "--graph", &p(d, "ugp.tsv"), "--split", &p(d, "split")];
    let mut args = vec!["recommend"];
    args.extend(model);
    args.extend(["--region", "R0003", "--k", "3"]);
    let rec = ok(&args);
    let lines: Vec<&str> = rec.lines().collect();
    assert!(!lines.is_empty() && lines.len() <= 3, "{rec}");
    for (n, line) in lines.iter().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 3, "{line}");
        assert_eq!(cols[0], (n + 1).to_string());
        assert!(cols[1].starts_with('P'));
        cols[2].parse::<f64>().unwrap();
    }

    let mut args = vec!["evaluate"];
    args.extend(model);
    args.extend(["--k", "3,5"]);
    let eval = ok(&args);
    for label in ["model", "popularity", "random", "Precision", "Recall", "F1"] {
        assert!(eval.contains(label), "{eval}");
    }

    let intents = ok(&["analyze", "intents", "--checkpoint", &p(d, "model.ckpt"), "--graph", &p(d, "ugp.tsv"), "--top", "5"]);
    let rows: Vec<&str> = intents.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.split('\t').count() == 6));

    std::fs::write(d.join("gov.tsv"), "R0001\tP000\nR0001\tP004\nR0002\tP007\n").unwrap();
    let mut args = vec!["plan"];
    args.extend(model);
    let (tax, gov) = (p(d, "data/taxonomy.tsv"), p(d, "gov.tsv"));
    args.extend(["--taxonomy", &tax, "--gov", &gov, "--json"]);
    let plan = ok(&args);
    let v: serde_json::Value = serde_json::from_str(&plan).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 40);
    let acc = v["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn training_is_reproducible() {
    let dir = prepared();
    let d = dir.path();
    train(d, "a.ckpt");
    train(d, "b.ckpt");
    assert_eq!(std::fs::read(d.join("a.ckpt")).unwrap(), std::fs::read(d.join("b.ckpt")).unwrap());
}

#[test]
fn usage_errors_exit_one() {
    let o = regionrec(&["prune", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    assert_eq!(regionrec(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(regionrec(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = prepared();
    let d = dir.path();
    std::fs::write(d.join("bad.ckpt"), b"XXXXXX not a model").unwrap();
    let o = regionrec(&["recommend", "--checkpoint", &p(d, "bad.ckpt"), "--graph", &p(d, "ugp.tsv"),
                        "--split", &p(d, "split"), "--region", "R0001"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("magic"));
    std::fs::write(d.join("broken.csv"), "region_id,Nope\nR1,3\n").unwrap();
    let o = regionrec(&["ingest", "--features", &p(d, "broken.csv"), "--out", &p(d, "x.tsv")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_from_environment() {
    let dir = prepared();
    let d = dir.path();
    std::fs::write(d.join("env.toml"), "dim = 4\nnum_layers = 1\nnum_intents = 1\nepochs = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_regionrec"))
        .args(["train", "--graph", &p(d, "ugp.tsv"), "--split", &p(d, "split"), "--out", &p(d, "env.ckpt")])
        .env("REGIONREC_CONFIG", d.join("env.toml"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let resolved = std::fs::read_to_string(d.join("env.ckpt.toml")).unwrap();
    assert!(resolved.contains("dim = 4"), "{resolved}");
}
