use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn write_data(dir: &Path) -> PathBuf {
    let path = dir.join("u.data");
    let mut text = String::new();
    // deterministic pseudo-random 40 × 60 log
    let mut x: u64 = 0x2545F4914F6CDD1D;
    for u in 1..=40u64 {
        for i in 1..=60u64 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let same = (u + i) % 3 == 0;
            if x % 100 < if same { 40 } else { 8 } {
                let rating = if same { 4 + x % 2 } else { 1 + x % 3 };
                text.push_str(&format!("{u}\t{i}\t{rating}\t{}\n", 880000000 + u * 100 + i));
            }
        }
    }
    fs::write(&path, text).unwrap();
    path
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let data = write_data(dir);
    let cfg = dir.join("exp.toml");
    let text = format!(
        r#"[dataset]
path = "{}"

[model]
d = 8
lr = 0.01
epochs = 4
init_std = 0.1

[loss]
kind = "varbpr"
M = 2
N = 2

[eval]
K = 5
eval_every = 2
probe_bags = 32
likelihood_samples = 10
{extra}"#,
        data.display()
    );
    fs::write(&cfg, text).unwrap();
    cfg
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varbpr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["train", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(
        fs::read_to_string(a.join("epochs.csv")).unwrap(),
        fs::read_to_string(b.join("epochs.csv")).unwrap()
    );
    // the checkpoint echoes the config, which names the output directory
    let report = |dir: &Path| {
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
        v["config"]["output"].take();
        v
    };
    assert_eq!(report(&a), report(&b));
    let weights = |dir: &Path| varbpr::model::EmbeddingModel::load(&dir.join("model.ckpt")).unwrap().0;
    assert!(weights(&a) == weights(&b));
    let csv = fs::read_to_string(a.join("epochs.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("epoch,loss,recall_k,ndcg_k,aplt_k"));
    assert_eq!(lines.count(), 2);
    assert!(a.join("run_info.json").exists());

    let other = dir.path().join("c");
    run(&["train", "--config", s(&cfg), "--out", s(&other), "--seed", "99"]);
    assert!(weights(&a) != weights(&other));

    let o = run(&["evaluate", "--config", s(&cfg), "--out", s(&a)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eval: serde_json::Value = serde_json::from_slice(&fs::read(a.join("evaluation.json")).unwrap()).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(eval["recall_k"], report["final_metrics"]["recall_k"]);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[model]\nbogus = 1\n");
    assert_eq!(run(&["train", "--config", s(&cfg)]).status.code(), Some(2));

    let cfg = write_config(dir.path(), "");
    let text = fs::read_to_string(&cfg).unwrap().replace("lr = 0.01", "lr = -1.0");
    fs::write(&cfg, text).unwrap();
    assert_eq!(run(&["train", "--config", s(&cfg)]).status.code(), Some(2));

    let missing = dir.path().join("nope.toml");
    assert_eq!(run(&["train", "--config", s(&missing)]).status.code(), Some(2));

    let cfg = write_config(dir.path(), "");
    fs::write(dir.path().join("u.data"), "1\t2\tx\t3\n").unwrap();
    assert_eq!(run(&["train", "--config", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("lr = 0.01", "lr = 1e305")
        .replace("kind = \"varbpr\"", "kind = \"bpr\"");
    fs::write(&cfg, text).unwrap();
    let o = run(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_ablate_robustness_scale_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\n[sweep]\ndirection_steps = 2\nstrengths = [1.0, 4.0]\n");
    let text = fs::read_to_string(&cfg).unwrap().replace("epochs = 4", "epochs = 2");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = s(&out);

    assert!(run(&["sweep", "--config", s(&cfg), "--out", o]).status.success());
    let pareto = fs::read_to_string(out.join("pareto.csv")).unwrap();
    assert_eq!(pareto.lines().count(), 1 + 2 * 2);
    assert!(pareto.lines().skip(1).any(|l| l.ends_with(",true")));

    assert!(run(&["ablate", "--config", s(&cfg), "--out", o]).status.success());
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    for v in ["varbpr", "wo_prior", "wo_vi", "wo_plugin"] {
        assert!(table.lines().any(|l| l.starts_with(v)), "{v} missing");
    }

    assert!(run(&["robustness", "--config", s(&cfg), "--out", o, "--rates", "0.1"])
        .status
        .success());
    let lik = fs::read_to_string(out.join("likelihood.csv")).unwrap();
    assert!(lik.starts_with("loss,rate,epoch,likelihood,log_likelihood"));

    assert!(run(&["scale", "--config", s(&cfg), "--out", o, "--bag-sizes", "2,4"])
        .status
        .success());
    let timing = fs::read_to_string(out.join("timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 1 + 3);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let text = fs::read_to_string(&path).unwrap();
            varbpr_cli::ExperimentConfig::from_toml(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
