use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn spamnet(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_spamnet"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> PathBuf {
    let run = spamnet(dir, args);
    assert_eq!(run.code, 0, "{args:?}: {}", run.stderr);
    dir.join(run.stdout.trim())
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SIM: &str = "seed = 1\nfamily = \"gaussian\"\n[simulate]\nd = 8\nt = 240\nr = 1\n";
const KERNEL: &str = "[kernel]\nkind = \"finite_rank\"\nrank = 1\n";
const MIXING: &str = "[mixing]\nkind = \"beta\"\nr = 2.0\nc0 = 1.0\n";

/// Temporary directory holding `sim/data.csv` from the reference simulation.
fn with_simulation() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.toml"), SIM).unwrap();
    ok(dir.path(), &["simulate", "--config", "sim.toml", "--out", "sim"]);
    dir
}

#[test]
fn simulate_writes_data_truth_and_manifest() {
    let dir = with_simulation();
    let p = dir.path();
    let manifest = json(&p.join("sim/manifest.json"));
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 1);
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|o| o[0].as_str().unwrap()).collect();
    assert_eq!(outputs, ["data.csv", "truth.json"]);
    let data = fs::read_to_string(p.join("sim/data.csv")).unwrap();
    assert_eq!(data.lines().count(), 242);
    assert_eq!(data.lines().next().unwrap(), "x0,x1,x2,x3,x4,x5,x6,x7");

    ok(p, &["simulate", "--config", "sim.toml", "--out", "other", "--seed", "2"]);
    assert_eq!(json(&p.join("other/manifest.json"))["seed"], 2);
    assert_ne!(fs::read(p.join("other/data.csv")).unwrap(), data.as_bytes());
}

#[test]
fn theory_fit_on_simulated_network() {
    let dir = with_simulation();
    let p = dir.path();
    fs::write(p.join("fit.toml"), format!("family = \"gaussian\"\n{KERNEL}{MIXING}")).unwrap();
    ok(p, &["fit", "--config", "fit.toml", "--data", "sim/data.csv", "--out", "fit"]);
    let report = json(&p.join("fit/report.json"));
    assert_eq!(report["lambda"]["mode"], "theory");
    let lt = report["lambda"]["lambda_t"].as_f64().unwrap();
    let lh = report["lambda"]["lambda_h"].as_f64().unwrap();
    assert!((lt / 18.81955375919455 - 1.0).abs() < 1e-12, "{lt}");
    assert!((lh / 125.21998555186245 - 1.0).abs() < 1e-12, "{lh}");
    assert_eq!(report["empty_network"], true);
    assert_eq!(report["lambda"]["rates"]["delta_mj"].as_array().unwrap().len(), 8);

    let fit = json(&p.join("fit/fit.json"));
    assert_eq!(fit["node_fits"].as_array().unwrap().len(), 8);
    assert_eq!(fit["family"], "gaussian");
}

#[test]
fn fit_outputs_are_reproducible() {
    let dir = with_simulation();
    let p = dir.path();
    fs::write(
        p.join("fit.toml"),
        format!("family = \"gaussian\"\n{KERNEL}[lambda]\nmode = \"fixed\"\nlambda_t = 0.05\nlambda_h = 0.001\n"),
    )
    .unwrap();
    ok(p, &["fit", "--config", "fit.toml", "--data", "sim/data.csv", "--out", "a"]);
    ok(p, &["fit", "--config", "fit.toml", "--data", "sim/data.csv", "--out", "b"]);
    for name in ["fit.json", "report.json", "adjacency.csv", "manifest.json"] {
        assert_eq!(fs::read(p.join("a").join(name)).unwrap(), fs::read(p.join("b").join(name)).unwrap(), "{name}");
    }
    let report = json(&p.join("a/report.json"));
    assert_eq!(report["empty_network"], false);

    fs::write(
        p.join("huge.toml"),
        format!("family = \"gaussian\"\n{KERNEL}[lambda]\nmode = \"fixed\"\nlambda_t = 1e6\nlambda_h = 1e6\n"),
    )
    .unwrap();
    ok(p, &["fit", "--config", "huge.toml", "--data", "sim/data.csv", "--out", "huge"]);
    let report = json(&p.join("huge/report.json"));
    assert_eq!(report["empty_network"], true);
    assert_eq!(report["edges"], 0);
    let adj = fs::read_to_string(p.join("huge/adjacency.csv")).unwrap();
    assert!(adj.lines().skip(1).all(|l| l.split(',').skip(1).all(|c| c == "0")));
}

#[test]
fn predict_cluster_and_cv() {
    let dir = with_simulation();
    let p = dir.path();
    fs::write(
        p.join("fit.toml"),
        format!("family = \"gaussian\"\n{KERNEL}[lambda]\nmode = \"fixed\"\nlambda_t = 0.02\n"),
    )
    .unwrap();
    ok(p, &["fit", "--config", "fit.toml", "--data", "sim/data.csv", "--out", "fit"]);

    fs::write(p.join("predict.toml"), "[predict]\nfit = \"fit/fit.json\"\n").unwrap();
    ok(p, &["predict", "--config", "predict.toml", "--data", "sim/data.csv", "--out", "pred"]);
    let preds = fs::read_to_string(p.join("pred/predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 242);
    assert!(preds.starts_with("row,x0,"));

    fs::write(p.join("cluster.toml"), "seed = 3\n[cluster]\nk = 2\nfit = \"fit/fit.json\"\n").unwrap();
    ok(p, &["cluster", "--config", "cluster.toml", "--out", "clusters"]);
    let labels = fs::read_to_string(p.join("clusters/labels.csv")).unwrap();
    assert_eq!(labels.lines().next().unwrap(), "node,name,label");
    assert_eq!(labels.lines().count(), 9);

    fs::write(
        p.join("cv.toml"),
        format!("family = \"gaussian\"\n{KERNEL}[lambda]\nmode = \"cv\"\ngrid_t = [0.01, 0.1, 10.0]\nhorizon = 40\n"),
    )
    .unwrap();
    ok(p, &["cv", "--config", "cv.toml", "--data", "sim/data.csv", "--out", "cv"]);
    let cv = fs::read_to_string(p.join("cv/cv.csv")).unwrap();
    assert_eq!(cv.lines().next().unwrap(), "lambda_t,lambda_h,fold1,fold2,fold3,mean_loss");
    assert_eq!(cv.lines().count(), 4);
    let chosen = json(&p.join("cv/cv.json"));
    assert_eq!(chosen["horizon"], 40);
}

#[test]
fn rates_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("rates.toml"), format!("{KERNEL}{MIXING}[rates]\nt = 10000\nd = 50\nsparsity = 3\n")).unwrap();
    ok(p, &["rates", "--config", "rates.toml", "--out", "r"]);
    let text = fs::read_to_string(p.join("r/rates.txt")).unwrap();
    assert!(text.lines().any(|l| l == "m = 100"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("lambda_T = ")));
    let report = json(&p.join("r/rates.json"));
    assert_eq!(report["m"], 100);
}

#[test]
fn experiment_tables() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("exp.toml"),
        "family = \"gaussian\"\n[experiment]\nd_list = [4]\nt_list = [60, 120]\nr_list = [1]\ntrials = 2\nseed0 = 1\n",
    )
    .unwrap();
    ok(p, &["experiment", "--config", "exp.toml", "--out", "e"]);
    let grid = fs::read_to_string(p.join("e/grid.csv")).unwrap();
    assert_eq!(grid.lines().next().unwrap(), "family,d,T,r,trial,mse,precision,recall,seconds,error");
    assert_eq!(grid.lines().count(), 5);
    let jsonl = fs::read_to_string(p.join("e/grid.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 4);
    let first: Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(first["T"], 60);
    let slopes = fs::read_to_string(p.join("e/slopes.csv")).unwrap();
    assert_eq!(slopes.lines().count(), 2);
    let plot = fs::read_to_string(p.join("e/plot.csv")).unwrap();
    assert_eq!(plot.lines().next().unwrap(), "family,d,r,T,log_T,log_d,log_median_mse");

    fs::write(p.join("empty.toml"), "[experiment]\nd_list = []\nt_list = [60]\nr_list = [1]\ntrials = 2\n").unwrap();
    let run = spamnet(p, &["experiment", "--config", "empty.toml", "--out", "x"]);
    assert_eq!(run.code, 2, "{}", run.stderr);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    let run = spamnet(p, &["fit", "--config", "missing.toml"]);
    assert_eq!(run.code, 2);

    fs::write(p.join("typo.toml"), "seed = 1\nfamliy = \"poisson\"\n").unwrap();
    let run = spamnet(p, &["simulate", "--config", "typo.toml"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("famliy"), "{}", run.stderr);

    fs::write(p.join("fit.toml"), format!("{KERNEL}[lambda]\nmode = \"fixed\"\nlambda_t = 0.1\n")).unwrap();
    let run = spamnet(p, &["fit", "--config", "fit.toml"]);
    assert_eq!(run.code, 2, "missing --data: {}", run.stderr);

    fs::write(p.join("nan.csv"), "a,b\n1,2\n3,NaN\n4,5\n").unwrap();
    let run = spamnet(p, &["fit", "--config", "fit.toml", "--data", "nan.csv"]);
    assert_eq!(run.code, 3, "{}", run.stderr);

    fs::write(p.join("neg.csv"), "a,b\n1,2\n3,-1\n4,5\n").unwrap();
    fs::write(p.join("pois.toml"), format!("family = \"poisson\"\n{KERNEL}[lambda]\nmode = \"fixed\"\nlambda_t = 0.1\n")).unwrap();
    let run = spamnet(p, &["fit", "--config", "pois.toml", "--data", "neg.csv"]);
    assert_eq!(run.code, 3, "{}", run.stderr);

    fs::write(p.join("boom.toml"), "seed = 0\n[simulate]\nd = 8\nt = 2000\nr = 3\n").unwrap();
    let run = spamnet(p, &["simulate", "--config", "boom.toml", "--out", "boom"]);
    assert_eq!(run.code, 4, "{}", run.stderr);
}
