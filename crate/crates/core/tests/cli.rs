//! End-to-end runs of the `netrecon` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netrecon"))
        .current_dir(dir)
        .env("NETRECON_THREADS", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn complete_counts(n: usize, f: impl Fn(usize, usize) -> u32) -> String {
    let mut s = String::from("label_i,label_j,count\n");
    for i in 0..n {
        for j in i + 1..n {
            s.push_str(&format!("n{i},n{j},{}\n", f(i, j)));
        }
    }
    s
}

const SMALL_SAMPLER: &str = "[sampler]\nchains = 2\nwarmup = 150\nsamples = 150\nseed = 11\n";

fn poisson_setup() -> TempDir {
    let t = TempDir::new().unwrap();
    write(t.path(), "data.csv", &complete_counts(8, |i, j| if (i + j) % 3 == 0 { 9 } else { (i * j % 2) as u32 }));
    write(
        t.path(),
        "run.toml",
        &format!("[data]\npath = \"data.csv\"\n[model]\ndata = \"poisson\"\n{SMALL_SAMPLER}"),
    );
    t
}

#[test]
fn validate_exit_codes() {
    let t = poisson_setup();
    let ok = run(t.path(), &["validate", "--config", "run.toml"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));

    write(t.path(), "binomial.toml", "[data]\npath = \"data.csv\"\n[model]\ndata = \"binomial\"\n");
    let bad = run(t.path(), &["validate", "--config", "binomial.toml"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("violation"));

    write(t.path(), "missing.toml", "[data]\npath = \"nowhere.csv\"\n[model]\ndata = \"poisson\"\n");
    assert_eq!(code(&run(t.path(), &["validate", "--config", "missing.toml"])), 2);
    assert_eq!(code(&run(t.path(), &["validate", "--config", "absent.toml"])), 2);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let t = poisson_setup();
    write(t.path(), "typo.toml", "[data]\npath = \"data.csv\"\n[model]\ndata = \"poisson\"\nsigmaa = 3\n");
    let out = run(t.path(), &["validate", "--config", "typo.toml"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn seeded_fit_is_byte_identical() {
    let t = poisson_setup();
    for dir in ["a", "b"] {
        let out = run(t.path(), &["fit", "--config", "run.toml", "--output-dir", dir]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["trace.csv", "diagnostics.json"] {
        assert_eq!(read(&t.path().join("a"), f), read(&t.path().join("b"), f), "{f}");
    }
    let other = run(t.path(), &["fit", "--config", "run.toml", "--output-dir", "c", "--seed", "12"]);
    assert_eq!(code(&other), 0);
    assert_ne!(read(&t.path().join("a"), "trace.csv"), read(&t.path().join("c"), "trace.csv"));
}

#[test]
fn single_chain_flags_between_chain_stats() {
    let t = poisson_setup();
    let out = run(t.path(), &["fit", "--config", "run.toml", "--chains", "1", "--output-dir", "one"]);
    assert_eq!(code(&out), 0);
    let diag: serde_json::Value = serde_json::from_str(&read(&t.path().join("one"), "diagnostics.json")).unwrap();
    for p in diag["parameters"].as_array().unwrap() {
        assert!(p["rhat"].is_null(), "{p}");
    }
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn noise_free_toy_reconstructs_every_pair() {
    let t = TempDir::new().unwrap();
    write(t.path(), "data.csv", &complete_counts(5, |_, _| 1));
    write(
        t.path(),
        "run.toml",
        &format!("[data]\npath = \"data.csv\"\n[model]\ndata = \"exact\"\n{SMALL_SAMPLER}"),
    );
    let out = run(t.path(), &["run", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let edges = read(&t.path().join("out"), "edges.csv");
    let rows: Vec<&str> = edges.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[2], "1");
        assert_eq!(f[3].parse::<f64>().unwrap(), 1.0);
    }
    // Every replicate reproduces the data exactly, so all draws tie.
    let summary: serde_json::Value = serde_json::from_str(&read(&t.path().join("out"), "summary.json")).unwrap();
    assert_eq!(summary["gof"]["p_value"].as_f64().unwrap(), 0.5);

    let high = run(t.path(), &["reconstruct", "--config", "run.toml", "--threshold", "1.1", "--output-dir", "out"]);
    assert_eq!(code(&high), 0);
    assert_eq!(read(&t.path().join("out"), "edges.csv"), "label_i,label_j,k,probability\n");
}

#[test]
fn reconstruct_rejects_foreign_trace() {
    let t = poisson_setup();
    assert_eq!(code(&run(t.path(), &["fit", "--config", "run.toml"])), 0);
    write(
        t.path(),
        "three.toml",
        &format!("[data]\npath = \"data.csv\"\n[model]\ndata = \"poisson\"\nedge_types = 3\n{SMALL_SAMPLER}"),
    );
    let out = run(t.path(), &["reconstruct", "--config", "three.toml", "--trace", "out/trace.csv"]);
    assert_ne!(code(&out), 0);
}

#[test]
fn gof_columns_reproduce_summary_p_value() {
    let t = poisson_setup();
    let out = run(t.path(), &["run", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = t.path().join("out");
    let gof = read(&dir, "gof.csv");
    let mut lines = gof.lines();
    assert_eq!(lines.next().unwrap(), "draw,D_data,D_model");
    let (mut score, mut total) = (0.0, 0.0);
    for l in lines {
        let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
        score += if f[2] > f[1] {
            1.0
        } else if f[2] == f[1] {
            0.5
        } else {
            0.0
        };
        total += 1.0;
    }
    let summary: serde_json::Value = serde_json::from_str(&read(&dir, "summary.json")).unwrap();
    let p = summary["gof"]["p_value"].as_f64().unwrap();
    assert!((p - score / total).abs() < 1e-12, "{p} vs {}", score / total);
    assert!(read(&dir, "predicted.csv").starts_with("label_i,label_j,observed,predicted,residue\n"));
}

#[test]
fn simulate_degenerate_parameters_give_empty_data() {
    let t = TempDir::new().unwrap();
    write(t.path(), "sim.toml", "[model]\ndata = \"poisson\"\n[simulate]\nnodes = 6\n");
    let out = run(
        t.path(),
        &["simulate", "--config", "sim.toml", "--param", "rho=0", "--param", "lambda=0,0"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = t.path().join("out");
    assert_eq!(read(&dir, "truth.csv"), "label_i,label_j,k\n");
    for line in read(&dir, "data.csv").lines().skip(1) {
        assert!(line.ends_with(",0"), "{line}");
    }
}

#[test]
fn simulate_rejects_out_of_domain_parameters() {
    let t = TempDir::new().unwrap();
    write(t.path(), "sim.toml", "[model]\ndata = \"poisson\"\n[simulate]\nnodes = 6\n");
    let out = run(t.path(), &["simulate", "--config", "sim.toml", "--param", "rho=1.5"]);
    assert_eq!(code(&out), 1);
    let out = run(t.path(), &["simulate", "--config", "sim.toml", "--param", "gamma=1"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn simulate_three_levels_is_seeded_and_trimodal() {
    let t = TempDir::new().unwrap();
    write(
        t.path(),
        "sim.toml",
        "[model]\ndata = \"poisson\"\nedge_types = 3\n[simulate]\nnodes = 40\n\
         [simulate.parameters]\nlambda = [0.02, 5.13, 21.97]\nrho = [0.58, 0.28, 0.14]\n",
    );
    for dir in ["a", "b"] {
        let out = run(t.path(), &["simulate", "--config", "sim.toml", "--seed", "5", "--output-dir", dir]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["data.csv", "truth.csv", "nodes.csv", "params.json"] {
        assert_eq!(read(&t.path().join("a"), f), read(&t.path().join("b"), f), "{f}");
    }
    let counts: Vec<u32> = read(&t.path().join("a"), "data.csv")
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    // Unlisted pairs have count zero.
    let implicit = 40 * 39 / 2 - counts.len();
    let band = |lo: u32, hi: u32| {
        counts.iter().filter(|&&c| (lo..=hi).contains(&c)).count() + if lo == 0 { implicit } else { 0 }
    };
    // Peaks near 0, 5 and 25 with sparse valleys between them.
    let (zero, mid, high) = (band(0, 1), band(3, 9), band(16, 32));
    let (valley_a, valley_b) = (band(2, 2), band(12, 14));
    assert!(zero > 300 && mid > 120 && high > 60, "{zero} {mid} {high}");
    assert!(valley_b * 4 < high && valley_a * 4 < zero, "{valley_a} {valley_b}");
}
