use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn ampda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ampda"))
        .args(args)
        .env_remove("AMPDA_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn generate(dir: &Path, extra: &[&str]) -> PathBuf {
    let path = dir.join("inst.json");
    let mut args = vec!["generate", "-o", path_str(&path)];
    args.extend_from_slice(extra);
    let out = ampda(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

const TOY_LAMBDA: f64 = 10.0;
const TOY_A: [[f64; 2]; 3] = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
const TOY_B: [f64; 3] = [1.0, 0.05, 1.1];

fn toy_instance(dir: &Path) -> PathBuf {
    let path = dir.join("toy.json");
    let doc = json!({
        "format": "ampda-instance/1",
        "m": 3,
        "n": 2,
        "lambda": TOY_LAMBDA,
        "mu": 1,
        "k": null,
        "seed": null,
        "lower": [-2.0, -2.0],
        "upper": [2.0, 2.0],
        "b": TOY_B,
        "a": TOY_A,
        "x_true": null,
    });
    fs::write(&path, doc.to_string()).unwrap();
    path
}

/// Objective of the toy instance written out by hand.
fn toy_objective(x: [f64; 2]) -> f64 {
    let mut r: Vec<f64> = (0..3)
        .map(|i| TOY_A[i][0] * x[0] + TOY_A[i][1] * x[1] - TOY_B[i])
        .collect();
    r.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let trimmed: f64 = r[1..].iter().map(|v| v * v).sum();
    (x[0].abs() + x[1].abs()) / x[0].hypot(x[1]) + 0.5 * TOY_LAMBDA * trimmed
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&ampda(&["--help"])), 0);
    assert_eq!(code(&ampda(&[])), 1);
    assert_eq!(code(&ampda(&["solve", "--bogus"])), 1);
    assert_eq!(code(&ampda(&["bench", "--variant", "l2"])), 1);
}

#[test]
fn generate_writes_self_describing_instance() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(dir.path(), &["-R", "1", "--seed", "7"]);
    let doc = read_json(&path);
    assert_eq!(doc["m"], 365);
    assert_eq!(doc["n"], 1280);
    assert_eq!(doc["a"].as_array().unwrap().len(), 365);
    assert_eq!(doc["a"][0].as_array().unwrap().len(), 1280);
    assert_eq!(doc["lambda"], 5.0);
    assert_eq!(doc["mu"], 7);
    assert_eq!(doc["k"], 52);
    assert_eq!(doc["seed"], 7);
    assert_eq!(doc["x_true"].as_array().unwrap().len(), 1280);

    let again = dir.path().join("again.json");
    assert_eq!(
        code(&ampda(&[
            "generate",
            "-R",
            "1",
            "--seed",
            "7",
            "-o",
            path_str(&again)
        ])),
        0
    );
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());

    let topk = dir.path().join("topk.json");
    assert_eq!(
        code(&ampda(&[
            "generate",
            "--variant",
            "l1sk",
            "-o",
            path_str(&topk)
        ])),
        0
    );
    assert_eq!(read_json(&topk)["lambda"], 0.5);
    let ls = dir.path().join("ls.json");
    assert_eq!(
        code(&ampda(&[
            "generate",
            "--variant",
            "l1l2-ls",
            "-o",
            path_str(&ls)
        ])),
        0
    );
    assert_eq!(read_json(&ls)["mu"], 0);

    let bad = dir.path().join("bad.json");
    assert_eq!(
        code(&ampda(&["generate", "-R", "0", "-o", path_str(&bad)])),
        1
    );
    assert!(!bad.exists());
    let unwritable = dir.path().join("missing").join("x.json");
    assert_eq!(code(&ampda(&["generate", "-o", path_str(&unwritable)])), 2);
}

#[test]
fn solve_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), &["--seed", "3"]);
    let before = fs::read(&inst).unwrap();
    let out_dir = dir.path().join("out");
    let out = ampda(&[
        "solve",
        "--instance",
        path_str(&inst),
        "--out-dir",
        path_str(&out_dir),
        "--trace",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&inst).unwrap(), before);

    let summary = read_json(&out_dir.join("summary.json"));
    assert_eq!(summary["status"], "converged");
    assert_eq!(summary["admissible"], true);
    let iters = summary["iterations"].as_u64().unwrap() as usize;
    let obj = summary["objective"].as_f64().unwrap();
    assert!(obj > 1.0 && obj < 10.0, "{obj}");
    assert!(summary["rec_err"].as_f64().unwrap() < 0.1);

    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "iter,F,step_norm,alpha,backtracks,criticality");
    assert_eq!(lines.len(), iters + 2);
    let values: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*values.last().unwrap(), obj);

    let log = read_json(&out_dir.join("iterates.json"));
    assert_eq!(log["points"].as_array().unwrap().len(), iters + 1);
}

#[test]
fn solve_toy_instance_reaches_global_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let inst = toy_instance(dir.path());
    let out_dir = dir.path().join("out");
    let out = ampda(&[
        "solve",
        "--instance",
        path_str(&inst),
        "--out-dir",
        path_str(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&out_dir.join("summary.json"));
    let eps = summary["eps_measure"].as_f64().unwrap();
    assert!(eps < 1e-6, "criticality {eps}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("criticality"), "{stdout}");

    let x: Vec<f64> = serde_json::from_value(summary["final_x"].clone()).unwrap();
    let obj = summary["objective"].as_f64().unwrap();
    assert!((toy_objective([x[0], x[1]]) - obj).abs() < 1e-12);

    let pitch = 1e-3;
    let steps = (4.0 / pitch) as i64;
    let mut grid_min = f64::INFINITY;
    for i in 0..=steps {
        for j in 0..=steps {
            let p = [-2.0 + i as f64 * pitch, -2.0 + j as f64 * pitch];
            if p[0] != 0.0 || p[1] != 0.0 {
                grid_min = grid_min.min(toy_objective(p));
            }
        }
    }
    assert!(obj <= grid_min + 1e-9, "solver {obj}, grid {grid_min}");
}

#[test]
fn solve_reports_non_convergence_and_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), &[]);
    let out_dir = dir.path().join("out");
    let out_s = path_str(&out_dir);

    let out = ampda(&[
        "solve",
        "--instance",
        path_str(&inst),
        "--out-dir",
        out_s,
        "--max-iters",
        "1",
    ]);
    assert_eq!(code(&out), 3);
    assert_eq!(
        read_json(&out_dir.join("summary.json"))["status"],
        "max_iters"
    );

    let missing = dir.path().join("nope.json");
    assert_eq!(
        code(&ampda(&[
            "solve",
            "--instance",
            path_str(&missing),
            "--out-dir",
            out_s
        ])),
        2
    );

    let garbled = dir.path().join("garbled.json");
    fs::write(&garbled, "{\"format\": \"ampda-instance/1\", \"m\": 2").unwrap();
    assert_eq!(
        code(&ampda(&[
            "solve",
            "--instance",
            path_str(&garbled),
            "--out-dir",
            out_s
        ])),
        2
    );

    assert_eq!(
        code(&ampda(&[
            "solve",
            "--instance",
            path_str(&inst),
            "--out-dir",
            out_s,
            "--sigma",
            "-1"
        ])),
        1
    );
    assert_eq!(
        code(&ampda(&[
            "solve",
            "--instance",
            path_str(&inst),
            "--out-dir",
            out_s,
            "--variant",
            "l1l2-ls",
            "--mu",
            "3"
        ])),
        1
    );

    let x0 = dir.path().join("x0.json");
    fs::write(&x0, "[1.0, 2.0]").unwrap();
    assert_eq!(
        code(&ampda(&[
            "solve",
            "--instance",
            path_str(&inst),
            "--out-dir",
            out_s,
            "--x0",
            path_str(&x0)
        ])),
        1
    );
}

#[test]
fn solve_accepts_explicit_start_and_libsvm_input() {
    let dir = tempfile::tempdir().unwrap();
    let svm = dir.path().join("data.svm");
    fs::write(&svm, "1 1:1\n0.05 2:1\n1.1 1:1 2:1\n").unwrap();
    let out_dir = dir.path().join("out");
    let out_s = path_str(&out_dir);

    let out = ampda(&[
        "solve",
        "--libsvm",
        path_str(&svm),
        "--mu",
        "1",
        "--lambda",
        "10",
        "--bound",
        "2",
        "--out-dir",
        out_s,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let from_svm = read_json(&out_dir.join("summary.json"))["objective"]
        .as_f64()
        .unwrap();
    let toy = toy_instance(dir.path());
    let toy_dir = dir.path().join("toy");
    assert_eq!(
        code(&ampda(&[
            "solve",
            "--instance",
            path_str(&toy),
            "--out-dir",
            path_str(&toy_dir)
        ])),
        0
    );
    assert_eq!(
        from_svm,
        read_json(&toy_dir.join("summary.json"))["objective"]
            .as_f64()
            .unwrap()
    );

    assert_eq!(
        code(&ampda(&[
            "solve",
            "--libsvm",
            path_str(&svm),
            "--variant",
            "l1sk",
            "--out-dir",
            out_s
        ])),
        1
    );
    assert_eq!(
        code(&ampda(&[
            "solve",
            "--libsvm",
            path_str(&svm),
            "--variant",
            "l1sk",
            "--k",
            "1",
            "--out-dir",
            out_s
        ])),
        0
    );

    let x0 = dir.path().join("x0.json");
    fs::write(&x0, "[0.0, 1.5]").unwrap();
    let out = ampda(&[
        "solve",
        "--instance",
        path_str(&toy),
        "--x0",
        path_str(&x0),
        "--out-dir",
        out_s,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        read_json(&out_dir.join("summary.json"))["admissible"],
        Value::Null
    );

    let bad_svm = dir.path().join("bad.svm");
    fs::write(&bad_svm, "1 2:1 1:1\n").unwrap();
    assert_eq!(
        code(&ampda(&[
            "solve",
            "--libsvm",
            path_str(&bad_svm),
            "--out-dir",
            out_s
        ])),
        2
    );
    assert_eq!(
        code(&ampda(&[
            "solve",
            "--libsvm",
            path_str(&svm),
            "--instance",
            path_str(&toy),
            "--out-dir",
            out_s
        ])),
        1
    );
}

#[test]
fn check_accepts_real_traces_and_rejects_corrupted_ones() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(dir.path(), &["--variant", "l1sk", "--seed", "11"]);
    let out_dir = dir.path().join("out");
    let out = ampda(&[
        "solve",
        "--instance",
        path_str(&inst),
        "--variant",
        "l1sk",
        "--out-dir",
        path_str(&out_dir),
        "--trace",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log_path = out_dir.join("iterates.json");
    let report = dir.path().join("report.json");

    let out = ampda(&[
        "check",
        "--instance",
        path_str(&inst),
        "--iterates",
        path_str(&log_path),
        "--variant",
        "l1sk",
        "-o",
        path_str(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&report);
    for field in [
        "eps_measure",
        "alpha_used",
        "descent_violations",
        "fenchel_residual_g",
        "fenchel_residual_h2",
    ] {
        assert!(doc.get(field).is_some(), "missing {field}");
    }
    assert_eq!(doc["descent_violations"], 0);
    assert!(doc["grad_check_relerr"].as_f64().unwrap() < 1e-5);

    let mut log = read_json(&log_path);
    let mid = log["points"].as_array().unwrap().len() / 2;
    let point = log["points"][mid].as_array_mut().unwrap();
    for v in point.iter_mut() {
        *v = json!(v.as_f64().unwrap() * 0.5);
    }
    let corrupted = dir.path().join("corrupted.json");
    fs::write(&corrupted, log.to_string()).unwrap();
    let out = ampda(&[
        "check",
        "--instance",
        path_str(&inst),
        "--iterates",
        path_str(&corrupted),
        "--variant",
        "l1sk",
        "-o",
        path_str(&report),
    ]);
    assert_eq!(code(&out), 3);
    assert!(read_json(&report)["descent_violations"].as_u64().unwrap() >= 1);

    let missing = dir.path().join("none.json");
    let out = ampda(&[
        "check",
        "--instance",
        path_str(&inst),
        "--iterates",
        path_str(&missing),
        "--variant",
        "l1sk",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bench_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, runs: &str| {
        let out_dir = dir.path().join(name);
        let out = ampda(&[
            "bench",
            "--runs",
            runs,
            "--seed",
            "5",
            "--out-dir",
            path_str(&out_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let first = run("a", "3");
    let second = run("b", "3");
    assert_eq!(
        fs::read(first.join("summary.json")).unwrap(),
        fs::read(second.join("summary.json")).unwrap()
    );
    for file in ["timing.json", "table.txt", "curves.csv"] {
        assert!(first.join(file).exists(), "{file}");
    }
    let summary = read_json(&first.join("summary.json"));
    assert_eq!(summary["seeds"], json!([5, 6, 7]));
    assert_eq!(summary["aggregate"]["count"], 3);
    let table = fs::read_to_string(first.join("table.txt")).unwrap();
    assert!(table.contains("Iter") && table.contains("RecErr"));
    let timing = read_json(&first.join("timing.json"));
    assert_eq!(timing["per_run"].as_array().unwrap().len(), 3);
    let curves = fs::read_to_string(first.join("curves.csv")).unwrap();
    assert!(curves.starts_with("seed,iter,time_s,F\n"));

    let single = run("c", "1");
    let summary = read_json(&single.join("summary.json"));
    assert_eq!(summary["aggregate"]["std"]["obj"], 0.0);
    assert_eq!(summary["aggregate"]["std"]["iters"], 0.0);
}

#[test]
fn bench_failure_threshold_and_worker_variable() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = ampda(&[
        "bench",
        "--runs",
        "2",
        "--max-iters",
        "2",
        "--out-dir",
        path_str(&out_dir),
    ]);
    assert_eq!(code(&out), 3);
    assert_eq!(
        read_json(&out_dir.join("summary.json"))["aggregate"]["failures"],
        2
    );

    let out = Command::new(env!("CARGO_BIN_EXE_ampda"))
        .args(["bench", "--runs", "2", "--out-dir", path_str(&out_dir)])
        .env("AMPDA_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_ampda"))
        .args(["bench", "--runs", "2", "--out-dir", path_str(&out_dir)])
        .env("AMPDA_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}
