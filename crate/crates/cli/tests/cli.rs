use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use safelogrank::dataset::records_from_stream;
use safelogrank::gaussian::gaussian_log_evalue_at;
use safelogrank::sim::{replication_rng, sample_tied_stream};
use safelogrank::{schoenfeld_mu, write_dataset, HazardRatio, RiskSet};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_safelogrank"));
    c.env_remove("SAFELOGRANK_SEED")
        .env_remove("SAFELOGRANK_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Simulated trial with ties, administratively censored at `censor_at`.
fn synthetic(
    dir: &TempDir,
    name: &str,
    m1: u64,
    m0: u64,
    theta: f64,
    seed: u64,
    censor_at: f64,
) -> PathBuf {
    let mut stream = sample_tied_stream(m1, m0, theta, 0.002, replication_rng(seed, 0)).unwrap();
    stream.retain(|tb| tb.time < censor_at);
    let records = records_from_stream(RiskSet::new(m1, m0), &stream, censor_at).unwrap();
    let path = dir.path().join(name);
    write_dataset(&records, std::fs::File::create(&path).unwrap()).unwrap();
    path
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["analyze", "--bogus"])), 64);
    assert_eq!(
        code(&run(&["analyze", "/no/such/file.csv", "--theta1", "0.7"])),
        66
    );
    let bad = write(&dir, "bad.csv", "time,group,status\n1,2,1\n");
    let o = run(&["analyze", p(&bad), "--theta1", "0.7"]);
    assert_eq!(code(&o), 65);
    assert!(stderr(&o).contains("line 2"));
    let empty = write(&dir, "empty.csv", "");
    assert_eq!(code(&run(&["analyze", p(&empty), "--theta1", "0.7"])), 65);
    let strong = synthetic(&dir, "strong.csv", 300, 300, 0.3, 1, 1e9);
    assert_eq!(code(&run(&["analyze", p(&strong), "--theta1", "0.5"])), 10);
}

#[test]
fn zero_events_give_unit_evalue() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "none.csv", "time,group,status\n3,1,0\n4,0,censored\n");
    let json = dir.path().join("r.json");
    let o = run(&["--json", p(&json), "analyze", p(&data), "--theta1", "0.7"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 1);
    let r = read_json(&json);
    assert_eq!(r["summary"]["final_log10_e"], 0.0);
    assert_eq!(r["summary"]["decision"], "continue");
}

#[test]
fn meta_multiplies_final_evalues() {
    let dir = TempDir::new().unwrap();
    let a = synthetic(&dir, "a.csv", 200, 200, 0.8, 2, 1.0e9);
    let b = synthetic(&dir, "b.csv", 150, 150, 0.8, 3, 1.0e9);
    let final_of = |path: &Path| {
        let json = dir.path().join("x.json");
        run(&["--json", p(&json), "analyze", p(path), "--theta1", "0.8"]);
        read_json(&json)["summary"]["final_log10_e"]
            .as_f64()
            .unwrap()
    };
    let (la, lb) = (final_of(&a), final_of(&b));
    let json = dir.path().join("m.json");
    run(&["--json", p(&json), "meta", p(&a), p(&b), "--theta1", "0.8"]);
    let combined = read_json(&json)["combined_log10_e"].as_f64().unwrap();
    assert!((combined - (la + lb)).abs() < 1e-12);
    let json = dir.path().join("am.json");
    run(&[
        "--json",
        p(&json),
        "analyze",
        p(&a),
        "--theta1",
        "0.8",
        "--meta",
        p(&b),
    ]);
    let via_analyze = read_json(&json)["summary"]["combined_log10_e"]
        .as_f64()
        .unwrap();
    assert!((via_analyze - (la + lb)).abs() < 1e-12);
}

#[test]
fn exact_and_gaussian_agree_on_balanced_data() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(&dir, "bal.csv", 2000, 2000, 0.7, 4, 40.0);
    let final_log_e = |test: &str| {
        let json = dir.path().join(format!("{test}.json"));
        let o = run(&[
            "--json",
            p(&json),
            "analyze",
            p(&data),
            "--theta1",
            "0.7",
            "--test",
            test,
        ]);
        assert!(matches!(code(&o), 0 | 10), "{}", stderr(&o));
        let r = read_json(&json);
        assert!(
            r["rows"].as_array().unwrap().last().unwrap()["n"]
                .as_u64()
                .unwrap()
                > 150
        );
        r["summary"]["final_log_e"].as_f64().unwrap()
    };
    let (exact, gauss) = (final_log_e("exact"), final_log_e("gaussian"));
    assert!(exact.abs() > 1.0);
    assert!(
        ((exact - gauss) / exact).abs() < 0.05,
        "exact {exact}, gaussian {gauss}"
    );
}

#[test]
fn analysis_of_a_prefix_is_a_prefix_of_the_analysis() {
    let dir = TempDir::new().unwrap();
    let full = synthetic(&dir, "full.csv", 300, 300, 0.7, 5, 1e9);
    let part = synthetic(&dir, "part.csv", 300, 300, 0.7, 5, 120.0);
    for extra in [&[][..], &["--intersect", "--nmax", "150"][..]] {
        let mut args = vec!["analyze", "--theta1", "0.7", "--grid", "100"];
        args.extend_from_slice(extra);
        let a = stdout(&run(&[&args[..], &[p(&full)]].concat()));
        let b = stdout(&run(&[&args[..], &[p(&part)]].concat()));
        assert!(b.lines().count() > 10 && b.lines().count() < a.lines().count());
        assert!(a.starts_with(&b));
    }
}

#[test]
fn design_validation_and_determinism() {
    let o = run(&["design", "--theta1", "1"]);
    assert_eq!(code(&o), 64);
    assert!(stderr(&o).contains("theta1"));
    let args = [
        "design", "--theta1", "0.7", "--reps", "200", "--m1", "1000", "--m0", "1000", "--seed", "7",
    ];
    let a = run(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, run(&args).stdout);
    let out = stdout(&a);
    assert!(out.starts_with("quantity,value\nschoenfeld_n,195\nreplications,200\n"));
    let from_env = bin()
        .args(&args[..args.len() - 2])
        .env("SAFELOGRANK_SEED", "7")
        .env("SAFELOGRANK_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(from_env.stdout, a.stdout);
}

#[test]
fn unattainable_power_is_a_report_field() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("d.json");
    let o = run(&[
        "--json",
        p(&json),
        "design",
        "--theta1",
        "0.9",
        "--reps",
        "100",
        "--m1",
        "50",
        "--m0",
        "50",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("unattainable,\"safe: "));
    assert_eq!(read_json(&json)["safe"], Value::Null);
}

#[test]
fn simulate_emits_one_row_per_replication() {
    let o = run(&[
        "simulate", "--theta1", "0.5", "--reps", "20", "--m1", "100", "--m0", "100", "--seed", "3",
    ]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "rep,tau");
    assert_eq!(lines.len(), 21);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 2));
}

#[test]
fn boundary_columns() {
    let o = run(&[
        "boundary", "--theta1", "0.7", "--alpha", "0.05", "--nmax", "195", "--m1", "500", "--m0",
        "500",
    ]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,gaussian_safe,obrien_fleming,fixed"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 195);
    assert!(rows.iter().all(|r| r[3] == "-1.644854"));
    assert_eq!(rows[194][2], "-1.959964");
    let mu = schoenfeld_mu(HazardRatio::new(0.7).unwrap(), 500, 500);
    for r in rows.iter().step_by(17) {
        let n: u64 = r[0].parse().unwrap();
        let t: f64 = r[1].parse().unwrap();
        let log_e = gaussian_log_evalue_at(mu, n, t);
        assert!((log_e - 20f64.ln()).abs() < 1e-4, "n={n}: {log_e}");
    }
    let right = stdout(&run(&[
        "boundary", "--theta1", "1.5", "--nmax", "10", "--to", "10",
    ]));
    assert!(right
        .lines()
        .last()
        .unwrap()
        .ends_with(",1.959964,1.644854"));
}

#[test]
fn gaussian_refuses_unbalanced_designs_without_override() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(&dir, "unbal.csv", 400, 200, 0.8, 6, 1e9);
    let o = run(&["analyze", p(&data), "--theta1", "0.7", "--test", "gaussian"]);
    assert_eq!(code(&o), 64);
    assert!(stderr(&o).contains("exact test is recommended"));
    let o = run(&[
        "analyze",
        p(&data),
        "--theta1",
        "0.7",
        "--test",
        "gaussian",
        "--allow-unbalanced-gaussian",
    ]);
    assert!(matches!(code(&o), 0 | 10));
    let bal = synthetic(&dir, "bal.csv", 300, 300, 0.8, 7, 1e9);
    let o = run(&["analyze", p(&bal), "--theta1", "0.3", "--test", "gaussian"]);
    assert_eq!(code(&o), 64);
    assert_eq!(code(&run(&["analyze", p(&bal), "--theta1", "0.3"])), 10);
}

#[test]
fn malformed_flag_combinations_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(&dir, "d.csv", 100, 100, 0.7, 8, 1e9);
    let d = p(&data);
    for args in [
        &["confseq", d, "--test", "exact"][..],
        &["confseq", d, "--two-sided"],
        &[
            "analyze",
            d,
            "--theta1",
            "0.7",
            "--side",
            "left",
            "--two-sided",
        ],
        &["analyze", d, "--theta1", "0.7", "--side", "right"],
        &["analyze", d, "--theta1", "0.7", "--prior", "point:0.5"],
        &[
            "analyze", d, "--theta1", "0.7", "--test", "bayes", "--prior", "beta:1,2",
        ],
        &["analyze", d],
        &["analyze", d, "--theta1", "0.7", "--delimiter", "pipe-ish"],
        &["design", "--theta1", "0.7", "--nmax", "100"],
        &["figure", "7"],
    ] {
        let o = run(args);
        assert_eq!(code(&o), 64, "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", "theta1 = 0.7\nnmax = 20\nto = 3\n");
    assert_eq!(code(&run(&["--config", p(&cfg), "boundary"])), 64);
    let cfg = write(&dir, "c.toml", "theta1 = 0.7\nnmax = 20\nalpha = 0.1\n");
    let out = stdout(&run(&["--config", p(&cfg), "boundary", "--to", "3"]));
    assert!(out.lines().nth(1).unwrap().ends_with(",-1.281552"));
    let out = stdout(&run(&[
        "--config",
        p(&cfg),
        "boundary",
        "--to",
        "3",
        "--alpha",
        "0.05",
    ]));
    assert!(out.lines().nth(1).unwrap().ends_with(",-1.644854"));
}

#[test]
fn confseq_table_and_learned_tests() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(&dir, "cs.csv", 300, 300, 0.6, 9, 1e9);
    let o = run(&["confseq", p(&data), "--grid", "80", "--intersect"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,event_time_index,lower,upper,lower_bracketed,upper_bracketed"
    );
    assert_eq!(
        lines.next().unwrap(),
        "0,0,0.001000,1000.000000,false,false"
    );
    let widths: Vec<f64> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            f[3].parse::<f64>().unwrap() / f[2].parse::<f64>().unwrap()
        })
        .collect();
    assert!(widths.windows(2).all(|w| w[1] <= w[0]));
    let o = run(&[
        "confseq",
        p(&data),
        "--test",
        "bayes",
        "--prior",
        "normal:-0.5,0.5,41",
        "--grid",
        "60",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for test in ["plugin", "bayes"] {
        let o = run(&[
            "analyze",
            p(&data),
            "--theta1",
            "0.7",
            "--test",
            test,
            "--grid",
            "60",
        ]);
        assert!(matches!(code(&o), 0 | 10), "{test}: {}", stderr(&o));
    }
    let o = run(&[
        "analyze",
        p(&data),
        "--theta1",
        "0.7",
        "--two-sided",
        "--theta0",
        "1",
    ]);
    assert!(matches!(code(&o), 0 | 10), "{}", stderr(&o));
}

#[test]
fn figure_column_contracts() {
    let header = |args: &[&str]| {
        let o = run(args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        stdout(&o)
    };
    let f1 = header(&["figure", "1"]);
    assert!(f1.starts_with("theta1,allocation,m1,m0,expectation\n"));
    for line in f1.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let e: f64 = f[4].parse().unwrap();
        if f[1] == "1:1" {
            assert!(e <= 1.0 + 1e-6, "{line}");
        }
    }
    assert!(f1.lines().any(|l| l.starts_with("0.100000,3:1,")
        && l.split(',').nth(4).unwrap().parse::<f64>().unwrap() > 1.0));
    assert!(header(&["figure", "2"])
        .starts_with("theta1,treated_event,exact_log10_e,gaussian_log10_e\n"));
    let f3 = header(&["figure", "3", "--reps", "4", "--m1", "1000", "--m0", "1000"]);
    assert!(f3.starts_with("theta1,rep,tau_exact,tau_gaussian\n"));
    assert_eq!(f3.lines().count(), 1 + 5 * 4);
    let f4 = header(&["figure", "4"]);
    assert!(f4.starts_with("n,gaussian_safe,obrien_fleming,fixed\n"));
    assert_eq!(
        f4.lines().nth(205).unwrap().split(',').nth(2).unwrap(),
        "-1.959964"
    );
    let f5 = header(&[
        "figure", "5", "--reps", "100", "--m1", "3000", "--m0", "3000",
    ]);
    assert!(f5.starts_with("theta1,method,n_max_ratio,conditional_mean_ratio,mean_ratio\n"));
    assert_eq!(f5.lines().count(), 1 + 9 * 4);
    let f6 = header(&[
        "figure", "6", "--reps", "100", "--m1", "1500", "--m0", "1500",
    ]);
    assert!(f6.starts_with("theta,method,n_max\n"));
    assert_eq!(f6.lines().count(), 1 + 6 * 4);
}

#[test]
fn outputs_are_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(&dir, "d.csv", 200, 200, 0.7, 10, 1e9);
    let ja = dir.path().join("a.json");
    let jb = dir.path().join("b.json");
    let a = run(&[
        "--json",
        p(&ja),
        "analyze",
        p(&data),
        "--theta1",
        "0.7",
        "--nmax",
        "100",
    ]);
    let b = bin()
        .args([
            "--json",
            p(&jb),
            "analyze",
            p(&data),
            "--theta1",
            "0.7",
            "--nmax",
            "100",
        ])
        .env("SAFELOGRANK_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(std::fs::read(&ja).unwrap(), std::fs::read(&jb).unwrap());
    let sim = |threads: &str| {
        bin()
            .args([
                "simulate", "--theta1", "0.7", "--reps", "50", "--m1", "300", "--m0", "300",
                "--seed", "11",
            ])
            .env("SAFELOGRANK_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(sim("1"), sim("3"));
}

#[test]
fn tab_delimited_input_with_entry_column() {
    let dir = TempDir::new().unwrap();
    let data = write(
        &dir,
        "t.tsv",
        "entry\texit\tgroup\tstatus\n0\t2\t1\tevent\n0\t2\t0\tevent\n1\t3\t1\tcensored\n0\t4\t0\tevent\n0\t5\t1\tcensored\n",
    );
    let o = run(&["analyze", p(&data), "--theta1", "0.7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("2,1,2.000000,3,2,2,1,"));
    assert!(rows[1].starts_with("3,2,4.000000,1,1,1,0,"));
    let forced = run(&[
        "analyze",
        p(&data),
        "--theta1",
        "0.7",
        "--delimiter",
        "comma",
    ]);
    assert_eq!(code(&forced), 65);
}
