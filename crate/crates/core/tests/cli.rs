use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn zsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zsd"))
        .args(args)
        .env_remove("ZSD_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout))
    })
}

fn matrix_file(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

const G2: &str = "2 2\n0.8 0.2\n0.3 0.7\n";
const DIAG: &str = "2 2\n0.9 0.1\n0.1 0.9\n";

#[test]
fn solve_oracle_on_two_by_two() {
    let dir = tempfile::tempdir().unwrap();
    let g = matrix_file(dir.path(), "g2.txt", G2);
    let o = zsd(&["solve", "--matrix", &g, "--oracle"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!((v["value"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(v["method"], "oracle_2x2");
    let x: Vec<f64> = serde_json::from_value(v["x"].clone()).unwrap();
    assert!((x[0] - 0.4).abs() < 1e-12);
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 6);
}

#[test]
fn solve_is_byte_deterministic() {
    let a = zsd(&["solve", "--random", "2", "--seed", "7", "--oracle"]);
    let b = zsd(&["solve", "--random", "2", "--seed", "7", "--oracle"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = zsd(&["solve", "--random", "4", "--seed", "7", "--quiet"]);
    let d = zsd(&["solve", "--random", "4", "--seed", "7", "--quiet"]);
    assert_eq!(code(&c), 0);
    assert_eq!(c.stdout, d.stdout);
    assert!(c.stderr.is_empty());
    assert_eq!(json(&c)["method"], "estimator");
}

#[test]
fn solve_rejects_out_of_range_entries() {
    let dir = tempfile::tempdir().unwrap();
    let bad = matrix_file(dir.path(), "bad.txt", "2 2\n0.8 1.5\n0.3 0.7\n");
    let o = zsd(&["solve", "--matrix", &bad]);
    assert_eq!(code(&o), 1);
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());
    assert_eq!(code(&zsd(&["solve", "--matrix", "/nonexistent/m.txt"])), 1);
}

#[test]
fn solve_reports_discarded_estimates() {
    let o = zsd(&["solve", "--random", "6", "--seed", "1", "--tmax", "10"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_flbr_converges_on_oracle_game() {
    let dir = tempfile::tempdir().unwrap();
    let g = matrix_file(dir.path(), "g2.txt", G2);
    let out = dir.path().join("m.csv");
    let o = zsd(&[
        "run", "--matrix", &g, "--algo", "flbr", "--eta", "0.1", "--xi", "100", "--stop", "eps_nash:1e-6", "--out",
        out.to_str().unwrap(), "--quiet",
    ]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["stop_reason"], "criterion");
    assert!(v["eps_nash"].as_f64().unwrap() <= 1e-6);
    let metrics = fs::read_to_string(out).unwrap();
    assert!(metrics.starts_with("step,kl_to_ref,l1_to_ref,eps_nash,game_value,criterion_kl\n"));
}

#[test]
fn run_mwu_hits_tmax() {
    let dir = tempfile::tempdir().unwrap();
    let g = matrix_file(dir.path(), "g2.txt", G2);
    let o = zsd(&["run", "--matrix", &g, "--algo", "mwu", "--stop", "l1_to_ref:1e-3", "--tmax", "100000", "--quiet"]);
    assert_eq!(code(&o), 2);
    let v = json(&o);
    assert_eq!(v["stop_reason"], "tmax");
    assert_eq!(v["steps"], 100_000);
}

#[test]
fn run_rejects_invalid_configurations() {
    let dir = tempfile::tempdir().unwrap();
    let g = matrix_file(dir.path(), "g2.txt", G2);
    for args in [
        vec!["run", "--matrix", &g, "--algo", "omd", "--xi", "0.3", "--eta", "0.1"],
        vec!["run", "--matrix", &g, "--eta", "0"],
        vec!["run", "--matrix", &g, "--algo", "sgd"],
        vec!["run", "--matrix", &g, "--stop", "kl:1"],
        vec!["run", "--matrix", &g, "--algo", "mwu", "--stop", "criterion_kl:1e-9"],
        vec!["run", "--matrix", &g, "--tmax", "0"],
        vec!["run", "--random", "0"],
        vec!["run"],
        vec!["frobnicate"],
    ] {
        let o = zsd(&args);
        assert_eq!(code(&o), 1, "{args:?}");
    }
    let o = zsd(&["run", "--matrix", &g, "--algo", "omd", "--eta", "0.1", "--stop", "criterion_kl:1e-12", "--quiet"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["xi"], 0.1);
}

#[test]
fn traj_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let g = matrix_file(dir.path(), "diag.txt", DIAG);
    let out = dir.path().join("traj");
    let o = zsd(&[
        "traj", "--matrix", &g, "--algo", "flbr", "--stop", "l1_to_ref:1e-8", "--record-every", "5", "--out",
        out.to_str().unwrap(), "--quiet",
    ]);
    assert_eq!(code(&o), 0);
    let coords = fs::read_to_string(out.join("coords.csv")).unwrap();
    assert!(coords.starts_with("step,player,coord,prob,ibr_prob\n0,x,0,0.5,\n"));
    assert!(out.join("metrics.csv").exists());
    assert_eq!(code(&zsd(&["traj", "--matrix", &g])), 1);
}

#[test]
fn batch_writes_csv_named_after_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    fs::write(
        &cfg,
        "sizes = 2, 3\nalgorithms = flbr, omwu\netas = 0.1\nxis = 100\nreps = 3\nt_max = 2e5\nstop = kl_to_ref:1e-10\nreference = support_enum\n",
    )
    .unwrap();
    let out: PathBuf = dir.path().join("out");
    let run = |threads: &str| {
        let o = zsd(&["batch", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out.join("tiny.csv")).unwrap()
    };
    let a = run("1");
    let b = run("2");
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "n,algorithm,eta,xi,reps,mean_steps,median_steps,q75,q90,q975,tmax_hit_rate");
    assert_eq!(lines.len(), 5);
    assert!(lines[2].starts_with("2,omwu,0.1,,3,"));
}

#[test]
fn batch_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    fs::write(&cfg, "sizes =\nalgorithms = flbr\netas = 0.1\nxis = 100\nreps = 3\nt_max = 100\nstop = tmax_only\n").unwrap();
    let o = zsd(&["batch", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&zsd(&["batch", "--config", "/nonexistent.cfg"])), 1);
}

#[test]
fn jacobian_certifies_contraction() {
    let dir = tempfile::tempdir().unwrap();
    let g = matrix_file(dir.path(), "g2.txt", G2);
    let o = zsd(&["jacobian", "--matrix", &g, "--eta", "0.1", "--xi", "5"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["is_contraction"], true);
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    for k in ["spectral_radius", "is_contraction", "pnorm_certificate", "dxx_diag_negative", "dyy_diag_negative", "eta", "xi"] {
        assert!(keys.contains(&k), "missing {k}");
    }
}

#[test]
fn jacobian_at_pure_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    // Saddle point at (row 0, column 1).
    let g = matrix_file(dir.path(), "pure.txt", "2 2\n0.6 0.5\n0.2 0.4\n");
    let o = zsd(&["jacobian", "--matrix", &g, "--eta", "0.1", "--xi", "5"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!(v["spectral_radius"].as_f64().unwrap() < 1.0);
    let stderr = String::from_utf8_lossy(&o.stderr);
    let support_radius: f64 = stderr
        .lines()
        .find_map(|l| l.strip_prefix("support spectral radius"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(support_radius.abs() < 1e-12);
}

#[test]
fn jacobian_rejects_large_eta() {
    let o = zsd(&["jacobian", "--random", "3", "--eta", "1.5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn help_lists_flags_and_exits_zero() {
    let cases: [(&str, &[&str]); 5] = [
        ("solve", &["--matrix", "--random", "--seed", "--oracle", "--eta", "--xi", "--tmax", "--quiet"]),
        (
            "run",
            &[
                "--matrix", "--random", "--seed", "--algo", "--eta", "--xi", "--tmax", "--stop", "--out", "--quiet",
                "--record-every",
            ],
        ),
        ("batch", &["--config", "--out", "--threads", "--quiet", "ZSD_THREADS"]),
        ("jacobian", &["--matrix", "--random", "--seed", "--eta", "--xi", "--quiet"]),
        (
            "traj",
            &[
                "--matrix", "--random", "--seed", "--algo", "--eta", "--xi", "--tmax", "--stop", "--out", "--quiet",
                "--record-every",
            ],
        ),
    ];
    for (sub, flags) in cases {
        let o = zsd(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        let text = String::from_utf8_lossy(&o.stdout);
        for f in flags {
            assert!(text.contains(f), "{sub} --help lacks {f}");
        }
    }
    assert_eq!(code(&zsd(&["--help"])), 0);
}
