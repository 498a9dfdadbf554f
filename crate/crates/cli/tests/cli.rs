use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn swirl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swirl"))
        .current_dir(dir)
        .env_remove("SWIRL_THREADS")
        .args(args)
        .output()
        .expect("spawn swirl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
}

/// Non-comment lines of an output file.
fn body(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn feasibility_positive_verdict() {
    let d = tempfile::tempdir().unwrap();
    let o = swirl(d.path(), &["analysis", "feasibility", "--alpha", "2.5"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert_eq!(value(&s, "feasible"), "true");
    let e1: f64 = value(&s, "E1").parse().unwrap();
    assert!((e1 - 0.013).abs() < 1e-3, "{e1}");
    let csv = fs::read_to_string(d.path().join("out/feasibility.csv")).unwrap();
    assert!(csv.starts_with("# swirl analysis feasibility\n"));
    assert!(csv.contains("\n# alpha = 2.5\n"));
    assert_eq!(
        body(&d.path().join("out/feasibility.csv"))[0],
        "alpha,alpha_star,beta_lo,beta_hi,beta,p,delta,E1,E2,E3,feasible"
    );
}

#[test]
fn feasibility_negative_verdict_is_success() {
    let d = tempfile::tempdir().unwrap();
    let o = swirl(d.path(), &["analysis", "feasibility", "--alpha", "2.2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(value(&stdout(&o), "feasible"), "false");
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(
        swirl(d.path(), &["analysis", "feasibility", "--alpha", "3.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(swirl(d.path(), &["frobnicate"]).status.code(), Some(64));
    assert_eq!(
        swirl(d.path(), &["field", "norms", "--mode", "l7"]).status.code(),
        Some(64)
    );
    assert_eq!(swirl(d.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(
        swirl(d.path(), &["analysis", "recurrence", "--set", "analysis.bogus=1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        swirl(d.path(), &["field", "build", "--set", "profile.j_max=0"])
            .status
            .code(),
        Some(1)
    );
    fs::write(d.path().join("bad.toml"), "[profile\nalpha = 2.5\n").unwrap();
    assert_eq!(
        swirl(d.path(), &["field", "build", "--config", "bad.toml"])
            .status
            .code(),
        Some(1)
    );
    // Two positive energies cannot be fitted.
    let o = swirl(
        d.path(),
        &[
            "degiorgi",
            "energy",
            "--set",
            "degiorgi.rho_min=1",
            "--set",
            "degiorgi.rho_max=2",
            "--set",
            "degiorgi.amplitude=6",
            "--set",
            "degiorgi.shells=50",
        ],
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn thread_env_must_parse() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_swirl"))
        .current_dir(d.path())
        .env("SWIRL_THREADS", "many")
        .args(["analysis", "recurrence"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn empty_alpha_sum_is_header_only() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("run.toml"),
        "experiment = \"empty\"\n[profile]\nj_max = 0\n",
    )
    .unwrap();
    let o = swirl(d.path(), &["field", "norms", "--mode", "alpha", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(0));
    let path = d.path().join("out/norms_alpha.csv");
    assert_eq!(body(&path), vec!["mode,J_or_zcut,value,error_estimate".to_string()]);
    assert!(fs::read_to_string(&path)
        .unwrap()
        .contains("# experiment = \"empty\"\n"));
}

#[test]
fn flags_win_over_file() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("run.toml"),
        "output_dir = \"a\"\n[analysis]\nalpha = 2.2\n",
    )
    .unwrap();
    let o = swirl(
        d.path(),
        &[
            "analysis",
            "feasibility",
            "--config",
            "run.toml",
            "--alpha",
            "2.5",
            "--out",
            "b",
        ],
    );
    assert_eq!(value(&stdout(&o), "feasible"), "true");
    let csv = fs::read_to_string(d.path().join("b/feasibility.csv")).unwrap();
    assert!(csv.contains("# output_dir = \"b\"\n") && csv.contains("# alpha = 2.5\n"));
    assert!(!d.path().join("a").exists());
}

#[test]
fn recurrence_matches_bisection() {
    let d = tempfile::tempdir().unwrap();
    let o = swirl(d.path(), &["analysis", "recurrence", "--B", "2", "--beta", "1.5"]);
    let s = stdout(&o);
    let c: f64 = value(&s, "C_star").parse().unwrap();
    assert!((c - 2f64.powi(-8)).abs() < 1e-15);
    assert!(value(&s, "rel_gap").parse::<f64>().unwrap() < 1e-6);
    let rows = body(&d.path().join("out/recurrence.csv"));
    assert_eq!(rows.len(), 201);
    assert!(rows[1].starts_with("1,"));
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let (d1, d3) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = |t: &'static str| {
        vec![
            "field",
            "norms",
            "--mode",
            "l2",
            "--threads",
            t,
            "--set",
            "grid.per_panel=4",
            "--set",
            "grid.l2_depths=[0.1, 0.01]",
        ]
    };
    assert_eq!(swirl(d1.path(), &args("1")).status.code(), Some(0));
    assert_eq!(swirl(d3.path(), &args("3")).status.code(), Some(0));
    for f in ["out/norms_l2.csv", "out/curve_l2.csv"] {
        let a = fs::read_to_string(d1.path().join(f)).unwrap();
        let b = fs::read_to_string(d3.path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
        // The thread count is not part of the recorded config.
        assert!(!a.contains("threads"));
    }
    assert_eq!(body(&d1.path().join("out/norms_l2.csv")).len(), 3);
}

#[test]
fn field_build_reports_feasible_annuli() {
    let d = tempfile::tempdir().unwrap();
    let o = swirl(d.path(), &["field", "build", "--set", "profile.j_max=4"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert_eq!(value(&s, "feasible_j_max"), "4");
    assert_eq!(value(&s, "certified"), "2 3 4");
    let rows = body(&d.path().join("out/conditions.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("1,") && rows[1].ends_with(",false"));
    let text = fs::read_to_string(d.path().join("out/profile.txt")).unwrap();
    assert!(text.contains("[[annulus]]\nj = 4\n"));
}

#[test]
fn growth_blowup_and_control() {
    let d = tempfile::tempdir().unwrap();
    let o = swirl(d.path(), &["field", "growth", "--L", "1", "--cap", "10"]);
    assert_eq!(value(&stdout(&o), "exceeded"), "true");
    let o = swirl(
        d.path(),
        &[
            "field",
            "growth",
            "--L",
            "0.1",
            "--cap",
            "1",
            "--set",
            "profile.shape=exponential",
            "--set",
            "growth.start_radii=[0.2, 0.5, 0.8]",
            "--set",
            "growth.start_factor=999",
            "--set",
            "growth.step_fraction=0.1",
            "--set",
            "growth.max_steps=2000",
        ],
    );
    let s = stdout(&o);
    assert_eq!(value(&s, "exceeded"), "false");
    assert!(value(&s, "samples_used").parse::<usize>().unwrap() > 0);
}

#[test]
fn degiorgi_checks_hold_on_power_family() {
    let d = tempfile::tempdir().unwrap();
    for which in ["weaklp", "cheb", "domination", "layercake"] {
        let o = swirl(
            d.path(),
            &["degiorgi", "check", "--which", which, "--set", "degiorgi.shells=300"],
        );
        assert_eq!(o.status.code(), Some(0), "{which}");
        assert_eq!(value(&stdout(&o), "all_hold"), "true", "{which}");
    }
    let text = fs::read_to_string(d.path().join("out/check_weaklp.csv")).unwrap();
    // Calibrated C0 and the default amplitude R^beta are recorded.
    assert!(text.contains("# c0 = ") && text.contains("# amplitude = "));
    let o = swirl(d.path(), &["degiorgi", "energy", "--set", "degiorgi.shells=300"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(value(&stdout(&o), "trivial_decay"), "false");
    assert_eq!(body(&d.path().join("out/energy.csv")).len(), 8);
}
