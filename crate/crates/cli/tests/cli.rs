use std::path::Path;
use std::process::{Command, Output};

fn dataplace(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dataplace"))
        .args(args)
        .current_dir(dir)
        .env_remove("DATAPLACE_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

fn generated(dir: &Path, name: &str, extra: &[&str]) {
    let mut args = vec![
        "generate", "--seed", "5", "--n", "4", "--k", "2", "-o", name,
    ];
    args.extend_from_slice(extra);
    let o = dataplace(&args, dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn generate_is_reproducible_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path(), "a.json", &[]);
    generated(dir.path(), "b.json", &[]);
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
    let o = dataplace(&["validate", "-i", "a.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("# provenance {"));
}

#[test]
fn asymmetric_instance_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"n":2,"k":1,"cache_sizes":[1,1],"access_costs":[[0,1],[2,0]],
            "demands":[[1],[1]],"placement_fees":[[0],[0]]}"#,
    )
    .unwrap();
    let o = dataplace(&["validate", "-i", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("symmetric at (1,2)"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = dataplace(&["brute", "-i", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--help"));
    let o = dataplace(&["brute", "--frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    generated(dir.path(), "g.json", &[]);
    let o = dataplace(&["eval", "-i", "g.json", "--alloc", "1,2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn brute_matches_eval_of_its_allocation() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path(), "g.json", &[]);
    let b = json(&dataplace(
        &["--format", "json", "brute", "-i", "g.json"],
        dir.path(),
    ));
    assert_eq!(b["schema"], 1);
    let alloc = b["result"]["allocation"].as_str().unwrap().to_string();
    let e = json(&dataplace(
        &[
            "--format", "json", "eval", "-i", "g.json", "--alloc", &alloc,
        ],
        dir.path(),
    ));
    let (x, y) = (
        b["result"]["optimum"].as_f64().unwrap(),
        e["result"]["potential"].as_f64().unwrap(),
    );
    assert!((x - y).abs() < 1e-12);
}

#[test]
fn chain_curve_has_header_and_starts_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path(), "g.json", &[]);
    let o = dataplace(
        &[
            "chain", "-i", "g.json", "--beta", "0.1", "--tmax", "30", "--out", "c.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,d_t,bound_n_exp"));
    assert!(lines.next().unwrap().starts_with("0,"));
    assert_eq!(text.lines().count(), 32);
}

#[test]
fn glauber_trace_is_seed_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path(), "g.json", &[]);
    for name in ["t1.csv", "t2.csv"] {
        let o = dataplace(
            &[
                "glauber", "-i", "g.json", "--beta", "2", "--steps", "500", "--seed", "9",
                "--trace", name,
            ],
            dir.path(),
        );
        assert!(o.status.success());
    }
    let t1 = std::fs::read_to_string(dir.path().join("t1.csv")).unwrap();
    assert_eq!(
        t1,
        std::fs::read_to_string(dir.path().join("t2.csv")).unwrap()
    );
    assert!(t1.starts_with("t,player,old,new,phi\n"));
    assert_eq!(t1.lines().count(), 502);
}

#[test]
fn dual_and_auction_write_versioned_reports() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path(), "g.json", &["--fee-max", "0"]);
    let o = dataplace(&["dual", "-i", "g.json", "--out", "d.json"], dir.path());
    assert!(o.status.success());
    let d: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
    assert_eq!(d["schema"], 1);
    assert!(d["feasibility_residual"].as_f64().unwrap() <= 1e-9);
    assert!(d["objective"].as_f64().unwrap() <= d["optimum"].as_f64().unwrap() + 1e-9);

    let o = dataplace(
        &["auction", "-i", "g.json", "--report", "r.json"],
        dir.path(),
    );
    assert!(o.status.success());
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r["schema"], 1);
    for key in [
        "bids",
        "winners",
        "payments",
        "social_welfare",
        "revenue",
        "gamma",
        "factor",
        "bound",
        "cs_audit",
    ] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn capacitated_instances_are_reduced_first() {
    let dir = tempfile::tempdir().unwrap();
    generated(
        dir.path(),
        "cap.json",
        &["--cache-min", "2", "--cache-max", "2"],
    );
    let o = dataplace(&["reduce", "-i", "cap.json", "-o", "unit.json"], dir.path());
    assert!(o.status.success());
    let b = dataplace(&["brute", "-i", "cap.json"], dir.path());
    assert!(stdout(&b).contains("reduced to 8 unit-cache agents"));
    let u = dataplace(
        &["--quiet", "--format", "json", "brute", "-i", "unit.json"],
        dir.path(),
    );
    let c = dataplace(&["--format", "json", "brute", "-i", "cap.json"], dir.path());
    assert_eq!(json(&u)["result"]["optimum"], json(&c)["result"]["optimum"]);
}

#[test]
fn best_response_returns_an_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path(), "g.json", &[]);
    let o = json(&dataplace(
        &[
            "--format",
            "json",
            "bestresponse",
            "-i",
            "g.json",
            "--seed",
            "3",
        ],
        dir.path(),
    ));
    let ne = o["result"]["equilibrium"].as_str().unwrap().to_string();
    let n = dataplace(
        &[
            "--format", "json", "nebound", "-i", "g.json", "--alloc", &ne,
        ],
        dir.path(),
    );
    assert!(n.status.success());
    assert_eq!(json(&n)["result"]["violated"], false);
}

#[test]
fn mixing_estimate_respects_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    generated(dir.path(), "g.json", &[]);
    let args = [
        "--format",
        "json",
        "mix",
        "-i",
        "g.json",
        "--replicas",
        "100",
        "--seed",
        "2",
    ];
    let one = Command::new(env!("CARGO_BIN_EXE_dataplace"))
        .args(args)
        .current_dir(dir.path())
        .env("DATAPLACE_THREADS", "1")
        .output()
        .unwrap();
    let many = dataplace(&args, dir.path());
    assert!(one.status.success() && many.status.success());
    assert_eq!(json(&one)["result"], json(&many)["result"]);
}
