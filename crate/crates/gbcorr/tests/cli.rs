use std::path::Path;
use std::process::{Command, Output};

fn gbcorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gbcorr"))
        .args(args)
        .env_remove("GBCORR_THREADS")
        .output()
        .expect("spawn gbcorr")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn zero_coupling_gives_all_zero_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = gbcorr(&["compute", "--kf-list", "1,2", "--potential-coupling", "0", "--output-dir", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    for line in csv.lines().skip(1) {
        for (i, field) in line.split(',').enumerate().skip(2) {
            if !field.is_empty() {
                assert_eq!(field.parse::<f64>().unwrap(), 0.0, "column {i}: {line}");
                assert!(!field.starts_with('-'), "{line}");
            }
        }
    }
}

#[test]
fn unknown_config_key_exits_1_with_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "kf_list = 1\npotential.strength = 2\n").unwrap();
    let o = gbcorr(&["compute", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("potential.strength"), "{}", stderr(&o));
}

#[test]
fn invalid_values_exit_1() {
    for args in [["--kf-list", "3,2"], ["--quad-tol", "0.1"], ["--kf-list", "1.3"]] {
        let o = gbcorr(&["compute", args[0], args[1]]);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_file_flags_and_env_layer_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "threads = 0\n").unwrap();
    let base = ["compute", "--kf-list", "1", "--config", cfg.to_str().unwrap()];
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    // env overrides the file, flags override env
    let o = Command::new(env!("CARGO_BIN_EXE_gbcorr"))
        .args(base)
        .args(["--output-dir", out])
        .env("GBCORR_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_gbcorr"))
        .args(base)
        .args(["--output-dir", out, "--threads", "0"])
        .env("GBCORR_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let max = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).to_string();
    let mut runs = vec![];
    for t in ["1", "4", max.as_str()] {
        let d = tmp.path().join(format!("t{t}"));
        let o = gbcorr(&["compute", "--kf-list", "1,2,3", "--threads", t, "--output-dir", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        runs.push(dir_bytes(&d));
    }
    assert!(runs[0].len() >= 8);
    assert!(runs.iter().all(|r| r == &runs[0]));
}

#[test]
fn verify_bounds_rejects_slowly_decaying_potential() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gbcorr(&[
        "verify-bounds",
        "--kf-list",
        "1,2",
        "--potential-kind",
        "power-law",
        "--potential-param",
        "1.5",
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("potential_assumption"), "{}", stderr(&o));
}

#[test]
fn verify_all_passes_at_zero_coupling() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gbcorr(&[
        "verify",
        "--suite",
        "all",
        "--kf-list",
        "1",
        "--potential-coupling",
        "0",
        "--fock-states",
        "6",
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("verify_all.json")).unwrap()).unwrap();
    assert_eq!(json["pass"], true);
    assert_eq!(json["failing"].as_array().unwrap().len(), 0);
}

#[test]
fn fit_recovers_synthetic_klogk_and_needs_four_points() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("s.csv");
    let mut text = String::from("k_f,value\n");
    for k in [2.0f64, 3.0, 4.0, 5.0, 6.0] {
        text.push_str(&format!("{k},{:e}\n", -0.3 * k * k.ln() + 0.7 * k));
    }
    std::fs::write(&input, &text).unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = gbcorr(&["fit", "--series", "bos", "--input", input.to_str().unwrap(), "--output-dir", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("fit_bos.json")).unwrap()).unwrap();
    let c = fit["fit"]["coefficients"].as_array().unwrap();
    assert!((c[0].as_f64().unwrap() + 0.3).abs() < 1e-10);
    assert!((c[1].as_f64().unwrap() - 0.7).abs() < 1e-10);

    std::fs::write(&input, "k_f,value\n2,1\n3,2\n4,3\n").unwrap();
    let o = gbcorr(&["fit", "--input", input.to_str().unwrap(), "--output-dir", out]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fit_with_degenerate_design_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("s.csv");
    std::fs::write(&input, "k_f,value\n1,0\n1,0\n1,0\n1,0\n").unwrap();
    let o = gbcorr(&["fit", "--input", input.to_str().unwrap(), "--output-dir", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn report_rebuilds_summary_from_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert!(gbcorr(&["compute", "--kf-list", "1,2", "--output-dir", out]).status.success());
    let before = std::fs::read(tmp.path().join("summary.csv")).unwrap();
    std::fs::remove_file(tmp.path().join("summary.csv")).unwrap();
    let o = gbcorr(&["report", "--output-dir", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(tmp.path().join("summary.csv")).unwrap(), before);
}
