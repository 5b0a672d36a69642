use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use curvlab::ModelSpec;
use curvlab_cli::config::parse_model;

fn curvlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvlab"))
        .args(args)
        .env("CURVLAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn report_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not a report ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn untimed(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_time_s").expect("timing field present");
    v
}

fn cone<'a>(item: &'a Value, name: &str) -> &'a Value {
    item["cones"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["cone"] == name)
        .unwrap_or_else(|| panic!("no cone {name}"))
}

#[test]
fn check_fubini_study_pic_and_pinching() {
    let out = curvlab(&["check", "--model", "fs(2)", "--cones", "pic,pinch"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report_of(&out);
    let item = &r["results"]["items"][0];
    assert!(cone(item, "pic")["report"]["margin"].as_f64().unwrap().abs() < 1e-6);
    assert!(cone(item, "pinch(0.25)")["report"]["margin"].as_f64().unwrap().abs() < 1e-6);
    assert!((item["pinching_ratio"].as_f64().unwrap() - 0.25).abs() < 1e-4);
    assert!(item["einstein_residual"].as_f64().unwrap() < 1e-12);
}

#[test]
fn evolve_round_three_sphere() {
    let out = curvlab(&["evolve", "--model", "const(3,1.0)", "--t-end", "0.2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report_of(&out);
    let res = &r["results"];
    assert_eq!(res["outcome"], "completed");
    assert!((res["last"]["scal"].as_f64().unwrap() - 30.0).abs() / 30.0 < 1e-6);
}

#[test]
fn evolve_reports_blowup_as_outcome() {
    let out = curvlab(&["evolve", "--model", "const(3,1.0)", "--t-end", "0.3"]);
    assert_eq!(out.status.code(), Some(0));
    let res = &report_of(&out)["results"];
    assert_eq!(res["outcome"], "blowup");
    assert!((res["t_blowup"].as_f64().unwrap() - 0.25).abs() < 1e-3);
}

#[test]
fn check_round_four_sphere() {
    let out = curvlab(&["check", "--model", "const(4,1.0)", "--cones", "pic"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report_of(&out);
    assert_eq!(cone(&r["results"]["items"][0], "pic")["report"]["margin"].as_f64(), Some(4.0));
}

#[test]
fn defaults_are_echoed() {
    let out = curvlab(&["check", "--model", "const(4,1.0)", "--cones", "pic"]);
    let r = report_of(&out);
    let cfg = &r["config"];
    assert_eq!(cfg["restarts"], 64);
    assert_eq!(cfg["strictness"].as_f64(), Some(1e-8));
    assert_eq!(cfg["step"]["rel_tol"].as_f64(), Some(1e-8));
    assert_eq!(cfg["lambda_range"], "01");
    assert_eq!(r["seed"], 0);
    assert_eq!(r["tool"], "curvlab");
    // top-level field order as written
    let text = String::from_utf8(out.stdout).unwrap();
    let keys: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix("  \"").and_then(|l| l.split('"').next()))
        .collect();
    assert_eq!(
        keys,
        ["tool", "version", "command", "seed", "config", "results", "violations", "errors", "wall_time_s"]
    );
}

#[test]
fn model_grammar_examples() {
    assert_eq!(
        parse_model("const(4,1.0)").unwrap(),
        ModelSpec::ConstantCurvature { n: 4, kappa: 1.0 }
    );
    let two_spheres = ModelSpec::ConstantCurvature { n: 2, kappa: 1.0 };
    assert_eq!(
        parse_model("prod(const(2,1),const(2,1))").unwrap(),
        ModelSpec::Product(Box::new(two_spheres.clone()), Box::new(two_spheres))
    );
    match parse_model("shift(rand(4,seed=3,scale=1.0),pic2,0.0)").unwrap() {
        ModelSpec::Shifted { base, cone, target } => {
            assert_eq!(*base, ModelSpec::Random { n: 4, seed: 3, scale: 1.0 });
            assert_eq!(cone, curvlab::ConeId::Pic2);
            assert_eq!(target, 0.0);
        }
        other => panic!("{other:?}"),
    }
    for text in ["fs(2)", "flat(const(4,1),1)", "rand(5,seed=7,scale=0.3)", "shift(rand(4,3,1.0),pic,0.0)"] {
        let once = parse_model(text).unwrap().to_string();
        assert_eq!(parse_model(&once).unwrap().to_string(), once);
    }
    assert!(parse_model("const(4,").is_err());
}

#[test]
fn errors_exit_one() {
    // no input
    assert_eq!(curvlab(&["check"]).status.code(), Some(1));
    // two inputs
    assert_eq!(
        curvlab(&["check", "--model", "fs(2)", "--input", "x.json"]).status.code(),
        Some(1)
    );
    // unknown flag and unknown cone
    assert_eq!(curvlab(&["check", "--model", "fs(2)", "--bogus"]).status.code(), Some(1));
    assert_eq!(curvlab(&["check", "--model", "fs(2)", "--cones", "nope"]).status.code(), Some(1));
    // unparseable model, missing file, missing --t-end
    let bad = curvlab(&["check", "--model", "fs(2"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("position"));
    assert_eq!(curvlab(&["check", "--input", "/no/such/file.json"]).status.code(), Some(1));
    assert_eq!(curvlab(&["evolve", "--model", "fs(2)"]).status.code(), Some(1));
    // per-item error: PIC needs n >= 4; the report is still written
    let out = curvlab(&["check", "--model", "const(3,1.0)", "--cones", "sec,pic"]);
    assert_eq!(out.status.code(), Some(1));
    let r = report_of(&out);
    assert_eq!(r["errors"].as_array().unwrap().len(), 1);
    assert!(cone(&r["results"]["items"][0], "sec")["report"].is_object());
    // convergence start outside the cone
    assert_eq!(curvlab(&["convergence", "--model", "fs(2)"]).status.code(), Some(1));
}

#[test]
fn violations_exit_two() {
    let out = curvlab(&["convergence", "--model", "prod(const(2,1),const(2,1))", "--allow-boundary"]);
    assert_eq!(out.status.code(), Some(2));
    let r = report_of(&out);
    assert_eq!(r["violations"][0]["kind"], "pinching");
}

#[test]
fn report_written_atomically_with_summary_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = curvlab(&["check", "--model", "fs(2)", "--cones", "pic", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("pic"));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(r["command"], "check");
    // only the report is left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn emitted_models_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fs2.json");
    let p = path.to_str().unwrap();
    assert_eq!(curvlab(&["emit-model", "--model", "fs(2)", "--out", p]).status.code(), Some(0));
    let out = curvlab(&["check", "--input", p, "--cones", "pic,pinch"]);
    assert_eq!(out.status.code(), Some(0));
    let item = &report_of(&out)["results"]["items"][0];
    assert!((item["pinching_ratio"].as_f64().unwrap() - 0.25).abs() < 1e-4);

    let stdout = curvlab(&["emit-model", "--model", "fs(2)"]).stdout;
    assert_eq!(String::from_utf8(stdout).unwrap(), std::fs::read_to_string(&path).unwrap());
}

#[test]
fn batch_pinching_over_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    for (name, model) in [("a.json", "fs(2)"), ("b.json", "const(4,1.0)")] {
        let p = dir.path().join(name);
        curvlab(&["emit-model", "--model", model, "--out", p.to_str().unwrap()]);
    }
    let out = curvlab(&["check", "--input", dir.path().to_str().unwrap(), "--cones", "pinch"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report_of(&out);
    assert_eq!(r["results"]["items"].as_array().unwrap().len(), 2);
    assert!((r["results"]["batch_pinching"].as_f64().unwrap() - 0.25).abs() < 1e-4);
}

#[test]
fn evolve_writes_columns_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cols = dir.path().join("diag.txt");
    let dumps = dir.path().join("states");
    let out = curvlab(&[
        "evolve",
        "--model",
        "fs(2)",
        "--t-end",
        "0.02",
        "--cones",
        "pic,pinch",
        "--columns",
        cols.to_str().unwrap(),
        "--dump-every",
        "5",
        "--dump-dir",
        dumps.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&cols).unwrap();
    assert!(text.starts_with("# t h scal norm pinching margin:pic margin:pinch(0.25)"));
    let r = report_of(&out);
    let dumped = r["results"]["dumped_states"].as_u64().unwrap() as usize;
    assert!(dumped > 0);
    assert_eq!(std::fs::read_dir(&dumps).unwrap().count(), dumped);
}

#[test]
fn boundary_and_crosscheck_commands() {
    let out = curvlab(&["boundary", "--model", "shift(rand(5,seed=3,scale=1.0),pic,0.0)"]);
    assert_eq!(out.status.code(), Some(0));
    let b = &report_of(&out)["results"];
    assert_eq!(b["applicable"], true);
    assert!(b["inward_value"].as_f64().unwrap() >= -1e-8);
    assert!(b["key_inequality"]["residual"].as_f64().unwrap() >= -1e-8);

    let out = curvlab(&["crosscheck", "--model", "rand(4,seed=1,scale=1.0)", "--samples", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let verdicts = report_of(&out)["results"]["verdicts"].as_array().unwrap().clone();
    assert_eq!(verdicts.len(), 3);
    assert!(verdicts.iter().all(|v| v["agree"] == true));
}

#[test]
fn invariance_command() {
    let out = curvlab(&["invariance", "--cones", "pic2,pic1,pic", "--dim", "5", "--samples", "2", "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report_of(&out);
    let runs = r["results"]["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["tracked"].as_array().unwrap().len(), 2);
    assert_eq!(curvlab(&["invariance", "--model", "fs(2)"]).status.code(), Some(1));
}

#[test]
fn identical_config_gives_identical_report() {
    let runs: [&[&str]; 4] = [
        &["check", "--model", "rand(5,seed=7,scale=0.3)", "--seed", "4"],
        &["invariance", "--cones", "pic", "--samples", "3", "--seed", "21"],
        &["convergence", "--model", "shift(rand(4,seed=2,scale=1.0),pinch(0.3),0.0)"],
        &["crosscheck", "--model", "rand(4,seed=5,scale=1.0)", "--seed", "8"],
    ];
    for args in runs {
        let a = curvlab(args);
        let b = curvlab(args);
        assert_eq!(a.status.code(), b.status.code());
        assert_eq!(untimed(report_of(&a)), untimed(report_of(&b)), "{args:?}");
        // byte-level: the reports differ at most in the timing line
        let strip = |o: &Output| {
            String::from_utf8_lossy(&o.stdout)
                .lines()
                .filter(|l| !l.trim_start().starts_with("\"wall_time_s\""))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(&a), strip(&b));
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let args = ["invariance", "--cones", "pic", "--samples", "3", "--seed", "2"];
    let one = curvlab(&args);
    let many = Command::new(env!("CARGO_BIN_EXE_curvlab"))
        .args(args)
        .env("CURVLAB_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(untimed(report_of(&one)), untimed(report_of(&many)));
    let bad = Command::new(env!("CARGO_BIN_EXE_curvlab"))
        .args(args)
        .env("CURVLAB_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(Path::new(env!("CARGO_BIN_EXE_curvlab")).exists());
}
