use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qcat::recursions::{run, write_trace_csv};
use qcat_cli::spec::LoadedSpec;

fn qcat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcat")).args(args).output().expect("spawn qcat")
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

const SMALL: &str = r#"
name = "small"
num_seeds = 3
seed_base = 7

[mrp]
path = "MRP"

[grid]
bias_margin = 0.25
num_atoms = 21

[[runs]]
name = "markov"
mode = "skm_markov"
iterations = 3000
schedule = { kind = "polynomial", a = 0.85 }
thresholds = { max_residual_h = 1.0 }

[[runs]]
name = "coupled"
mode = "skm_coupled"
iterations = 3000
schedule = { kind = "polynomial", a = 0.85 }
"#;

fn small_spec(dir: &Path) -> PathBuf {
    let mrp = configs().join("mrp/five_state.toml");
    let path = dir.join("small.toml");
    fs::write(&path, SMALL.replace("MRP", mrp.to_str().unwrap())).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bundled_configs_validate() {
    for f in ["five_state.toml", "sanity_one_state.toml", "constants_demo.toml", "mrp/five_state.toml"] {
        let o = qcat(&["validate", "--spec", s(&configs().join(f))]);
        assert!(o.status.success(), "{f}: {}", text(&o));
    }
}

#[test]
fn validate_names_bad_row_and_missing_key() {
    let dir = tempfile::tempdir().unwrap();
    let mrp = fs::read_to_string(configs().join("mrp/five_state.toml")).unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, mrp.replace("[0.0, 0.2, 0.5, 0.3, 0.0]", "[0.0, 0.2, 0.5, 0.4, 0.0]")).unwrap();
    let o = qcat(&["validate", "--spec", s(&bad)]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("row 1"), "{}", text(&o));

    let spec = small_spec(dir.path());
    let no_atoms = dir.path().join("no_atoms.toml");
    fs::write(&no_atoms, fs::read_to_string(&spec).unwrap().replace("num_atoms = 21\n", "")).unwrap();
    let o = qcat(&["validate", "--spec", s(&no_atoms)]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("num_atoms"), "{}", text(&o));

    let garbled = dir.path().join("garbled.toml");
    fs::write(&garbled, "name = \"x\"\n[grid\n").unwrap();
    let o = qcat(&["validate", "--spec", s(&garbled)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("line 2"), "{}", text(&o));

    let o = qcat(&["validate", "--spec", s(&dir.path().join("absent.toml"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_seed_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let out = dir.path().join("out");
    let o = qcat(&["run", "--spec", s(&spec), "--out", s(&out), "--seeds", "1", "--seed-base", "42", "--no-plot"]);
    assert!(o.status.success(), "{}", text(&o));

    let loaded = LoadedSpec::load(&spec).unwrap();
    for r in &loaded.spec.runs {
        let cfg = r.run_config(&loaded.ctx, 42).unwrap();
        let trace = run(&loaded.ctx, &cfg).unwrap();
        let mut want = Vec::new();
        write_trace_csv(&mut want, &trace.rows).unwrap();
        let got = fs::read(out.join(&r.name).join("trace_seed_42.csv")).unwrap();
        assert_eq!(got, want, "run {}", r.name);
        assert!(!out.join(&r.name).join("trace_seed_43.csv").exists());
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(qcat(&["run", "--spec", s(&spec), "--out", s(&a), "--no-plot"]).status.success());
    assert!(qcat(&["run", "--spec", s(&spec), "--out", s(&b), "--threads", "1", "--no-plot"]).status.success());
    for run in ["markov", "coupled"] {
        for f in fs::read_dir(a.join(run)).unwrap() {
            let name = f.unwrap().file_name();
            assert_eq!(fs::read(a.join(run).join(&name)).unwrap(), fs::read(b.join(run).join(&name)).unwrap());
        }
    }
    assert_eq!(fs::read(a.join("reference_coeffs.csv")).unwrap(), fs::read(b.join("reference_coeffs.csv")).unwrap());
}

#[test]
fn summary_lists_every_run_once() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let out = dir.path().join("out");
    let o = qcat(&["run", "--spec", s(&spec), "--out", s(&out), "--iters", "500"]);
    assert!(o.status.success(), "{}", text(&o));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let names: Vec<&str> = summary["runs"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["markov", "coupled"]);
    assert_eq!(summary["runs"][0]["final_k"], 500);
    assert_eq!(summary["runs"][0]["checks"][0]["name"], "max_residual_h");
    assert!(summary["runs"][1]["gain_err"]["mean"].as_f64().is_some());
    let agg = fs::read_to_string(out.join("markov/aggregate.csv")).unwrap();
    assert!(agg.starts_with("k,alpha,n,mean_residual_G,stderr_residual_G,"));
    assert!(text(&o).contains("PASS max_residual_h"));
}

#[test]
fn missed_threshold_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let strict = dir.path().join("strict.toml");
    fs::write(&strict, fs::read_to_string(&spec).unwrap().replace("max_residual_h = 1.0", "max_residual_h = 1e-9")).unwrap();
    let o = qcat(&["run", "--spec", s(&strict), "--out", s(&dir.path().join("o")), "--iters", "200", "--no-plot"]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("FAIL max_residual_h"));
}

#[test]
fn ablation_mode_adds_wrong_centering_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let out = dir.path().join("out");
    let o = qcat(&["run", "--spec", s(&spec), "--out", s(&out), "--mode", "ablation", "--seeds", "2"]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(out.join("ablation_g0/trace_seed_7.csv").exists());
    assert!(out.join("markov/trace_seed_7.csv").exists());
    assert!(!out.join("coupled").exists());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let res = |i: usize| summary["runs"][i]["residual_g"]["mean"].as_f64().unwrap();
    assert!(res(1) > 5.0 * res(0), "ablation {} vs centered {}", res(1), res(0));
}

#[test]
fn unknown_mode_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let o = qcat(&["run", "--spec", s(&spec), "--mode", "exact_km"]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    let o = qcat(&["run", "--spec", s(&spec), "--mode", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plot_outputs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = qcat(&["plot", "--out", s(&empty)]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));

    let spec = small_spec(dir.path());
    let out = dir.path().join("out");
    let o = qcat(&["run", "--spec", s(&spec), "--out", s(&out), "--seeds", "1", "--iters", "300"]);
    assert!(o.status.success(), "{}", text(&o));
    for f in ["markov/residuals.svg", "coupled/residuals.svg", "residual_G.svg", "laws.svg"] {
        let svg = fs::read_to_string(out.join(f)).unwrap();
        assert!(svg.starts_with("<svg") && svg.len() < 2 * 1024 * 1024, "{f}");
        assert!(!svg.contains("href") && !svg.contains("<image"), "{f} references external content");
        // One seed: curves but no seed band.
        assert!(!svg.contains("<polygon"), "{f}");
    }
    let laws = fs::read_to_string(out.join("laws.svg")).unwrap();
    assert_eq!(laws.matches("state ").count(), 5);

    let trace = out.join("markov/trace_seed_7.csv");
    let body = fs::read_to_string(&trace).unwrap();
    fs::write(&trace, body.replacen("residual_h", "residual_x", 1)).unwrap();
    let o = qcat(&["plot", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("residual_h"), "{}", text(&o));
}

#[test]
fn multi_seed_plot_has_bands() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let out = dir.path().join("out");
    assert!(qcat(&["run", "--spec", s(&spec), "--out", s(&out), "--iters", "300"]).status.success());
    let svg = fs::read_to_string(out.join("markov/residuals.svg")).unwrap();
    assert!(svg.contains("<polygon"));
}

#[test]
fn constants_examples() {
    let o = qcat(&["constants", "--a1", "0.9", "--regime", "markov"]);
    assert!(o.status.success(), "{}", text(&o));
    let t = text(&o);
    assert!(t.contains("epsilon = 1/20") && t.contains("gamma_T") && t.contains("not computable"), "{t}");
    assert!(!t.contains("C_iid"));

    let o = qcat(&["constants", "--a1", "0.5", "--regime", "iid"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("2/3 < a1 < 1"), "{}", text(&o));

    let o = qcat(&["constants", "--a1", "3/4", "--regime", "iid"]);
    assert_eq!(o.status.code(), Some(1), "iid needs a grid: {}", text(&o));

    let o = qcat(&["constants", "--spec", s(&configs().join("constants_demo.toml"))]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("epsilon = 1/24"));
}

#[test]
fn sync_check_and_negative_control() {
    let spec = configs().join("five_state.toml");
    let o = qcat(&["sync-check", "--spec", s(&spec), "--samples", "1000"]);
    assert!(o.status.success(), "{}", text(&o));
    let o = qcat(&["sync-check", "--spec", s(&configs().join("mrp/five_state.toml")), "--seed", "3"]);
    assert!(o.status.success(), "{}", text(&o));
    let o = qcat(&["sync-check", "--spec", s(&spec), "--samples", "20", "--inject-bug"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("FAIL sample 0"), "{}", text(&o));
}
