use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn atlas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atlas"))
        .args(args)
        .env_remove("ATLAS_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn sample(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "sample", "--model", "funnel-5", "--sampler", "atlas", "--chains", "3", "--draws", "200",
        "--warmup-iters", "100", "--seed", "11", "--out",
    ];
    let out = out.to_str().unwrap();
    args.push(out);
    args.extend_from_slice(extra);
    atlas(&args)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sample_writes_chain_files_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let o = sample(&dir, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for c in 0..3 {
        let draws = fs::read_to_string(dir.join(format!("chain-{c:03}.csv"))).unwrap();
        let mut lines = draws.lines();
        assert_eq!(lines.next(), Some("theta_0,theta_1,theta_2,theta_3,theta_4"));
        assert_eq!(lines.count(), 200);
        assert!(dir.join(format!("chain-{c:03}.outcomes.csv")).exists());
    }
    let m = json(&dir.join("manifest.json"));
    assert_eq!(m["dim"], 5);
    assert_eq!(m["chains"].as_array().unwrap().len(), 3);
    assert_eq!(m["config"]["model"], "funnel-5");
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(sample(&a, &[]).status.code(), Some(0));
    assert_eq!(sample(&b, &["--workers", "2"]).status.code(), Some(0));
    for c in 0..3 {
        let f = format!("chain-{c:03}.csv");
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn eps0_scale_multiplies_the_tuned_step() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(sample(&a, &[]).status.code(), Some(0));
    assert_eq!(sample(&b, &["--eps0-scale", "1.1"]).status.code(), Some(0));
    let (ma, mb) = (json(&a.join("manifest.json")), json(&b.join("manifest.json")));
    for c in 0..3 {
        let ea = ma["chains"][c]["eps0"].as_f64().unwrap();
        let eb = mb["chains"][c]["eps0"].as_f64().unwrap();
        assert!((eb / ea - 1.1).abs() < 1e-12, "{ea} {eb}");
    }
}

#[test]
fn summarize_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    assert_eq!(sample(&dir, &[]).status.code(), Some(0));
    let d = dir.to_str().unwrap();
    let o = atlas(&["summarize", d, "--baseline", d, "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.join("summary.json"));
    assert!((s["pooled"]["cost_ratio"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let total: u64 = s["pooled"]["branch_counts"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(total, 600);
    assert!(s["pooled"]["zrmse_theta"].as_f64().is_some());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "model = \"std_normal-3\"\nsampler = \"nout-fixed\"\nchains = 2\ndraws = 50\nwarmup_iters = 50\n").unwrap();
    let dir = tmp.path().join("run");
    let o = atlas(&["sample", "--config", cfg.to_str().unwrap(), "--draws", "30", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let draws = fs::read_to_string(dir.join("chain-001.csv")).unwrap();
    assert_eq!(draws.lines().count(), 31);
    assert_eq!(json(&dir.join("manifest.json"))["config"]["sampler"], "nout-fixed");
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let o = atlas(&["sample", "--model", "no-such-model", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.join("manifest.json").exists());
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "chainz = 3\n").unwrap();
    assert_eq!(atlas(&["sample", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(atlas(&["reproduce", "no-such-recipe"]).status.code(), Some(1));
    assert_eq!(atlas(&["summarize", tmp.path().join("missing").to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn list_models_names_the_benchmarks() {
    let o = atlas(&["list-models"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["funnel", "rosenbrock", "std_normal", "corr_normal"] {
        assert!(text.contains(name), "{text}");
    }
}
