use std::path::Path;
use std::process::{Command, Output};

fn rotqg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotqg"))
        .args(args)
        .env("ROTQG_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("out");
    let text = format!(
        r#"seed = 3
experiment.kind = "single_run"
grid.n = 32
grid.box_length = 25.132741228718345
params.gamma = 2.0
params.nu = 1.0
sweep.delta_list = [0.1]
time.t_final = 0.1
time.samples = 2
output.dir = "{}"
"#,
        out.display()
    );
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_then_inspect_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let run = rotqg(&["run", config.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let snap = dir.path().join("out").join("single_run_final.snap");
    assert!(snap.exists());
    assert!(dir.path().join("out").join("single_run.csv").exists());

    let inspect = rotqg(&["inspect", snap.to_str().unwrap()]);
    assert!(inspect.status.success(), "{}", String::from_utf8_lossy(&inspect.stderr));
    let text = String::from_utf8_lossy(&inspect.stdout);
    assert!(text.contains("32"), "{text}");
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "experiment.kind = \"single_run\"\nunknown.key = 1\n").unwrap();
    let run = rotqg(&["run", path.to_str().unwrap()]);
    assert!(!run.status.success());
    assert!(!run.stderr.is_empty());

    let missing = rotqg(&["inspect", dir.path().join("none.snap").to_str().unwrap()]);
    assert!(!missing.status.success());
}

#[test]
fn probe_prints_finite_ratios() {
    let out = rotqg(&["probe", "--k", "0", "--delta", "0.1", "--n", "64", "--samples", "32"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(!text.contains("NaN") && !text.contains("inf "), "{text}");
}
