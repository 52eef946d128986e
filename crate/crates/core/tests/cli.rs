use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use trgl::experiment::RunManifest;

const TEN_MODULES: &str = r#"
name = "ten"
seeds = [0]
checkpoints = true

[dataset]
kind = "two-moons"
n = 200
noise = 0.2
test_n = 100
train_size = 60

[network]
modules = 10
blocks_per_module = 1
width = 4
input_dim = 2
classes = 2
init_gain = 0.1

[plan]
regime = { kind = "sequential" }
epochs = { kind = "uniform", epochs = 2 }
batch_size = 16
optimizer = { lr = { kind = "constant", lr = 0.05 }, momentum = 0.9 }
regularizer = { tau = { kind = "fixed", tau = 1.0 } }

[[variants]]
name = "vanilla"
regularizer = "none"

[[variants]]
name = "trgl"

[report]
svg = true
"#;

fn trgl(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_trgl")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn train_into(config: &str, out: &Path, extra: &[&str]) -> RunManifest {
    let mut args = vec!["train", "--config", config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let (code, text) = trgl(&args);
    assert_eq!(code, 0, "{text}");
    RunManifest::load(&out.join("manifest.json")).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn train_is_reproducible_and_reports_every_module() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "ten.toml", TEN_MODULES);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ma = train_into(&cfg, &a, &[]);
    let mb = train_into(&cfg, &b, &[]);
    assert_eq!(ma.run_id, mb.run_id);
    ma.check_artifacts(&a).unwrap();
    for (ra, rb) in ma.runs.iter().zip(&mb.runs) {
        assert_eq!(fs::read(a.join(&ra.metrics)).unwrap(), fs::read(b.join(&rb.metrics)).unwrap());
    }

    let manifest = a.join("manifest.json");
    let mut outputs: Vec<PathBuf> = Vec::new();
    for kind in ["per-module-curve", "regime-comparison", "tau-sensitivity", "memory"] {
        let (code, text) = trgl(&["report", "--manifest", manifest.to_str().unwrap(), "--kind", kind]);
        assert_eq!(code, 0, "{kind}: {text}");
        outputs.extend(text.lines().map(PathBuf::from));
    }
    assert!(outputs.iter().all(|p| p.is_file()));
    let curve = a.join(format!("{}-per-module-curve.csv", ma.run_id));
    let rows = csv_rows(&curve);
    for series in ["vanilla", "trgl"] {
        let modules: Vec<usize> = rows.iter().filter(|r| r[0] == series).map(|r| r[1].parse().unwrap()).collect();
        assert_eq!(modules, (1..=10).collect::<Vec<_>>(), "{series}");
    }
    assert!(a.join(format!("{}-per-module-curve.svg", ma.run_id)).is_file());
}

#[test]
fn seeds_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TEN_MODULES.replace("modules = 10", "modules = 2");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let m = train_into(&cfg, &tmp.path().join("out"), &["--seeds", "1,2,3"]);
    let mut seeds: Vec<u64> = m.runs.iter().map(|r| r.seed).collect();
    seeds.dedup();
    assert_eq!(seeds, [1, 2, 3]);
    assert_eq!(m.runs.len(), 6);
}

#[test]
fn bad_inputs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = write_config(tmp.path(), "u.toml", &TEN_MODULES.replace("init_gain", "init_gian"));
    let (code, text) = trgl(&["train", "--config", &unknown]);
    assert_eq!(code, 1);
    assert!(text.contains("init_gian"), "{text}");

    let mismatch = write_config(tmp.path(), "m.toml", &TEN_MODULES.replace("input_dim = 2", "input_dim = 3"));
    assert_eq!(trgl(&["train", "--config", &mismatch]).0, 1);
    assert_eq!(trgl(&["train", "--config", "/nonexistent.toml"]).0, 1);
    assert_eq!(trgl(&["report", "--manifest", "/nonexistent.json", "--kind", "memory"]).0, 1);
    assert_eq!(trgl(&["verify", "--suite", "everything"]).0, 1);
    assert_eq!(trgl(&["frobnicate"]).0, 1);
    assert_eq!(trgl(&["--help"]).0, 0);
}

#[test]
fn divergence_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TEN_MODULES.replace("lr = 0.05", "lr = 1e8").replace("modules = 10", "modules = 2");
    let cfg = write_config(tmp.path(), "d.toml", &text);
    let (code, text) = trgl(&["train", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 2, "{text}");
}

#[test]
fn verify_prints_a_line_per_check() {
    let tmp = tempfile::tempdir().unwrap();
    let json = tmp.path().join("holder.json");
    let (code, text) = trgl(&["verify", "--suite", "holder", "--report", json.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS holder:")), "{text}");
    assert!(json.is_file());
}
