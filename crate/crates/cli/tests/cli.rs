use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mcld(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcld"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("MCLD_OUT_ROOT")
        .output()
        .expect("spawn mcld")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = mcld(args, cwd);
    assert!(
        out.status.success(),
        "mcld {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            files.insert(p.clone(), fs::read(&p).unwrap());
        }
    }
    files
}

const DATA: &str = r#"
[dataset]
source = "synthetic"
num_classes = 4
image_shape = [3, 8, 8]
seed = 3

[dataset.synthetic]
per_class = 20
test_per_class = 10
"#;

fn run_config(data_dir: &Path, teacher: &Path) -> String {
    format!(
        r#"
method = "mcld"
epochs = 2

[teacher]
checkpoint = "{teacher}"
model = {{ architecture = "plain_conv", depth = 2, width = 4, num_classes = 4 }}

[student]
architecture = "plain_conv"
depth = 1
width = 4
num_classes = 4

[dataset]
path = "{data}"
num_classes = 4
image_shape = [3, 8, 8]
batch_size = 16

[loss]
tau = 4.0
queue_capacity = 32

[optimizer]
lr_decay_epochs = []
"#,
        teacher = teacher.display(),
        data = data_dir.display()
    )
}

#[test]
fn help_lists_every_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let text = ok(&["--help"], tmp.path());
    for cmd in
        ["synth-data", "train-teacher", "distill", "eval", "ablate", "probe", "plot-tsne", "plot-corr", "plot-timing"]
    {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn bad_invocations_get_distinct_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown_flag = mcld(&["distill", "--no-such-flag"], tmp.path());
    assert_eq!(unknown_flag.status.code(), Some(2));

    let missing = mcld(&["distill", "--config", "missing.toml"], tmp.path());
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("config"));

    fs::write(tmp.path().join("bad.toml"), "epochs = 'many'").unwrap();
    let bad = mcld(&["train-teacher", "--config", "bad.toml"], tmp.path());
    assert_eq!(bad.status.code(), Some(3));

    let no_ckpt = mcld(&["eval", "--config", "bad.toml", "--checkpoint", "none.ckpt"], tmp.path());
    assert_ne!(no_ckpt.status.code(), Some(0));
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("data.toml"), DATA).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mcld"))
        .args(["synth-data", "--config", "data.toml"])
        .current_dir(tmp.path())
        .env("MCLD_OUT_ROOT", tmp.path().join("root"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("root/synth-data/manifest.json").exists());
    assert!(tmp.path().join("root/synth-data/synth-data.config.toml").exists());
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    fs::write(root.join("data.toml"), DATA).unwrap();
    let data = root.join("data");
    ok(&["synth-data", "--config", "data.toml", "--out", "data"], root);
    assert!(data.join("manifest.json").exists());
    let data_before = snapshot(&data);

    let teacher_dir = root.join("teacher");
    fs::write(root.join("run.toml"), run_config(&data, &teacher_dir.join("best.ckpt"))).unwrap();
    let config_before = fs::read(root.join("run.toml")).unwrap();

    ok(&["train-teacher", "--config", "run.toml", "--out", "teacher", "--epochs", "3"], root);
    assert!(teacher_dir.join("best.ckpt").exists());
    let teacher_before = snapshot(&teacher_dir);

    ok(&["distill", "--config", "run.toml", "--out", "mcld", "--seed", "1", "--tau", "2.5"], root);
    let mcld_dir = root.join("mcld");
    for f in ["last.ckpt", "metrics.jsonl", "metrics.csv", "config.toml"] {
        assert!(mcld_dir.join(f).exists(), "{f} missing");
    }
    let effective = fs::read_to_string(mcld_dir.join("config.toml")).unwrap();
    assert!(effective.contains("tau = 2.5"), "{effective}");
    assert!(effective.contains("seed = 1"), "{effective}");

    ok(&["distill", "--config", "run.toml", "--out", "kd", "--method", "kd", "--ablation-flags", "none"], root);

    ok(&["eval", "--config", "run.toml", "--checkpoint", "mcld/last.ckpt", "--out", "eval"], root);
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("eval/eval.json")).unwrap()).unwrap();
    assert_eq!(eval["count"], 40);

    let grid = ok(
        &["ablate", "--config", "run.toml", "--axes", "instance,sample,category", "--epochs", "1", "--out", "grid"],
        root,
    );
    assert!(grid.contains("ISC"));
    let rows = fs::read_to_string(root.join("grid/ablation.csv")).unwrap();
    assert_eq!(rows.lines().count(), 9);

    fs::write(root.join("transfer.toml"), DATA.replace("seed = 3", "seed = 99")).unwrap();
    ok(&["probe", "--config", "transfer.toml", "--checkpoint", "mcld/last.ckpt", "--out", "mcld"], root);
    let metrics = fs::read_to_string(mcld_dir.join("metrics.jsonl")).unwrap();
    assert!(metrics.lines().last().unwrap().contains("\"split\":\"probe\""));

    ok(
        &[
            "plot-tsne",
            "--config",
            "run.toml",
            "--checkpoint",
            "mcld/last.ckpt",
            "--max-points",
            "40",
            "--perplexity",
            "5",
            "--out",
            "fig",
        ],
        root,
    );
    ok(
        &[
            "plot-corr",
            "--config",
            "run.toml",
            "--student",
            "mcld/last.ckpt",
            "--teacher",
            "teacher/best.ckpt",
            "--out",
            "fig",
        ],
        root,
    );
    ok(&["plot-timing", "mcld", "kd", "--out", "fig"], root);
    for f in ["tsne.png", "tsne.csv", "corr_diff.png", "corr_diff.csv", "timing.png", "timing.csv"] {
        assert!(root.join("fig").join(f).exists(), "{f} missing");
    }
    for f in ["tsne.png", "corr_diff.png", "timing.png"] {
        let png = root.join("fig").join(f);
        let again = mcld_report::render_file(&mcld_report::sidecar_path_for(&png)).unwrap();
        assert_eq!(fs::read(&png).unwrap(), again, "{f} does not regenerate");
    }

    assert_eq!(snapshot(&data), data_before);
    assert_eq!(snapshot(&teacher_dir), teacher_before);
    assert_eq!(fs::read(root.join("run.toml")).unwrap(), config_before);
}
