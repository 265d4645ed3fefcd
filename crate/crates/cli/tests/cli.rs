use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[dataset]
kind = "blobs"
n_classes = 3
n_per_class = 30
test_per_class = 10
dim = 5
separation = 5.0

[train]
epochs = 2
batch_size = 16
subset_size = 9
base_lr = 1e-2
warmup_steps = 2
seeds = [1, 2]
loss_variant = "bin-cross"
weights = { lambda_critic = 0.1, lambda_latent = 0.1, lambda_augment = 0.1 }

[encoder]
feature_dim = 6
n_patch_tokens = 2
token_dim = 4
projector_hidden = 6

[predictor]
hidden = 6
n_classes = 3

[discriminator]
hidden = 4

[ablation]
subset_sizes = [6, 9]
weights = { lambda_critic = 0.1, lambda_latent = 0.1, lambda_augment = 0.1 }
critic_controls = false
"#;

fn miturbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_miturbo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = miturbo(&["train", "--config", "/definitely/not/here.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config not found"), "{}", stderr(&o));
}

#[test]
fn unknown_and_invalid_keys_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[train]\nepoch = 3\n");
    let o = miturbo(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epoch"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "[train]\nbase_lr = -1.0\n");
    let o = miturbo(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("base_lr"), "{}", stderr(&o));
}

#[test]
fn train_twice_with_one_seed_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let outs = ["a", "b"].map(|n| dir.path().join(n).display().to_string());
    for out in &outs {
        let o = miturbo(&["train", "--config", &cfg, "--seed", "42", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["metrics.jsonl", "summary.json", "model.ckpt", "discriminator.ckpt"] {
        let a = std::fs::read(Path::new(&outs[0]).join(f)).unwrap();
        let b = std::fs::read(Path::new(&outs[1]).join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f} differs");
    }
    let text = std::fs::read_to_string(Path::new(&outs[0]).join("summary.json")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    let acc = summary["final_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc), "{acc}");
}

#[test]
fn ablate_writes_one_row_per_cell_and_subset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("abl").display().to_string();
    let o = miturbo(&["ablate", "--config", &cfg, "--out", &out, "--threads", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tsv = std::fs::read_to_string(Path::new(&out).join("ablation.tsv")).unwrap();
    // header plus 7 cells x 2 subset sizes
    assert_eq!(tsv.lines().count(), 1 + 7 * 2);
    assert!(Path::new(&out).join("ablation.json").exists());
}

#[test]
fn verify_suites_report_margins() {
    for suite in ["bounds", "stability", "gradcheck"] {
        let o = miturbo(&["verify", suite]);
        assert_eq!(o.status.code(), Some(0), "{suite}: {}", stderr(&o));
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.lines().all(|l| l.starts_with("PASS ") && l.contains("margin")), "{text}");
    }
    assert_eq!(miturbo(&["verify", "everything"]).status.code(), Some(2));
    assert_eq!(miturbo(&[]).status.code(), Some(2));
}
