use std::path::Path;
use std::process::{Command, Output};

use trajfuse::cli::{RunConfig, RUN_CONFIG_FILE};

fn trajfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajfuse"))
        .args(args)
        .env("TRAJFUSE_LOG", "error")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Synthetic data plus a briefly trained checkpoint in `dir`.
fn trained(dir: &Path) {
    let o = trajfuse(&[
        "synth",
        "--seed",
        "5",
        "--joints",
        "7",
        "--sequences",
        "3",
        "--out",
        p(&dir.join("data")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = trajfuse(&[
        "train",
        "--train",
        p(&dir.join("data/synth.csv")),
        "--out",
        p(&dir.join("run")),
        "--seed",
        "5",
        "--steps",
        "4",
        "--hidden",
        "8",
        "--batch",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes_and_reports_the_max_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = trajfuse(&["gradcheck", "--seed", "7", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("max relative error:")).unwrap();
    let value: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(value < 1e-3);
    for group in [
        "p_tst kernels",
        "v_tst kernels",
        "skip kernels",
        "selectors",
        "reinf_tst kernels",
    ] {
        assert!(out.contains(group), "{group} missing");
    }
}

#[test]
fn predict_is_byte_identical_and_leaves_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let ckpt = dir.path().join("run/model.ckpt");
    let input = dir.path().join("data/synth.csv");
    let before = (std::fs::read(&ckpt).unwrap(), std::fs::read(&input).unwrap());
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = trajfuse(&[
            "predict",
            "--checkpoint",
            p(&ckpt),
            "--input",
            p(&input),
            "--out",
            p(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(std::fs::read(out.join("predictions.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let parsed = trajfuse::motion::parse_mocap_csv(std::str::from_utf8(&outputs[0]).unwrap()).unwrap();
    assert_eq!(parsed.sequences.len(), 3);
    assert_eq!(parsed.sequences[0].frame_count(), 10);
    assert_eq!(before, (std::fs::read(&ckpt).unwrap(), std::fs::read(&input).unwrap()));
}

#[test]
fn missing_dataset_exits_two_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere/motion.csv");
    let o = trajfuse(&["train", "--train", p(&missing), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(p(&missing)), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(trajfuse(&["teleport"]).status.code(), Some(1));
    assert_eq!(trajfuse(&["train", "--wings"]).status.code(), Some(1));
    assert_eq!(trajfuse(&[]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"model.colour": "red"}"#).unwrap();
    let o = trajfuse(&["gradcheck", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.colour"));
    let o = trajfuse(&["ablate", "--variants", "tst-9", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(trajfuse(&["--help"]).status.success());
}

#[test]
fn resolved_config_reproduces_a_training_run() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let run = dir.path().join("run");
    let text = std::fs::read_to_string(run.join(RUN_CONFIG_FILE)).unwrap();
    let cfg = RunConfig::from_flat_json(&text).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.train.steps, 4);
    assert_eq!(cfg.model.joints, Some(7));
    assert!(cfg.seeds.init.is_some() && cfg.seeds.shuffle.is_some());

    let again = dir.path().join("again");
    let o = trajfuse(&["train", "--config", p(&run.join(RUN_CONFIG_FILE)), "--out", p(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["loss_trace.csv", "model.ckpt", RUN_CONFIG_FILE] {
        assert_eq!(
            std::fs::read(run.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert!(log.starts_with("step,loss,millis\n"));
    assert_eq!(log.lines().count(), 5);
}

#[test]
fn seed_flag_overrides_config_sub_seeds() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let cfg = dir.path().join("run").join(RUN_CONFIG_FILE);
    let out = dir.path().join("reseeded");
    let o = trajfuse(&["train", "--config", p(&cfg), "--seed", "6", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join(RUN_CONFIG_FILE)).unwrap();
    let resolved = RunConfig::from_flat_json(&text).unwrap();
    assert_eq!(resolved.seeds.init, Some(trajfuse::cli::derive_seed(6, "init")));
    assert_ne!(
        std::fs::read(out.join("model.ckpt")).unwrap(),
        std::fs::read(dir.path().join("run/model.ckpt")).unwrap()
    );
}

#[test]
fn eval_and_render_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let data = dir.path().join("data/synth.csv");
    let out = dir.path().join("eval");
    let o = trajfuse(&[
        "eval",
        "--checkpoint",
        p(&dir.path().join("run/model.ckpt")),
        "--eval",
        p(&data),
        "--horizons",
        "80,400",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    assert!(csv.starts_with("variant,horizon_ms,frame,mpjpe_mm,count\n"));
    for label in ["model", "zero-velocity", "constant-velocity"] {
        assert!(csv.contains(&format!("\n{label},80,2,")), "{label}");
        assert!(csv.contains(&format!("\n{label},400,10,")), "{label}");
    }

    let svg_dir = dir.path().join("svg");
    let o = trajfuse(&[
        "render",
        "--input",
        p(&data),
        "--frames",
        "0,3",
        "--projection",
        "xy",
        "--out",
        p(&svg_dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = std::fs::read_to_string(svg_dir.join("pose.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("g")).count(), 2);

    let o = trajfuse(&["render", "--input", p(&data), "--frames", "999", "--out", p(&svg_dir)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn outputs_never_overwrite_inputs() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let data_dir = dir.path().join("data");
    let csv = data_dir.join("synth.csv");
    let before = std::fs::read(&csv).unwrap();
    // An input named like the file the command writes.
    let clash = data_dir.join("predictions.csv");
    std::fs::copy(&csv, &clash).unwrap();
    let o = trajfuse(&[
        "predict",
        "--checkpoint",
        p(&dir.path().join("run/model.ckpt")),
        "--input",
        p(&clash),
        "--out",
        p(&data_dir),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert_eq!(std::fs::read(&clash).unwrap(), before);
}

#[test]
fn joint_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let other = dir.path().join("other");
    assert!(
        trajfuse(&["synth", "--joints", "9", "--sequences", "1", "--out", p(&other)])
            .status
            .success()
    );
    let o = trajfuse(&[
        "predict",
        "--checkpoint",
        p(&dir.path().join("run/model.ckpt")),
        "--input",
        p(&other.join("synth.csv")),
        "--out",
        p(&other),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
