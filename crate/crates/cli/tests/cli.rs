use std::path::Path;
use std::process::{Command, Output};

use afdc::cost::{CostLayer, CostNet, CostOp};
use afdc::model::{save_checkpoint, Model, NetworkConfig, ScoreDistribution};
use afdc::pipeline::{write_dataset, ImageRecord};
use afdc::tensor::{Dims, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn afdc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afdc"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn selftest_json_and_fault_hook() {
    let d = tempfile::tempdir().unwrap();
    let o = afdc(d.path(), &["selftest", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["suites"].as_array().unwrap().len() >= 6);
    assert!(d.path().join("out/run_manifest.json").exists());

    let o = afdc(d.path(), &["selftest", "--inject-fault", "emd_oracle"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL emd_oracle"));
    assert_eq!(afdc(d.path(), &["selftest", "--inject-fault", "nope"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(afdc(p, &["eval", "--checkpoint", "c", "--data", "d", "--weight-mode", "bogus"]).status.code(), Some(2));
    assert_eq!(afdc(p, &["eval", "--checkpoint", "c", "--data", "d"]).status.code(), Some(2));
    assert_eq!(afdc(p, &["cost", "--arch", "alexnet"]).status.code(), Some(2));
    assert_eq!(afdc(p, &["train", "--data", "missing"]).status.code(), Some(2));
    std::fs::write(p.join("bad.json"), r#"{"train":{"lr":1}}"#).unwrap();
    assert_eq!(afdc(p, &["synth", "--config", "bad.json"]).status.code(), Some(2));
    assert_eq!(afdc(p, &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn cost_reports() {
    let d = tempfile::tempdir().unwrap();
    let o = afdc(d.path(), &["cost", "--k-dilations", "1,2,7"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("resnet50") && text.contains("97.8%"));
    let csv = std::fs::read_to_string(d.path().join("out/cost.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let o = afdc(d.path(), &["cost", "--arch", "vgg16", "--k-dilations", "1,7", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let ratio = v["rows"][1]["ratio"].as_f64().unwrap();
    assert!((ratio - 7.0).abs() < 0.3, "{ratio}");
}

#[test]
fn custom_one_layer_cost_matches_library() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("one.json"),
        r#"{"network":{"input_channels":3,"blocks":[{"type":"conv","in_c":3,"out_c":8,"k":3,"afdc":true}],
            "head":{"type":"global"},"feature_dim":4}}"#,
    )
    .unwrap();
    let o = afdc(
        d.path(),
        &["cost", "--arch", "custom", "--config", "one.json", "--k-dilations", "1,3", "--input-size", "16", "--json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let conv_only = CostNet {
        name: "one".into(),
        input_channels: 3,
        layers: vec![CostLayer {
            name: "c".into(),
            op: CostOp::Conv {
                in_c: 3,
                out_c: 8,
                k_h: 3,
                k_w: 3,
                stride: 1,
                padding: 1,
                afdc: true,
            },
            from: None,
        }],
    };
    let head = 8 * 4 + 4 * 10;
    for (i, k) in [1usize, 3].into_iter().enumerate() {
        let expected = conv_only.count_mult_adds((16, 16), k).unwrap().mult_adds + head;
        assert_eq!(v["rows"][i]["mult_adds"].as_u64().unwrap(), expected);
    }
}

fn square_dataset(dir: &Path) {
    let mut recs = Vec::new();
    for i in 0..6 {
        let px = Tensor::from_fn(Dims::new(1, 1, 20, 20), |_, _, y, x| ((x + y + i) % 7) as f32 / 7.0);
        recs.push(ImageRecord::new(px, ScoreDistribution::point_mass(1 + i).unwrap()).unwrap());
    }
    write_dataset(dir, &recs).unwrap();
}

#[test]
fn square_data_fractional_equals_vanilla_row() {
    let d = tempfile::tempdir().unwrap();
    square_dataset(&d.path().join("sq"));
    let m = Model::<f32>::build(&NetworkConfig::experiment(true), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    save_checkpoint(&m, d.path().join("ck")).unwrap();
    let o = afdc(d.path(), &["eval", "--checkpoint", "ck", "--data", "sq"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("out/eval.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    let metrics = |name: &str| rows.iter().find(|r| r.starts_with(&format!("{name},"))).unwrap().split_once(',').unwrap().1;
    assert_eq!(metrics("fractional"), metrics("vanilla"));
    assert_ne!(metrics("fractional"), metrics("constant21"));
}

#[test]
fn synth_is_reproducible_and_sweep_has_unit_ratio() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("small.json"), r#"{"data":{"train":4,"val":2,"test":3}}"#).unwrap();
    for out in ["a", "b"] {
        let o = afdc(d.path(), &["synth", "--config", "small.json", "--seed", "5", "--out", out]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["test/manifest.csv", "test/img_00002.afdt", "run_manifest.json"] {
        let a = std::fs::read(d.path().join("a").join(f)).unwrap();
        let b = std::fs::read(d.path().join("b").join(f)).unwrap();
        assert!(a == b || f == "run_manifest.json", "{f}");
    }
    let m = Model::<f32>::build(&NetworkConfig::experiment(true), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    save_checkpoint(&m, d.path().join("ck")).unwrap();
    let o = afdc(
        d.path(),
        &["sweep", "--checkpoint", "ck", "--image", "a/test/img_00000.afdt", "--ratio-grid", "0.25:5:0.25", "--out", "sw"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("sw/sweep.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("1.0000,")));
    assert_eq!(csv.lines().count(), 21);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("sw/run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "sweep");
    assert_eq!(manifest["outputs"][0], "sweep.csv");
}
