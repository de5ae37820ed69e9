use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hcnn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcnn")).args(args).current_dir(dir).env_remove("HCNN_TEST_MODE").output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> Value {
    let out = hcnn(args, dir);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap_or(Value::Null)
}

fn error_line(out: &Output) -> String {
    let err = String::from_utf8_lossy(&out.stderr);
    let last = err.lines().last().unwrap_or_default().to_string();
    assert!(last.starts_with("error kind="), "unexpected stderr: {err}");
    last
}

fn fixture(dir: &Path, seed: &str) {
    ok(&["gen-fixture", "--params", "desk-A", "--topology", "tiny-cnn", "--seed", seed, "--golden-count", "2", "--out", "w.json"], dir);
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn keygen_encrypt_infer_decrypt_reproduces_golden_logits() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d, "42");
    let keys = ok(&["keygen", "--params", "desk-A", "--weights", "w.json", "--seed", "1", "--out-dir", "k"], d);
    assert_eq!(keys["insecure"], true);
    assert_eq!(keys["max_level"], 9);
    let w = ["--params", "desk-A", "--weights", "w.json", "--keys", "k"];
    ok(&[&["encrypt"][..], &w, &["--golden-index", "1", "--out", "x.ct"]].concat(), d);
    ok(&[&["infer"][..], &w, &["--input", "x.ct", "--out", "y.ct", "--report", "r.json"]].concat(), d);
    let got = ok(&["decrypt", "--params", "desk-A", "--keys", "k", "--input", "y.ct"], d);

    let model: Value = serde_json::from_slice(&std::fs::read(d.join("w.json")).unwrap()).unwrap();
    let want = floats(&model["golden"][1]["logits"]);
    let got_logits = floats(&got["logits"]);
    let diff = got_logits.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-4, "logit diff {diff}");
    assert_eq!(got["insecure"], true);

    let report: Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["layers"].as_array().unwrap().len(), 7);
    assert_eq!(report["layers"][0]["entry_level"], 9);
    assert_eq!(report["insecure"], true);
    assert!(report["total"]["rotations"].as_u64().unwrap() > 0);

    // a JSON input file takes the same path as a golden index
    let input = serde_json::json!({ "input": model["golden"][1]["input"] });
    std::fs::write(d.join("in.json"), input.to_string()).unwrap();
    ok(&[&["encrypt"][..], &w, &["--input", "in.json", "--out", "x2.ct"]].concat(), d);
    ok(&[&["infer"][..], &w, &["--input", "x2.ct", "--out", "y2.ct", "--report", "r2.json"]].concat(), d);
    let again = ok(&["decrypt", "--params", "desk-A", "--keys", "k", "--input", "y2.ct"], d);
    assert_eq!(again["argmax"], got["argmax"]);
}

#[test]
fn seeded_outputs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        std::fs::create_dir_all(d).unwrap();
        fixture(d, "7");
        ok(&["keygen", "--params", "desk-A", "--rots", "1,-1", "--max-level", "2", "--seed", "3", "--out-dir", "k"], d);
    }
    for f in ["w.json", "k/secret.key", "k/public.keys"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let other = tmp.path().join("c");
    std::fs::create_dir_all(&other).unwrap();
    fixture(&other, "8");
    assert_ne!(std::fs::read(a.join("w.json")).unwrap(), std::fs::read(other.join("w.json")).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for args in [&["frobnicate"][..], &["keygen", "--params", "desk-A"], &["plan", "--params", "desk-Z", "--weights", "w.json"]] {
        let out = hcnn(args, d);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(error_line(&out).contains("code=2"));
    }
    fixture(d, "1");
    let out = hcnn(&["gen-fixture", "--topology", "resnet-9000", "--out", "x.json"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("x.json").exists());
}

#[test]
fn io_schema_and_digest_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d, "1");
    let out = hcnn(&["plan", "--params", "desk-A", "--weights", "missing.json"], d);
    assert_eq!(out.status.code(), Some(3));

    // weights made for another parameter set
    let out = hcnn(&["plan", "--params", "desk-B", "--weights", "w.json"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_line(&out).contains("digest"));

    std::fs::write(d.join("bad.json"), "{\"version\": 1, \"topology\": \"tiny-cnn\"}").unwrap();
    let out = hcnn(&["plan", "--params", "desk-A", "--weights", "bad.json"], d);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(d.join("junk.ct"), b"not a container").unwrap();
    ok(&["keygen", "--params", "desk-A", "--rots", "1", "--max-level", "1", "--out-dir", "k"], d);
    let out = hcnn(&["decrypt", "--params", "desk-A", "--keys", "k", "--input", "junk.ct"], d);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().filter(|l| l.starts_with("error")).count(), 1);
}

#[test]
fn verify_breach_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = hcnn(&["verify", "--params", "desk-A", "--tolerance", "1e-30", "--out", "v.json"], d);
    assert_eq!(out.status.code(), Some(4));
    assert!(error_line(&out).starts_with("error kind=verify code=4"));
    let report: Value = serde_json::from_slice(&std::fs::read(d.join("v.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert!(report["max_abs_diff"].as_f64().unwrap() < 1e-2);
    assert!(report["reference_diff"].as_f64().unwrap() < 1e-6);

    let out = hcnn(&["verify", "--params", "desk-A"], d);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("max_abs_diff="));
}

#[test]
fn refresh_plans_need_test_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d, "5");
    let plan = ok(&["plan", "--params", "desk-A", "--weights", "w.json", "--max-level", "6"], d);
    let points = plan["refresh_points"].as_array().unwrap();
    assert!(!points.is_empty());
    assert_eq!(plan["insecure"], true);

    let w = ["--params", "desk-A", "--weights", "w.json", "--keys", "k", "--max-level", "6"];
    ok(&["keygen", "--params", "desk-A", "--weights", "w.json", "--max-level", "6", "--out-dir", "k"], d);
    ok(&[&["encrypt"][..], &w, &["--golden-index", "0", "--out", "x.ct"]].concat(), d);
    let infer = [&["infer"][..], &w, &["--input", "x.ct", "--out", "y.ct", "--report", "r.json"]].concat();
    let out = hcnn(&infer, d);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_line(&out).contains("HCNN_TEST_MODE"));

    let out = Command::new(env!("CARGO_BIN_EXE_hcnn")).args(&infer).current_dir(d).env("HCNN_TEST_MODE", "1").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("insecure"));
    let report: Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    let refreshed: Vec<_> = report["layers"].as_array().unwrap().iter().filter(|l| l["refreshed_before"] == true).collect();
    assert_eq!(refreshed.len(), points.len());

    let got = ok(&["decrypt", "--params", "desk-A", "--keys", "k", "--input", "y.ct"], d);
    let model: Value = serde_json::from_slice(&std::fs::read(d.join("w.json")).unwrap()).unwrap();
    let want = floats(&model["golden"][0]["logits"]);
    let diff = floats(&got["logits"]).iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-3, "logit diff {diff}");
}

#[test]
fn bench_ops_reports_every_operation() {
    let tmp = tempfile::tempdir().unwrap();
    let r = ok(&["--threads", "2", "bench-ops", "--params", "desk-A", "--reps", "5", "--level", "3"], tmp.path());
    for op in ["hadd", "pmult", "hmult", "rescale", "rotate", "encode"] {
        let t = &r["ops"][op];
        assert_eq!(t["reps"], 5, "{op}");
        assert!(t["median_ms"].as_f64().unwrap() >= 0.0 && t["iqr_ms"].as_f64().unwrap() >= 0.0);
    }
    assert!(r["ops"]["hmult"]["median_ms"].as_f64() > r["ops"]["hadd"]["median_ms"].as_f64());
    assert_eq!(r["level"], 3);
    assert_eq!(r["insecure"], true);
    assert!(r["note"].as_str().unwrap().contains("not comparable"));
    let out = hcnn(&["bench-ops", "--params", "desk-A", "--reps", "0"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn explicit_rotation_list_still_runs_inference() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d, "42");
    let keys = ok(&["keygen", "--params", "desk-A", "--rots", "1,2,4,8", "--max-level", "9", "--out-dir", "k"], d);
    let steps: Vec<u64> = keys["rotation_keys"].as_array().unwrap().iter().map(|s| s.as_u64().unwrap()).collect();
    assert!([1, 2, 4, 8, 4095].iter().all(|s| steps.contains(s)), "{steps:?}");
    let w = ["--params", "desk-A", "--weights", "w.json", "--keys", "k"];
    ok(&[&["encrypt"][..], &w, &["--golden-index", "0", "--out", "x.ct"]].concat(), d);
    let report = ok(&[&["infer"][..], &w, &["--input", "x.ct", "--out", "y.ct"]].concat(), d);
    assert!(report["total"]["rotations"].as_u64().unwrap() > 0);
    assert_eq!(report["backend"], "ckks");
}
