use std::path::Path;
use std::process::Command;

use dfdreg::io::{read_image, read_sinogram};
use dfdreg::{mse, Image, Sinogram};
use dfdreg_cli::{cli_main, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["dfdreg".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    cli_main(argv)
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn phantom_writes_image() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "x.fflt");
    assert_eq!(run(&["phantom", "--kind", "shepp_logan", "--size", "256", "--out", &out]), EXIT_OK);
    let x: Image = read_image(&out).unwrap();
    assert_eq!(x.size(), 256);
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["phantom", "--no-such-flag"]), EXIT_USAGE);
    let out = Command::new(env!("CARGO_BIN_EXE_dfdreg")).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "{stderr}");
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["fbp", "--sinogram", &p(dir.path(), "missing.fsin"), "--out", &p(dir.path(), "x.fflt")]), EXIT_RUNTIME);
    let bad = p(dir.path(), "bad.fsin");
    std::fs::write(&bad, b"FSIN\x01").unwrap();
    assert_eq!(run(&["fbp", "--sinogram", &bad, "--out", &p(dir.path(), "x.fflt")]), EXIT_RUNTIME);
    assert_eq!(run(&["phantom", "--size", "100", "--out", &p(dir.path(), "x.fflt")]), EXIT_RUNTIME);
    let deltas = ["--deltas", "1,1", "--out", &p(dir.path(), "conv")];
    assert_eq!(run(&[&["convergence"], &deltas[..]].concat()), EXIT_RUNTIME);
}

#[test]
fn config_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "cfg.json");
    std::fs::write(&cfg, r#"{"kind": "disks", "size": 16}"#).unwrap();
    let a = p(dir.path(), "a.fflt");
    assert_eq!(run(&["phantom", "--config", &cfg, "--out", &a]), EXIT_OK);
    assert_eq!(read_image::<f64>(&a).unwrap().size(), 16);
    let b = p(dir.path(), "b.fflt");
    assert_eq!(run(&["phantom", "--config", &cfg, "--size", "32", "--out", &b]), EXIT_OK);
    assert_eq!(read_image::<f64>(&b).unwrap().size(), 32);
    std::fs::write(&cfg, "[1, 2]").unwrap();
    assert_eq!(run(&["phantom", "--config", &cfg, "--out", &a]), EXIT_RUNTIME);
}

#[test]
fn verify_filter_report_has_table_keys() {
    let dir = tempfile::tempdir().unwrap();
    let report = p(dir.path(), "r.json");
    let args = ["verify-filter", "--filter", "example_cubic", "--alphas", "4,8,12", "--points", "40", "--report", &report];
    assert_eq!(run(&args), EXIT_OK);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let rows = v.as_object().unwrap();
    let mut keys: Vec<&str> = rows.keys().map(String::as_str).collect();
    keys.sort_by_key(|k| k.parse::<u32>().unwrap());
    assert_eq!(keys, ["4", "8", "12"]);
    for row in rows.values() {
        for key in ["F1", "F2", "F3_max", "F4_sum", "A1_ratio", "A3_ok", "A2_ratio"] {
            assert!(row.get(key).is_some(), "missing {key}");
        }
        assert_eq!(row["F1"], true);
        assert_eq!(row["F3_max"], 0.0);
    }
}

#[test]
fn noise_and_convergence_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let x = p(dir.path(), "x.fflt");
    let y = p(dir.path(), "y.fsin");
    assert_eq!(run(&["phantom", "--size", "32", "--out", &x]), EXIT_OK);
    assert_eq!(run(&["project", "--image", &x, "--out", &y]), EXIT_OK);
    for kind in ["gaussian", "poisson", "uniform", "salt_pepper"] {
        let a = p(dir.path(), &format!("{kind}_a.fsin"));
        let b = p(dir.path(), &format!("{kind}_b.fsin"));
        for out in [&a, &b] {
            assert_eq!(run(&["noise", "--sinogram", &y, "--kind", kind, "--delta", "0.5", "--seed", "3", "--out", out]), EXIT_OK);
        }
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let clean: Sinogram = read_sinogram(&y).unwrap();
        let noisy: Sinogram = read_sinogram(&a).unwrap();
        let d = dfdreg::harness::measured_delta(&clean, &noisy).unwrap();
        assert!((d - 0.5).abs() <= 0.005, "{kind}: {d}");
    }
    let mut csv = Vec::new();
    for name in ["c1", "c2"] {
        let out = p(dir.path(), name);
        assert_eq!(run(&["convergence", "--n", "256", "--trials", "4", "--bootstrap", "50", "--seed", "9", "--out", &out]), EXIT_OK);
        csv.push(std::fs::read_to_string(Path::new(&out).join("convergence.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
    assert!(csv[0].starts_with("label,delta,"));
    assert!(!csv[0].contains('\r'));
}

#[test]
fn train_then_reconstruct_beats_fbp() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = dir.path().join("images");
    for i in 0..10 {
        let out = p(&imgs, &format!("img{i:02}.fflt"));
        assert_eq!(run(&["phantom", "--kind", "random", "--size", "32", "--seed", &i.to_string(), "--out", &out]), EXIT_OK);
    }
    let params = p(dir.path(), "params.json");
    let args = ["train", "--delta", "2", "--noise", "gaussian", "--images", imgs.to_str().unwrap(), "--seed", "1", "--out", &params];
    assert_eq!(run(&args), EXIT_OK);

    let x = p(dir.path(), "x.fflt");
    let y = p(dir.path(), "y.fsin");
    let yn = p(dir.path(), "yn.fsin");
    let xf = p(dir.path(), "xf.fflt");
    let xr = p(dir.path(), "xr.fflt");
    assert_eq!(run(&["phantom", "--kind", "random", "--size", "32", "--seed", "100", "--out", &x]), EXIT_OK);
    assert_eq!(run(&["project", "--image", &x, "--out", &y]), EXIT_OK);
    assert_eq!(run(&["noise", "--sinogram", &y, "--delta", "2", "--seed", "5", "--out", &yn]), EXIT_OK);
    assert_eq!(run(&["fbp", "--sinogram", &yn, "--out", &xf]), EXIT_OK);
    assert_eq!(run(&["reconstruct", "--params", &params, "--sinogram", &yn, "--out", &xr]), EXIT_OK);
    let truth: Image = read_image(&x).unwrap();
    let e_fbp = mse(&read_image::<f64>(&xf).unwrap(), &truth).unwrap();
    let e_rec = mse(&read_image::<f64>(&xr).unwrap(), &truth).unwrap();
    assert!(e_rec < e_fbp, "learned {e_rec} vs fbp {e_fbp}");

    let table = p(dir.path(), "table");
    assert_eq!(run(&["mse-table", "--params", &params, "--phantoms", "3", "--size", "32", "--out", &table]), EXIT_OK);
    let csv = std::fs::read_to_string(Path::new(&table).join("mse_table.csv")).unwrap();
    assert!(csv.starts_with("noise,delta,mse_fbp,mse_learned\ngaussian,2,"), "{csv}");
}
