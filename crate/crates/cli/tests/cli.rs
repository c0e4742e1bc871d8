use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fao::evaluation::{benchmark_truth, rmse, ControlGrid};
use fao::imaging::{load_image, save_image, textured_scene};
use fao::{AffineTransform, Point};

fn fao(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fao")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_transform(dir: &Path, name: &str, h: &AffineTransform) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, h.to_json()).unwrap();
    p
}

fn synth(dir: &Path, truth: &AffineTransform, looks: &str, size: &str) -> PathBuf {
    let t = write_transform(dir, "truth_in.json", truth);
    let out = dir.join("pair");
    stdout(&fao(&["synth", "--scene", size, "--transform", s(&t), "--looks", looks, "--seed", "3", "--out-dir", s(&out)]));
    out
}

#[test]
fn register_recovers_synthetic_truth() {
    let dir = tempfile::tempdir().unwrap();
    let truth = benchmark_truth(3, 1024);
    let pair = synth(dir.path(), &truth, "4", "1024");
    let h = dir.path().join("h.json");
    let trace = dir.path().join("trace.csv");
    let overlay = dir.path().join("overlay.png");
    let slices = dir.path().join("slices.json");
    let line = stdout(&fao(&[
        "register",
        s(&pair.join("fixed.f32")),
        s(&pair.join("moving.f32")),
        "--out",
        s(&h),
        "--trace",
        s(&trace),
        "--overlay",
        s(&overlay),
        "--slices",
        s(&slices),
    ]));
    assert!(line.starts_with("generations="), "{line}");
    let eval = stdout(&fao(&["eval", s(&h), s(&pair.join("grid.csv"))]));
    let v: f64 = eval.trim().strip_prefix("rmse_px=").unwrap().parse().unwrap();
    assert!(v < 1.0, "{v}");
    assert!(std::fs::read_to_string(&trace).unwrap().starts_with("generation,objective,"));
    assert!(load_image(&overlay).is_ok());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&slices).unwrap()).unwrap();
    assert!(json[0]["rect1"]["w"].as_u64().is_some());
}

#[test]
fn identical_images_register_to_identity() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("scene.f32");
    save_image(&textured_scene(1024, 1024, 5), &img).unwrap();
    let h = dir.path().join("h.json");
    stdout(&fao(&["register", s(&img), s(&img), "-o", s(&h)]));
    let h = AffineTransform::from_json(&std::fs::read_to_string(&h).unwrap()).unwrap();
    let grid = ControlGrid::lattice(1024, 1024, 20, &AffineTransform::IDENTITY);
    assert!(rmse(&h, &grid) < 0.5);
}

#[test]
fn register_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let pair = synth(dir.path(), &benchmark_truth(5, 1024), "4", "1024");
    let (f, m) = (pair.join("fixed.f32"), pair.join("moving.f32"));
    let run = |tag: &str| {
        let h = dir.path().join(format!("h{tag}.json"));
        let t = dir.path().join(format!("t{tag}.csv"));
        let args = ["register", s(&f), s(&m), "-o", s(&h), "--trace", s(&t)];
        stdout(&fao(&args));
        (std::fs::read(&h).unwrap(), std::fs::read(&t).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn missing_input_is_an_io_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.json");
    let o = fao(&["register", "/nonexistent/a.png", "/nonexistent/b.png", "-o", s(&h), "--trace", s(&dir.path().join("t.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with("error class=io code=3 message="), "{err}");
    assert_eq!(err.lines().count(), 1);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn rate_bound_violation_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("small.f32");
    save_image(&textured_scene(256, 256, 6), &img).unwrap();
    let o = fao(&["register", s(&img), s(&img), "-o", s(&dir.path().join("h.json")), "--rate", "4"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn synth_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let id = write_transform(dir.path(), "id.json", &AffineTransform::IDENTITY);
    let run = |out: &str, looks: &str| {
        let d = dir.path().join(out);
        stdout(&fao(&["synth", "--scene", "128", "--transform", s(&id), "--looks", looks, "--seed", "9", "--out-dir", s(&d)]));
        d
    };
    let (a, b) = (run("a", "4"), run("b", "4"));
    for f in ["fixed.f32", "moving.f32", "truth.json", "grid.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let clean = run("c", "1000000");
    let (i1, i2) = (load_image(clean.join("fixed.f32")).unwrap(), load_image(clean.join("moving.f32")).unwrap());
    let max = i1.data().iter().zip(i2.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(max < 0.02, "{max}");

    let away = write_transform(dir.path(), "away.json", &AffineTransform::translation(1000.0, 0.0));
    let o = fao(&["synth", "--scene", "128", "--transform", s(&away), "--out-dir", s(&dir.path().join("d"))]);
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn eval_prints_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let truth = AffineTransform::new(1.01, 0.0, 3.0, 0.0, 0.99, -2.0);
    let grid = ControlGrid::lattice(200, 100, 5, &truth);
    let g = dir.path().join("g.csv");
    grid.save(&g).unwrap();
    let t = write_transform(dir.path(), "t.json", &truth);
    assert_eq!(stdout(&fao(&["eval", s(&t), s(&g)])).trim(), "rmse_px=0");

    std::fs::write(&g, "10,10,10,10\n").unwrap();
    let t = write_transform(dir.path(), "t.json", &AffineTransform::translation(3.0, 4.0));
    assert_eq!(stdout(&fao(&["eval", s(&t), s(&g)])).trim(), "rmse_px=5");

    let h = AffineTransform::new(1.002, -0.01, 0.7, 0.004, 0.995, -1.3);
    let t = write_transform(dir.path(), "t.json", &h);
    grid.save(&g).unwrap();
    let v: f64 = stdout(&fao(&["eval", s(&t), s(&g)])).trim()[8..].parse().unwrap();
    assert_eq!(v, rmse(&h, &grid));

    std::fs::write(&t, "{\"a1\": 1}").unwrap();
    assert_eq!(fao(&["eval", s(&t), s(&g)]).status.code(), Some(2));
}

#[test]
fn unit_rate_features_match_plain_detection() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("scene.f32");
    save_image(&textured_scene(384, 384, 7), &img).unwrap();
    let dump = dir.path().join("f.txt");
    let count = |mode: &str| {
        let line = stdout(&fao(&["features", s(&img), mode, "--rate", "1", "-o", s(&dump)]));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        v["n_features_1"].as_u64().unwrap() as f64
    };
    let (drs, sift) = (count("--drs"), count("--sift"));
    assert!(sift > 0.0 && (drs - sift).abs() <= 0.05 * sift, "{drs} vs {sift}");
    let first = std::fs::read_to_string(&dump).unwrap();
    assert_eq!(first.lines().next().unwrap().split(' ').count(), 132);

    let line = stdout(&fao(&["features", s(&img), "--drs", "--rate", "2"]));
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    for key in ["n_lowres_matches", "n_squares", "n_features_1", "n_features_2", "elapsed_ms"] {
        assert!(v[key].is_number(), "{key}");
    }
}

#[test]
fn compare_fao_against_ncc() {
    let dir = tempfile::tempdir().unwrap();
    let truth = AffineTransform::similarity_about(Point::new(512.0, 512.0), 3f64.to_radians(), 1.0, 12.0, -7.0);
    let pair = synth(dir.path(), &truth, "4", "1024");
    let csv = dir.path().join("cmp.csv");
    let summary = dir.path().join("cmp.json");
    let (f, m, g) = (pair.join("fixed.f32"), pair.join("moving.f32"), pair.join("grid.csv"));
    stdout(&fao(&["compare", s(&f), s(&m), "--grid", s(&g), "--methods", "fao,ncc", "-o", s(&csv), "--summary", s(&summary)]));
    let mut rd = csv::Reader::from_path(&csv).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let e = |i: usize| rows[i][1].parse::<f64>().unwrap();
    assert_eq!((&rows[0][0], &rows[1][0]), ("fao", "ncc"));
    assert!(e(0) < e(1), "{} vs {}", e(0), e(1));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 2);

    let o = fao(&["compare", s(&f), s(&m), "--grid", s(&g), "--methods", "fao,sift"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(fao(&["register"]).status.code(), Some(2));
    assert_eq!(fao(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(fao(&["eval", "a", "b", "--bogus"]).status.code(), Some(2));
    assert_eq!(fao(&["features", "x.png"]).status.code(), Some(2));
    assert!(fao(&["--help"]).status.success());
}
