//! Behavior tests of the `coopsense` binary: argument handling, exit
//! codes, artifact validity.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coopsense"))
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn transform_identity_frames_echoes_object() {
    let out = bin()
        .args(["transform", "--receiver", "0,0,0", "--sender", "0,0,0", "--object", "5,1,0.3"])
        .args(["--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("x     = 5.000000"), "{text}");
    assert!(text.contains("y     = 1.000000"), "{text}");
    assert!(text.contains("theta = 0.300000"), "{text}");
}

#[test]
fn transform_offset_stations() {
    let out = bin()
        .args(["transform", "--receiver", "0,75,0", "--sender", "100,100,0", "--object", "10,0,0"])
        .args(["--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("x     = 110.000000"), "{text}");
    assert!(text.contains("y     = 25.000000"), "{text}");
}

#[test]
fn transform_non_psd_covariance_exits_2_naming_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.toml");
    std::fs::write(
        &input,
        r#"
[receiver]
pose = { x = 0.0, y = 0.0, theta = 0.0 }
cov = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
[sender]
pose = { x = 0.0, y = 0.0, theta = 0.0 }
cov = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
[object]
pose = { x = 1.0, y = 0.0, theta = 0.0 }
cov = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
"#,
    )
    .unwrap();
    let out = bin()
        .args(["transform", "--input"])
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("receiver covariance"), "{err}");
    assert!(err.contains("positive semi-definite"), "{err}");
}

#[test]
fn sweep_with_empty_values_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.sweep.toml");
    std::fs::write(&input, "varied = \"heading\"\nvalues = []\n").unwrap();
    let out = bin().arg("sweep").arg(&input).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("values list is empty"));
}

#[test]
fn scenario_schema_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.toml");
    std::fs::write(&input, "seed = 1\nduration_s = \"long\"\n").unwrap();
    let out = bin().arg("scenario").arg(&input).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cpm_minimal_toml_gives_47_byte_dump() {
    let out = bin()
        .arg("cpm")
        .arg("--toml")
        .arg(workspace_root().join("presets/minimal_cpm.toml"))
        .arg("--check")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("encoded 47 bytes"), "{text}");
    assert!(text.contains("roundtrip check: ok"), "{text}");
}

#[test]
fn cpm_check_on_bundled_fixture_exits_0() {
    let out = bin()
        .arg("cpm")
        .arg("--toml")
        .arg(workspace_root().join("presets/example_cpm.toml"))
        .arg("--check")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn cpm_truncated_file_exits_3_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    // Encode the minimal fixture to bytes first.
    let bin_path = dir.path().join("msg.bin");
    let out = bin()
        .arg("cpm")
        .arg("--toml")
        .arg(workspace_root().join("presets/minimal_cpm.toml"))
        .arg("--bin-out")
        .arg(&bin_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let mut bytes = std::fs::read(&bin_path).unwrap();
    bytes.truncate(30);
    let cut = dir.path().join("cut.bin");
    std::fs::write(&cut, &bytes).unwrap();

    let out = bin().arg("cpm").arg("--file").arg(&cut).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("offset"), "{err}");
}

#[test]
fn cpm_decode_hex_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let bin_path = dir.path().join("msg.bin");
    bin()
        .arg("cpm")
        .arg("--toml")
        .arg(workspace_root().join("presets/example_cpm.toml"))
        .arg("--bin-out")
        .arg(&bin_path)
        .output()
        .unwrap();
    let hex_str = hex::encode(std::fs::read(&bin_path).unwrap());
    let out = bin()
        .args(["cpm", "--hex", &hex_str, "--check"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("roundtrip check: ok"));
}

fn assert_valid_svg_with_ellipses_in_viewbox(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text)
        .unwrap_or_else(|e| panic!("{} is not valid XML: {e}", path.display()));
    let svg = doc.root_element();
    assert_eq!(svg.tag_name().name(), "svg");
    let viewbox: Vec<f64> = svg
        .attribute("viewBox")
        .unwrap()
        .split_whitespace()
        .map(|v| v.parse().unwrap())
        .collect();
    let (vx, vy, vw, vh) = (viewbox[0], viewbox[1], viewbox[2], viewbox[3]);
    let mut ellipses = 0;
    for node in doc.descendants().filter(|n| n.tag_name().name() == "ellipse") {
        ellipses += 1;
        let get = |a: &str| node.attribute(a).unwrap().parse::<f64>().unwrap();
        let (cx, cy, rx, ry) = (get("cx"), get("cy"), get("rx"), get("ry"));
        let r = rx.max(ry);
        assert!(cx - r >= vx - 1e-6 && cx + r <= vx + vw + 1e-6, "{}", path.display());
        assert!(cy - r >= vy - 1e-6 && cy + r <= vy + vh + 1e-6, "{}", path.display());
    }
    assert!(ellipses > 0, "no ellipses in {}", path.display());
}

#[test]
fn sweep_writes_expected_svg_count_and_valid_xml() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("small.sweep.toml");
    std::fs::write(
        &input,
        r#"
modes = ["v2i", "v2v"]
varied = "heading"
values = [0.5, 1.0]
offsets = [50.0, -50.0]
mc_samples = 200
seed = 1
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("sweep")
        .arg(&input)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let svgs: Vec<PathBuf> = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension().is_some_and(|x| x == "svg")).then_some(p)
        })
        .collect();
    // 2 modes × 2 values × 2 offsets.
    assert_eq!(svgs.len(), 8);
    for svg in &svgs {
        assert_valid_svg_with_ellipses_in_viewbox(svg);
    }
    assert!(out_dir.join("sweep.csv").exists());
}

#[test]
fn scenario_csv_honors_seed_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("tiny.toml");
    std::fs::write(
        &input,
        r#"
seed = 9
duration_s = 1.0
[[stations]]
id = 1
role = "sensing"
kind = "irsu"
pose = { x = 10.0, y = 5.0, theta = 0.0 }
[[stations]]
id = 2
role = "receiving"
kind = "cav"
pose = { x = 0.0, y = 0.0, theta = 0.0 }
velocity = 2.0
[[road_users]]
class = "pedestrian"
[road_users.trajectory]
kind = "static"
pose = { x = 12.0, y = 2.0, theta = 0.0 }
"#,
    )
    .unwrap();
    let run = |out_dir: &Path, seed: &str| {
        let out = bin()
            .arg("scenario")
            .arg(&input)
            .args(["--seed", seed, "--ndjson", "--out"])
            .arg(out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        (
            std::fs::read(out_dir.join("scenario.csv")).unwrap(),
            std::fs::read(out_dir.join("scenario.svg")).unwrap(),
            std::fs::read(out_dir.join("scenario.ndjson")).unwrap(),
        )
    };
    let a = run(&dir.path().join("a"), "7");
    let b = run(&dir.path().join("b"), "7");
    assert_eq!(a, b, "same seed must give byte-identical outputs");
    let c = run(&dir.path().join("c"), "8");
    assert_ne!(a.0, c.0, "different seed must change the log");
}

#[test]
fn coopsense_threads_caps_parallelism_without_changing_results() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("s.sweep.toml");
    std::fs::write(
        &input,
        "modes = [\"v2i\"]\nvaried = \"heading\"\nvalues = [0.5]\noffsets = [50.0]\nmc_samples = 500\nseed = 4\n",
    )
    .unwrap();
    let run = |threads: Option<&str>, out: &Path| {
        let mut cmd = bin();
        cmd.arg("sweep").arg(&input).args(["--format", "csv", "--out"]).arg(out);
        match threads {
            Some(n) => cmd.env("COOPSENSE_THREADS", n),
            None => cmd.env_remove("COOPSENSE_THREADS"),
        };
        let out_res = cmd.output().unwrap();
        assert!(out_res.status.success(), "{}", stderr(&out_res));
    };
    run(Some("1"), &dir.path().join("one"));
    run(Some("4"), &dir.path().join("four"));
    run(None, &dir.path().join("free"));
    let read = |d: &str| std::fs::read(dir.path().join(d).join("sweep.csv")).unwrap();
    assert_eq!(read("one"), read("four"));
    assert_eq!(read("one"), read("free"));

    // Invalid value is an input error.
    let mut cmd = bin();
    cmd.arg("sweep").arg(&input).env("COOPSENSE_THREADS", "lots");
    assert_eq!(cmd.output().unwrap().status.code(), Some(2));
}

#[test]
fn crossing_preset_csv_contains_giveway_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("scenario")
        .arg(workspace_root().join("presets/lab_crossing.toml"))
        .args(["--format", "csv", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("scenario.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("# coopsense-scenario-v1"));
    let giveways = csv.lines().filter(|l| l.contains(",GiveWay,")).count();
    assert!(giveways >= 1, "no GiveWay rows in the crossing log");
}

#[test]
fn scenario_svg_is_valid_xml() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("scenario")
        .arg(workspace_root().join("presets/alley_occlusion.toml"))
        .arg("--out")
        .arg(out_dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let svg = out_dir.path().join("scenario.svg");
    let text = std::fs::read_to_string(&svg).unwrap();
    roxmltree::Document::parse(&text).expect("scenario SVG parses as XML");
}
