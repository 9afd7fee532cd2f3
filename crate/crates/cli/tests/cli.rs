use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn mmbus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmbus"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn calibration(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("cal.json");
    fs::write(&p, r#"{"radiated_power_db": 7.5}"#).unwrap();
    p
}

#[test]
fn fit_with_two_rows_is_insufficient() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("two.csv");
    fs::write(&p, "distance_m,path_loss_db\n1,85\n2,90\n").unwrap();
    let out = mmbus(&["fit", s(&p)]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn text_in_numeric_column_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.csv");
    fs::write(&p, "distance_m,path_loss_db\n1,85\n2,90\nthree,95\n4,97\n").unwrap();
    let out = mmbus(&["fit", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.csv:4"), "{}", stderr(&out));
}

#[test]
fn fit_recovers_noiseless_model() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("s.csv");
    let text = stdout(&mmbus(&[
        "synth",
        "--model",
        "c-upper",
        "--noiseless",
        "--seed",
        "1",
    ]));
    fs::write(&p, text).unwrap();
    let v: Value = serde_json::from_str(&stdout(&mmbus(&["fit", s(&p)]))).unwrap();
    assert!((v["alpha_db"].as_f64().unwrap() - 81.24).abs() < 1e-9);
    assert!((v["beta"].as_f64().unwrap() - 2.39).abs() < 1e-9);
    assert_eq!(v["n"], 30);

    let table = stdout(&mmbus(&["fit", s(&p), "--format", "csv"]));
    assert!(table.contains("81.24"), "{table}");
}

#[test]
fn fit_by_group_reports_every_populated_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("s.csv");
    let text = stdout(&mmbus(&[
        "synth",
        "--by-group",
        "--height",
        "both",
        "--repeats",
        "20",
        "--seed",
        "4",
    ]));
    fs::write(&p, text).unwrap();
    let v: Value = serde_json::from_str(&stdout(&mmbus(&["fit", s(&p), "--by-group"]))).unwrap();
    // four groups and the pooled cell, at both heights
    assert_eq!(v.as_array().unwrap().len(), 10);
}

#[test]
fn synth_is_deterministic_per_seed() {
    let args = ["synth", "--by-group", "--seed", "11", "--repeats", "3"];
    let a = stdout(&mmbus(&args));
    assert_eq!(a, stdout(&mmbus(&args)));
    let other = stdout(&mmbus(&[
        "synth",
        "--by-group",
        "--seed",
        "12",
        "--repeats",
        "3",
    ]));
    assert_ne!(a, other);
}

#[test]
fn synth_lower_skips_excluded_seats() {
    let text = stdout(&mmbus(&[
        "synth",
        "--by-group",
        "--height",
        "lower",
        "--seed",
        "2",
    ]));
    let r = rows(&text);
    assert_eq!(r.len(), 22);
    for row in &r {
        let seat: u32 = row[2].parse().unwrap();
        assert!(
            !(5..=8).contains(&seat) && !(27..=30).contains(&seat),
            "{row:?}"
        );
        assert_eq!(row[4], "lower");
    }
}

#[test]
fn noiseless_synth_lies_on_the_mean_line() {
    let text = stdout(&mmbus(&[
        "synth",
        "--model",
        "All/lower",
        "--height",
        "lower",
        "--noiseless",
    ]));
    for row in rows(&text) {
        let d: f64 = row[0].parse().unwrap();
        let pl: f64 = row[1].parse().unwrap();
        assert!((pl - (85.23 + 17.4 * d.log10())).abs() < 1e-9, "{row:?}");
    }
}

#[test]
fn eval_band_width_follows_sigma() {
    let text = stdout(&mmbus(&[
        "eval",
        "--model",
        "All/lower",
        "--distances",
        "1:12:0.5",
    ]));
    let r = rows(&text);
    assert_eq!(r.len(), 23);
    for row in &r {
        let v: Vec<f64> = row.iter().map(|x| x.parse().unwrap()).collect();
        assert!((v[3] - v[2] - 8.356).abs() < 1e-3, "{row:?}");
    }
    let first: Vec<f64> = r[0].iter().map(|x| x.parse().unwrap()).collect();
    assert!((first[1] - 85.23).abs() < 1e-12);

    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("m.json");
    fs::write(
        &m,
        r#"{"alpha_db": 80, "beta": 2, "sigma_db": 0, "region": "All", "height": "upper"}"#,
    )
    .unwrap();
    for row in rows(&stdout(&mmbus(&[
        "eval",
        "--model",
        s(&m),
        "--distances",
        "1:3:1",
    ]))) {
        assert!(row[1] == row[2] && row[2] == row[3], "{row:?}");
    }
}

#[test]
fn eval_warns_outside_fitted_range() {
    let out = mmbus(&["eval", "--model", "All/upper", "--distances", "20:20:1"]);
    stdout(&out);
    assert!(stderr(&out).contains("warning"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cal = calibration(tmp.path());
    let outputs: Vec<Vec<u8>> = (0..2)
        .map(|k| {
            let dir = tmp.path().join(format!("m{k}"));
            stdout(&mmbus(&[
                "synth",
                "--by-group",
                "--seed",
                "7",
                "--pdp-dir",
                s(&dir),
                "--calibration",
                s(&cal),
            ]));
            let samples = tmp.path().join(format!("s{k}.csv"));
            stdout(&mmbus(&["process", s(&dir), s(&cal), "-o", s(&samples)]));
            let fit = stdout(&mmbus(&["fit", s(&samples)]));
            let mut all = fs::read(&samples).unwrap();
            all.extend(fit.into_bytes());
            all
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

fn forty_seat_layout(path: &Path) {
    let seats: Vec<Value> = (1..=40u32)
        .map(|id| {
            let k = id - 1;
            let group = ["A", "B", "C", "D"][(k / 10) as usize];
            json!({
                "id": id,
                "x": 1.5 + 0.5 * (k / 4) as f64,
                "y": 0.4 + 0.55 * (k % 4) as f64,
                "group": group,
                "lower_excluded": matches!(id, 5..=8 | 37..=40),
            })
        })
        .collect();
    let layout = json!({
        "length_m": 12.8,
        "width_m": 2.55,
        "upper_height_m": 1.2,
        "lower_height_m": 0.7,
        "seats": seats,
    });
    fs::write(path, layout.to_string()).unwrap();
}

#[test]
fn seventy_two_sets_give_seventy_two_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = tmp.path().join("layout.json");
    forty_seat_layout(&layout);
    let cal = calibration(tmp.path());
    let dir = tmp.path().join("m");
    stdout(&mmbus(&[
        "--layout",
        s(&layout),
        "synth",
        "--by-group",
        "--height",
        "both",
        "--seed",
        "3",
        "--pdp-dir",
        s(&dir),
        "--calibration",
        s(&cal),
    ]));
    assert_eq!(fs::read_dir(&dir).unwrap().count(), 72);
    let text = stdout(&mmbus(&[
        "--layout",
        s(&layout),
        "process",
        s(&dir),
        s(&cal),
    ]));
    assert_eq!(rows(&text).len(), 72);
}

#[test]
fn corrupt_sweep_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cal = calibration(tmp.path());
    let dir = tmp.path().join("m");
    stdout(&mmbus(&[
        "synth",
        "--model",
        "All/upper",
        "--seed",
        "1",
        "--pdp-dir",
        s(&dir),
        "--calibration",
        s(&cal),
    ]));
    let bad = dir.join("9_upper").join("sweep_3.csv");
    fs::write(&bad, "delay_ns,power_db\n1.0,-90\n2.0,loud\n").unwrap();
    let out_path = tmp.path().join("out.csv");
    let out = mmbus(&["process", s(&dir), s(&cal), "-o", s(&out_path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("9_upper/sweep_3.csv"),
        "{}",
        stderr(&out)
    );
    assert!(!out_path.exists(), "partial output left behind");
}

#[test]
fn ineligible_seat_requests_exit_four() {
    let out = mmbus(&[
        "footprint",
        "--active",
        "5",
        "--height",
        "lower",
        "--seed",
        "1",
        "--draws",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    let out = mmbus(&[
        "footprint",
        "--active",
        "99",
        "--seed",
        "1",
        "--draws",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn footprint_requires_a_seed() {
    let out = mmbus(&["footprint", "--active", "1,2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_covers_eligible_seats() {
    let upper = stdout(&mmbus(&["sweep"]));
    assert!(upper.starts_with("seat,height,distance_m,mean_pl_db,snr_db,rate_bps,coverage\n"));
    assert_eq!(rows(&upper).len(), 30);
    assert_eq!(
        rows(&stdout(&mmbus(&["sweep", "--height", "lower"]))).len(),
        22
    );
}

#[test]
fn single_seat_footprint_matches_sweep_snr() {
    let tmp = tempfile::tempdir().unwrap();
    let reg = tmp.path().join("reg.json");
    let flat: Vec<Value> = serde_json::from_str::<Vec<Value>>(&stdout(&mmbus(&["registry"])))
        .unwrap()
        .into_iter()
        .map(|mut m| {
            m["sigma_db"] = json!(0.0);
            m
        })
        .collect();
    fs::write(&reg, serde_json::to_string(&flat).unwrap()).unwrap();

    let sweep = rows(&stdout(&mmbus(&["sweep", "--models", s(&reg)])));
    let seat12 = sweep.iter().find(|r| r[0] == "12").unwrap();
    let fp = rows(&stdout(&mmbus(&[
        "footprint",
        "--models",
        s(&reg),
        "--active",
        "12",
        "--seed",
        "5",
        "--draws",
        "20",
    ])));
    let snr: f64 = seat12[4].parse().unwrap();
    let sinr: f64 = fp[0][4].parse().unwrap();
    assert!((snr - sinr).abs() < 1e-9, "{snr} vs {sinr}");
}

#[test]
fn verify_passes_builtin_and_flags_perturbed_registry() {
    let out = mmbus(&["verify"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));

    let tmp = tempfile::tempdir().unwrap();
    let reg = tmp.path().join("reg.json");
    let bumped: Vec<Value> = serde_json::from_str::<Vec<Value>>(&stdout(&mmbus(&["registry"])))
        .unwrap()
        .into_iter()
        .map(|mut m| {
            if m["region"] == "All" && m["height"] == "upper" {
                m["beta"] = json!(2.10);
            }
            m
        })
        .collect();
    fs::write(&reg, serde_json::to_string(&bumped).unwrap()).unwrap();
    let out = mmbus(&["verify", "--registry", s(&reg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn registry_lists_ten_models() {
    let v: Vec<Value> = serde_json::from_str(&stdout(&mmbus(&["registry"]))).unwrap();
    assert_eq!(v.len(), 10);
}

#[test]
fn compare_reports_mean_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("ref.json");
    fs::write(
        &m,
        r#"{"alpha_db": 78.86, "beta": 2.03, "sigma_db": 2, "region": "All", "height": "upper"}"#,
    )
    .unwrap();
    let text = stdout(&mmbus(&[
        "compare",
        "--a",
        "All/upper",
        "--b",
        s(&m),
        "--distances",
        "1:12:1",
    ]));
    for row in rows(&text) {
        let diff: f64 = row[3].parse().unwrap();
        assert!((diff - 4.0).abs() < 1e-9, "{row:?}");
    }
}

#[test]
fn bad_distance_range_is_an_input_error() {
    let out = mmbus(&["eval", "--model", "All/upper", "--distances", "5:1:1"]);
    assert_eq!(out.status.code(), Some(2));
}
