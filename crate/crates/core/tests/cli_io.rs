mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use kvlr::config::Config;
use kvlr::field::{lift, KvaField};
use kvlr::io::{
    decode_field, encode_field, format_trajectory, parse_trajectory, read_table, DatasetRecord, FormatError, KVAF_MAGIC,
};
use kvlr::kinematics::{CameraModel, ToolGeometry, Trajectory};
use rand::Rng;

use common::{random_state, rng};

fn kvlr(out: &Path, config: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kvlr"))
        .arg("--out")
        .arg(out)
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.toml");
    fs::write(
        &p,
        "seed = 3\nresolution = \"32x32\"\n[synth]\nframes = 6\nkinds = [\"static\", \"composite\"]\n",
    )
    .unwrap();
    p
}

#[test]
fn default_config_constants() {
    let c = Config::default();
    let w = c.losses.weights;
    assert_eq!((w.kp, w.src, w.cp, w.sub), (0.01, 0.005, 0.01, 0.005));
    assert_eq!(
        (
            c.router.capacity.dense_end,
            c.router.capacity.sparse_start,
            c.router.capacity.k
        ),
        (0.4, 0.75, 2)
    );
    assert_eq!(c.losses.ema_beta, 0.95);
    let b = c.schedule.budget;
    assert_eq!((b.rho_full, b.rho_light, b.k), (0.2, 0.3, 4));
    let cost = c.schedule.cost;
    assert_eq!((cost.full, cost.light, cost.reuse), (1.0, 0.4, 0.02));
}

#[test]
fn full_command_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    for args in [
        vec!["synth"],
        vec!["lift"],
        vec!["route"],
        vec!["losses"],
        vec!["schedule"],
        vec!["eval", "--pred", out.join("masks").to_str().unwrap()],
        vec!["report"],
    ] {
        let o = kvlr(&out, &cfg, &args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("files written"));
    }
    for f in [
        "synth.csv",
        "route_stats.csv",
        "losses.csv",
        "gradcheck.csv",
        "schedule_summary.csv",
        "eval.csv",
        "report.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert_eq!(fs::read_dir(out.join("fields/composite")).unwrap().count(), 6);

    let (h, rows) = read_table(&out.join("eval.csv")).unwrap();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    for r in &rows {
        assert_eq!(r[col("cd")], "0");
        assert_eq!(r[col("dice")], "1");
    }
    let (h, rows) = read_table(&out.join("gradcheck.csv")).unwrap();
    let pass = h.iter().position(|c| c == "pass").unwrap();
    assert!(rows.iter().all(|r| r[pass] == "1"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "resolution = \"30x32\"\n").unwrap();
    let o = kvlr(&dir.path().join("x"), &bad, &["synth"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("stride"));

    let cfg = small_config(dir.path());
    let o = kvlr(
        &dir.path().join("y"),
        &cfg,
        &["lift", "--input", dir.path().join("missing").to_str().unwrap()],
    );
    assert!(!o.status.success());
}

fn record(seed: u64) -> DatasetRecord {
    let mut r = rng(seed);
    let states = (0..5).map(|_| random_state(&mut r)).collect();
    DatasetRecord {
        id: "random".into(),
        camera: CameraModel::square(32),
        trajectory: Trajectory::new(states, r.random_range(0.01..1.0)).unwrap(),
    }
}

#[test]
fn trajectory_text_round_trip_and_errors() {
    let rec = record(8);
    let text = format_trajectory(&rec);
    assert_eq!(parse_trajectory(&text).unwrap(), rec);

    let mut lines: Vec<&str> = text.lines().collect();
    let last = lines.pop().unwrap();
    let cut: Vec<&str> = last.split_whitespace().take(7).collect();
    let truncated = format!("{}\n{}\n", lines.join("\n"), cut.join(" "));
    match parse_trajectory(&truncated) {
        Err(FormatError::Parse { line, .. }) => assert_eq!(line, lines.len() + 1),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let mut fields: Vec<&str> = last.split_whitespace().collect();
    fields[3] = "NaN";
    let nan = format!("{}\n{}\n", lines.join("\n"), fields.join(" "));
    assert!(matches!(
        parse_trajectory(&nan),
        Err(FormatError::InvariantViolation(_))
    ));
}

#[test]
fn field_binary_round_trip_and_errors() {
    let rec = record(9);
    let f: KvaField = lift(&rec.trajectory, &ToolGeometry::default(), &rec.camera, 3).unwrap();
    let bytes = encode_field(&f);
    let back = decode_field(&bytes).unwrap();
    assert_eq!(back.frame(), f.frame());
    // the payload is single precision: re-encoding reproduces it bit for bit
    assert_eq!(encode_field(&back), bytes);
    assert!(back
        .as_slice()
        .iter()
        .zip(f.as_slice())
        .all(|(a, b)| *a == f64::from(*b as f32)));

    let mut wrong = bytes.clone();
    wrong[..4].copy_from_slice(b"NOPE");
    assert_ne!(&wrong[..4], KVAF_MAGIC);
    assert_eq!(decode_field(&wrong).unwrap_err(), FormatError::BadMagic);
    assert!(matches!(
        decode_field(&bytes[..bytes.len() - 8]),
        Err(FormatError::TruncatedFile { .. })
    ));
}

#[test]
fn static_clip_schedule_matches_cost_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = Config {
        synth: kvlr::config::SynthSection {
            kinds: vec![kvlr::kinematics::SynthKind::Static],
            frames: 16,
        },
        ..Config::default()
    };
    let p = kvlr::pipeline::Pipeline::new(cfg, &out).unwrap();
    p.synth().unwrap();
    p.lift(&out.join("trajectories")).unwrap();
    p.schedule(&out.join("fields")).unwrap();

    let (h, rows) = read_table(&out.join("schedule_trace.csv")).unwrap();
    let interval = h.iter().position(|c| c == "interval").unwrap();
    assert!(rows.iter().all(|r| r[interval] == "4"));

    // 256 tokens split 51 / 77 / 128; frames 0, 4, 8 and 12 refresh to full
    let plan = (51.0 + 77.0 * 0.4 + 128.0 * 0.02) / 256.0;
    let expected = (4.0 + 12.0 * plan) / 16.0;
    let (h, rows) = read_table(&out.join("schedule_summary.csv")).unwrap();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let ratio = |policy: &str| -> f64 {
        let r = rows.iter().find(|r| r[col("policy")] == policy).unwrap();
        r[col("cost_ratio")].parse().unwrap()
    };
    assert!((ratio("adaptive") - expected).abs() < 1e-12, "{}", ratio("adaptive"));
    assert!((ratio("no-refresh") - plan).abs() < 1e-12);
}
