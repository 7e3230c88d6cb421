//! End-to-end checks of the cris-noma binary: config validation messages,
//! flag parsing, table round-trips, and byte-stable sweep exports.

use cris_noma::ber::parse_qterm_table;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GOOD_CONFIG: &str = r#"
[system]
frequency_hz = 28e9
d_rb_m = 30.0
psi = 2.2
noise_mw = 1e-9

[users]
d_ur_m = [20.0, 50.0]
mod_order = [16, 4]

[surface]
width = "4lambda"
height = "2lambda"

[simulation]
trials = 2000
seed = 11
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cris-noma"))
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cris-noma-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).expect("scratch dir");
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, text).expect("config write");
    path
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_field_exits_nonzero_naming_it() {
    let dir = scratch("missing");
    let config = write_config(&dir, &GOOD_CONFIG.replace("psi = 2.2\n", ""));
    let out = bin()
        .args(["--config", config.to_str().unwrap(), "stats"])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("system.psi"), "stderr was:\n{err}");
}

#[test]
fn length_overrides_need_units() {
    let dir = scratch("units");
    let config = write_config(&dir, GOOD_CONFIG);
    let bare = bin()
        .args([
            "--config",
            config.to_str().unwrap(),
            "--grid-resolution",
            "0.001",
            "stats",
        ])
        .output()
        .expect("spawn");
    assert_eq!(bare.status.code(), Some(1));
    assert!(stderr_of(&bare).contains("unit suffix"));

    let suffixed = bin()
        .args([
            "--config",
            config.to_str().unwrap(),
            "--grid-resolution",
            "0.25lambda",
            "--powers",
            "10",
            "stats",
        ])
        .output()
        .expect("spawn");
    assert!(
        suffixed.status.success(),
        "stderr:\n{}",
        stderr_of(&suffixed)
    );
}

#[test]
fn derive_table_output_roundtrips() {
    let dir = scratch("table");
    let config = write_config(&dir, GOOD_CONFIG);
    let out = bin()
        .args(["--config", config.to_str().unwrap(), "derive-table"])
        .output()
        .expect("spawn");
    assert!(out.status.success(), "stderr:\n{}", stderr_of(&out));
    let text = String::from_utf8(out.stdout).expect("utf8 table");
    let table = parse_qterm_table(&text).expect("parseable dump");
    assert_eq!(table.users(), 2);
    assert_eq!(table.to_string(), text);
}

#[test]
fn sweep_exports_are_byte_stable() {
    let dir = scratch("repro");
    let config = write_config(&dir, GOOD_CONFIG);
    let run = |tag: &str| -> PathBuf {
        let out_csv = dir.join(format!("{tag}.csv"));
        let out = bin()
            .args([
                "--config",
                config.to_str().unwrap(),
                "--methods",
                "NO",
                "--powers",
                "10,20",
                "--out",
                out_csv.to_str().unwrap(),
                "sweep",
            ])
            .output()
            .expect("spawn");
        assert!(out.status.success(), "stderr:\n{}", stderr_of(&out));
        out_csv
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(fs::read(&a).expect("csv a"), fs::read(&b).expect("csv b"));

    let series = |csv: &Path| -> Vec<(String, Vec<u8>)> {
        let dir = csv.with_file_name(format!(
            "{}_series",
            csv.file_stem().unwrap().to_string_lossy()
        ));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
            .expect("series dir")
            .map(|e| {
                let e = e.expect("entry");
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).expect("series file"),
                )
            })
            .collect();
        files.sort();
        files
    };
    let sa = series(&a);
    assert!(!sa.is_empty());
    assert_eq!(
        sa.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(),
        series(&b).iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>()
    );
    assert_eq!(sa, series(&b));
}

#[test]
fn thread_env_is_validated() {
    let dir = scratch("threads");
    let config = write_config(&dir, GOOD_CONFIG);
    let bad = bin()
        .env("CRIS_NOMA_THREADS", "zebra")
        .args(["--config", config.to_str().unwrap(), "stats"])
        .output()
        .expect("spawn");
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr_of(&bad).contains("CRIS_NOMA_THREADS"));

    let one = bin()
        .env("CRIS_NOMA_THREADS", "1")
        .args([
            "--config",
            config.to_str().unwrap(),
            "--powers",
            "10",
            "stats",
        ])
        .output()
        .expect("spawn");
    assert!(one.status.success(), "stderr:\n{}", stderr_of(&one));
}

#[test]
fn fast_series_length_must_be_positive() {
    let dir = scratch("fastlen");
    let config = write_config(&dir, GOOD_CONFIG);
    let out = bin()
        .args([
            "--config",
            config.to_str().unwrap(),
            "--fast-2f1-terms",
            "0",
            "derive-table",
        ])
        .output()
        .expect("spawn");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("fast-2f1-terms"));
}
