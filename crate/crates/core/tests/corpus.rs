//! Replays the checked-in fuzz corpus through every parser entry point.
//! Seeds whose names start with `valid_` must parse; all others must merely
//! not panic.

use std::fs;
use std::path::{Path, PathBuf};

use junction_core::config::parse_config;
use junction_core::demand::parse_turning_counts;
use junction_core::policy::checkpoint::{decode, encode};
use junction_core::report::{parse_reports, write_reports};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn scenario_config_seeds() {
    for (name, bytes) in seeds("scenario_config") {
        let r = std::str::from_utf8(&bytes).ok().map(parse_config);
        if name.starts_with("valid_") {
            let cfg = r.unwrap().unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.env_config([100.0; 8]).unwrap();
        }
    }
}

#[test]
fn turning_count_seeds() {
    for (name, bytes) in seeds("turning_counts") {
        let r = parse_turning_counts(&bytes);
        if name.starts_with("valid_") {
            assert!(r.is_ok(), "{name}: {r:?}");
        }
    }
}

#[test]
fn checkpoint_seeds() {
    for (name, bytes) in seeds("checkpoint") {
        match decode(&bytes) {
            Ok(ck) => assert_eq!(encode(&ck), bytes, "{name} does not re-encode identically"),
            Err(e) => assert!(!name.starts_with("valid_"), "{name}: {e}"),
        }
    }
}

#[test]
fn report_seeds() {
    for (name, bytes) in seeds("report_csv") {
        match parse_reports(&bytes) {
            Ok(rows) => {
                let mut buf = Vec::new();
                write_reports(&mut buf, "x", &rows).unwrap();
                assert_eq!(parse_reports(&buf).unwrap(), rows);
            }
            Err(e) => assert!(!name.starts_with("valid_"), "{name}: {e}"),
        }
    }
}
