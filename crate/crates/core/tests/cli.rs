mod common;

use std::process::Command;

use efcml::harness::parse_trends;
use efcml::ingest::write_csv;

fn efcml() -> Command {
    Command::new(env!("CARGO_BIN_EXE_efcml"))
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("stream.csv");
    write_csv(&common::latent_stream(120, 4, 2, 80, 5), &data).unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, r#"{"alpha": [0.0, 0.1], "beta": [0.0], "vigilance": [0.4, 0.8]}"#).unwrap();
    let out = dir.path().join("out");
    let status = efcml()
        .args(["run", "--csv-labels", "2", "--csv-header", "--folds", "3", "--al", "samples", "--budget", "0.3"])
        .arg("--data")
        .arg(&data)
        .arg("--grid-file")
        .arg(&grid)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for name in ["trend.csv", "selection.csv", "config.json", "model.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let points = parse_trends(out.join("trend.csv")).unwrap();
    assert_eq!(points.len(), 90);
    assert!(points.iter().all(|t| t.selected_fraction <= 0.3));
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.starts_with("efcml: n=90"), "{stdout}");
}

#[test]
fn bad_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("stream.csv");
    write_csv(&common::latent_stream(40, 2, 2, 100, 6), &data).unwrap();
    let out = dir.path().join("out");
    let cases: [&[&str]; 4] = [
        &["run", "--method", "forest"],
        &["run", "--al", "sometimes"],
        &["run", "--method", "chain", "--al", "samples"],
        &["run", "--budget", "1.5"],
    ];
    for args in cases {
        let status = efcml()
            .args(args)
            .args(["--csv-labels", "2", "--csv-header"])
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(!status.success(), "{args:?}");
    }
    let missing = efcml().args(["run", "--out"]).arg(&out).arg("--data").arg(&data).status().unwrap();
    assert!(!missing.success());
}
